from setuptools import setup, find_packages

exec(open('dbadapt/version.py').read())

requirements = ['numpy', 'pandas', 'scipy', 'statsmodels']

setup(
    name='dbadapt',
    version=__version__,
    description='Design-based inference for adaptive experiments',
    long_description=open('README.rst').read(),
    long_description_content_type='text/x-rst',
    packages=find_packages(),
    license='MIT',
    install_requires=requirements,
    classifiers=[
        'Programming Language :: Python :: 3',
        'License :: OSI Approved :: MIT License'
    ],
    entry_points={'console_scripts': ['dbadapt=dbadapt.__main__:main']}
)
