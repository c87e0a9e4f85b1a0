import subprocess
import pydoc

from dbadapt.api.common import DBADAPT_PATH
from dbadapt.cli import commands
import dbadapt

modules = [x for x in dir(dbadapt) if x not in ['api', 'cli'] and '__' not in x]

# -- README.rst ---------------------------------------------------------------

credit = """
..
   This file was automatically generated by docs/create.py.
"""

readme_file = f'{DBADAPT_PATH}/README.rst'

dbadapt_help = subprocess.run(['dbadapt', '-h'], capture_output=True, text=True, check=True).stdout
dbadapt_help = '\n'.join(['   ' + x for x in dbadapt_help.splitlines()])

module_help = ''
for module in modules:
    description = pydoc.getdoc(getattr(dbadapt, module)).split('\n\n')[0].replace('\n', ' ')
    module_help += f'- **{module}** : {description}\n'

d = dict(credit=credit, dbadapt_help=dbadapt_help, module_help=module_help)

readme = """
{credit}
README
******

Introduction
============

The dbadapt package implements design-based (finite-population) inference for adaptive experiments. Potential outcomes and covariates are treated as fixed, and all randomness comes from the treatment assignment, which may depend on the outcomes of earlier units (e.g. an epsilon-greedy bandit or sequential rerandomization).

The package provides:

- adaptive unit designs (Bernoulli, epsilon-greedy, biased coin) and block designs (pairwise sequential randomization, sequential rerandomization, complete randomization)
- inverse-propensity-weighted (IPW) and augmented (AIPW) estimators of contrasts of the arm means, with adaptive outcome models that only see the history
- conservative and sharpened covariance estimators, their b-weighted block versions, and Wald confidence sets
- an exact enumeration oracle that certifies the finite-sample identities on small instances
- a Monte Carlo harness with shipped study configs under ``data/config``

Installation
============

The following packages are required to run dbadapt:

.. parsed-literal::

   numpy
   pandas
   scipy
   statsmodels

You can clone the repository and then install dbadapt locally:

.. code-block:: text

   $ cd dbadapt
   $ pip install .

Getting help
============

For getting help on the dbadapt CLI:

.. code-block:: text

   $ dbadapt -h
{dbadapt_help}

For getting help on a specific command (e.g. simulate):

.. code-block:: text

   $ dbadapt simulate -h

Below is the list of submodules available in the dbadapt API:

{module_help}
For getting help on a specific submodule (e.g. pyest):

.. code:: python3

   >>> from dbadapt import pyest
   >>> help(pyest)

CLI examples
============

To certify the finite-sample identities on the shipped toy instances:

.. code-block:: text

   $ dbadapt certify --out report.json

To run a reduced-scale version of the Bernoulli covariate-adjustment study:

.. code-block:: text

   $ dbadapt simulate data/config/table1.json --out table1 --quick

To compare sequential rerandomization with complete randomization:

.. code-block:: text

   $ dbadapt simulate data/config/srd.json --out srd --parallelism 4

To analyze an experiment log:

.. code-block:: text

   $ dbadapt analyze data/analyze/1.json --out report.json

API examples
============

To run an epsilon-greedy experiment and build a confidence interval for the average treatment effect:

.. code:: python3

   >>> import numpy as np
   >>> from dbadapt import pypop, pydesign, pymodel, pyest
   >>> pf = pypop.generate_population({{'tag': 'linear', 'size': 1000}}, 1)
   >>> design = pydesign.EpsilonGreedy(warmup=50)
   >>> lf = pydesign.run_design(pf, design, np.random.default_rng(0))
   >>> lf = lf.with_predictions(pymodel.adaptive_predictions(pymodel.OnlineLeastSquares(), lf))
   >>> report = pyest.infer(lf, [-1, 1])
   >>> report.sets['vtilde_aipw'].interval()

To check that the IPW estimator is exactly unbiased on a small instance:

.. code:: python3

   >>> from dbadapt import pyoracle
   >>> instance = pyoracle.default_instances()['greedy3']
   >>> pyoracle.certify_identity('ipw-unbiased', instance).passed
   True
""".format(**d)

with open(readme_file, 'w') as f:
    f.write(readme.lstrip())

# -- cli.rst -----------------------------------------------------------------

cli_file = f'{DBADAPT_PATH}/docs/cli.rst'

cli = """
{credit}
CLI
***

Introduction
============

This section describes command line interface (CLI) for the dbadapt package.

For getting help on the dbadapt CLI:

.. code-block:: text

   $ dbadapt -h
{dbadapt_help}

For getting help on a specific command (e.g. simulate):

.. code-block:: text

   $ dbadapt simulate -h

Exit codes are 0 on success, 2 for configuration errors, 3 for numerical
degeneracy and 4 when a certification check fails.

""".format(**d)

for command in commands:
    s = f'{command}\n'
    s += '=' * (len(s)-1) + '\n'
    s += '\n'
    s += '.. code-block:: text\n'
    s += '\n'
    s += f'   $ dbadapt {command} -h\n'
    command_help = subprocess.run(['dbadapt', command, '-h'], capture_output=True, text=True, check=True).stdout
    command_help = '\n'.join(['   ' + x for x in command_help.splitlines()])
    s += command_help + '\n'
    s += '\n'
    cli += s

with open(cli_file, 'w') as f:
    f.write(cli.lstrip())

# -- api.rst -----------------------------------------------------------------

api_file = f'{DBADAPT_PATH}/docs/api.rst'

api = """
{credit}
API
***

Introduction
============

This section describes application programming interface (API) for the dbadapt package.

Below is the list of submodules available in the dbadapt API:

{module_help}
For getting help on a specific submodule (e.g. pyest):

.. code:: python3

   from dbadapt import pyest
   help(pyest)

""".format(**d)

for module in modules:
    s = f'dbadapt.{module}\n'
    s += '=' * (len(s)-1) + '\n'
    s += '\n'
    s += f'.. automodule:: dbadapt.api.{module}\n'
    s += '   :members:\n'
    s += '\n'
    api += s

with open(api_file, 'w') as f:
    f.write(api.lstrip())
