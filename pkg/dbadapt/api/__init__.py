"""
The api module exports every dbadapt submodule (pypop, pydesign, pymodel,
pyest, pyoracle, pystudy and common) so they can be imported directly from
the package, e.g. ``from dbadapt import pyest``.
"""
from pathlib import Path

__all__ = sorted(f.stem for f in Path(__file__).parent.glob('*.py')
                 if '__' not in f.stem)

del Path
