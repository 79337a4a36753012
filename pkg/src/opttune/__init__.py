"""opttune: automatic hyperparameter tuning for black-box numerical solvers.

Submodules are imported lazily by callers; keeping this module empty of
heavy imports keeps solver subprocess startup cheap.
"""

__version__ = "0.1.0"
