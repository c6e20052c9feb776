"""Continuous-time PDE surrogates on Delaunay graphs.

Modules: :mod:`geometry` (triangulation and neighbour graph), :mod:`nn`
(MLPs and Rprop), :mod:`mpnn` (the message-passing derivative),
:mod:`odeint` (integrators and loss gradients), :mod:`datagen`
(reference data), :mod:`train_eval` (training and evaluation),
:mod:`fileio` and :mod:`cli` (file formats and command line).
"""

__version__ = "0.1.0"

from ._backend import BACKEND  # noqa: E402,F401
