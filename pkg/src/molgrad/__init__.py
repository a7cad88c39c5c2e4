"""Operator-splitting toolkit around shrinkage-type denoisers.

Subpackages: :mod:`molgrad.linalg` (operators, spectral constants),
:mod:`molgrad.shrinkage` (closed-form operators and penalties),
:mod:`molgrad.oracles` (brute-force prox/conjugate ground truth),
:mod:`molgrad.denoise` (denoiser catalog and certification),
:mod:`molgrad.solvers` (forward-backward, primal-dual, Condat-Vu),
:mod:`molgrad.experiments` (verification studies), and the ``molgrad``
command-line interface.
"""

from . import denoise, experiments, linalg, oracles, shrinkage, solvers

__all__ = ["linalg", "shrinkage", "oracles", "denoise", "solvers", "experiments"]
__version__ = "0.1.0"
