"""Numerical tolerances shared by every module.

The defaults can be changed for a block of code with :func:`override`::

    with override(herm=1e-7):
        ...
"""

from __future__ import annotations

import dataclasses
from contextlib import contextmanager
from dataclasses import dataclass


@dataclass
class Tolerances:
    herm: float = 1e-9  # Hermiticity, max-abs of M - M^dagger
    trace: float = 1e-9  # |Tr rho - 1|
    norm: float = 1e-9  # | ||v|| - 1 |, and probability range slack
    eig: float = 1e-10  # eigendecomposition reconstruction, relative
    psd: float = 1e-10  # eigenvalues in [-psd, 0) are clamped to zero
    log_floor: float = 1e-15  # eigenvalues <= log_floor contribute 0 to entropies
    tp: float = 1e-9  # ||sum A^dagger A - I||
    max_dim: int = 4096


TOL = Tolerances()


@contextmanager
def override(**changes):
    """Temporarily replace fields of the global :data:`TOL`."""
    saved = dataclasses.asdict(TOL)
    for key in changes:
        if key not in saved:
            raise KeyError(f"unknown tolerance {key!r}")
    try:
        for key, value in changes.items():
            setattr(TOL, key, value)
        yield TOL
    finally:
        for key, value in saved.items():
            setattr(TOL, key, value)
