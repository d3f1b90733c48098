"""Correspondence between constrained Holevo capacity and entanglement of formation.

A channel ``N(mu) = Tr_B V mu V^dagger`` and an input ``rho`` determine the
bipartite state ``sigma = V rho V^dagger``; conversely a bipartite state
determines a channel on a ``rank(sigma)``-dimensional input whose dilation of
a full-rank ``rho`` is ``sigma``.  Pure-state decompositions of ``rho`` and of
``sigma`` are in bijection through ``V``, which gives

    chi_N(rho) = H(N(rho)) - E_F(sigma).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import qmat
from .channels import KrausChannel, channel_to_json, from_isometry, stinespring
from .errors import DimensionError, RankAmbiguityError
from .quantities import Ensemble, Estimate, OptimizerOptions, constrained_chi, eof, ensemble_entanglement, ensemble_holevo

RANK_CUTOFF = 1e-9
AMBIGUITY_FACTOR = 10.0


@dataclass(frozen=True)
class MswPair:
    """A channel, an input state on ``d_in`` and the dilated bipartite state on ``d_out x d_env``."""

    channel: KrausChannel
    input: qmat.DensityMatrix
    state: qmat.DensityMatrix
    isometry: np.ndarray

    def check(self, tol: float = 1e-9) -> float:
        """Return ``||N(rho) - Tr_B sigma||_F``; raise if it exceeds ``tol``."""
        err = float(np.linalg.norm(self.channel(self.input.matrix) - self.state.partial_trace([0]).matrix))
        if err > tol:
            raise ValueError(f"pair is inconsistent: N(rho) differs from Tr_B sigma by {err:.3g}")
        return err

    def to_json(self) -> dict:
        return {
            "channel": channel_to_json(self.channel),
            "input": qmat.density_to_json(self.input),
            "state": qmat.density_to_json(self.state),
        }


def dilate_state(channel: KrausChannel, rho) -> MswPair:
    """``sigma = V rho V^dagger`` from the Stinespring isometry of ``channel``."""
    iso = stinespring(channel)
    m = qmat.as_matrix(rho)
    if m.shape != (channel.d_in, channel.d_in):
        raise DimensionError(f"rho is {m.shape}, channel input is {channel.d_in}")
    rho_dm = rho if isinstance(rho, qmat.DensityMatrix) else qmat.DensityMatrix(m)
    sigma = iso.apply(m)
    sigma = 0.5 * (sigma + sigma.conj().T)
    state = qmat.DensityMatrix(sigma, (iso.d_out, iso.d_env), validate=False)
    return MswPair(channel, rho_dm, state, iso.V)


def channel_from_state(sigma, dims=None, rel_cutoff: float = RANK_CUTOFF) -> MswPair:
    """Channel and full-rank input whose dilation reproduces ``sigma``.

    The input space has dimension ``rank(sigma)``; ``rho`` is the diagonal of
    the significant eigenvalues and ``V`` maps the input basis onto the
    corresponding eigenvectors.  Eigenvalues within a factor of
    :data:`AMBIGUITY_FACTOR` of the cutoff ``rel_cutoff * lambda_max`` raise
    :class:`RankAmbiguityError`.
    """
    dims = qmat.dims_of(sigma, dims)
    m = qmat.as_matrix(sigma)
    if dims is None or len(dims) != 2:
        raise DimensionError("channel_from_state needs a bipartition: dims = (d_A, d_B)")
    if not isinstance(sigma, qmat.DensityMatrix):
        qmat.validate_density(m)
    spec = qmat.hermitian_eig(m)
    lam = spec.eigenvalues
    cut = rel_cutoff * lam[0]
    near = (lam > cut / AMBIGUITY_FACTOR) & (lam < cut * AMBIGUITY_FACTOR)
    if np.any(near):
        raise RankAmbiguityError(
            f"eigenvalues {lam[near].tolist()} lie within a factor {AMBIGUITY_FACTOR} of the rank cutoff {cut:.3g}"
        )
    r = int(np.sum(lam > cut))
    V = spec.eigenvectors[:, :r]
    weights = lam[:r] / lam[:r].sum()
    channel = from_isometry(V, dims[0], dims[1], name=f"from_state:rank={r}")
    rho = qmat.DensityMatrix(np.diag(weights).astype(complex))
    state = qmat.DensityMatrix((V * weights) @ V.conj().T, tuple(dims), validate=False)
    return MswPair(channel, rho, state, V)


def state_to_input_ensemble(pair: MswPair, ens: Ensemble) -> Ensemble:
    """Map a decomposition of ``sigma`` back to a decomposition of ``rho`` (via ``V^dagger``)."""
    v = ens.subnormalized() @ pair.isometry.conj()
    return Ensemble.from_vectors(v)


def input_to_state_ensemble(pair: MswPair, ens: Ensemble) -> Ensemble:
    v = ens.subnormalized() @ pair.isometry.T
    return Ensemble.from_vectors(v, pair.state.dims)


@dataclass(frozen=True)
class MswReport:
    chi: Estimate  # lower bound on chi_N(rho)
    output_entropy: float  # H(N(rho))
    eof: Estimate  # upper bound on E_F(sigma)
    residual: float  # |chi - (H - E_F)| from the independent searches
    chi_exchanged: float  # after swapping witnesses through V
    eof_exchanged: float
    residual_exchanged: float

    def to_json(self) -> dict:
        return {
            "chi": self.chi.to_json(),
            "output_entropy": self.output_entropy,
            "eof": self.eof.to_json(),
            "residual": self.residual,
            "chi_exchanged": self.chi_exchanged,
            "eof_exchanged": self.eof_exchanged,
            "residual_exchanged": self.residual_exchanged,
        }


def msw_identity_check(pair: MswPair, options: OptimizerOptions | None = None) -> MswReport:
    """Estimate both sides of ``chi_N(rho) = H(N(rho)) - E_F(sigma)``.

    The constrained capacity and the entanglement of formation are searched
    independently with the same options (same seeds and budgets); ``residual``
    compares those.  The witnesses are then carried across the correspondence
    and the better one kept on each side, giving the ``*_exchanged`` values.
    """
    options = options or OptimizerOptions()
    pair.check(1e-8)
    h_out = qmat.von_neumann_entropy(pair.channel(pair.input.matrix), validate=False)
    chi = constrained_chi(pair.channel, pair.input.matrix, options)
    ef = eof(pair.state, options=options)
    if pair.channel.d_in == 1:
        # rank-one sigma: the only decomposition is sigma itself and Tr_B sigma = N(rho)
        ef = replace(ef, value=h_out)
    residual = abs(chi.value - (h_out - ef.value))

    ef_from_chi = ensemble_entanglement(input_to_state_ensemble(pair, chi.witness), pair.state.dims)
    chi_from_ef = ensemble_holevo(pair.channel, state_to_input_ensemble(pair, ef.witness))
    chi_x = max(chi.value, chi_from_ef)
    ef_x = min(ef.value, ef_from_chi)
    return MswReport(chi, h_out, ef, residual, chi_x, ef_x, abs(chi_x - (h_out - ef_x)))
