"""Estimators for minimum output entropy, Holevo capacity and entanglement of formation.

All searches are multi-restart local searches, so every :class:`Estimate` is a
one-sided bound: ``"upper-on-min"`` for minimizations (minimum output entropy,
entanglement of formation) and ``"lower-on-max"`` for the Holevo quantities.
The witness stored on an estimate always re-evaluates to its value.

Decompositions of a fixed state ``rho = W W^dagger`` (``W = E sqrt(Lambda)``
from its eigendecomposition) are parameterized by isometries ``U`` with
``U^dagger U = I``: member ``i`` is the sub-normalized vector
``W U[i, :]^T``.  Every ``m``-member decomposition of rho arises this way, and
the average constraint holds exactly at every iterate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _manifold, qmat
from .channels import KrausChannel
from .errors import DimensionError, InvalidStateError

UPPER_ON_MIN = "upper-on-min"
LOWER_ON_MAX = "lower-on-max"

# Relative eigenvalue floor used inside gradient logs (values use exact 0 log 0).
_GRAD_FLOOR = 1e-13


@dataclass(frozen=True)
class OptimizerOptions:
    restarts: int = 32
    max_iters: int = 2000
    step_tol: float = 1e-12
    value_tol: float = 1e-9
    seed: int = 0
    ensemble_size: int | None = None  # None: d_in**2 for chi, rank**2 for E_F
    escalate: bool = True  # double budgets once when the best restart did not converge

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    def doubled(self) -> "OptimizerOptions":
        return replace(self, restarts=2 * self.restarts, max_iters=2 * self.max_iters)

    def to_json(self) -> dict:
        return {
            "restarts": self.restarts,
            "max_iters": self.max_iters,
            "step_tol": self.step_tol,
            "value_tol": self.value_tol,
            "seed": self.seed,
            "ensemble_size": self.ensemble_size,
            "escalate": self.escalate,
        }


@dataclass(frozen=True)
class Ensemble:
    """Probabilities ``probs`` with unit vectors as the rows of ``states``."""

    probs: np.ndarray
    states: np.ndarray
    dims: tuple[int, ...] = ()

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).reshape(-1)
        s = np.asarray(self.states, dtype=complex)
        if s.ndim == 1:
            s = s[None]
        if s.shape[0] != p.size:
            raise DimensionError(f"{p.size} probabilities for {s.shape[0]} states")
        if np.any(p < -1e-9) or abs(p.sum() - 1.0) > 1e-9:
            raise InvalidStateError("ensemble probabilities must be non-negative and sum to 1")
        norms = np.linalg.norm(s, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise InvalidStateError("ensemble states must be unit vectors")
        dims = self.dims or (s.shape[1],)
        if math.prod(dims) != s.shape[1]:
            raise DimensionError(f"dims {dims} do not match state dimension {s.shape[1]}")
        object.__setattr__(self, "probs", np.clip(p, 0.0, None))
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "dims", tuple(dims))

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __len__(self) -> int:
        return self.probs.size

    def average(self) -> np.ndarray:
        s = self.states
        return (s.T * self.probs) @ s.conj()

    def subnormalized(self) -> np.ndarray:
        """Rows ``sqrt(p_i) |v_i>``."""
        return np.sqrt(self.probs)[:, None] * self.states

    @classmethod
    def from_vectors(cls, vectors: np.ndarray, dims=(), prune: float = 1e-15) -> "Ensemble":
        """Ensemble from sub-normalized rows ``sqrt(p_i)|v_i>``; weights <= ``prune`` are dropped."""
        v = np.asarray(vectors, dtype=complex)
        p = np.sum(np.abs(v) ** 2, axis=1)
        keep = p > prune * max(p.max(), 1e-300)
        v, p = v[keep], p[keep]
        return cls(p / p.sum(), v / np.sqrt(p)[:, None], dims)

    def to_json(self) -> dict:
        return {
            "dims": list(self.dims),
            "probs": [float(x) for x in self.probs],
            "states": [qmat.vector_to_json(v) for v in self.states],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Ensemble":
        states = np.array([qmat.vector_from_json(v) for v in data["states"]])
        return cls(np.array(data["probs"], dtype=float), states, tuple(data.get("dims") or ()))


@dataclass(frozen=True)
class Estimate:
    value: float
    bound_direction: str
    witness: Ensemble | qmat.PureState
    converged: bool
    iterations: int
    restarts: int = 0
    details: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> dict:
        if isinstance(self.witness, qmat.PureState):
            witness = qmat.pure_to_json(self.witness)
        else:
            witness = self.witness.to_json()
        return {
            "value": self.value,
            "bound_direction": self.bound_direction,
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "witness": witness,
        }


# ---------------------------------------------------------------------------
# Entropy kernels on sub-normalized vectors
# ---------------------------------------------------------------------------


def _homogeneous_entropy(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``t H(Y/t)`` with ``t = Tr Y`` and its gradient ``log2(t) I - log2(Y)``.

    ``y`` is a stack of PSD matrices ``(..., n, n)``.
    """
    w, q = np.linalg.eigh(y)
    w = np.clip(w, 0.0, None)
    t = w.sum(-1)
    safe_t = np.where(t > 0, t, 1.0)
    wn = w / safe_t[..., None]
    terms = np.where(wn > qmat.TOL.log_floor, wn * np.log2(np.where(wn > 0, wn, 1.0)), 0.0)
    ent = 0.0 - terms.sum(-1) * t  # 0.0 - x maps -0.0 to +0.0
    dlog = -np.log2(np.maximum(wn, _GRAD_FLOOR))
    dlog = np.where((t > 0)[..., None], dlog, 0.0)
    m = (q * dlog[..., None, :]) @ np.swapaxes(q.conj(), -1, -2)
    return ent, m


def _kraus_action(kraus: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Columns ``A_k v`` stacked as ``(..., d_out, n_kraus)``."""
    return np.einsum("koi,...i->...ok", kraus, v)


def _pullback(kraus: np.ndarray, m: np.ndarray, av: np.ndarray) -> np.ndarray:
    """``2 sum_k A_k^dagger M A_k v`` given ``av = A_k v`` columns."""
    return 2.0 * np.einsum("koi,...ok->...i", kraus.conj(), m @ av)


def _output_terms(kraus: np.ndarray, v: np.ndarray):
    """Homogeneous output entropy of each vector, its gradient, and the outputs."""
    av = _kraus_action(kraus, v)
    y = av @ np.swapaxes(av.conj(), -1, -2)
    ent, m = _homogeneous_entropy(y)
    return ent, _pullback(kraus, m, av), y, av


def _trace_kraus(dims: Sequence[int]) -> np.ndarray:
    """Kraus operators of the partial trace onto the smaller factor of a bipartition."""
    da, db = dims
    if da <= db:  # keep A, trace B: A_k = I (x) <k|
        k = np.zeros((db, da, da * db))
        for j in range(db):
            k[j, :, j::db] = np.eye(da)
    else:  # keep B, trace A: A_k = <k| (x) I
        k = np.zeros((da, db, da * db))
        for j in range(da):
            k[j, :, j * db:(j + 1) * db] = np.eye(db)
    return k.astype(complex)


# ---------------------------------------------------------------------------
# Exact evaluations
# ---------------------------------------------------------------------------


def output_entropy(channel: KrausChannel, state) -> float:
    """``H(N(|v><v|))`` for a vector, or ``H(N(rho))`` for a matrix."""
    if isinstance(state, qmat.PureState) or np.ndim(state) == 1:
        v = qmat.as_vector(state)
        ent, *_ = _output_terms(channel.kraus, v[None] / np.linalg.norm(v))
        return float(ent[0])
    return qmat.von_neumann_entropy(channel(qmat.as_matrix(state)), validate=False)


def ensemble_holevo(channel: KrausChannel, ens: Ensemble) -> float:
    """Holevo quantity ``H(N(sum p_i v_i v_i^dagger)) - sum p_i H(N(v_i v_i^dagger))``."""
    if ens.dim != channel.d_in:
        raise DimensionError(f"ensemble dimension {ens.dim} != channel input {channel.d_in}")
    if len(ens) == 1:
        return 0.0
    ents, _, y, _ = _output_terms(channel.kraus, ens.states)
    avg = np.tensordot(ens.probs, y, axes=1)
    return qmat.spectrum_entropy(np.linalg.eigvalsh(avg)) - float(ens.probs @ ents)


def pure_entanglement(state, dims: Sequence[int] | None = None) -> float:
    """Entropy of the marginal of a bipartite pure state."""
    dims = qmat.dims_of(state, dims)
    v = qmat.as_vector(state)
    if dims is None or len(dims) != 2:
        raise DimensionError("pure_entanglement needs a two-factor split")
    if math.prod(dims) != v.size:
        raise DimensionError(f"dims {dims} do not match vector of size {v.size}")
    s = np.linalg.svd(v.reshape(dims), compute_uv=False)
    p = s**2
    return qmat.spectrum_entropy(p / p.sum())


def ensemble_entanglement(ens: Ensemble, dims: Sequence[int] | None = None) -> float:
    """Average marginal entropy ``sum p_i H(Tr_B |v_i><v_i|)``."""
    dims = tuple(dims or ens.dims)
    return float(sum(p * pure_entanglement(v, dims) for p, v in zip(ens.probs, ens.states)))


# ---------------------------------------------------------------------------
# Search drivers
# ---------------------------------------------------------------------------


def _best(res: _manifold.BatchResult) -> int:
    return int(np.argmin(res.f))  # first index wins ties


# Complex entries per restart batch; larger batches are split (results do not change).
_BATCH_BUDGET = 4_000_000


def _search(objective, n: int, r: int, options: OptimizerOptions, warm: list[np.ndarray],
            unit_cost: int = 1):
    """Run restarts (random ones first, then warm starts) with one escalation step.

    ``unit_cost`` estimates the working-set size of one restart.
    """
    chunk = max(1, _BATCH_BUDGET // max(unit_cost, n * r))

    def run(opts: OptimizerOptions):
        seeds = _manifold.restart_seeds(opts.seed, opts.restarts)
        x0 = _manifold.random_points(n, r, seeds)
        if warm:
            x0 = np.concatenate([x0, np.array(warm)])
        parts = [
            _manifold.minimize(objective, x0[j:j + chunk], max_iters=opts.max_iters,
                               value_tol=opts.value_tol, step_tol=opts.step_tol)
            for j in range(0, x0.shape[0], chunk)
        ]
        res = _manifold.BatchResult(*(np.concatenate([getattr(p, f) for p in parts])
                                      for f in ("x", "f", "converged", "iterations")))
        return res, opts

    res, used = run(options)
    i = _best(res)
    if options.escalate and not res.converged[i]:
        res, used = run(options.doubled())
        i = _best(res)
    return res, i, used


def _eigen_factor(rho: np.ndarray, rel_cutoff: float = 1e-12) -> np.ndarray:
    """``W`` with ``W W^dagger = rho`` from the significant eigenpairs."""
    w, q = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    keep = w > rel_cutoff * max(w[-1], 0.0)
    return q[:, keep] * np.sqrt(w[keep])


def _decomposition_objective(kraus: np.ndarray, factor: np.ndarray):
    wt = factor.T
    wc = factor.conj()

    def fun(x):
        v = x @ wt
        ent, grad, _, _ = _output_terms(kraus, v)
        return ent.sum(-1), grad @ wc

    return fun


def _warm_decomposition(ens: Ensemble, factor: np.ndarray, m: int) -> np.ndarray:
    v = ens.subnormalized()
    u = (np.linalg.pinv(factor) @ v.T).T
    if u.shape[0] < m:
        u = np.vstack([u, np.zeros((m - u.shape[0], u.shape[1]))])
    return _manifold.retract(u[None])[0]


def _min_decomposition(kraus, factor, m, options, initial):
    r = factor.shape[1]
    warm = []
    for ens in initial or ():
        m = max(m, len(ens))
    for ens in initial or ():
        warm.append(_warm_decomposition(ens, factor, m))
    cost = m * kraus.shape[0] * kraus.shape[1]
    res, i, used = _search(_decomposition_objective(kraus, factor), m, r, options, warm, cost)
    return res.x[i] @ factor.T, res, i, used


def min_output_entropy(channel: KrausChannel, options: OptimizerOptions | None = None,
                       initial: Sequence = ()) -> Estimate:
    """Upper bound on ``min_v H(N(|v><v|))`` from a multi-restart sphere search."""
    options = options or OptimizerOptions()
    kraus = channel.kraus

    def fun(x):
        ent, grad, _, _ = _output_terms(kraus, x[..., 0])
        return ent, grad[..., None]

    warm = [qmat.as_vector(v).reshape(-1, 1) / np.linalg.norm(qmat.as_vector(v)) for v in initial]
    res, i, used = _search(fun, channel.d_in, 1, options, warm, kraus.shape[0] * kraus.shape[1])
    v = res.x[i][:, 0]
    witness = qmat.PureState(v / np.linalg.norm(v))
    return Estimate(output_entropy(channel, witness), UPPER_ON_MIN, witness,
                    bool(res.converged[i]), int(res.iterations[i]), used.restarts)


def constrained_chi(channel: KrausChannel, rho=None, options: OptimizerOptions | None = None,
                    initial: Sequence[Ensemble] = ()) -> Estimate:
    """Lower bound on the Holevo capacity, optionally constrained to average input ``rho``.

    With ``rho`` the search runs over exact decompositions of ``rho``; without
    it over all ensembles of ``ensemble_size`` (default ``d_in**2``) members.
    """
    options = options or OptimizerOptions()
    d = channel.d_in
    m = options.ensemble_size or d * d
    kraus = channel.kraus
    if rho is not None:
        rho = qmat.as_matrix(rho)
        if rho.shape != (d, d):
            raise DimensionError(f"rho is {rho.shape}, channel input is {d}")
        qmat.validate_density(rho)
        factor = _eigen_factor(rho)
        m = max(m, factor.shape[1])
        vecs, res, i, used = _min_decomposition(kraus, factor, m, options, initial)
        witness = Ensemble.from_vectors(vecs)
        residual = float(np.linalg.norm(witness.average() - rho))
        if residual > 1e-8:
            raise InvalidStateError(f"decomposition misses rho by {residual:.3g}")
        value = ensemble_holevo(channel, witness)
        return Estimate(value, LOWER_ON_MAX, witness, bool(res.converged[i]), int(res.iterations[i]),
                        used.restarts, {"constraint_residual": residual})

    for ens in initial:
        m = max(m, len(ens))

    def fun(x):
        v = x[..., 0].reshape(x.shape[0], m, d)
        ents, grads, y, av = _output_terms(kraus, v)
        ent_bar, m_bar = _homogeneous_entropy(y.sum(1))
        g_bar = _pullback(kraus, m_bar[:, None], av)
        return ents.sum(-1) - ent_bar, (grads - g_bar).reshape(x.shape[0], m * d, 1)

    warm = []
    for ens in initial:
        v = np.zeros((m, d), dtype=complex)
        v[: len(ens)] = ens.subnormalized()
        warm.append(v.reshape(m * d, 1))
    res, i, used = _search(fun, m * d, 1, options, warm, m * kraus.shape[0] * kraus.shape[1])
    witness = Ensemble.from_vectors(res.x[i][:, 0].reshape(m, d))
    return Estimate(ensemble_holevo(channel, witness), LOWER_ON_MAX, witness,
                    bool(res.converged[i]), int(res.iterations[i]), used.restarts)


def eof(sigma, dims: Sequence[int] | None = None, options: OptimizerOptions | None = None,
        initial: Sequence[Ensemble] = ()) -> Estimate:
    """Upper bound on the entanglement of formation across a two-factor split.

    The default decomposition size is ``rank(sigma)**2``.
    """
    options = options or OptimizerOptions()
    dims = qmat.dims_of(sigma, dims)
    if dims is None or len(dims) != 2:
        raise DimensionError("eof needs a bipartition: dims = (d_A, d_B)")
    m_sigma = qmat.as_matrix(sigma)
    if not isinstance(sigma, qmat.DensityMatrix):
        qmat.validate_density(m_sigma)
    if math.prod(dims) != m_sigma.shape[0]:
        raise DimensionError(f"dims {dims} do not match a {m_sigma.shape[0]}-dim state")
    factor = _eigen_factor(m_sigma)
    r = factor.shape[1]
    m = max(options.ensemble_size or r * r, r)
    vecs, res, i, used = _min_decomposition(_trace_kraus(dims), factor, m, options, initial)
    witness = Ensemble.from_vectors(vecs, dims)
    value = ensemble_entanglement(witness, dims)
    return Estimate(value, UPPER_ON_MIN, witness, bool(res.converged[i]), int(res.iterations[i]),
                    used.restarts, {"mixing_residual": float(np.linalg.norm(witness.average() - m_sigma))})


# ---------------------------------------------------------------------------
# Ensemble and state products
# ---------------------------------------------------------------------------


def _merge(probs, states, tol=1e-10):
    out_p, out_s = [], []
    for p, s in zip(probs, states):
        for j, t in enumerate(out_s):
            if abs(abs(np.vdot(t, s)) - 1.0) <= tol:
                out_p[j] += p
                break
        else:
            out_p.append(float(p))
            out_s.append(s)
    return np.array(out_p), np.array(out_s)


def marginal_product_ensemble(ens: Ensemble, dims: Sequence[int] | None = None,
                              schmidt_tol: float = 1e-8) -> Ensemble:
    """Replace an ensemble of product states by the product of its marginal ensembles.

    Each member ``a_i (x) b_i`` must have Schmidt rank one.  Identical marginal
    states (up to phase) are merged before forming ``{p_i p_j, a_i (x) b_j}``.
    """
    dims = tuple(dims or ens.dims)
    if len(dims) != 2:
        raise DimensionError("marginal_product_ensemble needs a two-factor split")
    firsts, seconds = [], []
    for v in ens.states:
        u, s, vh = np.linalg.svd(v.reshape(dims))
        if s.size > 1 and s[1] > schmidt_tol:
            raise InvalidStateError(f"member state is entangled (second Schmidt coefficient {s[1]:.3g})")
        firsts.append(u[:, 0] * s[0])
        seconds.append(vh[0])
    p1, a = _merge(ens.probs, firsts)
    p2, b = _merge(ens.probs, seconds)
    probs = np.outer(p1, p2).reshape(-1)
    states = np.einsum("ia,jb->ijab", a, b).reshape(len(p1) * len(p2), -1)
    return Ensemble(probs / probs.sum(), states, dims)


def tensor_ensembles(first: Ensemble, second: Ensemble, bipartite: bool = False) -> Ensemble:
    """Product ensemble ``{p_i q_j, v_i (x) w_j}``.

    With ``bipartite=True`` both inputs carry an A|B split and the result is
    ordered ``(A1 A2) | (B1 B2)``.
    """
    states = np.einsum("ia,jb->ijab", first.states, second.states).reshape(len(first) * len(second), -1)
    probs = np.outer(first.probs, second.probs).reshape(-1)
    if bipartite:
        (a1, b1), (a2, b2) = first.dims, second.dims
        states = np.array([qmat.permute_factors(s, (a1, b1, a2, b2), (0, 2, 1, 3)) for s in states])
        return Ensemble(probs, states, (a1 * a2, b1 * b2))
    return Ensemble(probs, states, (first.dim * second.dim,))


def tensor_bipartite(sigma1, dims1: Sequence[int], sigma2, dims2: Sequence[int]) -> qmat.DensityMatrix:
    """``sigma1 (x) sigma2`` reordered to the split ``(A1 A2) | (B1 B2)``."""
    (a1, b1), (a2, b2) = dims1, dims2
    m = np.kron(qmat.as_matrix(sigma1), qmat.as_matrix(sigma2))
    m = qmat.permute_factors(m, (a1, b1, a2, b2), (0, 2, 1, 3))
    return qmat.DensityMatrix(m, (a1 * a2, b1 * b2), validate=False)


# ---------------------------------------------------------------------------
# Strong superadditivity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SuperadditivityGap:
    """``E_F(sigma) - E_F(Tr_2 sigma) - E_F(Tr_1 sigma)`` from three upper-bound estimates.

    All three terms are upper bounds, so neither sign of ``gap`` is a
    certificate: a positive gap is evidence only, a negative one is
    inconclusive without certified lower bounds.
    """

    gap: float
    whole: Estimate
    first: Estimate
    second: Estimate
    note: str = ("all terms are upper bounds on E_F; a positive gap is evidence, "
                 "a negative gap is inconclusive without certified lower bounds")

    def to_json(self) -> dict:
        return {
            "gap": self.gap,
            "whole": self.whole.to_json(),
            "first": self.first.to_json(),
            "second": self.second.to_json(),
            "note": self.note,
        }


def strong_superadditivity_gap(sigma, dims: Sequence[int] | None = None,
                               options: OptimizerOptions | None = None) -> SuperadditivityGap:
    """Strong-superadditivity gap of a state on ``A1 (x) A2 (x) B1 (x) B2``."""
    dims = qmat.dims_of(sigma, dims)
    if dims is None or len(dims) != 4:
        raise DimensionError("strong superadditivity needs four factors (A1, A2, B1, B2)")
    a1, a2, b1, b2 = dims
    m = qmat.as_matrix(sigma)
    whole = eof(qmat.DensityMatrix(m, (a1 * a2, b1 * b2)), options=options)
    first = eof(qmat.DensityMatrix(qmat.partial_trace(m, dims, [0, 2]), (a1, b1), validate=False), options=options)
    second = eof(qmat.DensityMatrix(qmat.partial_trace(m, dims, [1, 3]), (a2, b2), validate=False), options=options)
    gap = whole.value - first.value - second.value
    if gap < 0:
        warnings.warn("negative strong-superadditivity gap from upper-bound estimates is inconclusive",
                      stacklevel=2)
    return SuperadditivityGap(gap, whole, first, second)
