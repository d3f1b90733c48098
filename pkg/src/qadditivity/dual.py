"""Linear-programming dual of the constrained Holevo capacity.

For a channel ``N`` and input ``rho`` the dual problem is

    maximize  Tr(tau rho)
    subject to  <v|tau|v> <= H(N(|v><v|))  for every unit vector v,

over Hermitian ``tau``, and ``chi_N(rho) = H(N(rho)) - max Tr(tau rho)``.
The constraint family is infinite; :func:`solve_dual` solves it on a finite
state set and refines the set with cutting planes from a local search for the
most violated state.  Any remaining violation found by that search is removed
by shifting ``tau`` by a multiple of the identity, so the returned functional
is feasible on every state the search has seen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from . import _manifold, qmat
from .channels import KrausChannel, mixed_channel, tensor_channels
from .errors import DimensionError, InvalidStateError, UnboundedDualError
from .quantities import (
    Ensemble,
    OptimizerOptions,
    _output_terms,
    constrained_chi,
    tensor_ensembles,
)

ACTIVE_TOL = 1e-6
VIOLATION_TOL = 1e-7


@dataclass(frozen=True)
class LinearFunctional:
    """``f(rho) = Tr(tau rho)`` for a Hermitian ``tau``."""

    tau: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.tau, dtype=complex)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise DimensionError(f"tau must be square, got {t.shape}")
        if np.max(np.abs(t - t.conj().T)) > qmat.TOL.herm * max(1.0, np.max(np.abs(t))):
            raise InvalidStateError("tau is not Hermitian")
        t = 0.5 * (t + t.conj().T)
        t.setflags(write=False)
        object.__setattr__(self, "tau", t)

    @property
    def dim(self) -> int:
        return self.tau.shape[0]

    def __call__(self, rho) -> float:
        if isinstance(rho, qmat.PureState) or np.ndim(rho) == 1:
            return float(self.on_states(qmat.as_vector(rho)[None])[0])
        return float(np.trace(self.tau @ qmat.as_matrix(rho)).real)

    def on_states(self, states: np.ndarray) -> np.ndarray:
        """``<v|tau|v>`` for each row ``v``."""
        s = np.asarray(states, dtype=complex)
        return np.einsum("mi,ij,mj->m", s.conj(), self.tau, s).real

    def to_json(self) -> dict:
        return {"tau": qmat.matrix_to_json(self.tau)}


@dataclass(frozen=True)
class DualSolution:
    functional: LinearFunctional
    value: float
    active: np.ndarray  # rows: constraint states with slack <= ACTIVE_TOL
    slack_min: float
    shift: float = 0.0  # identity shift applied to restore feasibility
    rounds: int = 0
    n_constraints: int = 0
    witness: Ensemble | None = field(default=None, compare=False)

    @property
    def tau(self) -> np.ndarray:
        return self.functional.tau

    def to_json(self) -> dict:
        return {
            "tau": qmat.matrix_to_json(self.tau),
            "value": self.value,
            "slack_min": self.slack_min,
            "active": [qmat.vector_to_json(v) for v in self.active],
        }


def hermitian_basis(d: int) -> np.ndarray:
    """Orthonormal basis (Hilbert-Schmidt) of d x d Hermitian matrices, shape ``(d*d, d, d)``."""
    basis = []
    for j in range(d):
        e = np.zeros((d, d), dtype=complex)
        e[j, j] = 1.0
        basis.append(e)
    for j in range(d):
        for k in range(j + 1, d):
            e = np.zeros((d, d), dtype=complex)
            e[j, k] = e[k, j] = 1.0 / math.sqrt(2.0)
            basis.append(e)
            e = np.zeros((d, d), dtype=complex)
            e[j, k] = -1j / math.sqrt(2.0)
            e[k, j] = 1j / math.sqrt(2.0)
            basis.append(e)
    return np.array(basis)


def _expectations(basis: np.ndarray, states: np.ndarray) -> np.ndarray:
    """``<v|B_a|v>`` as a matrix (states x basis)."""
    return np.einsum("mi,aij,mj->ma", states.conj(), basis, states).real


def output_entropies(channel: KrausChannel, states: np.ndarray) -> np.ndarray:
    s = np.asarray(states, dtype=complex)
    s = s / np.linalg.norm(s, axis=1, keepdims=True)
    ent, *_ = _output_terms(channel.kraus, s)
    return ent


def random_states(d: int, count: int, seed=None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, d)) + 1j * rng.standard_normal((count, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def symmetric_qubit_states(n_qubits: int = 1) -> np.ndarray:
    """Products of the six Pauli eigenstates on ``n_qubits`` qubits (``6**n`` states)."""
    s = 1.0 / math.sqrt(2.0)
    six = np.array([[1, 0], [0, 1], [s, s], [s, -s], [s, 1j * s], [s, -1j * s]], dtype=complex)
    out = six
    for _ in range(n_qubits - 1):
        out = np.einsum("ia,jb->ijab", out, six).reshape(out.shape[0] * 6, -1)
    return out


def _states_array(states, d: int) -> np.ndarray:
    rows = [qmat.as_vector(s) for s in states]
    if not rows:
        return np.zeros((0, d), dtype=complex)
    a = np.array(rows, dtype=complex)
    if a.shape[1] != d:
        raise DimensionError(f"constraint states have dimension {a.shape[1]}, expected {d}")
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def _solve_lp(rho: np.ndarray, states: np.ndarray, entropies: np.ndarray, basis: np.ndarray) -> np.ndarray:
    a_ub = _expectations(basis, states)
    c = -np.einsum("aij,ji->a", basis, rho).real
    res = linprog(
        c, A_ub=a_ub, b_ub=entropies, bounds=[(None, None)] * basis.shape[0], method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status == 3:
        raise UnboundedDualError("dual LP is unbounded; the constraint states do not span the input space")
    if res.status != 0:
        raise RuntimeError(f"dual LP failed: {res.message}")
    return np.tensordot(res.x, basis, axes=1)


def most_violated_states(channel: KrausChannel, tau: np.ndarray, restarts: int = 16, seed=0,
                         max_iters: int = 500) -> tuple[np.ndarray, np.ndarray]:
    """Local minima of the slack ``H(N(|v><v|)) - <v|tau|v>`` from a sphere search.

    Returns the final states (rows) and their slacks, one per restart.
    """
    kraus = channel.kraus
    tau = np.asarray(tau, dtype=complex)

    def fun(x):
        v = x[..., 0]
        ent, grad, _, _ = _output_terms(kraus, v)
        tv = v @ tau.T
        lin = np.einsum("bi,bi->b", v.conj(), tv).real
        return ent - lin, (grad - 2.0 * tv)[..., None]

    x0 = _manifold.random_points(channel.d_in, 1, _manifold.restart_seeds(seed, restarts))
    res = _manifold.minimize(fun, x0, max_iters=max_iters, value_tol=1e-12)
    states = res.x[..., 0]
    states = states / np.linalg.norm(states, axis=1, keepdims=True)
    return states, output_entropies(channel, states) - LinearFunctional(tau).on_states(states)


def solve_dual(
    channel: KrausChannel,
    rho,
    constraints: Sequence = (),
    *,
    witness: Ensemble | None = None,
    use_witness: bool = True,
    options: OptimizerOptions | None = None,
    n_random: int | None = None,
    rounds: int = 10,
    separation_restarts: int | None = None,
    seed: int = 0,
) -> DualSolution:
    """Solve the sampled dual LP with cutting-plane refinement.

    The constraint set is the caller's ``constraints``, the signal states of
    ``witness`` (computed with :func:`constrained_chi` when not given and
    ``use_witness`` is true), and ``n_random`` seeded random states (default
    ``200 * d_in**2``).  After each LP solve a sphere search looks for states
    violating the constraints; violators are appended and the LP re-solved, up
    to ``rounds`` times.
    """
    options = options or OptimizerOptions()
    d = channel.d_in
    rho = qmat.as_matrix(rho)
    if rho.shape != (d, d):
        raise DimensionError(f"rho is {rho.shape}, channel input is {d}")
    qmat.validate_density(rho)
    if witness is None and use_witness:
        witness = constrained_chi(channel, rho, options).witness
    n_random = 200 * d * d if n_random is None else n_random
    separation_restarts = separation_restarts or max(8, 4 * d)

    parts = [_states_array(constraints, d)]
    if witness is not None:
        parts.append(witness.states)
    parts.append(random_states(d, n_random, np.random.SeedSequence([seed, 1])))
    states = np.concatenate(parts)
    entropies = output_entropies(channel, states)
    basis = hermitian_basis(d)

    tau = _solve_lp(rho, states, entropies, basis)
    used_rounds = 0
    sep_min = np.inf
    for rnd in range(rounds):
        cand, slack = most_violated_states(channel, tau, separation_restarts, seed=[seed, 2, rnd])
        sep_min = float(slack.min())
        bad = slack < -1e-10
        if not bad.any():
            break
        used_rounds += 1
        states = np.concatenate([states, cand[bad]])
        entropies = np.concatenate([entropies, output_entropies(channel, cand[bad])])
        tau = _solve_lp(rho, states, entropies, basis)
    else:
        _, slack = most_violated_states(channel, tau, separation_restarts, seed=[seed, 3])
        sep_min = float(slack.min())

    functional = LinearFunctional(tau)
    slacks = entropies - functional.on_states(states)
    slack_min = min(float(slacks.min()), sep_min)
    shift = 0.0
    if slack_min < 0.0:
        shift = slack_min
        tau = tau + shift * np.eye(d)
        functional = LinearFunctional(tau)
        slacks = entropies - functional.on_states(states)
        slack_min = 0.0
    value = functional(rho)
    active = states[slacks <= ACTIVE_TOL]
    return DualSolution(functional, value, active, float(min(slacks.min(), slack_min)),
                        shift, used_rounds, states.shape[0], witness)


@dataclass(frozen=True)
class FeasibilityReport:
    min_slack: float
    violations: int
    n_checked: int
    near_active: np.ndarray  # states with slack <= ACTIVE_TOL
    slacks: np.ndarray = field(repr=False)

    def to_json(self) -> dict:
        return {
            "min_slack": self.min_slack,
            "violations": self.violations,
            "n_checked": self.n_checked,
            "near_active": len(self.near_active),
        }


def dual_feasibility_check(channel: KrausChannel, functional: LinearFunctional | np.ndarray,
                           samples: int = 10_000, seed=0, states: Sequence = ()) -> FeasibilityReport:
    """Slack ``H(N(|v><v|)) - f(|v><v|)`` on seeded random states plus ``states``.

    Slacks below ``-VIOLATION_TOL`` count as violations.
    """
    if not isinstance(functional, LinearFunctional):
        functional = LinearFunctional(functional)
    d = channel.d_in
    check = np.concatenate([_states_array(states, d), random_states(d, samples, seed)])
    slacks = output_entropies(channel, check) - functional.on_states(check)
    return FeasibilityReport(
        float(slacks.min()), int(np.sum(slacks < -VIOLATION_TOL)), check.shape[0],
        check[slacks <= ACTIVE_TOL], slacks,
    )


# ---------------------------------------------------------------------------
# Entropy gradient
# ---------------------------------------------------------------------------


class SingularOutputError(InvalidStateError):
    """``N(rho)`` has (numerically) zero eigenvalues, so ``log N(rho)`` is undefined."""


def entropy_output_gradient(channel: KrausChannel, rho, cutoff: float = 1e-12) -> np.ndarray:
    """``G = sum_k A_k^dagger log2(N(rho)) A_k``.

    For traceless ``sigma``, ``H(N(rho + eps sigma)) - H(N(rho)) = -eps Tr(sigma G) + O(eps^2)``.
    Raises :class:`SingularOutputError` when ``N(rho)`` has an eigenvalue below
    ``cutoff``; see :func:`gradient_ladder` for the regularized alternative.
    """
    out = channel(qmat.as_matrix(rho))
    out = 0.5 * (out + out.conj().T)
    w, q = np.linalg.eigh(out)
    if w[0] < cutoff:
        raise SingularOutputError(f"N(rho) has eigenvalue {w[0]:.3g} below {cutoff:g}")
    log_out = (q * np.log2(w)) @ q.conj().T
    return channel.adjoint(log_out)


@dataclass(frozen=True)
class GradientLadder:
    qs: tuple[float, ...]
    gradients: tuple[np.ndarray, ...]
    extrapolated: np.ndarray  # linear extrapolation in (1 - q) to q = 1 from the last two rungs


def gradient_ladder(channel: KrausChannel, rho, ladder: Sequence[float] = (0.9, 0.99, 0.999)) -> GradientLadder:
    """Entropy gradients of ``q N + (1 - q) I/d_out`` along a ladder of ``q -> 1``.

    The extrapolated value is only meaningful where the limit exists; singular
    directions diverge logarithmically and show up as growth along the ladder.
    """
    grads = tuple(entropy_output_gradient(mixed_channel(q, channel), rho) for q in ladder)
    if len(ladder) >= 2:
        (qa, ga), (qb, gb) = (ladder[-2], grads[-2]), (ladder[-1], grads[-1])
        ea, eb = 1.0 - qa, 1.0 - qb
        extrapolated = gb + (gb - ga) * (0.0 - eb) / (eb - ea)
    else:
        extrapolated = grads[-1]
    return GradientLadder(tuple(ladder), grads, extrapolated)


def chi_supergradient(channel: KrausChannel, rho, dual: DualSolution | LinearFunctional) -> LinearFunctional:
    """A supergradient of the concave map ``rho -> chi_N(rho)`` at ``rho``: ``-G - tau``.

    ``tau`` is the dual functional at ``rho``.  Defined up to multiples of the
    identity, which do not matter on trace-one states.
    """
    tau = dual.functional.tau if isinstance(dual, DualSolution) else dual.tau
    return LinearFunctional(-entropy_output_gradient(channel, rho) - tau)


# ---------------------------------------------------------------------------
# Reconstruction of a functional from values and first derivatives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FunctionalSample:
    """Value of ``f`` at ``|v>`` and its derivatives along orthogonal directions.

    Each entry of ``derivatives`` is ``(w, d_w, d_iw)`` with ``<v|w> = 0``:
    the derivatives of ``f`` at ``|v>`` when moving along ``|w>`` and ``i|w>``
    (``sqrt(1 - eps^2)|v> + eps|w>``), i.e. ``2 Re <v|tau|w>`` and
    ``-2 Im <v|tau|w>``.
    """

    state: np.ndarray
    value: float
    derivatives: tuple[tuple[np.ndarray, float, float], ...]


def orthogonal_complement(v: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of the complement of ``v``."""
    v = np.asarray(v, dtype=complex).reshape(-1, 1)
    q, _ = np.linalg.qr(np.hstack([v / np.linalg.norm(v), np.eye(v.size)]))
    return q[:, 1:v.size]


def sample_functional(tau, states) -> list[FunctionalSample]:
    """Exact samples of ``Tr(tau .)`` at ``states`` (directions: a basis of each complement)."""
    tau = np.asarray(tau, dtype=complex)
    out = []
    for v in states:
        v = qmat.as_vector(v)
        v = v / np.linalg.norm(v)
        derivs = []
        for w in orthogonal_complement(v).T:
            a = np.vdot(v, tau @ w)
            derivs.append((w, 2.0 * a.real, -2.0 * a.imag))
        out.append(FunctionalSample(v, float(np.vdot(v, tau @ v).real), tuple(derivs)))
    return out


def entropy_samples(channel: KrausChannel, states) -> list[FunctionalSample]:
    """Samples of ``v -> H(N(|v><v|))``: values and first derivatives from :func:`entropy_output_gradient`.

    A dual functional that is tight at these states and differentiable there
    must agree with these samples.
    """
    out = []
    for v in states:
        v = qmat.as_vector(v)
        v = v / np.linalg.norm(v)
        g = entropy_output_gradient(channel, np.outer(v, v.conj()))
        derivs = []
        for w in orthogonal_complement(v).T:
            a = -np.vdot(v, g @ w)
            derivs.append((w, 2.0 * a.real, -2.0 * a.imag))
        value = qmat.von_neumann_entropy(channel(np.outer(v, v.conj())), validate=False)
        out.append(FunctionalSample(v, value, tuple(derivs)))
    return out


def reconstruct_functional(data: Sequence[FunctionalSample], return_residual: bool = False):
    """Recover ``tau`` from values and directional derivatives at spanning states.

    Solves the (overdetermined) real linear system in the ``d**2`` coordinates
    of ``tau`` by least squares.  Raises ``ValueError`` when the states do not
    span, which leaves the system rank deficient.
    """
    if not data:
        raise ValueError("no samples")
    d = np.asarray(data[0].state).size
    basis = hermitian_basis(d)
    rows, rhs = [], []
    for sample in data:
        v = np.asarray(sample.state, dtype=complex)
        bv = np.einsum("aij,j->ai", basis, v)
        rows.append(np.einsum("i,ai->a", v.conj(), bv).real)
        rhs.append(sample.value)
        for w, d_w, d_iw in sample.derivatives:
            a = np.einsum("i,ai->a", np.asarray(w).conj(), bv).conj()  # <v|B_a|w> = conj(<w|B_a|v>)
            rows.append(2.0 * a.real)
            rhs.append(d_w)
            rows.append(-2.0 * a.imag)
            rhs.append(d_iw)
    a_mat, b = np.array(rows), np.array(rhs)
    t, _, rank, _ = np.linalg.lstsq(a_mat, b, rcond=None)
    if rank < d * d:
        raise ValueError(f"samples determine only {rank} of {d * d} coordinates; states must span")
    functional = LinearFunctional(np.tensordot(t, basis, axes=1))
    if return_residual:
        return functional, float(np.linalg.norm(a_mat @ t - b))
    return functional


# ---------------------------------------------------------------------------
# Dual additivity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualAdditivityReport:
    first: DualSolution
    second: DualSolution
    joint: DualSolution
    tau_distance: float  # ||tau_T - (tau_1 (x) I + I (x) tau_2)||_F
    value_gap: float  # f_T(rho1 (x) rho2) - f_1(rho1) - f_2(rho2)

    def to_json(self) -> dict:
        return {
            "first": self.first.to_json(),
            "second": self.second.to_json(),
            "joint": self.joint.to_json(),
            "tau_distance": self.tau_distance,
            "value_gap": self.value_gap,
        }


def dual_additivity_check(
    first: KrausChannel,
    second: KrausChannel,
    rho1,
    rho2,
    options: OptimizerOptions | None = None,
    constraints1: Sequence = (),
    constraints2: Sequence = (),
    seed: int = 0,
) -> DualAdditivityReport:
    """Compare the joint dual functional with the sum of the single ones.

    The joint problem gets the products of the single constraint sets and a
    product-seeded witness in addition to its own random sample.  A nonzero
    report is evidence about the dual structure, not a certificate, since
    sampled duals need not be unique.
    """
    options = options or OptimizerOptions()
    r1, r2 = qmat.as_matrix(rho1), qmat.as_matrix(rho2)
    s1 = solve_dual(first, r1, constraints1, options=options, seed=seed)
    s2 = solve_dual(second, r2, constraints2, options=options, seed=seed)
    joint_channel = tensor_channels(first, second)
    rho_t = np.kron(r1, r2)
    c1 = _states_array(constraints1, first.d_in)
    c2 = _states_array(constraints2, second.d_in)
    joint_constraints = np.einsum("ia,jb->ijab", c1, c2).reshape(-1, first.d_in * second.d_in)
    seed_ens = tensor_ensembles(s1.witness, s2.witness) if s1.witness is not None and s2.witness is not None else None
    joint_witness = constrained_chi(joint_channel, rho_t, options, initial=[seed_ens] if seed_ens else ())
    st = solve_dual(joint_channel, rho_t, list(joint_constraints), witness=joint_witness.witness,
                    options=options, seed=seed)
    additive = np.kron(s1.tau, np.eye(second.d_in)) + np.kron(np.eye(first.d_in), s2.tau)
    return DualAdditivityReport(
        s1, s2, st,
        float(np.linalg.norm(st.tau - additive)),
        st.value - s1.value - s2.value,
    )
