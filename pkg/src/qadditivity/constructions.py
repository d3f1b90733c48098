"""Gadget channels that tilt a channel's capacity or entropy landscape.

Two flagged constructions wrap a channel ``N`` with a POVM ``{E, I - E}``:

* :func:`flagged_capacity_channel` takes an extra ``k``-bit classical input
  register.  With probability ``q`` it applies ``N`` and drops the register;
  otherwise it measures ``{E, I - E}`` and either forwards the ``k`` bits or
  outputs an erasure flag.  Its constrained capacity is
  ``q chi_N(rho) + (1 - q) k Tr(E rho) + (1 - q) delta``.
* :func:`flagged_entropy_channel` outputs ``N(rho)`` with probability ``q``;
  otherwise it measures ``{E, I - E}`` and outputs either a maximally mixed
  ``k``-qubit block or an erasure flag.  Choosing ``E`` from a linear
  functional ``tau`` (see :func:`tilting_povm`) subtracts ``<v|tau|v>`` from
  the output entropy of every pure input.

Outputs are block direct sums ``(N output) + (2**k labelled levels) +
(1 flag level)``, so a receiver can tell which branch fired.

The module also provides the generalized Pauli group and the channel that
conjugates ``N``'s output by a classically chosen Pauli.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qmat
from .channels import KrausChannel, weyl_operators
from .config import TOL
from .dual import LinearFunctional
from .errors import DimensionError
from .quantities import Ensemble, ensemble_holevo

MAX_FLAG_BITS = 6


def _h2(x: float) -> float:
    return qmat.binary_entropy(min(max(float(x), 0.0), 1.0))


@dataclass(frozen=True)
class FlagChannelParams:
    """Parameters of a flagged gadget: mixing ``q``, ``k`` flag bits, POVM element ``E``.

    When built by :func:`tilting_povm`, ``((1 - q) / q) k E = lam I - tau``.
    """

    q: float
    k: int
    E: np.ndarray
    lam: float = 0.0
    tau: LinearFunctional | None = None

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")
        if self.k < 0 or int(self.k) != self.k:
            raise ValueError(f"k must be a non-negative integer, got {self.k}")
        e = qmat.as_matrix(self.E).astype(complex)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise DimensionError(f"E must be square, got {e.shape}")
        e = 0.5 * (e + e.conj().T)
        w = np.linalg.eigvalsh(e)
        if w[0] < -1e-10 or w[-1] > 1 + 1e-10:
            raise ValueError(f"E must satisfy 0 <= E <= I; spectrum is [{w[0]:.3g}, {w[-1]:.3g}]")
        e.setflags(write=False)
        object.__setattr__(self, "E", e)
        object.__setattr__(self, "k", int(self.k))

    @property
    def dim(self) -> int:
        return self.E.shape[0]

    def to_json(self) -> dict:
        return {
            "q": self.q,
            "k": self.k,
            "E": qmat.matrix_to_json(self.E),
            "lambda": self.lam,
            "tau": None if self.tau is None else qmat.matrix_to_json(self.tau.tau),
        }

    @classmethod
    def from_json(cls, data: dict) -> "FlagChannelParams":
        tau = data.get("tau")
        return cls(
            float(data["q"]), int(data["k"]), qmat.matrix_from_json(data["E"]), float(data.get("lambda", 0.0)),
            None if tau is None else LinearFunctional(qmat.matrix_from_json(tau)),
        )


def tilting_povm(tau: LinearFunctional | np.ndarray, q: float, k_min: int = 1) -> FlagChannelParams:
    """POVM element with ``((1 - q) / q) k E = lam I - tau`` and ``0 <= E <= I``.

    ``lam`` is the top eigenvalue of ``tau`` (so ``E >= 0``) and ``k`` the
    smallest integer ``>= max(k_min, 1)`` that keeps ``E <= I``.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    if not isinstance(tau, LinearFunctional):
        tau = LinearFunctional(tau)
    w = np.linalg.eigvalsh(tau.tau)
    lam = float(w[-1])
    spread = lam - float(w[0])
    k = max(int(k_min), 1, math.ceil(q * spread / (1.0 - q) - 1e-12))
    e = q * (lam * np.eye(tau.dim) - tau.tau) / ((1.0 - q) * k)
    # clip rounding outside [0, 1]
    vals, vecs = np.linalg.eigh(0.5 * (e + e.conj().T))
    e = (vecs * np.clip(vals, 0.0, 1.0)) @ vecs.conj().T
    return FlagChannelParams(q, k, e, lam, tau)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def _check_size(channel: KrausChannel, params: FlagChannelParams, register: bool) -> None:
    if params.dim != channel.d_in:
        raise DimensionError(f"E acts on {params.dim} dimensions, channel input is {channel.d_in}")
    if params.k > MAX_FLAG_BITS:
        raise DimensionError(f"k = {params.k} exceeds the materialization cap of {MAX_FLAG_BITS} bits")
    d_in = channel.d_in * (2 ** params.k if register else 1)
    d_out = channel.d_out + 2 ** params.k + 1
    if max(d_in, d_out) > TOL.max_dim:
        raise DimensionError(f"gadget dimensions ({d_in}, {d_out}) exceed the cap {TOL.max_dim}")


def _measurement_kraus(params: FlagChannelParams, d_in: int, d_out: int, offset: int, fill) -> list[np.ndarray]:
    """Kraus operators of ``rho -> sqrt(1-q)`` times the measure-and-prepare branches.

    ``fill(s)`` returns the list of (output column, weight) pairs written for
    outcome ``E`` on input basis vector ``s``; outcome ``I - E`` writes the flag.
    """
    root_e = _psd_sqrt(params.E)
    root_f = _psd_sqrt(np.eye(d_in) - params.E)
    s1 = math.sqrt(1.0 - params.q)
    flag = d_out - 1
    ops = []
    for s in range(d_in):
        for col, weight in fill(s):
            a = np.zeros((d_out, d_in), dtype=complex)
            a[offset + col] = s1 * weight * root_e[s]
            ops.append(a)
        a = np.zeros((d_out, d_in), dtype=complex)
        a[flag] = s1 * root_f[s]
        ops.append(a)
    return ops


def _embed(kraus: np.ndarray, d_out: int) -> np.ndarray:
    out = np.zeros((kraus.shape[0], d_out, kraus.shape[2]), dtype=complex)
    out[:, : kraus.shape[1], :] = kraus
    return out


@dataclass(frozen=True)
class CapacityPredictor:
    """Closed-form capacity data for :func:`flagged_capacity_channel`."""

    channel: KrausChannel
    params: FlagChannelParams

    def delta(self, ens: Ensemble) -> float:
        """``H2(Tr E rho) - sum_i p_i H2(<v_i|E|v_i>)``; always in ``[0, 1]``."""
        e = self.params.E
        inner = np.einsum("mi,ij,mj->m", ens.states.conj(), e, ens.states).real
        te = float(np.trace(e @ ens.average()).real)
        return _h2(te) - float(sum(p * _h2(x) for p, x in zip(ens.probs, inner)))

    def ensemble_value(self, ens: Ensemble) -> float:
        """Holevo value of the lifted ensemble on the gadget channel, from the formula."""
        q, k = self.params.q, self.params.k
        te = float(np.trace(self.params.E @ ens.average()).real)
        return q * ensemble_holevo(self.channel, ens) + (1 - q) * k * te + (1 - q) * self.delta(ens)

    def sans_delta(self, rho, chi: float) -> float:
        """``q chi + (1 - q) k Tr(E rho)`` for a supplied value ``chi`` of ``chi_N(rho)``."""
        q, k = self.params.q, self.params.k
        return q * chi + (1 - q) * k * float(np.trace(self.params.E @ qmat.as_matrix(rho)).real)

    def lower_bound(self, rho, chi: float) -> float:
        """Lower bound on the gadget's constrained capacity at ``rho (x) I/2**k`` (``delta >= 0``)."""
        return self.sans_delta(rho, chi)

    def upper_bound(self, rho, chi: float) -> float:
        """Upper bound (``delta <= 1``)."""
        return self.sans_delta(rho, chi) + (1 - self.params.q)

    def lift(self, ens: Ensemble) -> Ensemble:
        """``{|v_i>|b>, p_i / 2**k}``: the ensemble that uses every register value equally."""
        n = 2 ** self.params.k
        states = np.einsum("mi,bj->mbij", ens.states, np.eye(n)).reshape(-1, ens.states.shape[1] * n)
        probs = np.repeat(ens.probs, n) / n
        return Ensemble(probs, states, (ens.states.shape[1], n))

    def lift_input(self, rho) -> np.ndarray:
        n = 2 ** self.params.k
        return np.kron(qmat.as_matrix(rho), np.eye(n) / n)


def flagged_capacity_channel(channel: KrausChannel, params: FlagChannelParams) -> tuple[KrausChannel, CapacityPredictor]:
    """Gadget on input ``d_in * 2**k`` (system (x) classical register).

    The register is measured in the computational basis before use.  Output
    blocks: ``N`` output, then ``2**k`` bit-string levels, then the flag.
    """
    _check_size(channel, params, register=True)
    d, n = channel.d_in, 2 ** params.k
    d_out = channel.d_out + n + 1
    ops = []
    sq = math.sqrt(params.q)
    for b in range(n):
        reg = np.zeros((1, n))
        reg[0, b] = 1.0
        for a in channel.kraus:
            big = np.zeros((d_out, d * n), dtype=complex)
            big[: channel.d_out] = sq * np.kron(a, reg)
            ops.append(big)
        branch = _measurement_kraus(params, d, d_out, channel.d_out, lambda s, b=b: [(b, 1.0)])
        ops.extend(np.kron(op, reg) for op in branch)
    gadget = KrausChannel(np.array(ops), name=f"flag-capacity:q={params.q},k={params.k}|{channel.name}")
    return gadget, CapacityPredictor(channel, params)


@dataclass(frozen=True)
class EntropyPredictor:
    """Closed-form output entropy and capacity sandwich for :func:`flagged_entropy_channel`."""

    channel: KrausChannel
    params: FlagChannelParams

    def output_entropy(self, rho) -> float:
        """``q H(N(rho)) + H2(q) + (1 - q) k Tr(E rho) + (1 - q) H2(Tr E rho)``."""
        q, k = self.params.q, self.params.k
        m = qmat.as_matrix(rho)
        if m.ndim == 1:
            m = np.outer(m, m.conj())
        te = float(np.trace(self.params.E @ m).real)
        h = qmat.von_neumann_entropy(self.channel(m), validate=False)
        return q * h + _h2(q) + (1 - q) * k * te + (1 - q) * _h2(te)

    def entropy_floor(self) -> float:
        """``q lam + H2(q)``: the least pure-input output entropy when ``tau`` is dual-feasible."""
        return self.params.q * self.params.lam + _h2(self.params.q)

    def chi_bounds(self, rho, output_entropy: float | None = None) -> tuple[float, float]:
        """``(H - q lam - H2(q) - (1 - q), H - q lam - H2(q))`` with ``H = H(N'(rho))``."""
        h = self.output_entropy(rho) if output_entropy is None else output_entropy
        top = h - self.entropy_floor()
        return top - (1 - self.params.q), top


def flagged_entropy_channel(channel: KrausChannel, params: FlagChannelParams) -> tuple[KrausChannel, EntropyPredictor]:
    """Gadget on the same input as ``N``; outcome ``E`` emits ``I / 2**k`` in the middle block."""
    _check_size(channel, params, register=False)
    n = 2 ** params.k
    d_out = channel.d_out + n + 1
    ops = list(_embed(math.sqrt(params.q) * channel.kraus, d_out))
    w = 1.0 / math.sqrt(n)
    ops.extend(_measurement_kraus(params, channel.d_in, d_out, channel.d_out,
                                  lambda s: [(m, w) for m in range(n)]))
    gadget = KrausChannel(np.array(ops), name=f"flag-entropy:q={params.q},k={params.k}|{channel.name}")
    return gadget, EntropyPredictor(channel, params)


@dataclass(frozen=True)
class PauliSet:
    """The ``d**2`` unitaries ``X_{d a + b} = T**a R**b``."""

    d: int
    unitaries: np.ndarray

    def twirl(self, rho) -> np.ndarray:
        m = qmat.as_matrix(rho)
        x = self.unitaries
        return np.einsum("kij,jl,kml->im", x, m, x.conj()) / self.d ** 2


def generalized_paulis(d: int) -> PauliSet:
    """Shift ``T|j> = |j+1 mod d>`` and clock ``R|j> = exp(2 pi i j/d)|j>`` products."""
    if d < 2:
        raise DimensionError(f"need d >= 2, got {d}")
    ops = weyl_operators(d)
    ops.setflags(write=False)
    return PauliSet(d, ops)


def pauli_extension_channel(channel: KrausChannel) -> KrausChannel:
    """``rho (x) |i><i| -> X_i N(rho) X_i^dagger`` on input ``d_in * d_out**2``.

    The register (second factor) is measured in its computational basis first.
    """
    d = channel.d_out
    paulis = generalized_paulis(d).unitaries
    n = d * d
    if channel.d_in * n > TOL.max_dim:
        raise DimensionError(f"extended input {channel.d_in * n} exceeds the cap {TOL.max_dim}")
    ops = []
    for i, x in enumerate(paulis):
        reg = np.zeros((1, n))
        reg[0, i] = 1.0
        ops.extend(np.kron(x @ a, reg) for a in channel.kraus)
    return KrausChannel(np.array(ops), name=f"pauli-extension|{channel.name}")


def uniform_pauli_ensemble(state, d_out: int) -> Ensemble:
    """``{|v>|i>, 1/d**2}`` for a fixed system state ``v``."""
    v = qmat.as_vector(state)
    n = d_out * d_out
    states = np.einsum("i,bj->bij", v / np.linalg.norm(v), np.eye(n)).reshape(n, -1)
    return Ensemble(np.full(n, 1.0 / n), states, (v.size, n))
