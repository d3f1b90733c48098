"""Finite-dimensional CPT maps in Kraus form.

The Kraus list is the canonical representation; the Stinespring isometry and
the Choi matrix are derived from it on demand.  The environment index of the
isometry runs fastest: ``V|psi> = sum_k (A_k|psi>) (x) |k>``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import qmat
from .config import TOL
from .errors import ConfigError, DimensionError, InvalidChannelError


@dataclass(frozen=True)
class KrausChannel:
    """A quantum channel ``rho -> sum_k A_k rho A_k^dagger``.

    ``kraus`` is stored as an array of shape ``(n_kraus, d_out, d_in)``.
    Construction only checks shapes; use :func:`validate_channel` for the
    CP/TP checks.
    """

    kraus: np.ndarray
    name: str = field(default="", compare=False)

    def __post_init__(self):
        k = np.asarray(self.kraus, dtype=complex)
        if k.ndim == 2:
            k = k[None]
        if k.ndim != 3 or k.shape[0] == 0:
            raise DimensionError(f"Kraus stack must have shape (n, d_out, d_in), got {k.shape}")
        qmat.check_dim(k.shape[1])
        qmat.check_dim(k.shape[2])
        k = np.array(k)
        k.setflags(write=False)
        object.__setattr__(self, "kraus", k)

    @property
    def d_in(self) -> int:
        return self.kraus.shape[2]

    @property
    def d_out(self) -> int:
        return self.kraus.shape[1]

    @property
    def n_kraus(self) -> int:
        return self.kraus.shape[0]

    def __call__(self, rho) -> np.ndarray:
        m = qmat.as_matrix(rho)
        if m.shape != (self.d_in, self.d_in):
            raise DimensionError(f"input is {m.shape}, channel expects d_in = {self.d_in}")
        a = self.kraus
        return np.einsum("koi,ij,kpj->op", a, m, a.conj())

    def adjoint(self, m) -> np.ndarray:
        """Heisenberg-picture map ``M -> sum_k A_k^dagger M A_k``."""
        a = self.kraus
        return np.einsum("koi,op,kpj->ij", a.conj(), np.asarray(m, dtype=complex), a)

    def choi(self) -> np.ndarray:
        """Unnormalized Choi matrix ``sum_ij |i><j| (x) N(|i><j|)`` (trace d_in)."""
        a = self.kraus
        # vec_k[(i, o)] = A_k[o, i]
        vecs = a.transpose(0, 2, 1).reshape(self.n_kraus, -1)
        return vecs.T @ vecs.conj()


@dataclass(frozen=True)
class StinespringIsometry:
    V: np.ndarray
    d_in: int
    d_out: int
    d_env: int

    def apply(self, rho) -> np.ndarray:
        """``V rho V^dagger`` on ``d_out x d_env``."""
        m = qmat.as_matrix(rho)
        return self.V @ m @ self.V.conj().T

    def reduced(self, rho) -> np.ndarray:
        return qmat.partial_trace(self.apply(rho), (self.d_out, self.d_env), [0])


@dataclass(frozen=True)
class ChannelReport:
    tp_residual: float
    choi_min_eigenvalue: float
    passed: bool
    messages: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "tp_residual": self.tp_residual,
            "choi_min_eigenvalue": self.choi_min_eigenvalue,
            "passed": self.passed,
            "messages": list(self.messages),
        }


def validate_channel(channel: KrausChannel, tp_tol: float | None = None, psd_tol: float | None = None) -> ChannelReport:
    """Check trace preservation and complete positivity.

    Never raises; failures are reported in the returned record.
    """
    tp_tol = TOL.tp if tp_tol is None else tp_tol
    psd_tol = TOL.psd if psd_tol is None else psd_tol
    a = channel.kraus
    gram = np.einsum("koi,koj->ij", a.conj(), a)
    residual = float(np.linalg.norm(gram - np.eye(channel.d_in)))
    choi = channel.choi()
    min_eig = float(np.linalg.eigvalsh(0.5 * (choi + choi.conj().T))[0])
    messages = []
    if residual > tp_tol:
        messages.append(f"sum A^dagger A deviates from identity by {residual:.3g}")
    if min_eig < -psd_tol:
        messages.append(f"Choi matrix has eigenvalue {min_eig:.3g}")
    return ChannelReport(residual, min_eig, not messages, tuple(messages))


def require_valid(channel: KrausChannel) -> None:
    report = validate_channel(channel)
    if not report.passed:
        raise InvalidChannelError("; ".join(report.messages))


def apply_channel(channel: KrausChannel, rho):
    """Apply a channel; typed input gives a typed :class:`~qadditivity.qmat.DensityMatrix`."""
    out = channel(rho)
    if isinstance(rho, qmat.DensityMatrix):
        return qmat.DensityMatrix(0.5 * (out + out.conj().T), (channel.d_out,), validate=False)
    return out


def stinespring(channel: KrausChannel) -> StinespringIsometry:
    require_valid(channel)
    a = channel.kraus
    v = a.transpose(1, 0, 2).reshape(channel.d_out * channel.n_kraus, channel.d_in)
    return StinespringIsometry(v, channel.d_in, channel.d_out, channel.n_kraus)


def from_isometry(V, d_out: int, d_env: int, name: str = "") -> KrausChannel:
    """Channel ``rho -> Tr_env V rho V^dagger`` for ``V : C^d_in -> C^d_out (x) C^d_env``."""
    V = np.asarray(V, dtype=complex)
    if V.shape[0] != d_out * d_env:
        raise DimensionError(f"isometry has {V.shape[0]} rows, expected {d_out} x {d_env}")
    return KrausChannel(V.reshape(d_out, d_env, V.shape[1]).transpose(1, 0, 2), name=name)


def tensor_channels(first: KrausChannel, second: KrausChannel) -> KrausChannel:
    a, b = first.kraus, second.kraus
    k = np.einsum("aij,bkl->abikjl", a, b).reshape(
        a.shape[0] * b.shape[0], a.shape[1] * b.shape[1], a.shape[2] * b.shape[2]
    )
    name = f"({first.name or 'N1'})x({second.name or 'N2'})"
    return KrausChannel(k, name=name)


def weyl_operators(d: int) -> np.ndarray:
    """Generalized Paulis ``X_{d a + b} = T^a R^b`` as an array ``(d*d, d, d)``.

    ``T|j> = |j+1 mod d>`` and ``R|j> = exp(2 pi i j / d)|j>``.
    """
    if d < 2:
        raise DimensionError("generalized Paulis need d >= 2")
    shift = np.roll(np.eye(d), 1, axis=0).astype(complex)
    clock = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    ops = np.empty((d * d, d, d), dtype=complex)
    for a in range(d):
        ta = np.linalg.matrix_power(shift, a)
        for b in range(d):
            ops[d * a + b] = ta @ np.linalg.matrix_power(clock, b)
    return ops


def _prob(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} = {value} is outside [0, 1]")
    return value


def identity_channel(d: int = 2) -> KrausChannel:
    return KrausChannel(np.eye(d)[None], name=f"identity:d={d}")


def depolarizing_channel(p: float, d: int = 2) -> KrausChannel:
    """``rho -> (1 - p) rho + p I/d`` via the Weyl-operator twirl."""
    p = _prob("p", p)
    paulis = weyl_operators(d)
    weights = np.full(d * d, p / d**2)
    weights[0] += 1.0 - p
    kraus = np.sqrt(weights)[:, None, None] * paulis
    return KrausChannel(kraus[weights > 0], name=f"depolarizing:p={p},d={d}")


def dephasing_channel(p: float, d: int = 2) -> KrausChannel:
    """``rho -> (1 - p) rho + p diag(rho)``."""
    p = _prob("p", p)
    ops = [math.sqrt(1.0 - p) * np.eye(d)]
    for i in range(d):
        e = np.zeros((d, d))
        e[i, i] = math.sqrt(p)
        ops.append(e)
    return KrausChannel(np.array(ops), name=f"dephasing:p={p},d={d}")


def erasure_channel(e: float, d: int = 2) -> KrausChannel:
    """Output dimension ``d + 1``; the last level is the erasure flag."""
    e = _prob("e", e)
    ops = []
    keep = np.zeros((d + 1, d))
    keep[:d, :d] = math.sqrt(1.0 - e) * np.eye(d)
    ops.append(keep)
    for i in range(d):
        flag = np.zeros((d + 1, d))
        flag[d, i] = math.sqrt(e)
        ops.append(flag)
    return KrausChannel(np.array(ops), name=f"erasure:e={e},d={d}")


def amplitude_damping_channel(gamma: float) -> KrausChannel:
    gamma = _prob("gamma", gamma)
    k0 = np.array([[1.0, 0.0], [0.0, math.sqrt(1.0 - gamma)]])
    k1 = np.array([[0.0, math.sqrt(gamma)], [0.0, 0.0]])
    return KrausChannel(np.array([k0, k1]), name=f"amplitude_damping:gamma={gamma}")


def mixed_channel(q: float, base: KrausChannel) -> KrausChannel:
    """``rho -> q N(rho) + (1 - q) I/d_out``.

    The extra Kraus operators are ``sqrt((1-q)/d_out) |i><j|``.
    """
    q = _prob("q", q)
    d_out, d_in = base.d_out, base.d_in
    noise = np.zeros((d_out * d_in, d_out, d_in), dtype=complex)
    for i in range(d_out):
        for j in range(d_in):
            noise[i * d_in + j, i, j] = math.sqrt((1.0 - q) / d_out)
    kraus = np.concatenate([math.sqrt(q) * base.kraus, noise])
    return KrausChannel(kraus, name=f"mixed:q={q}|{base.name}")


def random_channel(d_in: int, d_out: int, d_env: int, seed=None) -> KrausChannel:
    """Haar-random Stinespring isometry ``C^d_in -> C^d_out (x) C^d_env`` sliced into Kraus blocks."""
    if d_out * d_env < d_in:
        raise DimensionError(f"need d_out * d_env >= d_in, got {d_out} * {d_env} < {d_in}")
    V = qmat.haar_isometry(d_out * d_env, d_in, seed)
    return from_isometry(V, d_out, d_env, name=f"random:d_in={d_in},d_out={d_out},d_env={d_env},seed={seed}")


_NAMED = {
    "identity": (identity_channel, {"d": int}),
    "depolarizing": (depolarizing_channel, {"p": float, "d": int}),
    "dephasing": (dephasing_channel, {"p": float, "d": int}),
    "erasure": (erasure_channel, {"e": float, "d": int}),
    "amplitude_damping": (amplitude_damping_channel, {"gamma": float}),
    "random": (random_channel, {"d_in": int, "d_out": int, "d_env": int, "seed": int}),
}


def named_channel(kind: str, base: KrausChannel | None = None, **params) -> KrausChannel:
    """Build a channel by name.

    Kinds: ``identity`` (d), ``depolarizing`` (p, d), ``dephasing`` (p, d),
    ``erasure`` (e, d), ``amplitude_damping`` (gamma), ``random``
    (d_in, d_out, d_env, seed) and ``mixed`` (q, over ``base``).
    """
    if kind == "mixed":
        if base is None:
            raise ValueError("mixed channel needs a base channel")
        if set(params) - {"q"}:
            raise ValueError(f"unexpected parameters for mixed: {sorted(set(params) - {'q'})}")
        return mixed_channel(params.get("q", 1.0), base)
    if kind not in _NAMED:
        raise ValueError(f"unknown channel kind {kind!r}")
    fn, types = _NAMED[kind]
    unknown = set(params) - set(types)
    if unknown:
        raise ValueError(f"unexpected parameters for {kind}: {sorted(unknown)}")
    return fn(**{k: types[k](v) for k, v in params.items()})


_SPEC_RE = re.compile(r"^(?P<kind>[a-z_]+)(?::(?P<args>[^|]*))?$")


def parse_channel_spec(spec: str) -> KrausChannel:
    """Parse ``kind:key=value,...``; ``mixed:q=0.7|<base spec>`` nests a base."""
    head, _, rest = spec.partition("|")
    m = _SPEC_RE.match(head.strip())
    if not m:
        raise ConfigError(f"cannot parse channel spec {spec!r}")
    params = {}
    if m.group("args"):
        for item in m.group("args").split(","):
            if not item.strip():
                continue
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"bad parameter {item!r} in {spec!r}")
            params[key.strip()] = value.strip()
    base = parse_channel_spec(rest) if rest else None
    try:
        return named_channel(m.group("kind"), base=base, **params)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def channel_to_json(channel: KrausChannel) -> dict:
    return {
        "d_in": channel.d_in,
        "d_out": channel.d_out,
        "kraus": [qmat.matrix_to_json(a) for a in channel.kraus],
    }


def channel_from_json(data: dict) -> KrausChannel:
    kraus = np.array([qmat.matrix_from_json(a) for a in data["kraus"]])
    ch = KrausChannel(kraus)
    if ch.d_in != data.get("d_in", ch.d_in) or ch.d_out != data.get("d_out", ch.d_out):
        raise DimensionError("declared d_in/d_out do not match the Kraus operators")
    return ch
