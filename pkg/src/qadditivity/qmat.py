"""Dense linear algebra and entropy primitives.

Matrices are plain ``numpy`` complex arrays.  :class:`DensityMatrix` and
:class:`PureState` wrap an array together with the dimensions of its tensor
factors, which is what partial traces and bipartite quantities need.  All
entropies are in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import TOL
from .errors import DimensionError, InvalidStateError

LOG2E = 1.0 / math.log(2.0)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def check_dim(dim: int) -> int:
    if dim < 1:
        raise DimensionError(f"dimension must be positive, got {dim}")
    if dim > TOL.max_dim:
        raise DimensionError(f"dimension {dim} exceeds the cap of {TOL.max_dim}")
    return dim


def _check_dims(dims: Sequence[int], total: int) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims) or math.prod(dims) != total:
        raise DimensionError(f"factor dims {dims} do not multiply to {total}")
    return dims


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DensityMatrix:
    """A validated density matrix with declared tensor factors.

    Args:
        matrix: square complex array.
        dims: factor dimensions, product equal to the matrix size.  Defaults to
            a single factor.
        validate: run the Hermitian / PSD / unit-trace checks.
    """

    matrix: np.ndarray
    dims: tuple[int, ...] = ()
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"density matrix must be square, got shape {m.shape}")
        check_dim(m.shape[0])
        dims = self.dims or (m.shape[0],)
        object.__setattr__(self, "dims", _check_dims(dims, m.shape[0]))
        object.__setattr__(self, "matrix", _frozen(m))
        if self.validate:
            validate_density(m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def partial_trace(self, keep: Sequence[int]) -> "DensityMatrix":
        kept = sorted(set(keep))
        out = partial_trace(self.matrix, self.dims, kept)
        return DensityMatrix(out, tuple(self.dims[i] for i in kept), validate=False)

    def entropy(self) -> float:
        return von_neumann_entropy(self.matrix)


@dataclass(frozen=True)
class PureState:
    """A unit vector with declared tensor factors."""

    vec: np.ndarray
    dims: tuple[int, ...] = ()
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.vec, dtype=complex).reshape(-1)
        check_dim(v.size)
        dims = self.dims or (v.size,)
        object.__setattr__(self, "dims", _check_dims(dims, v.size))
        object.__setattr__(self, "vec", _frozen(v))
        if self.validate and abs(np.linalg.norm(v) - 1.0) > TOL.norm:
            raise InvalidStateError(f"state norm {float(np.linalg.norm(v)):.12g} is not 1")

    @property
    def dim(self) -> int:
        return self.vec.size

    def projector(self) -> np.ndarray:
        return np.outer(self.vec, self.vec.conj())

    def density(self) -> DensityMatrix:
        return DensityMatrix(self.projector(), self.dims, validate=False)


def as_matrix(rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        return rho.matrix
    if isinstance(rho, PureState):
        return rho.projector()
    return np.asarray(rho, dtype=complex)


def as_vector(v) -> np.ndarray:
    if isinstance(v, PureState):
        return v.vec
    return np.asarray(v, dtype=complex).reshape(-1)


def dims_of(obj, dims=None) -> tuple[int, ...] | None:
    if dims is not None:
        return tuple(int(d) for d in dims)
    if isinstance(obj, (DensityMatrix, PureState)):
        return obj.dims
    return None


def validate_density(m: np.ndarray) -> None:
    """Raise :class:`InvalidStateError` unless ``m`` is a density matrix."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidStateError(f"not a square matrix: shape {m.shape}")
    herm_err = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if herm_err > TOL.herm:
        raise InvalidStateError(f"not Hermitian (error {herm_err:.3g})")
    tr = np.trace(m).real
    if abs(tr - 1.0) > TOL.trace:
        raise InvalidStateError(f"trace {float(tr):.12g} is not 1")
    lam_min = np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0]
    if lam_min < -TOL.psd:
        raise InvalidStateError(f"negative eigenvalue {lam_min:.3g}")


# ---------------------------------------------------------------------------
# Products and partial traces
# ---------------------------------------------------------------------------


def _raw(o) -> np.ndarray:
    if isinstance(o, DensityMatrix):
        return o.matrix
    if isinstance(o, PureState):
        return o.vec
    return np.asarray(o, dtype=complex)


def tensor_product(*ops):
    """Kronecker product of matrices, vectors, or typed states.

    Typed inputs (:class:`DensityMatrix` / :class:`PureState`) produce a typed
    output whose factor list is the concatenation of the inputs' factors.
    """
    if not ops:
        raise ValueError("tensor_product needs at least one operand")
    if all(isinstance(o, DensityMatrix) for o in ops):
        mat = tensor_product(*(o.matrix for o in ops))
        return DensityMatrix(mat, sum((o.dims for o in ops), ()), validate=False)
    if all(isinstance(o, PureState) for o in ops):
        vec = tensor_product(*(o.vec for o in ops))
        return PureState(vec, sum((o.dims for o in ops), ()), validate=False)
    out = _raw(ops[0])
    for o in ops[1:]:
        out = np.kron(out, _raw(o))
    check_dim(out.shape[0])
    return out


def partial_trace(rho, dims: Sequence[int] | None = None, keep: Sequence[int] = (0,)) -> np.ndarray:
    """Trace out every factor not listed in ``keep``.

    The kept factors stay in their original order.
    """
    dims = dims_of(rho, dims)
    m = as_matrix(rho)
    if dims is None:
        raise DimensionError("partial_trace needs declared factor dimensions")
    dims = _check_dims(dims, m.shape[0])
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise DimensionError("keep must name at least one factor")
    if keep[0] < 0 or keep[-1] >= len(dims):
        raise DimensionError(f"keep {keep} out of range for {len(dims)} factors")
    n = len(dims)
    t = m.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    if n > 13:
        raise DimensionError("too many tensor factors")
    row = list(letters[:n])
    col = [letters[i] if i not in keep else letters[n + i].upper() for i in range(n)]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    res = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    d = math.prod(dims[i] for i in keep)
    return res.reshape(d, d)


def permute_factors(rho, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors of a matrix or vector; ``order[i]`` is the old index of new factor ``i``."""
    dims = tuple(dims)
    a = _raw(rho)
    n = len(dims)
    if a.ndim == 1:
        return a.reshape(dims).transpose(order).reshape(-1)
    t = a.reshape(dims + dims).transpose(list(order) + [n + i for i in order])
    return t.reshape(a.shape)


# ---------------------------------------------------------------------------
# Eigendecomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.conj().T


def _check_hermitian(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if np.max(np.abs(m - m.conj().T)) > TOL.herm * scale:
        raise InvalidStateError("matrix is not Hermitian")
    return 0.5 * (m + m.conj().T)


def jacobi_eigh(m: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigensolver for a complex Hermitian matrix.

    Sweeps the upper triangle in row-major order, annihilating each
    off-diagonal entry with a phase-adjusted plane rotation, until the
    off-diagonal Frobenius mass drops below ``tol * ||m||_F``.

    Returns:
        (eigenvalues ascending, eigenvectors as columns)
    """
    a = np.array(m, dtype=complex)
    n = a.shape[0]
    q = np.eye(n, dtype=complex)
    thresh = tol * np.linalg.norm(a)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.linalg.norm(a) ** 2 - np.sum(np.abs(np.diag(a)) ** 2), 0.0))
        if off <= thresh:
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                apr = a[p, r]
                b = abs(apr)
                if b == 0.0:
                    continue
                phase = apr / b
                theta = 0.5 * math.atan2(2.0 * b, (a[r, r] - a[p, p]).real)
                c, s = math.cos(theta), math.sin(theta)
                # J = diag(1, conj(phase)) @ [[c, s], [-s, c]] acting on (p, r)
                j = np.array([[c, s], [-s * phase.conjugate(), c * phase.conjugate()]])
                cols = a[:, [p, r]] @ j
                a[:, [p, r]] = cols
                rows = j.conj().T @ a[[p, r], :]
                a[[p, r], :] = rows
                q[:, [p, r]] = q[:, [p, r]] @ j
    w = np.diag(a).real.copy()
    order = np.argsort(w, kind="stable")
    return w[order], q[:, order]


def hermitian_eig(m, method: str = "lapack") -> Spectrum:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    ``method`` is ``"lapack"`` (``numpy.linalg.eigh``) or ``"jacobi"``.
    """
    m = _check_hermitian(as_matrix(m))
    check_dim(m.shape[0])
    if method == "lapack":
        w, q = np.linalg.eigh(m)
    elif method == "jacobi":
        w, q = jacobi_eigh(m)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    return Spectrum(w[::-1].copy(), q[:, ::-1].copy())


# ---------------------------------------------------------------------------
# Entropies
# ---------------------------------------------------------------------------


def spectrum_entropy(w) -> float:
    """Shannon entropy in bits of a (clamped) eigenvalue list."""
    w = np.asarray(w, dtype=float)
    w = np.where(w < 0, 0.0, w)
    w = w[w > TOL.log_floor]
    return float(max(0.0, -np.sum(w * np.log2(w))))


shannon_entropy = spectrum_entropy


def von_neumann_entropy(rho, validate: bool = True) -> float:
    """H(rho) = -Tr rho log2 rho."""
    m = as_matrix(rho)
    if validate and not isinstance(rho, DensityMatrix):
        validate_density(m)
    w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    return spectrum_entropy(w)


def binary_entropy(x: float) -> float:
    if x < -TOL.norm or x > 1.0 + TOL.norm:
        raise ValueError(f"binary entropy argument {x!r} outside [0, 1]")
    x = min(max(float(x), 0.0), 1.0)
    return spectrum_entropy([x, 1.0 - x])


def matrix_log2(m, floor: float = 0.0) -> np.ndarray:
    """log2 of a PSD Hermitian matrix; eigenvalues are raised to ``floor`` first."""
    m = as_matrix(m)
    w, q = np.linalg.eigh(0.5 * (m + m.conj().T))
    if floor <= 0.0 and np.min(w) <= 0.0:
        raise InvalidStateError("matrix log of a singular matrix")
    w = np.maximum(w, floor)
    return (q * np.log2(w)) @ q.conj().T


# ---------------------------------------------------------------------------
# Purification and random objects
# ---------------------------------------------------------------------------


def rank(m, rel_cutoff: float = 1e-9) -> int:
    w = np.linalg.eigvalsh(as_matrix(m))
    if w[-1] <= 0:
        return 0
    return int(np.sum(w > rel_cutoff * w[-1]))


def purify(rho, rel_cutoff: float = 1e-12) -> PureState:
    """Purification on ``dim x rank(rho)`` whose first-factor marginal is rho."""
    m = as_matrix(rho)
    if not isinstance(rho, DensityMatrix):
        validate_density(m)
    spec = hermitian_eig(m)
    lam = np.clip(spec.eigenvalues, 0.0, None)
    r = max(1, int(np.sum(lam > rel_cutoff * lam[0])))
    psi = np.zeros((m.shape[0], r), dtype=complex)
    for j in range(r):
        psi[:, j] = math.sqrt(lam[j]) * spec.eigenvectors[:, j]
    vec = psi.reshape(-1)
    vec = vec / np.linalg.norm(vec)
    return PureState(vec, (m.shape[0], r))


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def ginibre(rows: int, cols: int, seed=None) -> np.ndarray:
    rng = _rng(seed)
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / math.sqrt(2.0)


def haar_isometry(rows: int, cols: int, seed=None) -> np.ndarray:
    """Haar-random isometry from QR of a complex Gaussian matrix (phase-fixed)."""
    if rows < cols:
        raise DimensionError(f"isometry needs rows >= cols, got {rows} x {cols}")
    z = ginibre(rows, cols, seed)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_unitary(dim: int, seed=None) -> np.ndarray:
    return haar_isometry(dim, dim, seed)


def random_pure_state(dim: int, seed=None) -> np.ndarray:
    v = ginibre(dim, 1, seed)[:, 0]
    return v / np.linalg.norm(v)


def random_density(dim: int, rank: int | None = None, seed=None) -> np.ndarray:
    """Random density matrix G G^dagger / Tr, G a dim x rank Ginibre matrix."""
    g = ginibre(dim, rank or dim, seed)
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(dim: int, seed=None) -> np.ndarray:
    g = ginibre(dim, dim, seed)
    return 0.5 * (g + g.conj().T)


# ---------------------------------------------------------------------------
# JSON encoding: complex scalars as [re, im], matrices row-major
# ---------------------------------------------------------------------------


def complex_to_json(z) -> list[float]:
    z = complex(z)
    return [float(z.real), float(z.imag)]


def matrix_to_json(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[complex_to_json(z) for z in row] for row in m]


def matrix_from_json(data) -> np.ndarray:
    a = np.asarray(data, dtype=float)
    if a.ndim == 2:  # real-valued shorthand
        return a.astype(complex)
    if a.ndim != 3 or a.shape[-1] != 2:
        raise ValueError("matrix JSON must be rows of [re, im] pairs")
    return a[..., 0] + 1j * a[..., 1]


def vector_to_json(v) -> list:
    return [complex_to_json(z) for z in np.asarray(v, dtype=complex).reshape(-1)]


def vector_from_json(data) -> np.ndarray:
    a = np.asarray(data, dtype=float)
    if a.ndim == 1:
        return a.astype(complex)
    return a[:, 0] + 1j * a[:, 1]


def density_to_json(rho: DensityMatrix) -> dict:
    return {"dims": list(rho.dims), "matrix": matrix_to_json(rho.matrix)}


def density_from_json(data: dict) -> DensityMatrix:
    m = matrix_from_json(data["matrix"])
    return DensityMatrix(m, tuple(data.get("dims") or (m.shape[0],)))


def pure_to_json(v: PureState) -> dict:
    return {"dims": list(v.dims), "vec": vector_to_json(v.vec)}


def pure_from_json(data: dict) -> PureState:
    v = vector_from_json(data["vec"])
    return PureState(v, tuple(data.get("dims") or (v.size,)))
