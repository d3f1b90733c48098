"""Batched Riemannian descent on complex Stiefel manifolds.

Every optimization in the package lives on a product of spheres or on the set
of isometries ``{U : U^dagger U = I}``: pure inputs, ensembles (stacked
sub-normalized vectors on one big sphere) and decompositions of a fixed
density matrix (isometries acting on its purification).  This module provides
one solver for all of them.

The solver runs a batch of independent restarts at once.  Each restart keeps
its own step size and line-search state, and per-restart arithmetic never
mixes with other restarts, so results do not depend on the batch size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Objective = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


def _inner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum((a.conj() * b).real, axis=(-2, -1))


def project(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Tangent projection ``Z - X sym(X^dagger Z)``."""
    xz = np.swapaxes(x.conj(), -1, -2) @ z
    return z - x @ (0.5 * (xz + np.swapaxes(xz.conj(), -1, -2)))


def retract(y: np.ndarray) -> np.ndarray:
    """Polar retraction onto the Stiefel manifold."""
    u, _, vh = np.linalg.svd(y, full_matrices=False)
    return u @ vh


@dataclass
class BatchResult:
    x: np.ndarray  # best iterate per restart, shape (R, n, r)
    f: np.ndarray  # best value per restart
    converged: np.ndarray  # bool per restart
    iterations: np.ndarray  # int per restart


def minimize(
    fun: Objective,
    x0: np.ndarray,
    max_iters: int = 2000,
    value_tol: float = 1e-9,
    step_tol: float = 1e-12,
    grad_tol: float = 1e-10,
    patience: int = 3,
    step0: float = 0.1,
    eta: float = 0.85,
    armijo: float = 1e-4,
    max_backtracks: int = 40,
) -> BatchResult:
    """Minimize ``fun`` over a batch of Stiefel points.

    ``fun`` maps an array ``(B, n, r)`` to ``(values (B,), euclidean gradients
    (B, n, r))`` where the gradient is taken w.r.t. the real inner product
    ``Re Tr A^dagger B``.

    Steps follow alternating Barzilai-Borwein lengths, safeguarded by a
    nonmonotone (Zhang-Hager) Armijo backtracking.  A restart is converged when
    its Riemannian gradient norm falls below ``grad_tol``, when the value has
    changed by at most ``value_tol * max(1, |f|)`` for ``patience``
    consecutive steps, or when the accepted step is shorter than ``step_tol``.
    The best iterate seen is returned, so extra iterations never make a
    restart worse.
    """
    x = retract(np.asarray(x0, dtype=complex))
    nb = x.shape[0]
    f, g = fun(x)
    xi = project(x, g)
    gn2 = _inner(xi, xi)
    alpha = np.full(nb, step0)
    c_ref = f.copy()
    q_ref = np.ones(nb)
    best_x, best_f = x.copy(), f.copy()
    converged = np.sqrt(gn2) <= grad_tol
    active = ~converged
    iters = np.zeros(nb, dtype=int)
    quiet = np.zeros(nb, dtype=int)

    for it in range(max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xa, xia, gna, ca = x[idx], xi[idx], gn2[idx], c_ref[idx]
        a = alpha[idx].copy()
        new_x = np.empty_like(xa)
        new_f = np.empty(idx.size)
        new_g = np.empty_like(xa)
        pending = np.ones(idx.size, dtype=bool)
        for _ in range(max_backtracks):
            p = np.flatnonzero(pending)
            y = retract(xa[p] - a[p, None, None] * xia[p])
            fy, gy = fun(y)
            ok = fy <= ca[p] - armijo * a[p] * gna[p]
            acc = p[ok]
            new_x[acc], new_f[acc], new_g[acc] = y[ok], fy[ok], gy[ok]
            pending[acc] = False
            if not pending.any():
                break
            a[p[~ok]] *= 0.5
        stalled = pending.copy()
        if stalled.any():
            # no decrease found: keep the current point
            s_idx = np.flatnonzero(stalled)
            new_x[s_idx] = xa[s_idx]
            new_f[s_idx], new_g[s_idx] = f[idx[s_idx]], g[idx[s_idx]]

        new_xi = project(new_x, new_g)
        s = new_x - xa
        yv = new_xi - xia
        ss, sy, yy = _inner(s, s), _inner(s, yv), _inner(yv, yv)
        with np.errstate(divide="ignore", invalid="ignore"):
            bb = np.where(it % 2 == 0, ss / np.abs(sy), np.abs(sy) / yy)
        bb = np.where(np.isfinite(bb) & (bb > 0), bb, 2.0 * a)
        alpha[idx] = np.clip(bb, 1e-10, 1e10)

        step_len = np.sqrt(ss)
        df = np.abs(new_f - f[idx])
        quiet[idx] = np.where(df <= value_tol * np.maximum(1.0, np.abs(new_f)), quiet[idx] + 1, 0)

        x[idx], f[idx], g[idx], xi[idx] = new_x, new_f, new_g, new_xi
        gn2[idx] = _inner(new_xi, new_xi)
        q_new = eta * q_ref[idx] + 1.0
        c_ref[idx] = (eta * q_ref[idx] * c_ref[idx] + new_f) / q_new
        q_ref[idx] = q_new
        iters[idx] += 1

        better = new_f < best_f[idx]
        bi = idx[better]
        best_x[bi], best_f[bi] = new_x[better], new_f[better]

        done = (np.sqrt(gn2[idx]) <= grad_tol) | (quiet[idx] >= patience) | (step_len <= step_tol) | stalled
        converged[idx[done]] = True
        active[idx[done]] = False

    return BatchResult(best_x, best_f, converged, iters)


def random_points(n: int, r: int, seeds) -> np.ndarray:
    """One Haar-distributed Stiefel point per seed (each seed its own generator)."""
    out = np.empty((len(seeds), n, r), dtype=complex)
    for i, s in enumerate(seeds):
        rng = np.random.default_rng(s)
        z = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
        q, rr = np.linalg.qr(z)
        d = np.diag(rr)
        out[i] = q * (d / np.abs(d))
    return out


def restart_seeds(seed, count: int) -> list[np.random.SeedSequence]:
    """Per-restart seeds; the first k of ``restart_seeds(s, n)`` do not depend on n."""
    return np.random.SeedSequence(seed).spawn(count)
