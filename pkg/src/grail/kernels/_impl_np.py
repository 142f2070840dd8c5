"""Pure numpy implementations of the hot dense kernels.

Functionally identical to the compiled versions in ``grail._ckernels``;
used as the fallback backend when the extension is unavailable or when
``GRAIL_PURE_PYTHON=1`` is set.
"""

from __future__ import annotations

import numpy as np


def normalize_adjacency_forward(W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Self-loop normalized adjacency.

    Returns ``(N, s)`` with ``N[i, j] = (W[i, j] + I[i, j]) * s[i] * s[j]``
    and ``s = (1 + rowsum(W)) ** -0.5``.  ``s`` is kept for the backward
    pass.  Degrees are strictly positive because of the added self-loop.
    """
    W = np.ascontiguousarray(W, dtype=np.float64)
    n = W.shape[0]
    s = 1.0 / np.sqrt(1.0 + W.sum(axis=1))
    M = W + np.eye(n)
    N = M * np.multiply.outer(s, s)
    return N, s


def normalize_adjacency_vjp(grad_N: np.ndarray, W: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`normalize_adjacency_forward` w.r.t. ``W``.

    With ``M = W + I``, ``d = s**-2`` and ``P = grad_N * M``:

        grad_W[u, v] = grad_N[u, v] * s[u] * s[v]
                       - 0.5 * s[u]**3 * ((P @ s)[u] + (P.T @ s)[u])

    The second term is constant along each row because every entry of row
    ``u`` shifts the same degree ``d[u]``.
    """
    grad_N = np.ascontiguousarray(grad_N, dtype=np.float64)
    W = np.ascontiguousarray(W, dtype=np.float64)
    n = W.shape[0]
    P = grad_N * (W + np.eye(n))
    t = -0.5 * s**3 * (P @ s + P.T @ s)
    return grad_N * np.multiply.outer(s, s) + t[:, None]


def assemble_relaxed(A: np.ndarray, rows: np.ndarray, cols: np.ndarray,
                     p: np.ndarray) -> np.ndarray:
    """Overlay relaxed flip weights on a binary adjacency.

    For each candidate pair ``e = (rows[e], cols[e])`` with ``rows < cols``
    the output moves the entry toward its complement:
    ``W = A + (1 - 2 * A[r, c]) * p[e]`` written at both ``(r, c)`` and
    ``(c, r)``.  ``p = 0`` reproduces ``A`` bitwise; ``p = 1`` flips.
    """
    W = np.array(A, dtype=np.float64, copy=True)
    delta = (1.0 - 2.0 * A[rows, cols]) * p
    W[rows, cols] += delta
    W[cols, rows] += delta
    return W


def pair_flip_grads(grad_W: np.ndarray, A: np.ndarray, rows: np.ndarray,
                    cols: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`assemble_relaxed` w.r.t. the flip weights.

    Gathers both symmetric entries, so the result already accounts for the
    symmetry constraint on the perturbed adjacency.
    """
    return (1.0 - 2.0 * A[rows, cols]) * (grad_W[rows, cols] + grad_W[cols, rows])


def project_budget(p: np.ndarray, delta: float, tol: float = 1e-7) -> np.ndarray:
    """Euclidean projection of ``p`` onto ``{q in [0,1]^E : sum(q) <= delta}``.

    If clipping alone satisfies the budget only the clip is applied;
    otherwise the shift ``mu`` in ``clip(p - mu, 0, 1)`` is found by
    bisection until the projected sum is within ``tol`` of ``delta``.
    """
    p = np.asarray(p, dtype=np.float64)
    if delta <= 0.0:
        return np.zeros_like(p)
    clipped = np.clip(p, 0.0, 1.0)
    if clipped.sum() <= delta:
        return clipped
    lo = float(p.min()) - 1.0
    hi = float(p.max())
    for _ in range(200):
        mu = 0.5 * (lo + hi)
        gap = np.clip(p - mu, 0.0, 1.0).sum() - delta
        if abs(gap) <= tol:
            break
        if gap > 0.0:
            lo = mu
        else:
            hi = mu
        if hi - lo <= 1e-15:
            break
    return np.clip(p - mu, 0.0, 1.0)
