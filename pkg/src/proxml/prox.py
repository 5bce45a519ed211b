"""Forward-backward proximal gradient for the L1-regularized squared hinge.

For one label with sign vector ``s`` the objective is::

    F(w) = lam * ||w||_1 + sum_i max(1 - s_i <w, x_i>, 0)^2

Each iteration takes a gradient step on the smooth loss and applies the
L1 prox (soft-thresholding). The step size is found by backtracking on the
quadratic majorization of the loss.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from proxml import _kernels
from proxml.data import SparseVector


class LineSearchError(RuntimeError):
    """Step size underflowed; usually a sign of badly scaled features."""


@dataclass(frozen=True)
class ProxConfig:
    lam: float = 0.1
    max_iters: int = 500
    tol: float = 1e-5
    gamma_init: float = 1.0
    gamma_shrink: float = 0.5
    gamma_grow: float = 2.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lam must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if not self.gamma_init > 0:
            raise ValueError("gamma_init must be > 0")
        if not 0 < self.gamma_shrink < 1:
            raise ValueError("gamma_shrink must lie in (0, 1)")
        if not self.gamma_grow >= 1:
            raise ValueError("gamma_grow must be >= 1")


@dataclass
class SolveResult:
    w: SparseVector
    objective: float
    iters: int
    converged: bool
    objective_trace: list = field(default_factory=list)


def _csr(X) -> sp.csr_matrix:
    X = sp.csr_matrix(X, dtype=np.float64)
    X.sort_indices()
    return X


def margins(X: sp.csr_matrix, s: np.ndarray, w: np.ndarray) -> np.ndarray:
    """b_i = 1 - s_i <w, x_i>."""
    z = np.empty(X.shape[0])
    _kernels.csr_matvec(X.indptr, X.indices, X.data, np.ascontiguousarray(w, dtype=np.float64), z)
    return 1.0 - s * z


def squared_hinge_loss(w, X, s) -> tuple[float, np.ndarray]:
    """Loss value and the active set {i : b_i > 0}."""
    X = _csr(X)
    b = margins(X, np.asarray(s, dtype=np.float64), w)
    return float(_kernels.hinge_loss(b)), np.flatnonzero(b > 0)


def squared_hinge_grad(w, X, s) -> np.ndarray:
    X = _csr(X)
    s = np.asarray(s, dtype=np.float64)
    b = margins(X, s, w)
    g = np.empty(X.shape[1])
    _kernels.hinge_grad(X.indptr, X.indices, X.data, s, b, g)
    return g


def objective(w, X, s, lam: float) -> float:
    """lam * ||w||_1 + squared hinge loss; the evaluator shared by all solvers."""
    w = np.asarray(w, dtype=np.float64)
    loss, _ = squared_hinge_loss(w, X, s)
    return lam * float(np.abs(w).sum()) + loss


def soft_threshold(u, threshold):
    """Prox of ``threshold * |.|``: sign(u) * max(|u| - threshold, 0)."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    u = np.asarray(u, dtype=np.float64)
    return np.sign(u) * np.maximum(np.abs(u) - threshold, 0.0)


@dataclass
class _Candidate:
    gamma: float
    w: np.ndarray
    b: np.ndarray
    loss: float


def line_search(w, grad, loss, X, s, gamma_start, shrink, lam=0.0):
    """Backtrack from ``gamma_start`` until the prox-mapped candidate w' satisfies

        L(w') <= L(w) + <grad, w' - w> + ||w' - w||^2 / (2 gamma).

    Returns ``(gamma, w', margins(w'), L(w'))``.
    """
    if not gamma_start > 0:
        raise ValueError("gamma_start must be > 0")
    if not 0 < shrink < 1:
        raise ValueError("shrink must lie in (0, 1)")
    X = _csr(X) if not sp.isspmatrix_csr(X) else X
    s = np.asarray(s, dtype=np.float64)
    gamma = gamma_start
    b_new = np.empty(X.shape[0])
    while True:
        w_new = soft_threshold(w - gamma * grad, lam * gamma)
        _kernels.csr_matvec(X.indptr, X.indices, X.data, w_new, b_new)
        b_new = 1.0 - s * b_new
        loss_new = float(_kernels.hinge_loss(b_new))
        diff = w_new - w
        bound = loss + float(grad @ diff) + float(diff @ diff) / (2.0 * gamma)
        # slack absorbs rounding once the iterate has stopped moving
        if loss_new <= bound + 1e-12 * max(1.0, abs(loss)):
            return gamma, w_new, b_new, loss_new
        gamma *= shrink
        if gamma < 1e-12:
            raise LineSearchError(f"step size underflow (gamma={gamma:.3g})")
        b_new = np.empty(X.shape[0])


def solve_prox(X, s, config: ProxConfig = ProxConfig()) -> SolveResult:
    """Minimize the objective from w = 0 by proximal gradient with backtracking."""
    X = _csr(X)
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (X.shape[0],):
        raise ValueError("sign vector must have one entry per instance")
    lam = config.lam
    w = np.zeros(X.shape[1])
    b = np.ones(X.shape[0])
    loss = float(X.shape[0])
    obj = loss
    trace = [obj]
    grad = np.empty(X.shape[1])
    gamma = config.gamma_init
    converged = False
    it = 0
    while it < config.max_iters:
        _kernels.hinge_grad(X.indptr, X.indices, X.data, s, b, grad)
        gamma, w_new, b_new, loss_new = line_search(w, grad, loss, X, s, gamma, config.gamma_shrink, lam)
        it += 1
        obj_new = lam * float(np.abs(w_new).sum()) + loss_new
        decrease = (obj - obj_new) / max(obj, 1e-12)
        w, b, loss, obj = w_new, b_new, loss_new, obj_new
        trace.append(obj)
        if decrease < config.tol:
            converged = True
            break
        gamma *= config.gamma_grow
    return SolveResult(SparseVector.from_dense(w), obj, it, converged, trace)
