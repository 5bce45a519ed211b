"""Cyclic coordinate descent with the shrinking heuristic, and the
certification harness comparing it against the proximal solver.

Coordinates are visited in ascending order. Each visit computes the partial
derivative of the loss, its optimality violation, optionally shrinks the
coordinate, and then minimizes the objective exactly along it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from proxml import _kernels
from proxml.data import SparseVector
from proxml.prox import ProxConfig, margins, objective, solve_prox

SHRINK_RULES = ("symmetric", "literal")


@dataclass(frozen=True)
class CcdConfig:
    """``tol`` bounds the max violation; with ``relative_tol`` it is scaled by
    the max violation of the first sweep (LibLinear's stopping style)."""

    lam: float = 0.1
    max_outer_iters: int = 1000
    tol: float = 1e-6
    shrinking: bool = True
    shrink_rule: str = "symmetric"
    relative_tol: bool = False
    recompute_every: int = 10

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lam must be >= 0")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be positive")
        if self.shrink_rule not in SHRINK_RULES:
            raise ValueError(f"shrink_rule must be one of {SHRINK_RULES}")


@dataclass
class CcdState:
    w: np.ndarray
    b: np.ndarray
    active: np.ndarray
    M: float = math.inf
    max_violation: float = math.inf
    sweeps: int = 0
    ever_shrunk: np.ndarray = None
    tol_abs: float | None = None

    @classmethod
    def initial(cls, n_instances: int, n_features: int) -> "CcdState":
        return cls(
            w=np.zeros(n_features),
            b=np.ones(n_instances),
            active=np.ones(n_features, dtype=bool),
            ever_shrunk=np.zeros(n_features, dtype=bool),
        )


@dataclass
class CcdResult:
    w: SparseVector
    objective: float
    outer_iters: int
    shrunk_count: int
    converged: bool
    objective_trace: list = field(default_factory=list)


def coordinate_violation(w_j: float, partial_grad: float, lam: float) -> float:
    """How far coordinate j is from satisfying its optimality condition."""
    if w_j > 0:
        return abs(partial_grad + lam)
    if w_j < 0:
        return abs(partial_grad - lam)
    return max(partial_grad - lam, -lam - partial_grad, 0.0)


def _csc(X) -> sp.csc_matrix:
    X = sp.csc_matrix(X, dtype=np.float64)
    X.sort_indices()
    return X


def ccd_sweep(state: CcdState, X, s, config: CcdConfig, shrinking: bool | None = None) -> CcdState:
    """One cyclic pass over the unshrunk coordinates, in place.

    Coordinates whose violation is already within ``tol`` are left untouched.
    """
    Xc = X if sp.isspmatrix_csc(X) else _csc(X)
    s = np.asarray(s, dtype=np.float64)
    shrinking = config.shrinking if shrinking is None else shrinking
    if state.tol_abs is None and not config.relative_tol:
        state.tol_abs = config.tol
    # a relative tolerance is unknown until the first sweep has measured violations
    skip_tol = state.tol_abs if state.tol_abs is not None else -1.0
    max_v = _kernels.ccd_sweep(
        Xc.indptr, Xc.indices, Xc.data, s, state.b, state.w, state.active, state.ever_shrunk,
        float(config.lam), float(state.M), float(skip_tol), bool(shrinking), config.shrink_rule == "literal",
    )
    state.sweeps += 1
    if state.tol_abs is None:
        state.tol_abs = config.tol * max_v
    state.max_violation = max_v
    state.M = max_v / max(Xc.shape[0], 1)
    if config.recompute_every and state.sweeps % config.recompute_every == 0:
        state.b[:] = margins(sp.csr_matrix(Xc), s, state.w)
    return state


def solve_ccd(X, s, config: CcdConfig = CcdConfig()) -> CcdResult:
    """Run sweeps until the max violation drops below tolerance.

    When shrinking is on, shrunk coordinates get one reprieve: after the
    active set converges, a single full unshrunk pass runs and the solve ends.
    """
    Xr = sp.csr_matrix(X, dtype=np.float64)
    Xr.sort_indices()
    Xc = _csc(Xr)
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (Xr.shape[0],):
        raise ValueError("sign vector must have one entry per instance")
    state = CcdState.initial(*Xr.shape)
    trace = [objective(state.w, Xr, s, config.lam)]
    converged = False
    for _ in range(config.max_outer_iters):
        ccd_sweep(state, Xc, s, config)
        trace.append(objective(state.w, Xr, s, config.lam))
        if state.max_violation <= state.tol_abs:
            if config.shrinking and not state.active.all():
                state.active[:] = True
                state.M = math.inf
                ccd_sweep(state, Xc, s, config, shrinking=False)
                trace.append(objective(state.w, Xr, s, config.lam))
            converged = True
            break
    w = state.w
    return CcdResult(
        SparseVector.from_dense(w),
        objective(w, Xr, s, config.lam),
        state.sweeps,
        int(state.ever_shrunk.sum()),
        converged,
        trace,
    )


@dataclass(frozen=True)
class Certificate:
    label_id: int
    opt_prox: float
    opt_ccd: float

    @property
    def gap(self) -> float:
        return self.opt_ccd - self.opt_prox


def certify(X, s, lam: float, prox_cfg: ProxConfig | None = None,
            ccd_cfg: CcdConfig | None = None, label_id: int = -1) -> Certificate:
    """Solve one label with both solvers and evaluate both with one evaluator.

    A positive gap means the proximal solution certifies that CCD stopped
    above the optimum.
    """
    prox_cfg = ProxConfig(lam=lam) if prox_cfg is None else prox_cfg
    ccd_cfg = CcdConfig(lam=lam) if ccd_cfg is None else ccd_cfg
    if prox_cfg.lam != lam or ccd_cfg.lam != lam:
        raise ValueError("both solvers must use the same lam")
    Xr = sp.csr_matrix(X, dtype=np.float64)
    Xr.sort_indices()
    rp = solve_prox(Xr, s, prox_cfg)
    rc = solve_ccd(Xr, s, ccd_cfg)
    return Certificate(
        label_id,
        objective(rp.w.to_dense(), Xr, s, lam),
        objective(rc.w.to_dense(), Xr, s, lam),
    )
