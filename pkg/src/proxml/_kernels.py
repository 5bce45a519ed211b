"""Compiled inner loops. All accumulate in a fixed order, so results are
bitwise reproducible regardless of how callers schedule them."""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def csr_matvec(indptr, indices, data, w, out):
    for i in range(indptr.shape[0] - 1):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * w[indices[p]]
        out[i] = acc


@njit(cache=True, nogil=True)
def hinge_grad(indptr, indices, data, s, b, out):
    # out = -2 * sum_{i: b_i > 0} s_i * b_i * x_i
    out[:] = 0.0
    for i in range(indptr.shape[0] - 1):
        if b[i] > 0.0:
            coef = -2.0 * s[i] * b[i]
            for p in range(indptr[i], indptr[i + 1]):
                out[indices[p]] += coef * data[p]


@njit(cache=True, nogil=True)
def hinge_loss(b):
    acc = 0.0
    for i in range(b.shape[0]):
        if b[i] > 0.0:
            acc += b[i] * b[i]
    return acc


@njit(cache=True, nogil=True)
def inverted_scores(x_idx, x_val, colptr, rows, vals, out):
    # out[label] += w[label, d] * x_d, visiting x's features in ascending order
    out[:] = 0.0
    for q in range(x_idx.shape[0]):
        d = x_idx[q]
        xv = x_val[q]
        for p in range(colptr[d], colptr[d + 1]):
            out[rows[p]] += vals[p] * xv


@njit(cache=True, nogil=True)
def coord_partial(lo, hi, rows, vals, s, b):
    # d/dw_j of sum_i max(b_i, 0)^2 at the current margins
    g = 0.0
    for p in range(lo, hi):
        i = rows[p]
        if b[i] > 0.0:
            g -= 2.0 * s[i] * vals[p] * b[i]
    return g


@njit(cache=True, nogil=True)
def _smooth_deriv(z, c, bb):
    # h(z) = sum_i -2 c_i max(bb_i - c_i z, 0)
    h = 0.0
    for i in range(c.shape[0]):
        r = bb[i] - c[i] * z
        if r > 0.0:
            h -= 2.0 * c[i] * r
    return h


@njit(cache=True, nogil=True)
def _solve_increasing(c, bb, target, z_lo):
    """Smallest z >= z_lo with h(z) >= target (h non-decreasing, piecewise linear).

    Returns nan if h stays below target on [z_lo, inf).
    """
    n = c.shape[0]
    # on each piece h(z) = A z + B with A = sum 2 c^2, B = sum -2 c bb over the active set
    t = np.empty(n)
    for i in range(n):
        t[i] = bb[i] / c[i]
    order = np.argsort(t)
    A = 0.0
    B = 0.0
    for i in range(n):
        # activity just right of z_lo, decided from t so crossings stay consistent
        if (c[i] > 0.0 and t[i] > z_lo) or (c[i] < 0.0 and t[i] <= z_lo):
            A += 2.0 * c[i] * c[i]
            B -= 2.0 * c[i] * bb[i]
    z = z_lo
    k = 0
    while k < n and t[order[k]] <= z_lo:
        k += 1
    while True:
        z_next = t[order[k]] if k < n else np.inf
        # within [z, z_next) h is A z + B
        if A > 0.0:
            root = (target - B) / A
            if root <= z:
                return z
            if root < z_next:
                return root
        elif B >= target:
            return z
        if k >= n:
            return np.nan
        # cross the breakpoint: instances with c>0 leave the active set, c<0 enter
        while k < n and t[order[k]] == z_next:
            i = order[k]
            if c[i] > 0.0:
                A -= 2.0 * c[i] * c[i]
                B += 2.0 * c[i] * bb[i]
            else:
                A += 2.0 * c[i] * c[i]
                B -= 2.0 * c[i] * bb[i]
            k += 1
        z = z_next


@njit(cache=True, nogil=True)
def coord_minimize(lo, hi, rows, vals, s, b, w_j, lam):
    """Exact minimizer step z of  lam*|w_j + z| + sum_i max(b_i - s_i x_ij z, 0)^2.

    The restricted objective is a convex piecewise quadratic; its derivative
    is piecewise linear with breakpoints at b_i / (s_i x_ij), so the optimum
    is found by sweeping sorted breakpoints.
    """
    n = hi - lo
    if n == 0:
        return -w_j if lam > 0.0 else 0.0
    c = np.empty(n)
    bb = np.empty(n)
    for q in range(n):
        i = rows[lo + q]
        c[q] = s[i] * vals[lo + q]
        bb[q] = b[i]
    z0 = -w_j
    h0 = _smooth_deriv(z0, c, bb)
    if h0 - lam <= 0.0 <= h0 + lam:
        return z0
    if h0 + lam < 0.0:
        z = _solve_increasing(c, bb, -lam, z0)
        return z if not np.isnan(z) else 0.0
    # root lies left of z0: mirror z -> -z so h stays non-decreasing
    z = _solve_increasing(-c, bb, -lam, -z0)
    return -z if not np.isnan(z) else 0.0


@njit(cache=True, nogil=True)
def violation(w_j, g, lam):
    if w_j > 0.0:
        return abs(g + lam)
    if w_j < 0.0:
        return abs(g - lam)
    return max(g - lam, -lam - g, 0.0)


@njit(cache=True, nogil=True)
def ccd_sweep(indptr, rows, vals, s, b, w, active, ever_shrunk, lam, M, skip_tol, shrinking, literal_rule):
    """One ascending pass over active coordinates; returns the max violation seen."""
    max_v = 0.0
    for j in range(w.shape[0]):
        if not active[j]:
            continue
        lo = indptr[j]
        hi = indptr[j + 1]
        g = coord_partial(lo, hi, rows, vals, s, b)
        v = violation(w[j], g, lam)
        if shrinking and w[j] == 0.0:
            upper = -lam - M if literal_rule else lam - M
            if -lam + M <= g <= upper:
                active[j] = False
                ever_shrunk[j] = True
                continue
        if v > max_v:
            max_v = v
        if v <= skip_tol:
            continue
        z = coord_minimize(lo, hi, rows, vals, s, b, w[j], lam)
        if z != 0.0:
            w[j] += z
            for p in range(lo, hi):
                i = rows[p]
                b[i] -= s[i] * vals[p] * z
    return max_v
