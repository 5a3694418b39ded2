"""Independent verification oracles.

Everything here recomputes quantities the production code gets from closed
forms, using enumeration, grids, or exhaustive search instead. The solver
and projections never call into this module; it exists for the ``verify``
subcommand and the test suite.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import nnls

from .regularizers import RegularizerSpec, _value_batch

# -- conjugate grid oracle ----------------------------------------------------


def axis_grid(upper: float, step: float) -> np.ndarray:
    """{0, step, 2 step, ...} intersected with [0, upper], plus upper itself."""
    n = int(math.floor(upper / step + 1e-12))
    pts = step * np.arange(n + 1)
    if pts[-1] < upper - 1e-15:
        pts = np.append(pts, upper)
    return np.minimum(pts, upper)


def grid_conjugate_max(reg: RegularizerSpec, mu, step: float) -> float:
    """Exact max of r(a) + mu'a over the product grid on [0, rho].

    A dense sweep is hopeless beyond m = 2 at fine steps, but for every
    variant a maximizer over the grid can be pinned down by enumerating one
    coordinate: the separable variants decompose per axis, and for the
    min/max variants it suffices to enumerate which coordinate attains the
    min (max) and at which grid value, filling the remaining coordinates
    with their best admissible grid points. Each candidate is a genuine
    grid point evaluated with the primal r, so the result equals the dense
    grid max exactly.
    """
    mu = np.asarray(mu, dtype=float)
    rho = reg.rho
    m = reg.m
    grids = [axis_grid(rho[j], step) for j in range(m)]

    if reg.variant in ("none", "hinge", "mirrored_hinge"):
        total = 0.0
        for j in range(m):
            a = grids[j]
            if reg.variant == "none":
                vals = mu[j] * a
            elif reg.variant == "hinge":
                vals = mu[j] * a - reg.c[j] * np.maximum(a - reg.t[j], 0.0)
            else:
                vals = mu[j] * a - reg.c[j] * np.maximum(reg.t[j] - a, 0.0)
            total += float(np.max(vals))
        return total

    best = -math.inf
    for j_star in range(m):
        for v in grids[j_star]:
            level = v / rho[j_star]
            a = np.empty(m)
            a[j_star] = v
            for k in range(m):
                if k == j_star:
                    continue
                gk = grids[k]
                if reg.variant == "maxmin":
                    # cheapest admissible point if mu_k < 0, else the top
                    idx = np.searchsorted(gk, level * rho[k] - 1e-12)
                    a[k] = rho[k] if mu[k] >= 0 else gk[min(idx, len(gk) - 1)]
                else:
                    # loadbal: stay at or below the level
                    idx = np.searchsorted(gk, level * rho[k] + 1e-12) - 1
                    a[k] = gk[max(idx, 0)] if mu[k] > 0 else 0.0
            val = float(_value_batch(reg, a.reshape(-1, 1))[0]) + float(mu @ a)
            if val > best:
                best = val
    return best


def dense_conjugate_max(reg: RegularizerSpec, mu, step: float) -> float:
    """Brute-force sweep of r(a) + mu'a over the full product grid (m <= 2)."""
    mu = np.asarray(mu, dtype=float)
    if reg.m > 2:
        raise ValueError("dense sweep limited to m <= 2")
    grids = [axis_grid(reg.rho[j], step) for j in range(reg.m)]
    mesh = np.meshgrid(*grids, indexing="ij")
    A = np.stack([g.ravel() for g in mesh], axis=0)
    return float(np.max(_value_batch(reg, A) + mu @ A))


def maxmin_membership_exhaustive(reg: RegularizerSpec, mu) -> bool:
    """Check sum_{j in S} rho_j mu_j >= -lam over all 2^m subsets."""
    s = reg.rho * np.asarray(mu, float)
    m = reg.m
    if m > 20:
        raise ValueError("exhaustive membership limited to m <= 20")
    for mask in range(1, 2**m):
        total = 0.0
        for j in range(m):
            if mask >> j & 1:
                total += s[j]
        if total < -reg.lam:
            return False
    return True


# -- projection oracle --------------------------------------------------------


def _box_projection_enum(mu_tilde, lower, w, tol=1e-9):
    m = mu_tilde.shape[0]
    best = None
    best_obj = math.inf
    for mask in range(2**m):
        active = np.array([(mask >> j) & 1 for j in range(m)], dtype=bool)
        mu = np.where(active, lower, mu_tilde)
        if np.any(mu_tilde[~active] < lower[~active] - tol):
            continue
        sigma = w * (lower - mu_tilde)
        if np.any(sigma[active] < -tol):
            continue
        obj = 0.5 * float(np.sum(w * (mu - mu_tilde) ** 2))
        if obj < best_obj:
            best_obj, best = obj, mu
    return best


def _halfspace_projection_enum(mu_tilde, rho, lam, w, tol=1e-9):
    m = mu_tilde.shape[0]
    best = None
    best_obj = math.inf
    for mask in range(2**m):
        active = np.array([(mask >> j) & 1 for j in range(m)], dtype=bool)
        for halfspace_tight in (False, True):
            mu = np.zeros(m)
            if halfspace_tight:
                free = ~active
                denom = float(np.sum(rho[free] ** 2 / w[free]))
                if denom <= 0:
                    continue
                nu = (lam - float(rho[free] @ mu_tilde[free])) / denom
                mu[free] = mu_tilde[free] + nu * rho[free] / w[free]
                sigma = -w * mu_tilde - nu * rho
                if nu < -tol or np.any(sigma[active] < -tol):
                    continue
            else:
                mu[~active] = mu_tilde[~active]
                if float(rho @ mu) < lam - tol:
                    continue
                sigma = -w * mu_tilde
                if np.any(sigma[active] < -tol):
                    continue
            if np.any(mu < -tol):
                continue
            obj = 0.5 * float(np.sum(w * (mu - mu_tilde) ** 2))
            if obj < best_obj:
                best_obj, best = obj, mu.copy()
    return best


def _prefix_projection_enum(mu_tilde, rho, lam, tol=1e-9):
    """Enumerate active sets of the m prefix constraints in sorted order.

    Works in y = rho * mu where the objective is unweighted; active prefixes
    s_1 < ... < s_K split [1..s_K] into blocks, each shifted uniformly so
    the block sums satisfy the tight constraints.
    """
    m = mu_tilde.shape[0]
    y_tilde = rho * mu_tilde
    order = np.argsort(y_tilde)
    ys = y_tilde[order]
    prefix = np.cumsum(ys)
    best = None
    best_obj = math.inf
    for mask in range(2**m):
        active = [s for s in range(m) if (mask >> s) & 1]  # 0-based prefix ends
        y = ys.copy()
        shifts = []
        prev_end = -1
        ok = True
        for i, s in enumerate(active):
            blk_sum = prefix[s] - (prefix[prev_end] if prev_end >= 0 else 0.0)
            target = -lam if prev_end < 0 else 0.0
            size = s - prev_end
            shift = (target - blk_sum) / size
            shifts.append(shift)
            y[prev_end + 1 : s + 1] += shift
            prev_end = s
        shifts.append(0.0)
        for i in range(len(active)):
            if shifts[i] - shifts[i + 1] < -tol:  # multiplier nu_{s_i}
                ok = False
        if not ok:
            continue
        run = np.cumsum(y)
        if np.any(run < -lam - tol):
            continue
        obj = 0.5 * float(np.sum((y - ys) ** 2))
        if obj < best_obj:
            mu = np.empty(m)
            mu[order] = y / rho[order]
            best_obj, best = obj, mu
    return best


def oracle_projection(mu_tilde, reg: RegularizerSpec, w) -> np.ndarray:
    """Exact projection by enumerating candidate active sets (test-only).

    Cost is exponential in m: keep m <= 12 for maxmin prefixes and m <= 20
    otherwise. Raises if no candidate passes feasibility plus nonnegative
    multipliers, which cannot happen for a nonempty dual set.
    """
    mu_tilde = np.asarray(mu_tilde, dtype=float)
    w = np.asarray(w, dtype=float)
    if reg.variant == "maxmin":
        if not np.allclose(w, reg.rho**2, rtol=1e-12, atol=0.0):
            raise ValueError("maxmin oracle requires w = rho^2")
        out = _prefix_projection_enum(mu_tilde, reg.rho, reg.lam)
    elif reg.variant == "loadbal":
        out = _halfspace_projection_enum(mu_tilde, reg.rho, reg.lam, w)
    elif reg.variant == "mirrored_hinge":
        out = _box_projection_enum(mu_tilde, -reg.c, w)
    else:
        out = _box_projection_enum(mu_tilde, np.zeros(reg.m), w)
    if out is None:
        raise RuntimeError("no feasible active-set candidate found")
    return out


# -- KKT residual -------------------------------------------------------------


def _constraint_rows(reg: RegularizerSpec):
    """(A, b) with D = {mu : A mu >= b} for the variant (m <= 12 for maxmin)."""
    m = reg.m
    eye = np.eye(m)
    if reg.variant == "maxmin":
        if m > 12:
            raise ValueError("maxmin constraint enumeration limited to m <= 12")
        rows = []
        for mask in range(1, 2**m):
            row = np.array([(mask >> j) & 1 for j in range(m)], dtype=float) * reg.rho
            rows.append(row)
        return np.array(rows), np.full(len(rows), -reg.lam)
    if reg.variant == "loadbal":
        return np.vstack([eye, reg.rho]), np.concatenate([np.zeros(m), [reg.lam]])
    if reg.variant == "mirrored_hinge":
        return eye, -reg.c
    return eye, np.zeros(m)


def projection_kkt_residual(mu_star, mu_tilde, reg: RegularizerSpec, w, act_tol=1e-7):
    """max of feasibility violation and stationarity residual of a projection.

    Stationarity demands w * (mu_tilde - mu_star) lie in the cone of active
    constraint gradients; the distance to that cone is computed with
    nonnegative least squares.
    """
    mu_star = np.asarray(mu_star, dtype=float)
    mu_tilde = np.asarray(mu_tilde, dtype=float)
    w = np.asarray(w, dtype=float)
    A, b = _constraint_rows(reg)
    slack = A @ mu_star - b
    feas = max(0.0, float(-np.min(slack, initial=0.0)))
    grad = w * (mu_tilde - mu_star)
    active = slack <= act_tol
    if not np.any(active):
        stat = float(np.max(np.abs(grad), initial=0.0))
    else:
        G = A[active].T  # columns are active constraint gradients
        _, resid = nnls(G, grad)
        stat = float(resid)
    return max(feas, stat)


# -- misc oracles -------------------------------------------------------------


def sampled_lipschitz_ratio(reg: RegularizerSpec, w, n_pairs: int, rng) -> float:
    """Max of |r(a1) - r(a2)| / ||a1 - a2||_{w,*} over random pairs in [0, rho]."""
    w = np.asarray(w, dtype=float)
    a1 = rng.uniform(0.0, reg.rho, size=(n_pairs, reg.m))
    a2 = rng.uniform(0.0, reg.rho, size=(n_pairs, reg.m))
    num = np.abs(_value_batch(reg, a1.T) - _value_batch(reg, a2.T))
    den = np.sqrt(np.sum((a1 - a2) ** 2 / w, axis=1))
    keep = den > 1e-12
    return float(np.max(num[keep] / den[keep], initial=0.0))


def best_vertex_enumeration(q, b, mu) -> tuple[int, float]:
    """Best of the void action and every simplex vertex for q'x - mu'(b x)."""
    q = np.asarray(q, float)
    b = np.asarray(b, float)
    mu = np.asarray(mu, float)
    vals = q - b.T @ mu
    j = int(np.argmax(vals))
    if vals[j] > 0:
        return j, float(vals[j])
    return -1, 0.0


def simplex_grid(d: int, step: float) -> np.ndarray:
    """Grid points of {x >= 0, sum x <= 1} including 0 and the vertices."""
    pts = axis_grid(1.0, step)
    if d == 1:
        return pts.reshape(-1, 1)
    if d == 2:
        out = [(x1, x2) for x1 in pts for x2 in pts if x1 + x2 <= 1.0 + 1e-12]
        out.extend([(1.0, 0.0), (0.0, 1.0)])
        return np.unique(np.asarray(out), axis=0)
    raise ValueError("simplex grid limited to d <= 2")


def grid_f_star(q, b, mu, step: float = 0.01) -> float:
    """Grid max over the simplex of q'x - mu'(b x) including 0 (m, d small)."""
    X = simplex_grid(np.asarray(q).shape[0], step)
    vals = X @ (np.asarray(q, float) - np.asarray(b, float).T @ np.asarray(mu, float))
    return float(np.max(vals, initial=0.0))


def clamped_lognormal_mixture_mean(weights, mu_log, sigma_log) -> float:
    """Analytic mean of min(X, 1) for a log-normal mixture X.

    E[min(X,1)] = exp(mu + s^2/2) Phi(-(mu + s^2)/s) + Phi(mu/s) per
    component; Phi is the standard normal CDF.
    """
    total = 0.0
    for wk, mk, sk in zip(weights, mu_log, sigma_log):
        below = math.exp(mk + sk**2 / 2.0) * _phi(-(mk + sk**2) / sk)
        above = _phi(mk / sk)
        total += wk * (below + above)
    return total


def _phi(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def all_subset_min_sum(values) -> float:
    """min over nonempty subsets of the sum (equals sum of negative parts)."""
    best = math.inf
    vals = np.asarray(values, float)
    for r in range(1, len(vals) + 1):
        for combo in itertools.combinations(range(len(vals)), r):
            best = min(best, float(np.sum(vals[list(combo)])))
    return best
