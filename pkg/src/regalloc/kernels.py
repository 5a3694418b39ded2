"""Hot numeric kernels, JIT-compiled with numba when available.

The per-request solver loop and the dual projections dominate runtime for
long horizons, so they live here as tight loops over contiguous float64
arrays. Every kernel is decorated with ``maybe_njit``: when the active
backend is ``"numba"`` the functions are compiled with ``numba.njit``
(cached on disk), otherwise the exact same code runs as plain
numpy/Python. Select the backend with the environment variable

    REGALLOC_BACKEND=numba   (default when numba imports cleanly)
    REGALLOC_BACKEND=numpy   (pure-numpy fallback, no compilation)

The choice is made once at import time; ``scripts/bench_backends.py``
compares the two in subprocesses.

Regularizer variants are passed as integer codes (see ``VARIANT_CODES``)
so that one compiled loop serves all of them.
"""

import os

import numpy as np

VARIANT_NONE = 0
VARIANT_MAXMIN = 1
VARIANT_LOADBAL = 2
VARIANT_HINGE = 3
VARIANT_MIRRORED_HINGE = 4

VARIANT_CODES = {
    "none": VARIANT_NONE,
    "maxmin": VARIANT_MAXMIN,
    "loadbal": VARIANT_LOADBAL,
    "hinge": VARIANT_HINGE,
    "mirrored_hinge": VARIANT_MIRRORED_HINGE,
}

_requested = os.environ.get("REGALLOC_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ValueError(f"REGALLOC_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested != "numpy":
    try:
        from numba import njit as _njit

        _BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        _BACKEND = "numpy"
else:
    _BACKEND = "numpy"

if _BACKEND == "numba":
    def maybe_njit(func):
        return _njit(cache=True)(func)
else:
    def maybe_njit(func):
        return func


def active_backend() -> str:
    """Backend selected at import time ('numba' or 'numpy')."""
    return _BACKEND


@maybe_njit
def best_response_kernel(q, b, mu):
    """Argmax of q'x - mu'(b x) over the scaled simplex {x >= 0, sum x <= 1}.

    Returns (j, s): the vertex index with the largest dual-adjusted reward
    s_j = q_j - (b' mu)_j, or j = -1 when no vertex beats the void action
    (all adjusted rewards <= 0). Ties go to the smallest index.
    """
    m, d = b.shape
    best_j = -1
    best_s = 0.0
    for j in range(d):
        s = q[j]
        for i in range(m):
            s -= b[i, j] * mu[i]
        if s > best_s:
            best_s = s
            best_j = j
    return best_j, best_s


@maybe_njit
def argmax_a_kernel(variant, mu, rho, lam, c, t):
    """Consumption target a maximizing r(a) + mu'a over {a <= rho}.

    For the zero, max-min and load-balancing regularizers the argmax is rho.
    For the hinge variants it is coordinate-wise t_j or rho_j depending on
    where mu_j sits relative to the kink; ties at the kink go to t_j.
    """
    m = rho.shape[0]
    a = np.empty(m)
    if variant == VARIANT_HINGE:
        for i in range(m):
            a[i] = t[i] if mu[i] <= c[i] else rho[i]
    elif variant == VARIANT_MIRRORED_HINGE:
        for i in range(m):
            a[i] = t[i] if mu[i] <= 0.0 else rho[i]
    else:
        for i in range(m):
            a[i] = rho[i]
    return a


@maybe_njit
def clamp_kernel(mu_tilde, lower):
    m = mu_tilde.shape[0]
    out = np.empty(m)
    for i in range(m):
        out[i] = mu_tilde[i] if mu_tilde[i] > lower[i] else lower[i]
    return out


@maybe_njit
def halfspace_orthant_kernel(mu_tilde, rho, lam, w):
    """w-weighted projection onto {mu >= 0, rho'mu >= lam}.

    If clamping to the orthant already satisfies the halfspace, the clamp is
    the projection. Otherwise the halfspace is tight and the solution is
    mu_j(nu) = max(mu_tilde_j + nu rho_j / w_j, 0) with nu > 0 solving
    rho'mu(nu) = lam; that equation is piecewise linear in nu with
    breakpoints nu_j = -mu_tilde_j w_j / rho_j, so it is solved exactly by
    scanning segments of the sorted breakpoints.
    """
    m = mu_tilde.shape[0]
    out = np.empty(m)
    acc = 0.0
    for i in range(m):
        out[i] = mu_tilde[i] if mu_tilde[i] > 0.0 else 0.0
        acc += rho[i] * out[i]
    if acc >= lam:
        return out

    bp = np.empty(m)
    for i in range(m):
        bp[i] = -mu_tilde[i] * w[i] / rho[i]
    order = np.argsort(bp)

    # Walk segments in increasing nu. On a segment the active set is fixed,
    # so rho'mu(nu) = s0 + nu * s1 with s0, s1 accumulated over active
    # coordinates; the first segment whose solution lies inside it wins.
    # Coordinates with bp <= 0 are active for every nu > 0.
    s0 = 0.0
    s1 = 0.0
    for i in range(m):
        if bp[i] <= 0.0:
            s0 += rho[i] * mu_tilde[i]
            s1 += rho[i] * rho[i] / w[i]
    lo = 0.0
    k = 0
    while k < m and bp[order[k]] <= 0.0:
        k += 1
    nu = -1.0
    while True:
        hi = bp[order[k]] if k < m else np.inf
        if s1 > 0.0:
            cand = (lam - s0) / s1
            if cand >= lo and cand <= hi:
                nu = cand
                break
        if k >= m:
            break
        j = order[k]
        s0 += rho[j] * mu_tilde[j]
        s1 += rho[j] * rho[j] / w[j]
        lo = bp[j]
        k += 1
    for i in range(m):
        v = mu_tilde[i] + nu * rho[i] / w[i]
        out[i] = v if v > 0.0 else 0.0
    return out


@maybe_njit
def prefix_qp_kernel(mu_tilde, rho, lam):
    """Projection onto {mu : sum_{j in S} rho_j mu_j >= -lam for all S}.

    Valid for weights w_j = rho_j^2 only (the caller enforces this). In the
    variables y_j = rho_j mu_j the objective is the plain Euclidean distance
    and the feasible set is permutation symmetric, so the projection keeps
    the order of y. After sorting y ascending only the m prefix-sum
    constraints matter, and the dual of that QP is an antitonic regression:

        min_{h nonincreasing, h >= 0}  1/2 ||h - z||^2,
        z = (-y_(1) - lam, -y_(2), ..., -y_(m)),   y* = y_sorted + h*,

    solved exactly by pool-adjacent-violators block merging followed by a
    clamp at zero. Total cost O(m log m) for the sort, O(m) for the fit.
    """
    m = mu_tilde.shape[0]
    y = np.empty(m)
    for i in range(m):
        y[i] = rho[i] * mu_tilde[i]
    order = np.argsort(y)

    # Fast path: all prefix sums of the sorted values already >= -lam.
    acc = 0.0
    feasible = True
    for k in range(m):
        acc += y[order[k]]
        if acc < -lam:
            feasible = False
            break
    if feasible:
        out = np.empty(m)
        for i in range(m):
            out[i] = mu_tilde[i]
        return out

    z = np.empty(m)
    z[0] = -y[order[0]] - lam
    for k in range(1, m):
        z[k] = -y[order[k]]

    # PAV for a nonincreasing fit: merge adjacent blocks while their means
    # ascend. block_sum/block_len/block_end form a stack of merged blocks.
    block_sum = np.empty(m)
    block_len = np.empty(m, np.int64)
    block_end = np.empty(m, np.int64)
    nb = 0
    for k in range(m):
        block_sum[nb] = z[k]
        block_len[nb] = 1
        block_end[nb] = k
        nb += 1
        while nb > 1 and block_sum[nb - 2] * block_len[nb - 1] < block_sum[nb - 1] * block_len[nb - 2]:
            block_sum[nb - 2] += block_sum[nb - 1]
            block_len[nb - 2] += block_len[nb - 1]
            block_end[nb - 2] = block_end[nb - 1]
            nb -= 1

    out = np.empty(m)
    start = 0
    for ib in range(nb):
        h = block_sum[ib] / block_len[ib]
        if h < 0.0:
            h = 0.0
        for k in range(start, block_end[ib] + 1):
            j = order[k]
            # h == 0 blocks are untouched by the projection; keep them exact.
            out[j] = mu_tilde[j] if h == 0.0 else (y[j] + h) / rho[j]
        start = block_end[ib] + 1
    return out


@maybe_njit
def project_dual_kernel(variant, mu_tilde, rho, lam, c, t, w):
    """Dispatch the w-weighted projection onto the variant's dual set."""
    m = mu_tilde.shape[0]
    if variant == VARIANT_MAXMIN:
        return prefix_qp_kernel(mu_tilde, rho, lam)
    if variant == VARIANT_LOADBAL:
        return halfspace_orthant_kernel(mu_tilde, rho, lam, w)
    lower = np.empty(m)
    if variant == VARIANT_MIRRORED_HINGE:
        for i in range(m):
            lower[i] = -c[i]
    else:
        for i in range(m):
            lower[i] = 0.0
    return clamp_kernel(mu_tilde, lower)


@maybe_njit
def run_loop_kernel(q, b, rho, w, eta, mu0, variant, lam, c, t):
    """Full dual-descent loop over T requests.

    Per step: best response against the current prices, all-or-nothing
    budget guard, consumption target, subgradient g = a - b x_tilde (the
    unguarded action), then the weighted projected descent step
    mu <- P_D(mu - eta * g / w).

    Budgets are tracked through the running consumption sum ``cum`` and the
    guard compares cum + b x <= T rho in exact float arithmetic, so the
    recorded cumulative consumption can never exceed the budget.

    Returns (mus, xtil_idx, x_idx, a_arr, g_arr, reward, cons, remaining,
    bad_step) where bad_step >= 0 flags the first step whose updated dual
    came out non-finite (-1 when the run is clean).
    """
    T, d = q.shape
    m = rho.shape[0]
    budget = np.empty(m)
    for i in range(m):
        budget[i] = rho[i] * T

    mus = np.empty((T, m))
    a_arr = np.empty((T, m))
    g_arr = np.empty((T, m))
    xtil_idx = np.empty(T, np.int64)
    x_idx = np.empty(T, np.int64)
    reward = np.zeros(T)
    cons = np.zeros((T, m))
    remaining = np.empty((T, m))
    cum = np.zeros(m)

    mu = mu0.copy()
    bad_step = -1
    for step in range(T):
        for i in range(m):
            mus[step, i] = mu[i]

        j_star, _ = best_response_kernel(q[step], b[step], mu)
        xtil_idx[step] = j_star

        take = j_star >= 0
        if take:
            for i in range(m):
                if cum[i] + b[step, i, j_star] > budget[i]:
                    take = False
                    break
        x_idx[step] = j_star if take else -1

        a = argmax_a_kernel(variant, mu, rho, lam, c, t)
        for i in range(m):
            a_arr[step, i] = a[i]
            g = a[i]
            if j_star >= 0:
                g -= b[step, i, j_star]
            g_arr[step, i] = g

        if take:
            reward[step] = q[step, j_star]
            for i in range(m):
                ci = b[step, i, j_star]
                cons[step, i] = ci
                cum[i] += ci
        for i in range(m):
            remaining[step, i] = budget[i] - cum[i]

        mu_tilde = np.empty(m)
        for i in range(m):
            mu_tilde[i] = mu[i] - eta * g_arr[step, i] / w[i]
        mu = project_dual_kernel(variant, mu_tilde, rho, lam, c, t, w)
        if bad_step < 0:
            for i in range(m):
                if not np.isfinite(mu[i]):
                    bad_step = step
                    break
        if bad_step >= 0:
            break

    return mus, xtil_idx, x_idx, a_arr, g_arr, reward, cons, remaining, bad_step
