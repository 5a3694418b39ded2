"""Dual objective evaluation, offline bounds, and regret accounting.

For a realized request sequence the empirical dual

    D(mu) = (1/N) sum_i f_i*(b_i' mu) + r*(-mu),
    f*(c) = max(0, max_j (q_j - c_j))      (linear reward over the simplex)

upper-bounds the offline optimum: T D(mu) >= OPT for every mu in D (weak
duality). Three surrogates of OPT are layered, tightest first where
available: an exhaustive grid search on tiny instances, the dual minimized
by offline subgradient descent, and the dual at the average online iterate
(the cheap bound used for regret reporting).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .domain import Instance, SupportBounds
from .dual_geometry import project_dual
from .oracles import simplex_grid
from .regularizers import (
    RegularizerSpec,
    _value_batch,
    argmax_a,
    bound_oracle,
    conjugate,
    dual_membership,
)
from .solver import RunTrace


@dataclass(frozen=True)
class BoundReport:
    """Offline-bound surrogates and the regret estimate for one run."""

    dual_at_mu_avg: float
    dual_minimized: float | None
    brute_force_opt: float | None
    regret_vs_dual_avg: float
    theoretical_bound: float | None


def empirical_dual(mu, requests, reg: RegularizerSpec) -> float:
    """D(mu) over the empirical distribution of the given requests.

    Returns +inf when mu is outside the dual feasible set; that is a
    legitimate value, not an error.
    """
    mu = np.asarray(mu, dtype=float)
    if not dual_membership(reg, mu, atol=1e-12):
        return math.inf
    total = 0.0
    for req in requests:
        adj = req.rewards - req.costs.T @ mu
        total += max(0.0, float(np.max(adj)))
    return total / len(requests) + conjugate(reg, mu)


def dual_bound_from_trace(trace: RunTrace, requests, reg: RegularizerSpec) -> float:
    """T * D(mu_average): the upper bound at the average online dual."""
    return trace.T * empirical_dual(trace.mu_average, requests, reg)


def _dual_subgradient(mu, qs, bs, reg: RegularizerSpec) -> np.ndarray:
    """Exact subgradient of the empirical dual at mu (envelope theorem)."""
    adj = qs - np.einsum("tij,i->tj", bs, mu)
    j_best = np.argmax(adj, axis=1)
    act = adj[np.arange(len(qs)), j_best] > 0
    g = argmax_a(reg, mu).astype(float).copy()
    if np.any(act):
        picked = bs[np.arange(len(qs)), :, j_best]  # (T, m) chosen columns
        g -= np.sum(picked[act], axis=0) / len(qs)
    return g


def minimize_dual(
    requests,
    reg: RegularizerSpec,
    iterations: int = 2000,
    eta_schedule=None,
    mu0=None,
) -> tuple[np.ndarray, float]:
    """Approximately minimize mu -> D(mu) by projected subgradient descent.

    Deterministic, weights w = rho^2 (so the max-min projection applies),
    step eta_k = eta0 / sqrt(k) with eta0 = 1/(b_bar + a_bar) unless a
    schedule is given. Tracks the best iterate seen and also evaluates the
    running average; the returned value never exceeds D(mu0).
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    qs = np.ascontiguousarray([r.rewards for r in requests], dtype=float)
    bs = np.ascontiguousarray([r.costs for r in requests], dtype=float)
    w = reg.rho**2
    if mu0 is None:
        mu = project_dual(reg, w, np.zeros(reg.m))
    else:
        mu = np.asarray(mu0, dtype=float).copy()

    from .regularizers import bound_oracle, dual_weighted_norm

    a_bar = bound_oracle(reg, w)[0]
    b_bar = max(
        (float(np.max(np.sqrt(np.sum(b**2 / w[:, None], axis=0)))) for b in bs),
        default=0.0,
    )
    eta0 = 1.0 / max(b_bar + a_bar, 1e-12)
    if eta_schedule is None:
        eta_schedule = lambda k: eta0 / math.sqrt(k)

    best_mu = mu.copy()
    best_val = empirical_dual(mu, requests, reg)
    avg = np.zeros(reg.m)
    for k in range(1, iterations + 1):
        g = _dual_subgradient(mu, qs, bs, reg)
        g = _dual_subgradient(mu, qs, bs, reg)
        mu = project_dual(reg, w, mu - eta_schedule(k) * g / w)
        if not np.all(np.isfinite(mu)):
            raise FloatingPointError(f"non-finite dual iterate at iteration {k}")
        avg += (mu - avg) / k
        val = empirical_dual(mu, requests, reg)
        if val < best_val:
            best_val, best_mu = val, mu.copy()
    avg_val = empirical_dual(avg, requests, reg)
    if avg_val < best_val:
        best_val, best_mu = avg_val, avg
    return best_mu, best_val


def brute_force_opt(instance: Instance, grid_step: float, reg: RegularizerSpec) -> float:
    """Exhaustive grid search for the offline optimum on tiny instances.

    Enumerates per-period actions on a simplex grid (vertices and 0
    included), keeps budget-feasible combinations, and maximizes
    sum_t q_t'x_t + T r(sum_t b_t x_t / T). Underestimates the true optimum
    by at most the grid resolution times the objective's action Lipschitz
    constant (see brute_force_tolerance).
    """
    if instance.T > 3 or instance.d > 2:
        raise ValueError("brute force limited to T <= 3, d <= 2")
    if not 0.01 <= grid_step <= 0.25:
        raise ValueError("grid_step must lie in [0.01, 0.25]")
    X = simplex_grid(instance.d, grid_step)  # (n, d)
    budget = instance.rho * instance.T
    rewards = [X @ r.rewards for r in instance.requests]  # each (n,)
    consumptions = [X @ r.costs.T for r in instance.requests]  # each (n, m)

    n = X.shape[0]
    best = -math.inf
    # Vectorize over the last period's grid, loop the earlier ones.
    last_r = rewards[-1]
    last_c = consumptions[-1]
    for combo in product(range(n), repeat=instance.T - 1):
        base_r = sum(rewards[t][i] for t, i in enumerate(combo))
        base_c = sum(consumptions[t][i] for t, i in enumerate(combo))
        tot_c = base_c + last_c  # (n, m)
        feas = np.all(tot_c <= budget + 1e-12, axis=1)
        if not np.any(feas):
            continue
        vals = base_r + last_r[feas]
        vals = vals + instance.T * _value_batch(reg, tot_c[feas].T / instance.T)
        cand = float(np.max(vals))
        if cand > best:
            best = cand
    return best


def brute_force_tolerance(instance: Instance, reg: RegularizerSpec, grid_step: float) -> float:
    """Upper bound on OPT - brute_force_opt from the grid discretization.

    Moving each period's action to the nearest grid point below it changes
    at most d coordinates by grid_step each, costing at most
    max_j q_j * d * grid_step in reward per period and perturbing the
    average consumption by at most max|b| * d * grid_step / T per period,
    which the regularizer term T * r scales back up by T * L_inf where
    L_inf bounds r's coordinate-wise Lipschitz constant.
    """
    q_max = max(float(np.max(r.rewards, initial=0.0)) for r in instance.requests)
    b_max = max(float(np.max(r.costs, initial=0.0)) for r in instance.requests)
    if reg.variant in ("maxmin", "loadbal"):
        l_inf = reg.lam / float(np.min(reg.rho))
    elif reg.variant == "none":
        l_inf = 0.0
    else:
        l_inf = float(np.sum(reg.c))
    per_period = instance.d * grid_step * (q_max + l_inf * b_max)
    return instance.T * per_period


def theoretical_bound_constants(bounds: SupportBounds, mu0, w) -> tuple[float, float, float]:
    """(C1, C2, C3) of the worst-case regret bound C1 + C2 eta T + C3 / eta.

    C1 = (f_bar + r_bar + L (b_bar + a_bar) - r_underline) / rho_underline
    C2 = (b_bar + a_bar)^2 / 2
    C3 = (L + C1 ||w||_inf^(1/2))^2 + ||mu0||_w^2
    """
    mu0 = np.asarray(mu0, dtype=float)
    w = np.asarray(w, dtype=float)
    c1 = (
        bounds.f_bar
        + bounds.r_bar
        + bounds.lipschitz_L * (bounds.b_bar + bounds.a_bar)
        - bounds.r_underline
    ) / bounds.rho_underline
    c2 = (bounds.b_bar + bounds.a_bar) ** 2 / 2.0
    c3 = (bounds.lipschitz_L + c1 * math.sqrt(float(np.max(w)))) ** 2 + float(
        np.sum(w * mu0**2)
    )
    return c1, c2, c3


def theoretical_bound(bounds: SupportBounds, eta: float, T: int, mu0, w) -> float:
    """Evaluate the regret-bound calculator at a given step size and horizon."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    c1, c2, c3 = theoretical_bound_constants(bounds, mu0, w)
    return c1 + c2 * eta * T + c3 / eta


def regret_estimate(trace: RunTrace, bound: float) -> float:
    """bound - realized objective; negative beyond tolerance means a bad bound."""
    regret = bound - trace.objective
    if regret < -1e-6 * trace.T:
        import warnings

        warnings.warn(
            f"regret estimate {regret} is negative beyond tolerance; "
            "the supplied bound is not a valid upper bound",
            stacklevel=2,
        )
    return regret


def bound_report(
    trace: RunTrace,
    instance: Instance,
    reg: RegularizerSpec,
    bounds: SupportBounds | None = None,
    eta: float | None = None,
    w=None,
    mu0=None,
    dual_iterations: int = 0,
    brute_grid_step: float | None = None,
) -> BoundReport:
    """Assemble every available OPT surrogate for one finished run.

    The minimized dual starts from the trace's average dual, so it can only
    improve on dual_at_mu_avg.
    """
    d_avg = dual_bound_from_trace(trace, instance.requests, reg)
    d_min = None
    if dual_iterations > 0:
        _, val = minimize_dual(
            instance.requests, reg, iterations=dual_iterations, mu0=trace.mu_average
        )
        d_min = trace.T * val
    bf = None
    if brute_grid_step is not None:
        bf = brute_force_opt(instance, brute_grid_step, reg)
    theo = None
    if bounds is not None and eta is not None and w is not None and mu0 is not None:
        theo = theoretical_bound(bounds, eta, trace.T, mu0, w)
    return BoundReport(
        dual_at_mu_avg=d_avg,
        dual_minimized=d_min,
        brute_force_opt=bf,
        regret_vs_dual_avg=regret_estimate(trace, d_avg),
        theoretical_bound=theo,
    )
