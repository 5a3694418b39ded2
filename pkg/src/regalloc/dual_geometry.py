"""Weighted projections onto the dual feasible sets and the descent step.

The descent step

    mu_next = argmin_{mu in D} <g, mu> + 1/(2 eta) ||mu - mu_t||_w^2

splits into the unconstrained minimizer mu_tilde_j = mu_j - eta g_j / w_j
followed by the w-weighted projection onto D. The projection depends only
on the variant's dual-set geometry:

    none, hinge      D = {mu >= 0}          coordinate-wise clamp
    mirrored_hinge   D = {mu >= -c}         coordinate-wise clamp
    loadbal          D = {mu >= 0, rho'mu >= lam}   halfspace + orthant
    maxmin           D = {prefix sums of rho*mu >= -lam}  prefix-sum QP

The prefix-sum QP is only solved for weights w = rho^2: with that weight
the problem is permutation symmetric in y = rho*mu, the projection keeps
the order of y, and an O(m log m) pool-adjacent-violators pass is exact.
Other weights are refused rather than approximated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .regularizers import RegularizerSpec, dual_membership

MEMBERSHIP_ATOL = 1e-9

# Test hook: verify's negative control adds this to the first coordinate of
# every projection output, which must trip the KKT suite. Never set outside
# verification code.
_projection_perturbation = 0.0


def set_projection_perturbation(eps: float) -> None:
    global _projection_perturbation
    _projection_perturbation = float(eps)


def _perturb(mu: np.ndarray) -> np.ndarray:
    if _projection_perturbation != 0.0:
        mu = mu.copy()
        mu[0] += _projection_perturbation
    return mu


@dataclass(frozen=True)
class DescentContext:
    """Weights, step size and regularizer for the dual update."""

    w: np.ndarray
    eta: float
    reg: RegularizerSpec

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.shape != (self.reg.m,) or np.any(w <= 0):
            raise ValueError("w must be strictly positive with one entry per resource")
        if not self.eta > 0:
            raise ValueError(f"step size eta must be positive, got {self.eta}")
        object.__setattr__(self, "w", w)


def project_clamp(mu_tilde, lower) -> np.ndarray:
    """Projection onto the box {mu >= lower}: coordinate-wise max.

    Separable, so the weighted projection coincides with the unweighted one.
    """
    mu_tilde = np.asarray(mu_tilde, dtype=float)
    lower = np.asarray(lower, dtype=float)
    if not np.all(np.isfinite(lower)):
        raise ValueError("lower bounds must be finite")
    return _perturb(kernels.clamp_kernel(mu_tilde, np.broadcast_to(lower, mu_tilde.shape).copy()))


def project_halfspace_orthant(mu_tilde, rho, lam: float, w) -> np.ndarray:
    """w-weighted projection onto {mu >= 0, rho'mu >= lam}."""
    mu_tilde = np.asarray(mu_tilde, dtype=float)
    rho = np.asarray(rho, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0) or np.any(rho <= 0) or not lam > 0:
        raise ValueError("requires w > 0, rho > 0 and lam > 0")
    return _perturb(kernels.halfspace_orthant_kernel(mu_tilde, rho, float(lam), w))


def project_prefix_qp(mu_tilde, rho, lam: float) -> np.ndarray:
    """rho^2-weighted projection onto {sum_{j in S} rho_j mu_j >= -lam for all S}.

    See the module docstring: exact via sorting plus pool-adjacent-violators
    block merging; output preserves the order of rho * mu_tilde and
    satisfies every subset constraint.
    """
    mu_tilde = np.asarray(mu_tilde, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0) or not lam > 0:
        raise ValueError("requires rho > 0 and lam > 0")
    return _perturb(kernels.prefix_qp_kernel(mu_tilde, rho, float(lam)))


def _require_rho_squared(reg: RegularizerSpec, w: np.ndarray) -> None:
    if not np.allclose(w, reg.rho**2, rtol=1e-12, atol=0.0):
        raise ValueError(
            "the max-min dual set is only projectable with weights w = rho^2"
        )


def project_dual(reg: RegularizerSpec, w, mu_tilde) -> np.ndarray:
    """Dispatch the w-weighted projection onto the variant's dual set D."""
    w = np.asarray(w, dtype=float)
    mu_tilde = np.asarray(mu_tilde, dtype=float)
    if reg.variant == "maxmin":
        _require_rho_squared(reg, w)
        return project_prefix_qp(mu_tilde, reg.rho, reg.lam)
    if reg.variant == "loadbal":
        return project_halfspace_orthant(mu_tilde, reg.rho, reg.lam, w)
    if reg.variant == "mirrored_hinge":
        return project_clamp(mu_tilde, -reg.c)
    return project_clamp(mu_tilde, np.zeros(reg.m))


def descent_step(ctx: DescentContext, mu, g) -> np.ndarray:
    """One weighted projected subgradient step from mu along g."""
    mu = np.asarray(mu, dtype=float)
    g = np.asarray(g, dtype=float)
    if not dual_membership(ctx.reg, mu, atol=MEMBERSHIP_ATOL):
        raise ValueError("mu is outside the dual feasible set")
    mu_tilde = mu - ctx.eta * g / ctx.w
    return project_dual(ctx.reg, ctx.w, mu_tilde)


def default_mu0(reg: RegularizerSpec, w=None) -> np.ndarray:
    """Projection of the origin onto D: a canonical feasible starting dual.

    Equals 0 for every variant except load balancing, whose dual set
    excludes the origin.
    """
    if w is None:
        w = reg.rho**2
    return project_dual(reg, np.asarray(w, float), np.zeros(reg.m))
