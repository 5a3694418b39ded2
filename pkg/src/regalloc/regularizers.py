"""Concave consumption regularizers and their dual-side oracles.

Five variants act on the average resource consumption a (one entry per
resource, with per-period budget rho):

    none            r(a) = 0
    maxmin          r(a) = lam * min_j (a_j / rho_j)
    loadbal         r(a) = -lam * max_j (a_j / rho_j)
    hinge           r(a) = -sum_j c_j * max(a_j - t_j, 0)
    mirrored_hinge  r(a) = -sum_j c_j * max(t_j - a_j, 0)

Each variant owns four oracles used by the dual descent solver:

* ``value``           r(a) itself,
* ``conjugate``       r*(-mu) = sup_{a <= rho} { r(a) + mu'a }, finite
                      exactly on the dual feasible set D,
* ``argmax_a``        a maximizer of the sup above (closed form),
* ``dual_membership`` whether mu lies in D.

``bound_oracle`` supplies the constants (a_bar, L, r_bar, r_underline)
entering the regret-bound calculator; they are valid upper/lower bounds
over the box [0, rho], not necessarily tight.

Note on signs: the load-balancing conjugate is rho'mu - lam on
D = {mu >= 0, rho'mu >= lam}. The same change of variables that gives the
max-min conjugate rho'mu + lam yields -lam here (sanity check m=1, rho=1:
sup_{a<=1} {-a + mu a} = mu - 1 for mu >= 1). The grid oracle in the test
suite pins this down numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import (
    VARIANT_CODES,
    VARIANT_HINGE,
    VARIANT_LOADBAL,
    VARIANT_MAXMIN,
    VARIANT_MIRRORED_HINGE,
    VARIANT_NONE,
    argmax_a_kernel,
)

VARIANTS = tuple(VARIANT_CODES)

_ATOL = 1e-9


def _as_vector(x, m: int, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != (m,):
        raise ValueError(f"{name} must have shape ({m},), got {arr.shape}")
    return arr


@dataclass(frozen=True)
class RegularizerSpec:
    """One regularizer variant with its parameters and the budget rate rho.

    rho is carried here because every dual-side oracle (conjugate, argmax,
    membership, projection geometry) depends on it.
    """

    variant: str
    rho: np.ndarray
    lam: float = 0.0
    c: np.ndarray = field(default=None)  # type: ignore[assignment]
    t: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.variant not in VARIANT_CODES:
            raise ValueError(f"unknown regularizer variant {self.variant!r}")
        rho = np.asarray(self.rho, dtype=float)
        if rho.ndim != 1 or rho.size == 0:
            raise ValueError("rho must be a nonempty 1-d vector")
        if np.any(rho <= 0):
            j = int(np.argmin(rho))
            raise ValueError(f"nonpositive budget rate at j={j}")
        object.__setattr__(self, "rho", rho)
        m = rho.shape[0]

        if self.variant in ("maxmin", "loadbal"):
            if not self.lam > 0:
                raise ValueError(f"{self.variant} requires lambda > 0, got {self.lam}")
        if self.variant in ("hinge", "mirrored_hinge"):
            c = _as_vector(self.c, m, "c")
            t = _as_vector(self.t, m, "t")
            if np.any(c < 0):
                raise ValueError("hinge penalties c must be nonnegative")
            if np.any(t < -_ATOL) or np.any(t > rho + _ATOL):
                raise ValueError("thresholds t must satisfy 0 <= t <= rho")
            object.__setattr__(self, "c", np.clip(c, 0.0, None))
            object.__setattr__(self, "t", np.clip(t, 0.0, rho))
        else:
            object.__setattr__(self, "c", np.zeros(m))
            object.__setattr__(self, "t", np.zeros(m))

    # -- constructors -------------------------------------------------------

    @classmethod
    def none(cls, rho) -> "RegularizerSpec":
        return cls("none", np.asarray(rho, float))

    @classmethod
    def maxmin(cls, lam: float, rho) -> "RegularizerSpec":
        return cls("maxmin", np.asarray(rho, float), lam=float(lam))

    @classmethod
    def load_balancing(cls, lam: float, rho) -> "RegularizerSpec":
        return cls("loadbal", np.asarray(rho, float), lam=float(lam))

    @classmethod
    def hinge(cls, c, t, rho) -> "RegularizerSpec":
        return cls("hinge", np.asarray(rho, float), c=np.asarray(c, float), t=np.asarray(t, float))

    @classmethod
    def mirrored_hinge(cls, c, t, rho) -> "RegularizerSpec":
        return cls("mirrored_hinge", np.asarray(rho, float), c=np.asarray(c, float), t=np.asarray(t, float))

    @property
    def m(self) -> int:
        return self.rho.shape[0]

    @property
    def code(self) -> int:
        return VARIANT_CODES[self.variant]

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        out = {"variant": self.variant}
        if self.variant in ("maxmin", "loadbal"):
            out["lambda"] = self.lam
        if self.variant in ("hinge", "mirrored_hinge"):
            out["c"] = self.c.tolist()
            out["t"] = self.t.tolist()
        return out

    @classmethod
    def from_json_dict(cls, d: dict, rho) -> "RegularizerSpec":
        variant = d.get("variant", "none")
        return cls(
            variant,
            np.asarray(rho, float),
            lam=float(d.get("lambda", 0.0)),
            c=np.asarray(d["c"], float) if "c" in d else None,
            t=np.asarray(d["t"], float) if "t" in d else None,
        )


# -- primal value -----------------------------------------------------------


def value(reg: RegularizerSpec, a) -> float:
    """r(a) for a single consumption vector, required to lie in [0, rho]."""
    a = _as_vector(a, reg.m, "a")
    if np.any(a > reg.rho + _ATOL):
        raise ValueError("consumption exceeds rho")
    if np.any(a < -_ATOL):
        raise ValueError("negative consumption")
    return float(_value_batch(reg, a.reshape(-1, 1))[0])


def _value_batch(reg: RegularizerSpec, A: np.ndarray) -> np.ndarray:
    """r applied to each column of an (m, n) matrix; no range checks."""
    code = reg.code
    if code == VARIANT_NONE:
        return np.zeros(A.shape[1])
    if code == VARIANT_MAXMIN:
        return reg.lam * np.min(A / reg.rho[:, None], axis=0)
    if code == VARIANT_LOADBAL:
        return -reg.lam * np.max(A / reg.rho[:, None], axis=0)
    if code == VARIANT_HINGE:
        return -np.sum(reg.c[:, None] * np.maximum(A - reg.t[:, None], 0.0), axis=0)
    return -np.sum(reg.c[:, None] * np.maximum(reg.t[:, None] - A, 0.0), axis=0)


# -- dual-side oracles --------------------------------------------------------


def dual_membership(reg: RegularizerSpec, mu, atol: float = 0.0) -> bool:
    """True iff mu is in D = {mu : r*(-mu) < inf}, within slack atol.

    Max-min needs all 2^m subset sums sum_{j in S} rho_j mu_j >= -lam; the
    worst subset is a prefix of the values rho_j mu_j sorted ascending, so
    the check is O(m log m).
    """
    mu = _as_vector(mu, reg.m, "mu")
    code = reg.code
    if code == VARIANT_MAXMIN:
        prefix = np.cumsum(np.sort(reg.rho * mu))
        return bool(np.all(prefix >= -reg.lam - atol))
    if code == VARIANT_LOADBAL:
        return bool(np.all(mu >= -atol) and reg.rho @ mu >= reg.lam - atol)
    if code == VARIANT_MIRRORED_HINGE:
        return bool(np.all(mu >= -reg.c - atol))
    return bool(np.all(mu >= -atol))


def conjugate(reg: RegularizerSpec, mu) -> float:
    """r*(-mu) = sup_{a <= rho} { r(a) + mu'a }; +inf signals mu outside D."""
    mu = _as_vector(mu, reg.m, "mu")
    if not dual_membership(reg, mu):
        return math.inf
    code = reg.code
    if code == VARIANT_NONE:
        return float(reg.rho @ mu)
    if code == VARIANT_MAXMIN:
        return float(reg.rho @ mu + reg.lam)
    if code == VARIANT_LOADBAL:
        return float(reg.rho @ mu - reg.lam)
    if code == VARIANT_HINGE:
        return float(mu @ reg.t + np.sum((reg.rho - reg.t) * np.maximum(mu - reg.c, 0.0)))
    return float(mu @ reg.t + np.sum((reg.rho - reg.t) * np.maximum(mu, 0.0)))


def argmax_a(reg: RegularizerSpec, mu) -> np.ndarray:
    """A maximizer of r(a) + mu'a over {a <= rho}, for mu in D.

    Always rho for the none/maxmin/loadbal variants. For the hinge variants
    the problem separates per coordinate with the maximizer at the threshold
    t_j below the kink and at rho_j above it; at the kink both are optimal
    and the smaller target t_j is returned.
    """
    mu = _as_vector(mu, reg.m, "mu")
    if not dual_membership(reg, mu):
        raise ValueError("mu outside the dual feasible set")
    return argmax_a_kernel(reg.code, mu, reg.rho, reg.lam, reg.c, reg.t)


def bound_oracle(reg: RegularizerSpec, w) -> tuple[float, float, float, float]:
    """(a_bar, L, r_bar, r_underline) for the weight vector w.

    a_bar bounds ||a*(-mu)||_{w,*} (every implemented argmax returns t or rho
    coordinate-wise, both dominated by rho). L is a Lipschitz constant of r
    in the dual weighted norm over [0, rho]: subgradients of the min/max
    variants are convex combinations of +-lam e_j / rho_j, bounded in
    ||.||_w by lam ||1/rho||_w (= lam sqrt(m) at w = rho^2); the hinge
    variants have subgradients inside the box [-c, c], bounded by ||c||_w.
    r_bar / r_underline are the max/min of r over the box [0, rho].
    """
    w = _as_vector(w, reg.m, "w")
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    a_bar = dual_weighted_norm(reg.rho, w)
    code = reg.code
    if code == VARIANT_NONE:
        return a_bar, 0.0, 0.0, 0.0
    if code == VARIANT_MAXMIN:
        return a_bar, reg.lam * weighted_norm(1.0 / reg.rho, w), reg.lam, 0.0
    if code == VARIANT_LOADBAL:
        return a_bar, reg.lam * weighted_norm(1.0 / reg.rho, w), 0.0, -reg.lam
    if code == VARIANT_HINGE:
        return a_bar, weighted_norm(reg.c, w), 0.0, float(-reg.c @ (reg.rho - reg.t))
    return a_bar, weighted_norm(reg.c, w), 0.0, float(-reg.c @ reg.t)


def weighted_norm(x, w) -> float:
    """||x||_w = sqrt(sum_j w_j x_j^2)."""
    x = np.asarray(x, float)
    w = np.asarray(w, float)
    return float(np.sqrt(np.sum(w * x * x)))


def dual_weighted_norm(x, w) -> float:
    """||x||_{w,*} = sqrt(sum_j x_j^2 / w_j), the dual norm of ||.||_w."""
    x = np.asarray(x, float)
    w = np.asarray(w, float)
    return float(np.sqrt(np.sum(x * x / w)))
