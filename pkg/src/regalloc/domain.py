"""Problem data types: requests, instances, actions, support bounds.

An instance is a realized sequence of T requests against m resources with
per-period budget rate rho (total budget T * rho). Each request carries a
linear reward q (one entry per action coordinate) and a nonnegative m x d
cost matrix b; actions live on the scaled simplex X = {x >= 0, sum x <= 1},
which always contains the void action 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

ACTION_ATOL = 1e-12


@dataclass(frozen=True)
class Request:
    """One arrival: reward vector q and cost matrix b (m rows, d columns)."""

    rewards: np.ndarray
    costs: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.rewards, dtype=float))
        b = np.asarray(self.costs, dtype=float)
        if b.ndim != 2:
            raise ValueError(f"costs must be a 2-d matrix, got ndim={b.ndim}")
        if q.ndim != 1 or q.shape[0] != b.shape[1]:
            raise ValueError(
                f"rewards shape {q.shape} incompatible with costs shape {b.shape}"
            )
        object.__setattr__(self, "rewards", q)
        object.__setattr__(self, "costs", b)

    @property
    def m(self) -> int:
        return self.costs.shape[0]

    @property
    def d(self) -> int:
        return self.costs.shape[1]


@dataclass(frozen=True)
class Instance:
    """Horizon T, budget rate rho (length m) and the T realized requests."""

    T: int
    rho: np.ndarray
    requests: tuple[Request, ...]

    def __post_init__(self):
        object.__setattr__(self, "rho", np.atleast_1d(np.asarray(self.rho, dtype=float)))
        object.__setattr__(self, "requests", tuple(self.requests))

    @property
    def m(self) -> int:
        return self.rho.shape[0]

    @property
    def d(self) -> int:
        return self.requests[0].d

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """(q, b) as contiguous arrays of shape (T, d) and (T, m, d)."""
        q = np.ascontiguousarray([r.rewards for r in self.requests], dtype=float)
        b = np.ascontiguousarray([r.costs for r in self.requests], dtype=float)
        return q, b


@dataclass(frozen=True)
class SupportBounds:
    """Computed bound diagnostics over the realized request support.

    f_bar bounds rewards over X, b_bar bounds ||b x||_{w,*} over X, a_bar
    bounds ||a*(-mu)||_{w,*}, lipschitz_L bounds the regularizer's Lipschitz
    constant in ||.||_{w,*}, and [r_underline, r_bar] brackets r over the
    box [0, rho]. rho_underline = min_j rho_j.
    """

    f_bar: float
    b_bar: float
    a_bar: float
    lipschitz_L: float
    r_bar: float
    r_underline: float
    rho_underline: float

    def __post_init__(self):
        if self.f_bar < 0 or self.b_bar < 0:
            raise ValueError("f_bar and b_bar must be nonnegative")
        if self.r_underline > self.r_bar:
            raise ValueError("r_underline must not exceed r_bar")
        if not self.rho_underline > 0:
            raise ValueError("rho_underline must be positive")


def validate_instance(instance: Instance) -> Instance:
    """Check all instance invariants; return the instance unchanged.

    Raises ValueError naming the offending index on the first violation.
    """
    if instance.T < 1:
        raise ValueError(f"horizon must be >= 1, got {instance.T}")
    rho = instance.rho
    for j in range(rho.shape[0]):
        if not rho[j] > 0:
            raise ValueError(f"nonpositive budget rate at j={j}")
    if len(instance.requests) != instance.T:
        raise ValueError(
            f"expected {instance.T} requests, got {len(instance.requests)}"
        )
    m = instance.m
    d = instance.requests[0].d
    for tt, req in enumerate(instance.requests):
        if req.costs.shape != (m, d):
            raise ValueError(
                f"request {tt}: cost matrix shape {req.costs.shape} != ({m}, {d})"
            )
        if np.any(req.rewards < 0):
            j = int(np.argmin(req.rewards))
            raise ValueError(f"request {tt}: negative reward at j={j}")
        if np.any(req.costs < 0):
            i, j = np.unravel_index(int(np.argmin(req.costs)), req.costs.shape)
            raise ValueError(f"request {tt}: negative cost at ({i}, {j})")
    return instance


def validate_action(x, d: int) -> np.ndarray:
    """Check x is in the scaled simplex up to round-off, then clamp exactly.

    Tolerates 1e-12 float noise on both the nonnegativity and the sum
    constraint, and returns an action that satisfies them exactly.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (d,):
        raise ValueError(f"action must have shape ({d},), got {x.shape}")
    if np.min(x, initial=0.0) < -ACTION_ATOL:
        raise ValueError("action has a negative coordinate")
    total = float(np.sum(x))
    if total > 1.0 + ACTION_ATOL:
        raise ValueError(f"action coordinates sum to {total} > 1")
    x = np.clip(x, 0.0, None)
    total = float(np.sum(x))
    if total > 1.0:
        x = x / total
    return x


def support_bounds(instance: Instance, reg, w) -> SupportBounds:
    """Bound diagnostics for the realized support, weight vector w.

    For linear rewards over the scaled simplex the maxima over X are
    attained at a vertex or at 0, so f_bar = max_t max_j q_tj and
    b_bar = max_t max_j ||b_t e_j||_{w,*}. The regularizer-dependent
    entries delegate to its bound oracle.
    """
    from .regularizers import bound_oracle

    w = np.asarray(w, dtype=float)
    if w.shape != (instance.m,) or np.any(w <= 0):
        raise ValueError("w must be a strictly positive vector of length m")
    f_bar = 0.0
    b_bar = 0.0
    for req in instance.requests:
        f_bar = max(f_bar, float(np.max(req.rewards, initial=0.0)))
        col_norms = np.sqrt(np.sum(req.costs**2 / w[:, None], axis=0))
        b_bar = max(b_bar, float(np.max(col_norms, initial=0.0)))
    a_bar, lip, r_bar, r_under = bound_oracle(reg, w)
    return SupportBounds(
        f_bar=f_bar,
        b_bar=b_bar,
        a_bar=a_bar,
        lipschitz_L=lip,
        r_bar=r_bar,
        r_underline=r_under,
        rho_underline=float(np.min(instance.rho)),
    )


# -- JSON wire format ---------------------------------------------------------


def instance_to_json_dict(instance: Instance) -> dict:
    return {
        "T": instance.T,
        "rho": instance.rho.tolist(),
        "requests": [
            {"q": r.rewards.tolist(), "b": r.costs.tolist()} for r in instance.requests
        ],
    }


def instance_from_json_dict(d: dict) -> Instance:
    requests = tuple(
        Request(rewards=np.asarray(r["q"], float), costs=np.asarray(r["b"], float))
        for r in d["requests"]
    )
    return validate_instance(
        Instance(T=int(d["T"]), rho=np.asarray(d["rho"], float), requests=requests)
    )


def write_instance_json(instance: Instance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_json_dict(instance), fh)
        fh.write("\n")


def read_instance_json(path) -> Instance:
    with open(path) as fh:
        return instance_from_json_dict(json.load(fh))
