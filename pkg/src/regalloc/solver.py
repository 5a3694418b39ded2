"""The online dual subgradient descent solver.

Per request: best response against current prices, all-or-nothing budget
guard, regularizer consumption target, subgradient g = a - b x_tilde from
the *unguarded* action (that is the dual function's stochastic subgradient;
substituting the guarded action would be a different algorithm), then a
weighted projected descent step on the dual variable.

Feasibility is hard: the guard compares the running consumption total in
plain float arithmetic against T * rho, so recorded cumulative consumption
never exceeds the budget, not even by round-off.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import kernels
from .domain import Instance, Request, support_bounds, validate_instance
from .dual_geometry import MEMBERSHIP_ATOL, default_mu0
from .regularizers import RegularizerSpec, dual_membership, value


@dataclass(frozen=True)
class SolverConfig:
    """Dual initialization, step-size rule, weights and seed.

    mu0 = None picks the projection of the origin onto D. eta = None
    resolves the step-size rule eta_scale * T^(-1/2) once before the loop.
    w_rule is "rho_squared", "ones", or an explicit vector.
    """

    mu0: np.ndarray | None = None
    eta: float | None = None
    eta_scale: float = 0.01
    w_rule: str | np.ndarray = "rho_squared"
    seed: int = 0

    def resolve(self, T: int, reg: RegularizerSpec) -> tuple[np.ndarray, float, np.ndarray]:
        if isinstance(self.w_rule, str):
            if self.w_rule == "rho_squared":
                w = reg.rho**2
            elif self.w_rule == "ones":
                w = np.ones(reg.m)
            else:
                raise ValueError(f"unknown w_rule {self.w_rule!r}")
        else:
            w = np.asarray(self.w_rule, dtype=float)
            if w.shape != (reg.m,) or np.any(w <= 0):
                raise ValueError("explicit w must be strictly positive, length m")
        eta = float(self.eta) if self.eta is not None else self.eta_scale * T ** (-0.5)
        if not eta > 0:
            raise ValueError(f"resolved step size must be positive, got {eta}")
        if self.mu0 is None:
            mu0 = default_mu0(reg, w)
        else:
            mu0 = np.asarray(self.mu0, dtype=float)
            if not dual_membership(reg, mu0, atol=MEMBERSHIP_ATOL):
                raise ValueError("mu0 is outside the dual feasible set")
        return mu0, eta, w


@dataclass(frozen=True)
class StepRecord:
    """One step of the run; g = a - b x_tilde exactly (unguarded action)."""

    t: int
    mu: np.ndarray
    x_tilde: np.ndarray
    x: np.ndarray
    a: np.ndarray
    g: np.ndarray
    reward: float
    consumption: np.ndarray
    remaining: np.ndarray


@dataclass(frozen=True)
class RunTrace:
    """Column-major record of a full run plus summary statistics.

    Arrays are indexed by step; x_tilde_idx / x_idx hold the acted vertex
    index or -1 for the void action. depletion_time is the first step t at
    which some resource j satisfies cumulative_j(t) + b_bar >= rho_j T
    (None if never), the diagnostic analogue of the analysis stopping time.
    """

    T: int
    d: int
    rho: np.ndarray
    mu: np.ndarray            # (T, m), dual before each update
    x_tilde_idx: np.ndarray   # (T,)
    x_idx: np.ndarray         # (T,)
    a: np.ndarray             # (T, m)
    g: np.ndarray             # (T, m)
    reward: np.ndarray        # (T,)
    consumption: np.ndarray   # (T, m)
    remaining: np.ndarray     # (T, m)
    depletion_time: int | None
    b_bar: float
    mu_average: np.ndarray
    total_reward: float
    final_consumption_rate: np.ndarray
    objective: float

    def action_vector(self, idx: int) -> np.ndarray:
        x = np.zeros(self.d)
        if idx >= 0:
            x[idx] = 1.0
        return x

    def step(self, t: int) -> StepRecord:
        return StepRecord(
            t=t,
            mu=self.mu[t],
            x_tilde=self.action_vector(int(self.x_tilde_idx[t])),
            x=self.action_vector(int(self.x_idx[t])),
            a=self.a[t],
            g=self.g[t],
            reward=float(self.reward[t]),
            consumption=self.consumption[t],
            remaining=self.remaining[t],
        )

    @property
    def steps(self) -> Iterator[StepRecord]:
        return (self.step(t) for t in range(self.T))


def best_response(request: Request, mu) -> np.ndarray:
    """Argmax over X of q'x - mu'(b x): a vertex e_j or the void action.

    Acts only on strictly positive adjusted reward; ties go to the smallest
    vertex index.
    """
    mu = np.asarray(mu, dtype=float)
    j, _ = kernels.best_response_kernel(request.rewards, request.costs, mu)
    x = np.zeros(request.d)
    if j >= 0:
        x[j] = 1.0
    return x


def budget_guard(x_tilde, request: Request, remaining) -> np.ndarray:
    """x_tilde if b x_tilde fits the remaining budget component-wise, else 0.

    The comparison is exact (float <=): equality on the boundary is
    feasible, and an accepted action can never drive remaining negative.
    """
    x_tilde = np.asarray(x_tilde, dtype=float)
    remaining = np.asarray(remaining, dtype=float)
    if np.any(remaining < 0):
        raise ValueError("remaining budget must be nonnegative")
    if np.all(request.costs @ x_tilde <= remaining):
        return x_tilde
    return np.zeros(request.d)


def run(instance: Instance, reg: RegularizerSpec, cfg: SolverConfig) -> RunTrace:
    """Execute the full T-step dual descent loop and assemble the trace."""
    validate_instance(instance)
    if reg.m != instance.m:
        raise ValueError("regularizer and instance disagree on m")
    mu0, eta, w = cfg.resolve(instance.T, reg)
    q, b = instance.stacked()

    mus, xtil_idx, x_idx, a_arr, g_arr, reward, cons, remaining, bad_step = (
        kernels.run_loop_kernel(
            q, b, instance.rho, w, eta, mu0, reg.code, reg.lam, reg.c, reg.t
        )
    )
    if bad_step >= 0:
        raise FloatingPointError(
            f"non-finite dual iterate after step {int(bad_step)}; "
            "check the step size and weights"
        )

    b_bar = support_bounds(instance, reg, w).b_bar
    total_reward = float(np.sum(reward))
    rate = np.sum(cons, axis=0) / instance.T
    cum = np.cumsum(cons, axis=0)
    hit = np.any(cum + b_bar >= instance.rho * instance.T, axis=1)
    hit_idx = np.flatnonzero(hit)
    depletion = int(hit_idx[0]) + 1 if hit_idx.size else None
    return RunTrace(
        T=instance.T,
        d=instance.d,
        rho=instance.rho,
        mu=mus,
        x_tilde_idx=xtil_idx,
        x_idx=x_idx,
        a=a_arr,
        g=g_arr,
        reward=reward,
        consumption=cons,
        remaining=remaining,
        depletion_time=depletion,
        b_bar=b_bar,
        mu_average=np.mean(mus, axis=0),
        total_reward=total_reward,
        final_consumption_rate=rate,
        objective=total_reward + instance.T * value(reg, rate),
    )


def depletion_time(trace: RunTrace, b_bar: float) -> int | None:
    """First t (1-based) with cumulative_j(t) + b_bar >= rho_j T for some j."""
    cum = np.cumsum(trace.consumption, axis=0)
    hit = np.any(cum + b_bar >= trace.rho * trace.T, axis=1)
    idx = np.flatnonzero(hit)
    return int(idx[0]) + 1 if idx.size else None


def write_trace_jsonl(trace: RunTrace, path) -> None:
    """One JSON object per step, then a summary line."""
    with open(path, "w") as fh:
        for rec in trace.steps:
            fh.write(
                json.dumps(
                    {
                        "t": rec.t,
                        "mu": rec.mu.tolist(),
                        "x": rec.x.tolist(),
                        "x_tilde": rec.x_tilde.tolist(),
                        "a": rec.a.tolist(),
                        "g": rec.g.tolist(),
                        "reward": rec.reward,
                        "consumption": rec.consumption.tolist(),
                        "remaining": rec.remaining.tolist(),
                    }
                )
            )
            fh.write("\n")
        fh.write(
            json.dumps(
                {
                    "total_reward": trace.total_reward,
                    "objective": trace.objective,
                    "depletion_time": trace.depletion_time,
                    "mu_average": trace.mu_average.tolist(),
                }
            )
        )
        fh.write("\n")
