"""Outage-constrained minimization of the average total transmission power.

The objective sum_l P_l * p_out(l-1) weights each round's power by the
probability the round is reached (the first round always is).  Under the
high-SNR outage law the stationarity conditions collapse to a one-step
recursion between consecutive powers, which yields the closed-form optimum;
the same problem is also solved numerically against the exact outage
expressions, and an equal-power baseline is provided in both variants.
All closed-form arithmetic runs in the log domain: the nested exponents
blow up in linear arithmetic for small tolerances or many rounds.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, minimize

from .channel import ChannelParams
from .outage import (
    HarqConfig,
    Scheme,
    _log_high_snr_coefficient,
    outage_cc,
    outage_ir_lower,
    outage_type1,
)

__all__ = [
    "AllocationError",
    "AllocationProblem",
    "AllocationResult",
    "allocate_closed_form",
    "allocate_fixed",
    "allocate_numerical_exact",
    "asymptotic_outage_sequence",
    "average_power",
    "exact_outage_sequence",
]

#: dimension guard for the numerical solver
MAX_NUMERICAL_ROUNDS = 6

#: lower bound on powers inside the numerical solver, keeps outage defined
_POWER_FLOOR = 1e-6


class AllocationError(RuntimeError):
    """Raised when a power allocation cannot be computed for the given inputs."""


@dataclass(frozen=True)
class AllocationProblem:
    """Scheme, round budget, rate, outage tolerance and channel statistics."""

    scheme: Scheme
    max_rounds: int
    rate: float
    epsilon: float
    params: ChannelParams

    def __post_init__(self) -> None:
        if not isinstance(self.scheme, Scheme):
            raise ValueError(f"scheme must be a Scheme member, got {self.scheme!r}")
        if int(self.max_rounds) < 1:
            raise ValueError(f"max_rounds must be >= 1, got {self.max_rounds}")
        object.__setattr__(self, "max_rounds", int(self.max_rounds))
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ValueError(f"rate must be positive, got {self.rate}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"outage tolerance must lie in (0, 1), got {self.epsilon}")
        if self.max_rounds > self.params.rounds:
            raise ValueError(
                f"channel model covers {self.params.rounds} rounds, "
                f"requested {self.max_rounds}"
            )


@dataclass(frozen=True)
class AllocationResult:
    """Optimized powers with the achieved constraint value and objective."""

    powers: tuple[float, ...]
    average_power: float
    achieved_outage: float
    method: str


def average_power(powers: Sequence[float], outage_sequence: Sequence[float]) -> float:
    """Average total transmit power sum_l P_l * p_out(l-1).

    ``outage_sequence[l]`` is the outage probability after l rounds for
    l = 0..L-1, with the l = 0 entry equal to one.
    """
    powers = [float(p) for p in powers]
    if len(outage_sequence) < len(powers):
        raise ValueError("need an outage value for every round prefix")
    if abs(outage_sequence[0] - 1.0) > 1e-12:
        raise ValueError(f"outage before the first round must be 1, got {outage_sequence[0]}")
    return float(sum(p * outage_sequence[i] for i, p in enumerate(powers)))


def _log_phis(scheme: Scheme, rounds: int, rate: float,
              params: ChannelParams) -> list[float]:
    return [_log_high_snr_coefficient(scheme, l, rate, params) for l in range(rounds + 1)]


def asymptotic_outage_sequence(scheme: Scheme, powers: Sequence[float], rate: float,
                               params: ChannelParams) -> list[float]:
    """High-SNR outage after l rounds for l = 0..L (first entry 1)."""
    powers = [float(p) for p in powers]
    log_phis = _log_phis(scheme, len(powers), rate, params)
    out = [1.0]
    log_pow = 0.0
    for l, p in enumerate(powers, start=1):
        log_pow += math.log(p)
        out.append(math.exp(log_phis[l] - params.m * log_pow))
    return out


def exact_outage_sequence(scheme: Scheme, powers: Sequence[float], rate: float,
                          params: ChannelParams, tol: float = 1e-11) -> list[float]:
    """Exact outage after l rounds for l = 0..L (first entry 1).

    Type I uses the truncated mixture series at tolerance ``tol``; chase
    combining the pole-expansion CDF; incremental redundancy its closed-form
    lower bound, the quantity the allocation constraint controls.
    """
    powers = tuple(float(p) for p in powers)
    config = HarqConfig(scheme=scheme, max_rounds=len(powers), rate=rate, powers=powers)
    out = [1.0]
    for l in range(1, len(powers) + 1):
        if scheme is Scheme.TYPE1:
            out.append(outage_type1(config, params, l, tol=tol).value)
        elif scheme is Scheme.CC:
            out.append(outage_cc(config, params, l))
        else:
            out.append(outage_ir_lower(config, params, l))
    return out


def allocate_closed_form(problem: AllocationProblem) -> AllocationResult:
    """Closed-form optimum of the allocation problem under high-SNR outage.

    The last-round power follows from the constraint holding with equality;
    earlier powers follow the stationarity recursion
    P_n**(m+1) = (m+1) P_{n+1} phi_n / phi_{n-1}.  The solution is unique and
    strictly positive; a warning is emitted when it falls below one, where
    the high-SNR premise is dubious.
    """
    L = problem.max_rounds
    m = problem.params.m
    log_eps = math.log(problem.epsilon)
    log_phis = _log_phis(problem.scheme, L, problem.rate, problem.params)

    # log of (m+1) * phi_{k-1} / phi_{k-2}, the per-step recursion gain
    log_gain = [0.0, 0.0] + [
        math.log(m + 1.0) + log_phis[k - 1] - log_phis[k - 2] for k in range(2, L + 1)
    ]
    gain_sum = sum(log_gain[k] / (m + 1.0) ** (k - 1) for k in range(2, L + 1))
    log_p_last = (
        (log_phis[L] - log_phis[L - 1] - (L - 1) * math.log(m + 1.0) - log_eps + gain_sum)
        * (m + 1.0) ** (L - 1)
        / ((m + 1.0) ** L - 1.0)
    )
    log_powers = [0.0] * L
    log_powers[L - 1] = log_p_last
    for n in range(L - 1, 0, -1):
        log_powers[n - 1] = (log_gain[n + 1] + log_powers[n]) / (m + 1.0)

    powers = tuple(math.exp(v) for v in log_powers)
    if min(powers) < 1.0:
        warnings.warn(
            "closed-form allocation produced powers below 1; the outage "
            "tolerance is too loose for the high-SNR regime the solution assumes",
            UserWarning,
            stacklevel=2,
        )
    avg = math.exp(
        log_eps
        + (m + 1.0) * log_p_last
        + log_phis[L - 1]
        - log_phis[L]
        + math.log(((m + 1.0) ** L - 1.0) / m)
    )
    achieved = math.exp(log_phis[L] - m * sum(log_powers))
    return AllocationResult(
        powers=powers,
        average_power=avg,
        achieved_outage=achieved,
        method="closed_form_asymptotic",
    )


def _exact_outage_last(problem: AllocationProblem, powers: Sequence[float]) -> float:
    return exact_outage_sequence(
        problem.scheme, powers, problem.rate, problem.params
    )[problem.max_rounds]


def allocate_fixed(problem: AllocationProblem, use_exact: bool = False) -> AllocationResult:
    """Equal-power baseline P_1 = ... = P_L meeting the outage constraint.

    The asymptotic variant solves the constraint in closed form; the exact
    variant root-finds the scalar power on the scheme's exact outage.
    """
    L = problem.max_rounds
    m = problem.params.m
    log_phis = _log_phis(problem.scheme, L, problem.rate, problem.params)

    log_p = (log_phis[L] - math.log(problem.epsilon)) / (L * m)
    if not use_exact:
        powers = (math.exp(log_p),) * L
        seq = asymptotic_outage_sequence(problem.scheme, powers, problem.rate, problem.params)
        return AllocationResult(
            powers=powers,
            average_power=average_power(powers, seq),
            achieved_outage=seq[L],
            method="fixed_asymptotic",
        )

    def gap(log_scalar: float) -> float:
        p_out = _exact_outage_last(problem, (math.exp(log_scalar),) * L)
        return math.log(max(p_out, 1e-300)) - math.log(problem.epsilon)

    lo = hi = log_p
    span = 1.0
    while gap(lo) < 0.0:  # exact outage below tolerance: power can shrink
        lo -= span
        span *= 2.0
        if lo < log_p - 80.0:
            raise AllocationError("no lower bracket for the fixed-power search")
    span = 1.0
    while gap(hi) > 0.0:
        hi += span
        span *= 2.0
        if hi > log_p + 80.0:
            raise AllocationError(
                "outage still above tolerance at the upper bracket of the fixed-power search"
            )
    log_root = brentq(gap, lo, hi, xtol=1e-13, rtol=8.9e-16)
    powers = (math.exp(log_root),) * L
    seq = exact_outage_sequence(problem.scheme, powers, problem.rate, problem.params)
    return AllocationResult(
        powers=powers,
        average_power=average_power(powers, seq),
        achieved_outage=seq[L],
        method="fixed_exact",
    )


def _restore_feasibility(problem: AllocationProblem, powers: np.ndarray) -> np.ndarray:
    """Scale all powers by a common factor until the exact constraint holds."""
    if _exact_outage_last(problem, powers) <= problem.epsilon:
        return powers

    def gap(log_scale: float) -> float:
        p_out = _exact_outage_last(problem, powers * math.exp(log_scale))
        return math.log(max(p_out, 1e-300)) - math.log(problem.epsilon)

    hi = 0.1
    while gap(hi) > 0.0:
        hi *= 2.0
        if hi > 80.0:
            raise AllocationError("could not restore feasibility by scaling powers up")
    root = brentq(gap, 0.0, hi, xtol=1e-12)
    # nudge up so rounding cannot leave the constraint violated
    return powers * math.exp(root) * (1.0 + 1e-12)


def allocate_numerical_exact(problem: AllocationProblem) -> AllocationResult:
    """Minimize the exact average power subject to the exact outage constraint.

    Optimizes in log-power coordinates from the closed-form warm start, then
    restores feasibility by uniform up-scaling (outage is monotone in a
    common power factor) and keeps the best feasible candidate, with the
    equal-power exact baseline as a safety net.
    """
    L = problem.max_rounds
    if L > MAX_NUMERICAL_ROUNDS:
        raise ValueError(f"numerical solver limited to {MAX_NUMERICAL_ROUNDS} rounds, got {L}")

    warm = np.array(allocate_closed_form(problem).powers)

    if L == 1:
        def gap(log_p: float) -> float:
            p_out = _exact_outage_last(problem, (math.exp(log_p),))
            return math.log(max(p_out, 1e-300)) - math.log(problem.epsilon)

        center = math.log(warm[0])
        lo, hi = center - 2.0, center + 2.0
        while gap(lo) < 0.0:
            lo -= 2.0
        while gap(hi) > 0.0:
            hi += 2.0
        power = math.exp(brentq(gap, lo, hi, xtol=1e-13, rtol=8.9e-16))
        seq = exact_outage_sequence(problem.scheme, (power,), problem.rate, problem.params)
        return AllocationResult(
            powers=(power,),
            average_power=power,
            achieved_outage=seq[1],
            method="numerical_exact",
        )

    scale = float(np.sum(warm))

    def objective(z: np.ndarray) -> float:
        powers = np.exp(z)
        seq = exact_outage_sequence(problem.scheme, powers, problem.rate, problem.params)
        return average_power(powers, seq[:-1]) / scale

    def constraint(z: np.ndarray) -> float:
        p_out = _exact_outage_last(problem, np.exp(z))
        return (problem.epsilon - p_out) / problem.epsilon

    z0 = np.log(warm)
    bounds = [(math.log(_POWER_FLOOR), z0.max() + 20.0)] * L
    best: np.ndarray | None = None
    best_obj = math.inf
    result = minimize(
        objective,
        z0,
        method="SLSQP",
        bounds=bounds,
        constraints=[{"type": "ineq", "fun": constraint}],
        options={"maxiter": 300, "ftol": 1e-12},
    )
    candidates = [np.exp(result.x)] if np.all(np.isfinite(result.x)) else []
    candidates.append(warm)
    fixed = allocate_fixed(problem, use_exact=True)
    candidates.append(np.array(fixed.powers))
    for cand in candidates:
        try:
            feasible = _restore_feasibility(problem, np.maximum(cand, _POWER_FLOOR))
        except AllocationError:
            continue
        seq = exact_outage_sequence(problem.scheme, feasible, problem.rate, problem.params)
        obj = average_power(feasible, seq[:-1])
        if obj < best_obj:
            best = feasible
            best_obj = obj
    if best is None:
        raise AllocationError("no feasible point found for the exact allocation problem")
    seq = exact_outage_sequence(problem.scheme, best, problem.rate, problem.params)
    return AllocationResult(
        powers=tuple(float(p) for p in best),
        average_power=best_obj,
        achieved_outage=seq[L],
        method="numerical_exact",
    )
