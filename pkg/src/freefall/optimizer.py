"""Closed-form optimal free-fall contracts and the win-win instance family.

A free-fall contract offers one fixed contract for an initial fraction of
time, then the zero contract; the agent's historical-average incentives decay
and it descends the breakpoint ladder. The optimum is characterized by a
start rung i and an end rung j <= i, so an O(n^2) pair scan finds it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SettingError, ZeroEndBreakpoint
from .setting import (
    BreakpointLadder,
    ContractSetting,
    agent_utility,
    linear_breakpoints,
    rung_utility,
    scaled_breakpoints,
    validate_setting,
)
from .trajectory import Segment, Trajectory, trajectory_from_offers, unchecked_util, validate_trajectory


@dataclass(frozen=True)
class FreeFallPlan:
    """Optimal free-fall: start rung i, end rung j (ladder indices, 1-based)."""

    start_index: int
    end_index: int
    start_alpha: float
    end_alpha: float
    lam: float  # fraction of (unit) total time on the first contract
    utility: float
    trajectory: Trajectory

    @property
    def crossing_times(self) -> list[float]:
        return list(np.cumsum([s.duration for s in self.trajectory.segments]))[:-1]

    def to_dict(self) -> dict:
        return {
            "start_alpha": self.start_alpha,
            "end_alpha": self.end_alpha,
            "start_index": self.start_index,
            "end_index": self.end_index,
            "lambda": self.lam,
            "utility": self.utility,
            "trajectory": self.trajectory.to_dict(),
            "crossing_times": self.crossing_times,
        }


def freefall_utility(
    ladder: BreakpointLadder, i: int, j: int, reward_shift: float = 0.0
) -> float:
    """Time-averaged principal utility of the (i, j) free-fall pair.

    Total time is normalized to 1: a fraction lambda = b_j / b_i is spent at
    the start breakpoint incentivizing rung i's action, then the zero
    contract carries the average down to rung j, harvesting each crossed
    rung's full expected reward. A reward shift adds shift * (1 - alpha) per
    unit time on positive-alpha stretches (alpha = 0 during the fall).
    """
    L = len(ladder)
    if not 1 <= j <= i <= L:
        raise SettingError(f"need 1 <= j <= i <= {L}, got ({i}, {j})")
    b = ladder.breakpoints
    if i == j:
        u = ladder.expected_rewards[i - 1] - b[i - 1] * ladder.expected_payment_slopes[i - 1]
        if b[i - 1] > 0:
            u += reward_shift * (1.0 - b[i - 1])
        return float(u)
    if b[j - 1] <= 0:
        raise ZeroEndBreakpoint("a fall to the zero scalar never completes")
    lam = b[j - 1] / b[i - 1]
    u_start = ladder.expected_rewards[i - 1] - b[i - 1] * ladder.expected_payment_slopes[i - 1]
    u_start += reward_shift * (1.0 - b[i - 1])
    total = lam * u_start
    for k in range(j, i):
        dur = b[j - 1] * (1.0 / b[k - 1] - 1.0 / b[k])
        total += dur * (ladder.expected_rewards[k - 1] + reward_shift)
    return float(total)


def _pair_trajectory(
    setting: ContractSetting, ladder: BreakpointLadder, i: int, j: int
) -> Trajectory:
    """Realized unit-time trajectory of the (i, j) pair."""
    family = "linear" if ladder.direction == "linear" else "scaled"
    direction = None if family == "linear" else ladder.direction
    b = ladder.breakpoints
    if i == j:
        seg = Segment(float(b[i - 1]), 1.0, ladder.order[i - 1])
        return Trajectory(family=family, segments=(seg,), direction=direction)
    lam = b[j - 1] / b[i - 1]
    segs = [Segment(float(b[i - 1]), lam, ladder.order[i - 1])]
    for k in range(i - 1, j - 1, -1):
        dur = b[j - 1] * (1.0 / b[k - 1] - 1.0 / b[k])
        segs.append(Segment(0.0, dur, ladder.order[k - 1]))
    return Trajectory(family=family, segments=tuple(segs), direction=direction)


def optimal_freefall(
    setting: ContractSetting,
    family: str = "linear",
    direction=None,
) -> FreeFallPlan:
    """Best free-fall plan by enumerating all ladder pairs j <= i.

    Pairs ending at the zero scalar (j = 1 with i > 1) are skipped: the fall
    to average zero takes unbounded time and its limiting value (the null
    action's reward) never beats a finite plan on instances this package
    targets. Ties break toward the smallest i, then smallest j.
    """
    if family == "linear":
        ladder = linear_breakpoints(setting)
    elif family == "scaled":
        ladder = scaled_breakpoints(setting, direction)
    else:
        raise SettingError("optimal_freefall handles linear/scaled families")
    shift = setting.reward_shift
    best: tuple[float, int, int] | None = None
    for i in range(1, len(ladder) + 1):
        for j in range(1, i + 1):
            if j == 1 and i > 1:
                continue
            u = freefall_utility(ladder, i, j, shift)
            if best is None or u > best[0] + 1e-12:
                best = (u, i, j)
    u, i, j = best
    traj = _pair_trajectory(setting, ladder, i, j)
    return FreeFallPlan(
        start_index=i,
        end_index=j,
        start_alpha=float(ladder.breakpoints[i - 1]),
        end_alpha=float(ladder.breakpoints[j - 1]),
        lam=1.0 if i == j else float(ladder.breakpoints[j - 1] / ladder.breakpoints[i - 1]),
        utility=float(u),
        trajectory=traj,
    )


def brute_force_freefall_oracle(
    setting: ContractSetting, grid_start: int = 400, grid_lambda: int = 400
) -> tuple[float, dict]:
    """Grid-search oracle over start scalar and first-segment fraction.

    Independent check of the pair enumeration: for every (alpha, lambda) on
    the grid the induced unit-time free-fall is integrated directly through
    its breakpoint crossings (vectorized over the whole grid). The search
    includes the lambda = 1 column, i.e. the static scan.
    """
    if grid_start < 2 or grid_lambda < 2:
        raise SettingError("grid counts must be at least 2")
    ladder = linear_breakpoints(setting)
    b = np.asarray(ladder.breakpoints)
    R = np.asarray(ladder.expected_rewards)
    slopes = np.asarray(ladder.expected_payment_slopes)
    top = b[-1] if b[-1] > 0 else 1.0
    alphas = np.linspace(top / grid_start, top, grid_start)
    lams = np.linspace(1.0 / grid_lambda, 1.0, grid_lambda)
    A, L = np.meshgrid(alphas, lams, indexing="ij")

    # start region: rung whose interval contains alpha, boundaries taking the
    # principal-preferred side
    start_k = np.clip(np.searchsorted(b, alphas, side="right") - 1, 0, len(b) - 1)
    on_rung = np.isclose(alphas, b[start_k], rtol=0.0, atol=1e-15) & (start_k > 0)
    u_up = R[start_k] - alphas * slopes[start_k]
    u_down = R[np.maximum(start_k - 1, 0)] - alphas * slopes[np.maximum(start_k - 1, 0)]
    start_u = np.where(on_rung & (u_down > u_up), u_down, u_up)

    total = L * start_u[:, None]
    end_avg = A * L
    # fall contribution per rung k (action a_k earns R_k at zero pay): the
    # average passes rung interval [b_k, b_{k+1}) between times lam*alpha/b
    for k in range(len(b)):
        lo = b[k]
        hi = b[k + 1] if k + 1 < len(b) else np.inf
        enter = np.where(A > hi, end_avg / hi, L)  # time the average reaches hi
        exits = np.minimum(end_avg / lo, 1.0) if lo > 0 else np.ones_like(enter)
        dur = np.clip(exits - np.maximum(enter, L), 0.0, 1.0)
        dur = np.where(A > lo, dur, 0.0)  # regions at or below the start scalar only
        total += dur * R[k]
    if setting.reward_shift:
        # raw-scale correction: shift * (1 - alpha) per unit time
        total += setting.reward_shift * (1.0 - A * L)
    flat = int(np.argmax(total))
    ai, li = np.unravel_index(flat, total.shape)
    best = {
        "alpha": float(alphas[ai]),
        "lambda": float(lams[li]),
        "utility": float(total[ai, li]),
    }
    return best["utility"], best


def win_win_instance(n: int, v: float = 2.0, eps: float = 1e-6) -> ContractSetting:
    """Family where the optimal dynamic contract helps both players.

    Expected rewards grow geometrically (v^i) while each indifference rung is
    worth exactly one unit to the principal; the cost recursion is
    c_i = c_{i-1} + v^{i-1} - 1/2. Action 2's agent payoff is raised by
    ``eps`` so the lowest positive rung is the strict static optimum.
    Represented as a success/failure setting shifted so the null action's
    reward is zero, with the shift (= v) kept as metadata.
    """
    if n <= 2:
        raise SettingError("win-win family needs n > 2")
    if not eps >= 0:
        raise SettingError("eps must be non-negative")
    if n > 48:
        raise SettingError(
            "win-win family beyond n = 48 is not representable in float64 "
            "(costs ~v^n lose the half-unit increments)"
        )
    raw_R = [v**i for i in range(1, n + 1)]
    shift = raw_R[0]
    shifted = [x - shift for x in raw_R]
    costs = [0.0]
    for i in range(1, n):
        costs.append(costs[-1] + raw_R[i - 1] - 0.5)
    costs[1] -= eps
    top = shifted[-1]
    forecast = [[1.0 - x / top, x / top] for x in shifted]
    forecast[0] = [1.0, 0.0]
    return validate_setting(
        {
            "costs": costs,
            "rewards": [0.0, top],
            "forecast": forecast,
            "reward_shift": shift,
        }
    )


@dataclass(frozen=True)
class WinWinReport:
    n: int
    static_alpha: float
    static_principal: float
    static_agent: float
    dynamic_principal: float
    dynamic_agent: float
    welfare_ratio: float
    agent_ratio: float
    start_index: int
    end_action: int
    plan: FreeFallPlan

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "static_alpha": self.static_alpha,
            "static_principal": self.static_principal,
            "static_agent": self.static_agent,
            "dynamic_principal": self.dynamic_principal,
            "dynamic_agent": self.dynamic_agent,
            "welfare_ratio": self.welfare_ratio,
            "agent_ratio": self.agent_ratio,
            "start_index": self.start_index,
            "end_action": self.end_action,
            "plan": self.plan.to_dict(),
        }


def win_win_report(n: int, v: float = 2.0, eps: float = 1e-6) -> WinWinReport:
    """Static-vs-dynamic comparison on the win-win family.

    The agent's long-run payoff under a plan equals its one-shot payoff under
    the final average contract (no-regret limit). Utilities are reported in
    the raw scale (shift added back). Asserts the structural facts: the plan
    starts at the top rung, ends at or above ceil(log2(n)/2), and beats the
    limiting value of a never-ending fall.
    """
    if n <= 4:
        raise SettingError("win-win report needs n > 4")
    setting = win_win_instance(n, v, eps)
    shift = setting.reward_shift
    ladder = linear_breakpoints(setting)
    plan = optimal_freefall(setting)

    from .setting import optimal_static

    static = optimal_static(setting, "linear")
    static_agent = agent_utility(setting, setting.linear_payments(static.alpha), static.action)
    static_agent += static.alpha * shift

    end_action = plan.trajectory.segments[-1].action
    end_alpha = plan.end_alpha
    dyn_agent = max(
        agent_utility(setting, setting.linear_payments(end_alpha), a) + end_alpha * shift
        for a in setting.actions
    )
    if plan.start_index != len(ladder):
        raise AssertionError(f"optimal win-win fall must start at the top rung, got {plan.start_index}")
    floor = math.ceil(0.5 * math.log2(n))
    if end_action < floor:
        raise AssertionError(f"fall ended at action {end_action} < {floor}")
    if plan.utility <= shift:
        raise AssertionError("finite plan should dominate the never-ending fall limit")

    welfare_ratio = (plan.utility + dyn_agent) / (static.utility + static_agent)
    return WinWinReport(
        n=n,
        static_alpha=float(static.alpha),
        static_principal=float(static.utility),
        static_agent=float(static_agent),
        dynamic_principal=float(plan.utility),
        dynamic_agent=float(dyn_agent),
        welfare_ratio=float(welfare_ratio),
        agent_ratio=float(dyn_agent / static_agent) if static_agent > 0 else float("inf"),
        start_index=plan.start_index,
        end_action=end_action,
        plan=plan,
    )
