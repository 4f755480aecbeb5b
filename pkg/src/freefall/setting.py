"""Contract settings: validation, utilities, best responses, breakpoint ladders.

A setting is the tuple (costs, forecast, rewards): ``n`` actions sorted by
strictly increasing cost (the null action costs 0 and deterministically yields
the null outcome), ``m`` outcomes with non-decreasing rewards (the null
outcome pays 0), and a row-stochastic forecast matrix. Actions and outcomes
are indexed 1-based throughout the public API, matching the ladder convention
that action 1 is the null action.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadNullAction,
    DegenerateDirection,
    DominatedAction,
    NonStochasticRow,
    SettingError,
)

ROW_SUM_TOL = 1e-12
DEFAULT_BR_TOL = 1e-9


@dataclass(frozen=True)
class ContractSetting:
    """An immutable principal-agent instance.

    ``reward_shift`` records a constant added to every expected reward in the
    original (unnormalized) instance; it never enters incentive computations
    (best responses, breakpoints) and is only added back when utilities are
    reported or ranked.  It is 0 for all ordinary instances.
    """

    costs: tuple[float, ...]
    rewards: tuple[float, ...]
    forecast: tuple[tuple[float, ...], ...]
    p_max: float | None = None
    reward_shift: float = 0.0
    expected_rewards: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        F = np.asarray(self.forecast, dtype=float)
        r = np.asarray(self.rewards, dtype=float)
        object.__setattr__(self, "expected_rewards", tuple(F @ r))

    # -- basic accessors (1-based action indices) --

    @property
    def n(self) -> int:
        return len(self.costs)

    @property
    def m(self) -> int:
        return len(self.rewards)

    @property
    def actions(self) -> range:
        return range(1, self.n + 1)

    def cost(self, a: int) -> float:
        return self.costs[a - 1]

    def row(self, a: int) -> np.ndarray:
        return np.asarray(self.forecast[a - 1], dtype=float)

    def expected_reward(self, a: int) -> float:
        return self.expected_rewards[a - 1]

    def expected_payment(self, payments: Sequence[float], a: int) -> float:
        return float(self.row(a) @ np.asarray(payments, dtype=float))

    def linear_payments(self, alpha: float) -> np.ndarray:
        """Payment profile of the linear contract with scalar ``alpha``."""
        return alpha * np.asarray(self.rewards, dtype=float)

    def to_dict(self) -> dict:
        d = {
            "costs": list(self.costs),
            "rewards": list(self.rewards),
            "forecast": [list(row) for row in self.forecast],
        }
        if self.p_max is not None:
            d["p_max"] = self.p_max
        if self.reward_shift:
            d["reward_shift"] = self.reward_shift
        return d

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def validate_setting(raw: dict | ContractSetting) -> ContractSetting:
    """Validate a candidate setting and cache its expected rewards.

    Raises NonStochasticRow, DominatedAction, BadNullAction, or SettingError.
    """
    if isinstance(raw, ContractSetting):
        raw = raw.to_dict()
    try:
        costs = np.asarray(raw["costs"], dtype=float)
        rewards = np.asarray(raw["rewards"], dtype=float)
        forecast = np.asarray(raw["forecast"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise SettingError(f"malformed setting: {exc}") from exc
    p_max = raw.get("p_max")
    shift = float(raw.get("reward_shift", 0.0))

    n, m = costs.size, rewards.size
    if n < 2 or m < 2:
        raise SettingError(f"need n > 1 actions and m > 1 outcomes, got {n}x{m}")
    if forecast.shape != (n, m):
        raise SettingError(f"forecast shape {forecast.shape} != ({n}, {m})")
    if not np.all(np.isfinite(costs)) or not np.all(np.isfinite(rewards)):
        raise SettingError("non-finite costs or rewards")

    if costs[0] != 0.0:
        raise SettingError("c_1 must be 0")
    if np.any(np.diff(costs) <= 0):
        raise SettingError("costs must be strictly increasing")
    if rewards[0] != 0.0 or np.any(rewards < 0) or np.any(np.diff(rewards) < 0):
        raise SettingError("rewards must be non-negative, non-decreasing, r_1 = 0")

    if np.any(forecast < -0.0) or np.any(forecast > 1.0 + ROW_SUM_TOL):
        raise NonStochasticRow("forecast entries must lie in [0, 1]")
    sums = forecast.sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
    if bad.size:
        raise NonStochasticRow(f"row {bad[0] + 1} sums to {sums[bad[0]]!r}")

    if forecast[0, 0] != 1.0 or np.any(forecast[0, 1:] != 0.0):
        raise BadNullAction("row 1 must put probability 1 on outcome 1")

    R = forecast @ rewards
    if np.any(np.diff(R) <= 0):
        a = int(np.nonzero(np.diff(R) <= 0)[0][0]) + 2
        raise DominatedAction(f"action {a} is dominated: expected reward not above action {a - 1}")

    if p_max is not None and not p_max > 0:
        raise SettingError("p_max must be positive when set")

    return ContractSetting(
        costs=tuple(costs),
        rewards=tuple(rewards),
        forecast=tuple(tuple(row) for row in forecast),
        p_max=None if p_max is None else float(p_max),
        reward_shift=shift,
    )


def load_setting(source) -> ContractSetting:
    """Load a setting from a dict, a JSON string, or a file path."""
    if isinstance(source, ContractSetting):
        return source
    if isinstance(source, dict):
        return validate_setting(source)
    text = source
    if not str(source).lstrip().startswith("{"):
        with open(source) as fh:
            text = fh.read()
    return validate_setting(json.loads(text))


# -- utilities and best responses --


def agent_utility(setting: ContractSetting, payments: Sequence[float], a: int) -> float:
    """Expected payment minus cost for action ``a`` under ``payments``."""
    return setting.expected_payment(payments, a) - setting.cost(a)


def principal_utility(setting: ContractSetting, payments: Sequence[float], a: int) -> float:
    """Expected reward minus expected payment for action ``a``."""
    return setting.expected_reward(a) - setting.expected_payment(payments, a)


def best_response_set(
    setting: ContractSetting, payments: Sequence[float], tol: float = DEFAULT_BR_TOL
) -> set[int]:
    """All actions whose agent utility is within ``tol`` of the maximum."""
    p = np.asarray(payments, dtype=float)
    utils = np.asarray(setting.forecast) @ p - np.asarray(setting.costs)
    top = utils.max()
    return {int(i) + 1 for i in np.nonzero(utils >= top - tol)[0]}


# -- breakpoint ladders --


@dataclass(frozen=True)
class BreakpointLadder:
    """Indifference scalars of a one-parameter contract family.

    ``order[k]`` is the action incentivized on the scalar interval starting at
    ``breakpoints[k]``; at a positive breakpoint the agent is indifferent
    between ``order[k-1]`` and ``order[k]``.  ``direction`` is "linear" or the
    base payment profile of a scaled family.  Actions never uniquely
    incentivized along the direction are dropped.
    """

    direction: str | tuple[float, ...]
    order: tuple[int, ...]
    breakpoints: tuple[float, ...]
    expected_rewards: tuple[float, ...]
    expected_payment_slopes: tuple[float, ...]

    def __post_init__(self):
        if self.breakpoints[0] != 0.0:
            raise SettingError("first breakpoint must be 0")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise SettingError("breakpoints must be strictly increasing")

    def __len__(self) -> int:
        return len(self.order)

    @property
    def top(self) -> float:
        return self.breakpoints[-1]

    def rung_of_action(self, a: int) -> int:
        """1-based rung index of action ``a`` in the ladder order."""
        return self.order.index(a) + 1

    def region_of(self, alpha: float, tol: float = 0.0) -> int:
        """1-based rung whose interval contains ``alpha`` (boundary goes up)."""
        k = int(np.searchsorted(np.asarray(self.breakpoints), alpha + tol, side="right"))
        return max(1, k)


def _envelope(slopes: np.ndarray, intercepts: np.ndarray) -> tuple[list[int], list[float]]:
    """Upper envelope of lines ``y = slope*x + intercept`` restricted to x >= 0.

    Returns 0-based line indices in envelope order and each piece's starting
    x (first entry 0). The null action guarantees the envelope value at 0 is
    attained by a kept line.
    """
    idx = sorted(range(len(slopes)), key=lambda i: (slopes[i], intercepts[i]))
    kept: list[int] = []
    xs: list[float] = []
    for i in idx:
        if kept and slopes[i] == slopes[kept[-1]]:
            if intercepts[i] == intercepts[kept[-1]]:
                raise DegenerateDirection(
                    f"actions {kept[-1] + 1} and {i + 1} induce the same agent payoff line"
                )
            # equal slope: the larger intercept dominates everywhere;
            # sort order guarantees line i is the dominant one
            kept.pop()
            xs.pop()
        while kept:
            j = kept[-1]
            x = (intercepts[j] - intercepts[i]) / (slopes[i] - slopes[j])
            if x <= xs[-1]:
                kept.pop()
                xs.pop()
                continue
            xs.append(x)
            break
        if not kept:
            xs.append(-np.inf)
        kept.append(i)
    # restrict to x >= 0: drop pieces that end before 0
    while len(xs) > 1 and xs[1] <= 0.0:
        kept.pop(0)
        xs.pop(0)
    xs[0] = 0.0
    return kept, xs


def linear_breakpoints(setting: ContractSetting) -> BreakpointLadder:
    """Indifference ladder of the linear family via successive cost/reward quotients.

    Scans actions in cost order keeping the lower convex hull of (R_a, c_a);
    hull actions are exactly those uniquely incentivized by some scalar.
    """
    R = np.asarray(setting.expected_rewards)
    c = np.asarray(setting.costs)
    kept = [0]
    bps = [0.0]
    for i in range(1, setting.n):
        while kept:
            j = kept[-1]
            alpha = (c[i] - c[j]) / (R[i] - R[j])
            if alpha <= bps[-1]:
                kept.pop()
                bps.pop()
                continue
            bps.append(alpha)
            break
        kept.append(i)
    order = tuple(i + 1 for i in kept)
    rewards = tuple(float(R[i]) for i in kept)
    return BreakpointLadder(
        direction="linear",
        order=order,
        breakpoints=tuple(bps),
        expected_rewards=rewards,
        expected_payment_slopes=rewards,
    )


def scaled_breakpoints(setting: ContractSetting, payments: Sequence[float]) -> BreakpointLadder:
    """Indifference ladder of the family ``alpha * payments`` over alpha >= 0.

    Computed as the upper envelope of the agent payoff lines
    ``alpha * (F_a . p) - c_a``.
    """
    p = np.asarray(payments, dtype=float)
    if np.all(p == 0):
        raise SettingError("scaling direction must not be the zero contract")
    if np.any(p < 0):
        raise SettingError("scaling direction must be non-negative")
    slopes = np.asarray(setting.forecast) @ p
    intercepts = -np.asarray(setting.costs)
    kept, xs = _envelope(slopes, intercepts)
    return BreakpointLadder(
        direction=tuple(p),
        order=tuple(i + 1 for i in kept),
        breakpoints=tuple(xs),
        expected_rewards=tuple(setting.expected_rewards[i] for i in kept),
        expected_payment_slopes=tuple(float(slopes[i]) for i in kept),
    )


def rung_utility(setting: ContractSetting, ladder: BreakpointLadder, k: int) -> float:
    """Per-unit principal utility of statically offering rung ``k``'s breakpoint.

    The agent is taken to play the rung action (the higher of the two tied
    actions at a positive breakpoint).  A nonzero reward shift contributes
    ``shift * (1 - alpha)`` on positive rungs only: the raw baseline collected
    at the zero contract is treated as sunk, so the static benchmark compares
    contracts that actively incentivize work.
    """
    b = ladder.breakpoints[k - 1]
    u = ladder.expected_rewards[k - 1] - b * ladder.expected_payment_slopes[k - 1]
    if b > 0:
        u += setting.reward_shift * (1.0 - b)
    return u


@dataclass(frozen=True)
class StaticOptimum:
    payments: tuple[float, ...]
    action: int
    utility: float
    alpha: float | None = None  # scalar for ladder families

    def to_dict(self) -> dict:
        d = {"payments": list(self.payments), "action": self.action, "utility": self.utility}
        if self.alpha is not None:
            d["alpha"] = self.alpha
        return d


def optimal_static(
    setting: ContractSetting,
    family: str = "linear",
    direction: Sequence[float] | None = None,
) -> StaticOptimum:
    """Best static contract within a family ("linear", "scaled", "general").

    Ladder families scan rung utilities, breaking ties toward the lower
    scalar.  The general family solves, per action, the minimum-payment LP
    under incentive-compatibility and returns the best action.
    """
    if family in ("linear", "scaled"):
        if family == "linear":
            ladder = linear_breakpoints(setting)
            base = np.asarray(setting.rewards, dtype=float)
        else:
            if direction is None:
                raise SettingError("scaled family requires a direction")
            ladder = scaled_breakpoints(setting, direction)
            base = np.asarray(direction, dtype=float)
        utils = [rung_utility(setting, ladder, k) for k in range(1, len(ladder) + 1)]
        k = int(np.argmax(utils)) + 1  # argmax takes the first (lowest-alpha) maximizer
        b = ladder.breakpoints[k - 1]
        return StaticOptimum(
            payments=tuple(b * base),
            action=ladder.order[k - 1],
            utility=float(utils[k - 1]),
            alpha=float(b),
        )
    if family == "general":
        from .simplex import LinearProgram, solve

        best: StaticOptimum | None = None
        F = np.asarray(setting.forecast)
        for a in setting.actions:
            fa = F[a - 1]
            rows, rels, rhs = [], [], []
            for ap in setting.actions:
                if ap == a:
                    continue
                # (F_a - F_a') . p >= c_a - c_a'
                rows.append(fa - F[ap - 1])
                rels.append(">=")
                rhs.append(setting.cost(a) - setting.cost(ap))
            if setting.p_max is not None:
                for o in range(setting.m):
                    e = np.zeros(setting.m)
                    e[o] = 1.0
                    rows.append(e)
                    rels.append("<=")
                    rhs.append(setting.p_max)
            lp = LinearProgram(
                objective=tuple(-fa),  # maximize -F_a.p == minimize expected payment
                rows=tuple(tuple(r) for r in rows),
                relations=tuple(rels),
                rhs=tuple(rhs),
            )
            sol = solve(lp)
            if sol.status != "optimal":
                continue
            util = setting.expected_reward(a) + sol.value
            if best is None or util > best.utility + 1e-12:
                best = StaticOptimum(payments=tuple(sol.x), action=a, utility=float(util))
        if best is None:
            raise SettingError("no action is incentivizable under the payment cap")
        return best
    raise SettingError(f"unknown family {family!r}")
