"""Continuous-time trajectories of play and their rewriting rules.

A trajectory is a finite sequence of (contract, duration, action) segments.
It is valid against a mean-based learner when every segment's action is a
best response to the duration-weighted average contract at both the segment
start and end (the first segment's average is its own contract).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidTrajectory, OutOfRange, SettingError
from .setting import (
    DEFAULT_BR_TOL,
    BreakpointLadder,
    ContractSetting,
    best_response_set,
    linear_breakpoints,
    principal_utility,
    scaled_breakpoints,
)


@dataclass(frozen=True)
class Segment:
    """One stretch of constant contract and constant agent action.

    ``contract`` is a scalar for the linear / scaled families and a payment
    tuple for the general family.
    """

    contract: float | tuple[float, ...]
    duration: float
    action: int

    def __post_init__(self):
        if not self.duration > 0:
            raise SettingError(f"segment duration must be positive, got {self.duration}")


@dataclass(frozen=True)
class Trajectory:
    family: str  # "linear" | "scaled" | "general"
    segments: tuple[Segment, ...]
    direction: tuple[float, ...] | None = None  # base profile for "scaled"

    def __post_init__(self):
        if self.family not in ("linear", "scaled", "general"):
            raise SettingError(f"unknown family {self.family!r}")
        if self.family == "scaled" and self.direction is None:
            raise SettingError("scaled trajectory needs a direction profile")
        for seg in self.segments:
            scalar = isinstance(seg.contract, (int, float))
            if self.family == "general" and scalar:
                raise SettingError("general segments carry payment profiles")
            if self.family != "general" and not scalar:
                raise SettingError(f"{self.family} segments carry scalars")

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def durations(self) -> np.ndarray:
        return np.array([s.duration for s in self.segments])

    @property
    def total_duration(self) -> float:
        return float(self.durations.sum())

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.durations)

    def payments_at(self, setting: ContractSetting, k: int) -> np.ndarray:
        """Payment profile of segment ``k`` (1-based)."""
        seg = self.segments[k - 1]
        if self.family == "general":
            return np.asarray(seg.contract, dtype=float)
        base = (
            np.asarray(setting.rewards, dtype=float)
            if self.family == "linear"
            else np.asarray(self.direction, dtype=float)
        )
        return seg.contract * base

    def scaled_by(self, factor: float) -> "Trajectory":
        """Uniformly rescale all durations by a positive factor."""
        return Trajectory(
            family=self.family,
            direction=self.direction,
            segments=tuple(
                Segment(s.contract, s.duration * factor, s.action) for s in self.segments
            ),
        )

    def to_dict(self) -> dict:
        fam = {"scaled": list(self.direction)} if self.family == "scaled" else self.family
        segs = []
        for s in self.segments:
            if self.family == "general":
                segs.append(
                    {"payments": list(s.contract), "duration": s.duration, "action": s.action}
                )
            else:
                segs.append({"alpha": s.contract, "duration": s.duration, "action": s.action})
        return {"family": fam, "segments": segs}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @staticmethod
    def from_dict(d: dict) -> "Trajectory":
        fam = d["family"]
        direction = None
        if isinstance(fam, dict):
            direction = tuple(fam["scaled"])
            fam = "scaled"
        segs = []
        for s in d["segments"]:
            contract = tuple(s["payments"]) if fam == "general" else float(s["alpha"])
            segs.append(Segment(contract, float(s["duration"]), int(s["action"])))
        return Trajectory(family=fam, segments=tuple(segs), direction=direction)

    @staticmethod
    def from_json(text: str) -> "Trajectory":
        return Trajectory.from_dict(json.loads(text))


def linear_trajectory(segments: Sequence[tuple[float, float, int]]) -> Trajectory:
    """Convenience constructor from (alpha, duration, action) tuples."""
    return Trajectory(
        family="linear",
        segments=tuple(Segment(float(a), float(d), int(act)) for a, d, act in segments),
    )


def average_contract(setting: ContractSetting, traj: Trajectory, k: int):
    """Duration-weighted mean of the first ``k`` contracts.

    Returns a scalar for linear/scaled trajectories, a payment vector for
    general ones.
    """
    if not 1 <= k <= len(traj):
        raise OutOfRange(f"segment index {k} outside 1..{len(traj)}")
    durs = traj.durations[:k]
    total = durs.sum()
    if traj.family == "general":
        stack = np.array([traj.segments[i].contract for i in range(k)], dtype=float)
        return (durs @ stack) / total
    scalars = np.array([traj.segments[i].contract for i in range(k)], dtype=float)
    return float(scalars @ durs / total)


def _average_payments(setting: ContractSetting, traj: Trajectory, k: int) -> np.ndarray:
    avg = average_contract(setting, traj, k)
    if traj.family == "general":
        return avg
    base = (
        np.asarray(setting.rewards, dtype=float)
        if traj.family == "linear"
        else np.asarray(traj.direction, dtype=float)
    )
    return avg * base


@dataclass(frozen=True)
class Violation:
    segment: int  # 1-based
    boundary: str  # "start" | "end"
    action: int
    message: str

    def __str__(self) -> str:
        return f"segment {self.segment} ({self.boundary}): {self.message}"


def validate_trajectory(
    setting: ContractSetting, traj: Trajectory, tol: float = DEFAULT_BR_TOL
) -> list[Violation]:
    """Best-response membership check at every segment boundary.

    Returns the list of violations; an empty list means the trajectory is
    valid. Violations are data, not errors.
    """
    out: list[Violation] = []
    for k in range(1, len(traj) + 1):
        a = traj.segments[k - 1].action
        if not 1 <= a <= setting.n:
            out.append(Violation(k, "start", a, f"action {a} out of range"))
            continue
        starts = (
            best_response_set(setting, traj.payments_at(setting, k), tol)
            if k == 1
            else best_response_set(setting, _average_payments(setting, traj, k - 1), tol)
        )
        if a not in starts:
            out.append(
                Violation(k, "start", a, f"action {a} not a best response (BR = {sorted(starts)})")
            )
        ends = best_response_set(setting, _average_payments(setting, traj, k), tol)
        if a not in ends:
            out.append(
                Violation(k, "end", a, f"action {a} not a best response (BR = {sorted(ends)})")
            )
    return out


def util(setting: ContractSetting, traj: Trajectory, tol: float = DEFAULT_BR_TOL) -> float:
    """Time-averaged expected principal utility of a valid trajectory."""
    violations = validate_trajectory(setting, traj, tol)
    if violations:
        raise InvalidTrajectory(violations)
    return unchecked_util(setting, traj)


def unchecked_util(setting: ContractSetting, traj: Trajectory) -> float:
    total = 0.0
    for k in range(1, len(traj) + 1):
        seg = traj.segments[k - 1]
        total += seg.duration * principal_utility(setting, traj.payments_at(setting, k), seg.action)
    return total / traj.total_duration


def prefix_util(setting: ContractSetting, traj: Trajectory, t: float) -> float:
    """Cumulative (not averaged) principal utility up to time ``t``.

    Linear interpolation inside the active segment.
    """
    total_time = traj.total_duration
    if not -1e-12 <= t <= total_time * (1 + 1e-12):
        raise OutOfRange(f"t = {t} outside [0, {total_time}]")
    t = min(max(t, 0.0), total_time)
    acc = 0.0
    elapsed = 0.0
    for k in range(1, len(traj) + 1):
        seg = traj.segments[k - 1]
        rate = principal_utility(setting, traj.payments_at(setting, k), seg.action)
        if t >= elapsed + seg.duration:
            acc += seg.duration * rate
            elapsed += seg.duration
        else:
            acc += (t - elapsed) * rate
            return acc
    return acc


def merge_same_action(traj: Trajectory) -> Trajectory:
    """Fuse adjacent segments sharing an action into their weighted average.

    Utility is preserved exactly: the same action runs over the same span and
    the average payout is unchanged.
    """
    merged: list[Segment] = []
    for seg in traj.segments:
        if merged and merged[-1].action == seg.action:
            prev = merged[-1]
            d = prev.duration + seg.duration
            if traj.family == "general":
                c = tuple(
                    (np.asarray(prev.contract) * prev.duration + np.asarray(seg.contract) * seg.duration)
                    / d
                )
            else:
                c = (prev.contract * prev.duration + seg.contract * seg.duration) / d
            merged[-1] = Segment(c, d, seg.action)
        else:
            merged.append(seg)
    return Trajectory(family=traj.family, segments=tuple(merged), direction=traj.direction)


def _ladder_for(setting: ContractSetting, traj: Trajectory) -> BreakpointLadder:
    if traj.family == "linear":
        return linear_breakpoints(setting)
    if traj.family == "scaled":
        return scaled_breakpoints(setting, traj.direction)
    raise SettingError("ladder rewrites apply to linear/scaled trajectories only")


def boundary_tiebreak_rewrite(
    setting: ContractSetting, traj: Trajectory, tol: float = DEFAULT_BR_TOL
) -> Trajectory:
    """Re-point boundary-riding segments at the principal-preferred action.

    A segment rides a boundary when its start and end average scalars both
    sit within ``tol`` of the same positive breakpoint; its action may then
    be either of the two adjacent ladder actions. The rewrite picks the one
    with higher per-unit principal utility at the segment's own contract
    (for linear contracts with scalar at most 1 this is always the
    higher-reward action), so utility never decreases.
    """
    ladder = _ladder_for(setting, traj)
    bps = np.asarray(ladder.breakpoints)
    out: list[Segment] = []
    for k in range(1, len(traj) + 1):
        seg = traj.segments[k - 1]
        start = seg.contract if k == 1 else average_contract(setting, traj, k - 1)
        end = average_contract(setting, traj, k)
        hits = np.nonzero((np.abs(bps - start) <= tol) & (np.abs(bps - end) <= tol))[0]
        new = seg
        if hits.size and bps[hits[0]] > 0:
            idx = int(hits[0])
            lo, hi = ladder.order[idx - 1], ladder.order[idx]
            if seg.action in (lo, hi):
                pay = traj.payments_at(setting, k)
                u_lo = principal_utility(setting, pay, lo)
                u_hi = principal_utility(setting, pay, hi)
                if traj.family == "linear":
                    best = hi if u_hi >= u_lo else lo
                else:
                    # scaled families: switch sides only on strict improvement
                    other, u_other = (hi, u_hi) if seg.action == lo else (lo, u_lo)
                    u_cur = u_lo if seg.action == lo else u_hi
                    best = other if u_other > u_cur else seg.action
                if best != seg.action:
                    new = Segment(seg.contract, seg.duration, best)
        out.append(new)
    return Trajectory(family=traj.family, segments=tuple(out), direction=traj.direction)


def trajectory_from_offers(
    setting: ContractSetting,
    offers: Sequence[tuple[float, float]],
    family: str = "linear",
    direction: Sequence[float] | None = None,
    boundary_tiebreak: str = "up",
) -> Trajectory:
    """Build the valid trajectory induced by a piecewise-constant offer path.

    ``offers`` is a list of (scalar, duration) pieces. Each piece is split at
    the times where the running average scalar crosses a ladder breakpoint;
    interior stretches take the unique region action, and stretches riding a
    breakpoint exactly take the higher action ("up") or the principal's
    preferred side ("principal").
    """
    if family == "linear":
        ladder = linear_breakpoints(setting)
        base = np.asarray(setting.rewards, dtype=float)
    else:
        ladder = scaled_breakpoints(setting, direction)
        base = np.asarray(direction, dtype=float)
    bps = np.asarray(ladder.breakpoints)

    def region_action(alpha: float) -> int:
        return ladder.order[ladder.region_of(alpha) - 1]

    def boundary_action(idx: int, offered: float) -> int:
        lo, hi = ladder.order[idx - 1], ladder.order[idx]
        if boundary_tiebreak == "up":
            return hi
        pay = offered * base
        return max((lo, hi), key=lambda a: principal_utility(setting, pay, a))

    segments: list[Segment] = []
    t = 0.0
    mass = 0.0  # cumulative scalar-time
    for offered, dur in offers:
        if dur <= 0:
            continue
        if offered < 0:
            raise SettingError("offered scalars must be non-negative")
        t_end = t + dur
        if t == 0.0:
            avg_start = offered
        else:
            avg_start = mass / t
        avg_end = (mass + offered * dur) / t_end
        # crossing times of rungs strictly between the endpoint averages
        lo_a, hi_a = sorted((avg_start, avg_end))
        cross = []
        for b in bps:
            if lo_a < b < hi_a and b != offered:
                tb = (mass - t * offered) / (b - offered)
                if t < tb < t_end:
                    cross.append(tb)
        cuts = [t] + sorted(cross) + [t_end]
        for left, right in zip(cuts[:-1], cuts[1:]):
            if right - left <= 0:
                continue
            midt = 0.5 * (left + right)
            mid_avg = (mass + (midt - t) * offered) / midt if midt > 0 else offered
            hit = np.nonzero(np.isclose(bps, mid_avg, rtol=0, atol=1e-12))[0]
            if hit.size and bps[hit[0]] > 0 and abs(avg_end - avg_start) < 1e-15:
                action = boundary_action(int(hit[0]), offered)
            else:
                action = region_action(mid_avg)
            segments.append(Segment(float(offered), right - left, action))
        mass += offered * dur
        t = t_end
    return merge_same_action(
        Trajectory(
            family=family,
            segments=tuple(segments),
            direction=None if family == "linear" else tuple(direction),
        )
    )
