"""LP-based optimal dynamic contracts for a fixed agent action sequence.

The validity constraints are bilinear in (contract, duration); substituting
q^k = p^k * tau^k (cumulative payment profile per segment) linearizes both
the constraints and the objective exactly, since contracts appear only in
products with their segment durations. Free-fall variants pin q^k = 0 for
k > 1, and the optimal free-fall is found by enumerating decreasing-cost
fall sequences.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import DegenerateSolution, SettingError, TooManyActions
from .setting import ContractSetting
from .simplex import LinearProgram, LPSolution, solve
from .trajectory import Segment, Trajectory, validate_trajectory, unchecked_util

DROP_THRESHOLD = 1e-9
MAX_ENUM_ACTIONS = 16


@dataclass(frozen=True)
class SequenceLP:
    """Assembled LP for one action sequence.

    Variable layout: durations tau^1..tau^K first, then one m-block of
    cumulative payments q^k per payment-carrying segment (all segments for
    the general family, only the first under the free-fall restriction).
    """

    setting: ContractSetting
    sequence: tuple[int, ...]
    freefall: bool
    lp: LinearProgram

    @property
    def K(self) -> int:
        return len(self.sequence)

    def q_segments(self) -> tuple[int, ...]:
        return (1,) if self.freefall else tuple(range(1, self.K + 1))

    def tau_index(self, k: int) -> int:
        return k - 1

    def q_index(self, k: int, o: int) -> int:
        """Column of q^k_o (k 1-based among q-carrying segments, o 0-based)."""
        block = self.q_segments().index(k)
        return self.K + block * self.setting.m + o


def build_sequence_lp(
    setting: ContractSetting, sequence: Sequence[int], freefall: bool = False
) -> SequenceLP:
    """LP whose optimum is the best dynamic contract visiting ``sequence``.

    Maximizes sum_k [tau^k R_{a^k} - F_{a^k} . q^k] subject to the time
    normalization sum tau = 1 and, at every segment start (k >= 2) and end
    (k >= 1), the accumulated utility of a^k weakly dominating every
    alternative action.
    """
    seq = tuple(int(a) for a in sequence)
    if not seq:
        raise SettingError("sequence must be non-empty")
    for a in seq:
        if not 1 <= a <= setting.n:
            raise SettingError(f"action {a} out of range")
    K = len(seq)
    m, n = setting.m, setting.n
    F = np.asarray(setting.forecast)
    costs = np.asarray(setting.costs)
    q_segs = (1,) if freefall else tuple(range(1, K + 1))
    nvar = K + len(q_segs) * m

    def q_cols(k: int) -> slice | None:
        if k not in q_segs:
            return None
        block = q_segs.index(k)
        return slice(K + block * m, K + (block + 1) * m)

    obj = np.zeros(nvar)
    for k in range(1, K + 1):
        a = seq[k - 1]
        obj[k - 1] += setting.expected_reward(a)
        cols = q_cols(k)
        if cols is not None:
            obj[cols] -= F[a - 1]

    rows, rels, rhs = [], [], []
    norm = np.zeros(nvar)
    norm[:K] = 1.0
    rows.append(norm)
    rels.append("=")
    rhs.append(1.0)

    def br_row(k_hist: int, a: int, alt: int) -> np.ndarray:
        """Accumulated-utility dominance of ``a`` over ``alt`` after k_hist segments."""
        row = np.zeros(nvar)
        for kp in range(1, k_hist + 1):
            row[kp - 1] += costs[alt - 1] - costs[a - 1]
            cols = q_cols(kp)
            if cols is not None:
                row[cols] += F[a - 1] - F[alt - 1]
        return row

    for k in range(1, K + 1):
        a = seq[k - 1]
        for boundary in ("start", "end"):
            k_hist = k - 1 if boundary == "start" else k
            if k_hist == 0:
                continue
            for alt in range(1, n + 1):
                if alt == a:
                    continue
                rows.append(br_row(k_hist, a, alt))
                rels.append(">=")
                rhs.append(0.0)

    if setting.p_max is not None:
        # q^k_o <= p_max * tau^k
        for k in q_segs:
            for o in range(m):
                row = np.zeros(nvar)
                row[K + q_segs.index(k) * m + o] = 1.0
                row[k - 1] = -setting.p_max
                rows.append(row)
                rels.append("<=")
                rhs.append(0.0)

    lp = LinearProgram(
        objective=tuple(obj),
        rows=tuple(tuple(r) for r in rows),
        relations=tuple(rels),
        rhs=tuple(rhs),
    )
    return SequenceLP(setting=setting, sequence=seq, freefall=freefall, lp=lp)


def solve_sequence(seq_lp: SequenceLP) -> LPSolution:
    return solve(seq_lp.lp)


def recover_trajectory(seq_lp: SequenceLP, solution: LPSolution) -> Trajectory:
    """Undo the q = p * tau substitution and drop zero-duration segments."""
    if solution.status != "optimal":
        raise DegenerateSolution(f"no optimal solution to recover ({solution.status})")
    x = np.asarray(solution.x)
    m = seq_lp.setting.m
    segs: list[Segment] = []
    for k in range(1, seq_lp.K + 1):
        tau = x[seq_lp.tau_index(k)]
        if tau <= DROP_THRESHOLD:
            continue
        if k in seq_lp.q_segments():
            q = np.array([x[seq_lp.q_index(k, o)] for o in range(m)])
            p = np.clip(q / tau, 0.0, None)
        else:
            p = np.zeros(m)
        segs.append(Segment(tuple(p), float(tau), seq_lp.sequence[k - 1]))
    if not segs:
        raise DegenerateSolution("all segments below the duration threshold")
    return Trajectory(family="general", segments=tuple(segs))


def fall_sequences(n: int) -> list[tuple[int, ...]]:
    """All free-fall action sequences: any first action, then a strictly
    decreasing cost (= index) subset below it."""
    out = []
    for first in range(1, n + 1):
        below = list(range(first - 1, 0, -1))
        for r in range(len(below) + 1):
            for tail in combinations(below, r):
                out.append((first, *tail))
    return out


def optimal_freefall_by_lp(
    setting: ContractSetting,
) -> tuple[float, tuple[int, ...], Trajectory]:
    """Best free-fall value over all decreasing-cost sequences, by LP.

    After the first segment the zero contract makes every action's score
    decay at its cost rate, so a fall visits actions in strictly decreasing
    cost order; enumerating those sequences is exhaustive.
    """
    if setting.n > MAX_ENUM_ACTIONS:
        raise TooManyActions(f"sequence enumeration guarded at n <= {MAX_ENUM_ACTIONS}")
    best_val = -np.inf
    best_seq: tuple[int, ...] | None = None
    best = None
    for seq in fall_sequences(setting.n):
        seq_lp = build_sequence_lp(setting, seq, freefall=True)
        sol = solve_sequence(seq_lp)
        if sol.status == "optimal" and sol.value > best_val + 1e-12:
            best_val = sol.value
            best_seq = seq
            best = (seq_lp, sol)
    traj = recover_trajectory(*best)
    return float(best_val), best_seq, traj


def check_recovered(setting: ContractSetting, traj: Trajectory, value: float, tol: float = 1e-6):
    """Assert a recovered trajectory is valid and matches the LP objective."""
    violations = validate_trajectory(setting, traj, tol=1e-7)
    if violations:
        raise DegenerateSolution(f"recovered trajectory invalid: {violations[0]}")
    got = unchecked_util(setting, traj)
    if abs(got - value) > tol:
        raise DegenerateSolution(f"recovered util {got} != LP value {value}")
