"""Discrete-time repeated-game simulator against learning agents.

One seeded stream per simulation, split into (learner, outcome) substreams so
changing the learner's internal randomness never shifts outcome draws. The
cumulative score table sigma is always tracked in expected terms under the
offered contracts (that is what mean-based behavior is defined against),
independently of the feedback the learner itself observes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import SettingError
from .setting import ContractSetting, principal_utility
from .trajectory import Trajectory

ALGORITHMS = ("ftl", "mw", "exp3", "adversarial", "sigma_min")
FEEDBACKS = ("expected", "realized", "bandit")


@dataclass(frozen=True)
class DiscreteSchedule:
    """Per-round contracts as (payments, round-count) runs.

    ``adaptive``, when set, overrides the runs: it is called each round with
    (round_index, actions_so_far, outcomes_so_far) and returns the payment
    profile to offer that round.
    """

    runs: tuple[tuple[tuple[float, ...], int], ...]
    adaptive: Callable[[int, list[int], list[int]], Sequence[float]] | None = None

    @property
    def T(self) -> int:
        return sum(count for _, count in self.runs)

    def max_payment(self) -> float:
        return max((max(p) for p, _ in self.runs if p), default=0.0)


def extrapolate_schedule(
    setting: ContractSetting, traj: Trajectory, T: int, delta: float = 0.0
) -> DiscreteSchedule:
    """Round-proportional extrapolation of a trajectory to ``T`` rounds.

    Each segment k becomes round(tau_k * T) rounds of its contract with a
    uniform ``delta`` added to every nonzero payment entry (the intended
    action becomes a strict best response along non-degenerate segments; the
    zero contract stays exactly zero). Rounding residue goes to the final
    segment.
    """
    if T < 1:
        raise SettingError("T must be at least 1")
    if delta < 0:
        raise SettingError("delta must be non-negative")
    total = traj.total_duration
    counts = [int(s.duration / total * T + 0.5) for s in traj.segments[:-1]]
    counts.append(max(T - sum(counts), 0))
    while sum(counts) > T:  # rounding overshoot: pull back earlier runs
        for i in range(len(counts) - 2, -1, -1):
            if counts[i] > 0 and sum(counts) > T:
                counts[i] -= 1
    runs = []
    for k, rounds in enumerate(counts, start=1):
        if rounds <= 0:
            continue
        pay = traj.payments_at(setting, k).astype(float)
        bumped = np.where(pay > 0, pay + delta, pay)
        if setting.p_max is not None:
            bumped = np.minimum(bumped, setting.p_max)
        runs.append((tuple(float(x) for x in bumped), rounds))
    return DiscreteSchedule(runs=tuple(runs))


def static_schedule(
    setting: ContractSetting, payments: Sequence[float], T: int, delta: float = 0.0
) -> DiscreteSchedule:
    """One contract repeated for ``T`` rounds, with the same delta bump."""
    pay = np.asarray(payments, dtype=float)
    bumped = np.where(pay > 0, pay + delta, pay)
    if setting.p_max is not None:
        bumped = np.minimum(bumped, setting.p_max)
    return DiscreteSchedule(runs=((tuple(float(x) for x in bumped), T),))


@dataclass(frozen=True)
class LearnerConfig:
    """Learning algorithm, feedback mode, rates, tie-breaking, and seed.

    FTL breaks score ties toward the lowest action index. ``mw`` uses
    eta = sqrt(ln n / T) on utilities affinely rescaled to [0, 1] unless
    ``learning_rate`` overrides it; ``exp3`` uses the standard mixing rate
    min(1, sqrt(n ln n / ((e-1) T))) on the same rescaling.
    """

    algorithm: str = "mw"
    feedback: str = "expected"
    learning_rate: float | None = None
    gamma: float | None = None  # adversarial near-optimal band, default T**-0.5
    seed: int = 0
    accounting: str = "realized"  # "realized" | "expected" bookkeeping
    utility_range: float | None = None  # rescale half-width override

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise SettingError(f"unknown algorithm {self.algorithm!r}")
        if self.feedback not in FEEDBACKS:
            raise SettingError(f"unknown feedback {self.feedback!r}")
        if self.algorithm == "exp3" and self.feedback == "expected":
            raise SettingError("exp3 needs bandit or realized feedback")
        if self.algorithm in ("ftl", "mw") and self.feedback == "bandit":
            raise SettingError(f"{self.algorithm} needs expected or realized feedback")
        if self.algorithm in ("adversarial", "sigma_min") and self.feedback != "expected":
            raise SettingError(f"the {self.algorithm} learner tracks expected scores")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise SettingError("learning rate must be positive")
        if self.accounting not in ("realized", "expected"):
            raise SettingError(f"unknown accounting {self.accounting!r}")


@dataclass(frozen=True)
class WindowRow:
    t_start: int  # 1-based, inclusive
    t_end: int
    frequencies: tuple[float, ...]
    avg_principal: float
    avg_agent: float
    cum_regret: float


@dataclass(frozen=True)
class SimulationResult:
    T: int
    config: LearnerConfig
    window_size: int
    windows: tuple[WindowRow, ...]
    sigma_snapshots: tuple[tuple[float, ...], ...]  # at window ends
    action_counts: tuple[int, ...]
    principal_total: float
    agent_total: float
    payment_total: float
    reward_total: float
    cost_total: float
    realized_expected_total: float  # sum_t u_exp[a_t], for regret
    sigma_final: tuple[float, ...]
    dominance_gap: np.ndarray  # decision-time score gap of the taken action, per round

    @property
    def principal_avg(self) -> float:
        return self.principal_total / self.T

    @property
    def agent_avg(self) -> float:
        return self.agent_total / self.T

    def summary(self) -> dict:
        return {
            "T": self.T,
            "algorithm": self.config.algorithm,
            "feedback": self.config.feedback,
            "accounting": self.config.accounting,
            "seed": self.config.seed,
            "principal_avg": self.principal_avg,
            "agent_avg": self.agent_avg,
            "principal_total": self.principal_total,
            "agent_total": self.agent_total,
            "payment_total": self.payment_total,
            "reward_total": self.reward_total,
            "cost_total": self.cost_total,
            "external_regret": external_regret(self),
            "action_frequencies": [c / self.T for c in self.action_counts],
        }


def external_regret(result: SimulationResult) -> float:
    """Best fixed action's cumulative expected utility minus the learner's."""
    return max(result.sigma_final) - result.realized_expected_total


def mean_based_violation(result: SimulationResult, gamma: float) -> float:
    """Fraction of rounds whose taken action was gamma*T-dominated at decision time."""
    return float(np.mean(result.dominance_gap > gamma * result.T))


def adversarial_action(
    setting: ContractSetting, candidates: Sequence[int], payments: Sequence[float]
) -> int:
    """Principal-utility-minimizing action within a near-optimal set."""
    if not candidates:
        raise SettingError("candidate set must be non-empty")
    return min(candidates, key=lambda a: (principal_utility(setting, payments, a), a))


def _utility_range(setting: ContractSetting, schedule: DiscreteSchedule) -> float:
    """Half-width of the affine map taking agent utilities into [0, 1]."""
    best = 0.0
    F = np.asarray(setting.forecast)
    c = np.asarray(setting.costs)
    for payments, _ in schedule.runs:
        u = F @ np.asarray(payments) - c
        best = max(best, float(np.abs(u).max()))
    if schedule.adaptive is not None:
        cap = setting.p_max if setting.p_max is not None else (max(setting.rewards) or 1.0)
        best = max(best, cap + float(c.max()))
    return best if best > 0 else 1.0


def run_simulation(
    setting: ContractSetting,
    schedule: DiscreteSchedule,
    learner: LearnerConfig,
    T: int | None = None,
    window: int | None = None,
) -> SimulationResult:
    """Simulate ``T`` rounds of the repeated contract game.

    Each round the learner emits an action distribution, an action and an
    outcome are sampled, payments and utilities are recorded, and the learner
    is updated per its feedback mode. Deterministic given the config seed.
    """
    if T is None:
        T = schedule.T
    if T < 1:
        raise SettingError("T must be at least 1")
    if schedule.adaptive is None and schedule.T != T:
        raise SettingError(f"schedule covers {schedule.T} rounds, asked for {T}")
    if setting.p_max is not None and schedule.max_payment() > setting.p_max + 1e-12:
        raise SettingError("schedule payments exceed p_max")

    n, m = setting.n, setting.m
    rewards = list(setting.rewards)
    costs = list(setting.costs)
    R = list(setting.expected_rewards)
    F = [list(row) for row in setting.forecast]
    cdf = [list(np.cumsum(row)[:-1]) for row in F]  # per action, m-1 cut points

    ss = np.random.SeedSequence(learner.seed)
    learner_rng, outcome_rng = (np.random.default_rng(s) for s in ss.spawn(2))

    algo, fb = learner.algorithm, learner.feedback
    accounting = learner.accounting
    half = learner.utility_range if learner.utility_range is not None else _utility_range(setting, schedule)

    if algo == "mw":
        eta = learner.learning_rate if learner.learning_rate is not None else math.sqrt(math.log(n) / T)
        rate = eta / (2.0 * half)  # softmax rate on raw (unrescaled) scores
    elif algo == "exp3":
        gmix = (
            learner.learning_rate
            if learner.learning_rate is not None
            else min(1.0, math.sqrt(n * math.log(n) / ((math.e - 1.0) * T)))
        )
        logw = [0.0] * n
    gamma_adv = learner.gamma if learner.gamma is not None else T ** -0.5
    gap_band = gamma_adv * T

    sigma = [0.0] * n  # expected cumulative score under offered contracts
    shat = [0.0] * n  # learner's observed score (ftl / mw)
    counts = [0] * n
    principal_tot = agent_tot = 0.0
    pay_tot = reward_tot = cost_tot = 0.0
    realized_expected = 0.0
    gaps = np.empty(T)

    win = window if window is not None else max(1, T // 200)
    win_rows: list[WindowRow] = []
    snaps: list[tuple[float, ...]] = []
    wc = [0] * n
    wp = wa = 0.0
    wstart = 1

    needs_board = fb == "realized"
    needs_outcome = needs_board or fb == "bandit" or accounting == "realized"
    actions_hist: list[int] = []
    outcomes_hist: list[int] = []
    adaptive = schedule.adaptive

    def run_iter():
        if adaptive is not None:
            for t in range(T):
                yield tuple(adaptive(t, actions_hist, outcomes_hist)), 1
        else:
            yield from schedule.runs

    t = 0
    for payments, rounds in run_iter():
        p = [float(x) for x in payments]
        if len(p) != m:
            raise SettingError("payment profile width differs from outcome count")
        u_exp = [sum(F[i][o] * p[o] for o in range(m)) - costs[i] for i in range(n)]
        pay_exp = [sum(F[i][o] * p[o] for o in range(m)) for i in range(n)]
        upp = [R[i] - pay_exp[i] for i in range(n)]
        lu = learner_rng.random(rounds) if algo in ("mw", "exp3") else None
        if needs_board:
            ou = outcome_rng.random((rounds, n))
        elif needs_outcome:
            ou = outcome_rng.random(rounds)
        for rr in range(rounds):
            # -- pick the action --
            if algo == "ftl":
                a = 0
                best = shat[0]
                for i in range(1, n):
                    if shat[i] > best:
                        best = shat[i]
                        a = i
            elif algo == "mw":
                mx = max(shat)
                w = [math.exp(rate * (s - mx)) for s in shat]
                u = lu[rr] * sum(w)
                a = 0
                acc = w[0]
                while acc < u and a < n - 1:
                    a += 1
                    acc += w[a]
            elif algo == "exp3":
                mx = max(logw)
                w = [math.exp(x - mx) for x in logw]
                W = sum(w)
                probs = [(1.0 - gmix) * wi / W + gmix / n for wi in w]
                u = lu[rr]
                a = 0
                acc = probs[0]
                while acc < u and a < n - 1:
                    a += 1
                    acc += probs[a]
            elif algo == "adversarial":
                mx = max(sigma)
                a = 0
                best_u = None
                for i in range(n):
                    if mx - sigma[i] < gap_band:
                        if best_u is None or upp[i] < best_u:
                            best_u = upp[i]
                            a = i
            else:  # sigma_min
                a = 0
                worst = shat[0]
                for i in range(1, n):
                    if shat[i] < worst:
                        worst = shat[i]
                        a = i

            # -- outcome and bookkeeping --
            if needs_board:
                row = ou[rr]
                board = [0] * n
                for i in range(n):
                    ci = cdf[i]
                    o = 0
                    ui = row[i]
                    while o < m - 1 and ui >= ci[o]:
                        o += 1
                    board[i] = o
                o = board[a]
            elif needs_outcome:
                ci = cdf[a]
                ui = ou[rr]
                o = 0
                while o < m - 1 and ui >= ci[o]:
                    o += 1
            else:
                o = -1

            if accounting == "realized":
                pay = p[o]
                rew = rewards[o]
            else:
                pay = pay_exp[a]
                rew = R[a]
            cost = costs[a]
            principal_tot += rew - pay
            agent_tot += pay - cost
            pay_tot += pay
            reward_tot += rew
            cost_tot += cost
            realized_expected += u_exp[a]
            counts[a] += 1
            wc[a] += 1
            wp += rew - pay
            wa += pay - cost

            mx_sigma = max(sigma)
            gaps[t] = mx_sigma - sigma[a]

            # -- updates --
            for i in range(n):
                sigma[i] += u_exp[i]
            if fb == "expected":
                for i in range(n):
                    shat[i] += u_exp[i]
            elif fb == "realized":
                if algo == "exp3":
                    for i in range(n):
                        x = (p[board[i]] - costs[i] + half) / (2.0 * half)
                        logw[i] += (gmix / n) * x
                else:
                    for i in range(n):
                        shat[i] += p[board[i]] - costs[i]
            else:  # bandit: only the taken action's realized payoff
                mx = max(logw)
                wsum = sum(math.exp(x - mx) for x in logw)
                prob_a = (1.0 - gmix) * math.exp(logw[a] - mx) / wsum + gmix / n
                x = (p[o] - costs[a] + half) / (2.0 * half)
                logw[a] += (gmix / n) * (x / prob_a)

            if adaptive is not None:
                actions_hist.append(a + 1)
                outcomes_hist.append(o + 1 if o >= 0 else 0)

            t += 1
            if t % win == 0 or t == T:
                size = t - wstart + 1
                win_rows.append(
                    WindowRow(
                        t_start=wstart,
                        t_end=t,
                        frequencies=tuple(c / size for c in wc),
                        avg_principal=wp / size,
                        avg_agent=wa / size,
                        cum_regret=max(sigma) - realized_expected,
                    )
                )
                snaps.append(tuple(sigma))
                wc = [0] * n
                wp = wa = 0.0
                wstart = t + 1
        if t >= T:
            break

    return SimulationResult(
        T=T,
        config=learner,
        window_size=win,
        windows=tuple(win_rows),
        sigma_snapshots=tuple(snaps),
        action_counts=tuple(counts),
        principal_total=principal_tot,
        agent_total=agent_tot,
        payment_total=pay_tot,
        reward_total=reward_tot,
        cost_total=cost_tot,
        realized_expected_total=realized_expected,
        sigma_final=tuple(sigma),
        dominance_gap=gaps,
    )
