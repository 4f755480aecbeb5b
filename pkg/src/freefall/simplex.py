"""Self-contained dense two-phase simplex solver.

Maximizes ``c . x`` subject to mixed-relation rows ``A x {<=,=,>=} b`` and
``x >= 0``. Bland's rule keeps pivoting deterministic and cycle-free; the
dense tableau is fine at the problem sizes this package produces (tens of
variables and rows). Free variables are the caller's job to shift or split.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalBreakdown

PIVOT_TOL = 1e-9
CERT_TOL = 1e-7
MAX_ITERS = 100_000


@dataclass(frozen=True)
class LinearProgram:
    objective: tuple[float, ...]  # maximize objective . x
    rows: tuple[tuple[float, ...], ...]
    relations: tuple[str, ...]  # "<=", "=", ">=" per row
    rhs: tuple[float, ...]

    def __post_init__(self):
        n = len(self.objective)
        if len(self.rows) != len(self.relations) or len(self.rows) != len(self.rhs):
            raise ValueError("row/relation/rhs counts differ")
        for row in self.rows:
            if len(row) != n:
                raise ValueError("row width differs from objective length")
        for rel in self.relations:
            if rel not in ("<=", "=", ">="):
                raise ValueError(f"bad relation {rel!r}")
        arr = np.concatenate(
            [np.asarray(self.objective), np.asarray(self.rhs)]
            + [np.asarray(r) for r in self.rows]
        ) if self.rows else np.asarray(self.objective)
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite LP coefficients")

    def dump(self) -> str:
        """Plain-text tableau for debugging."""
        lines = ["max " + "  ".join(f"{c:+.6g}" for c in self.objective)]
        for row, rel, b in zip(self.rows, self.relations, self.rhs):
            lines.append("  ".join(f"{a:+.6g}" for a in row) + f"  {rel}  {b:.6g}")
        return "\n".join(lines)


@dataclass(frozen=True)
class LPSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: tuple[float, ...]
    value: float


def _pivot(T: np.ndarray, basis: list[int], row: int, col: int) -> None:
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r] -= T[r, col] * T[row]
    basis[row] = col


def _run_simplex(T: np.ndarray, basis: list[int], ncols: int) -> str:
    """Bland's rule on a tableau whose last row holds reduced costs (maximize)."""
    for _ in range(MAX_ITERS):
        z = T[-1, :ncols]
        enter = -1
        for j in range(ncols):
            if z[j] < -PIVOT_TOL:
                enter = j
                break
        if enter < 0:
            return "optimal"
        ratios = []
        col = T[:-1, enter]
        rhs = T[:-1, -1]
        for i in range(col.size):
            if col[i] > PIVOT_TOL:
                ratios.append((rhs[i] / col[i], basis[i], i))
        if not ratios:
            return "unbounded"
        _, _, leave = min(ratios)
        _pivot(T, basis, leave, enter)
    raise NumericalBreakdown("simplex iteration limit reached")


def solve(lp: LinearProgram, debug: bool = False) -> LPSolution:
    """Two-phase primal simplex; returns an optimal basic solution or status."""
    nvar = len(lp.objective)
    nrow = len(lp.rows)
    A = np.array(lp.rows, dtype=float).reshape(nrow, nvar)
    b = np.array(lp.rhs, dtype=float)
    rels = list(lp.relations)
    for i in range(nrow):
        if b[i] < 0:
            A[i] = -A[i]
            b[i] = -b[i]
            rels[i] = {"<=": ">=", ">=": "<=", "=": "="}[rels[i]]

    n_slack = sum(1 for r in rels if r == "<=")
    n_surp = sum(1 for r in rels if r == ">=")
    n_art = sum(1 for r in rels if r in ("=", ">="))
    total = nvar + n_slack + n_surp + n_art
    s0, t0, a0 = nvar, nvar + n_slack, nvar + n_slack + n_surp

    T = np.zeros((nrow + 1, total + 1))
    T[:nrow, :nvar] = A
    T[:nrow, -1] = b
    basis: list[int] = []
    si = ti = ai = 0
    for i, rel in enumerate(rels):
        if rel == "<=":
            T[i, s0 + si] = 1.0
            basis.append(s0 + si)
            si += 1
        elif rel == ">=":
            T[i, t0 + ti] = -1.0
            T[i, a0 + ai] = 1.0
            basis.append(a0 + ai)
            ti += 1
            ai += 1
        else:
            T[i, a0 + ai] = 1.0
            basis.append(a0 + ai)
            ai += 1

    if n_art:
        # phase 1: maximize -sum(artificials); z-row starts as +1 on artificial
        # columns, then basic columns are canonicalized to zero
        T[-1, a0 : a0 + n_art] = 1.0
        for i, col in enumerate(basis):
            if col >= a0:
                T[-1] -= T[i]
        status = _run_simplex(T, basis, total)
        if status != "optimal":
            raise NumericalBreakdown(f"phase 1 ended {status}")
        if T[-1, -1] < -CERT_TOL * max(1.0, abs(b).max()):
            return LPSolution("infeasible", tuple(np.zeros(nvar)), 0.0)
        # drive artificials out of the basis
        for i in range(nrow):
            if basis[i] >= a0:
                row = T[i, :a0]
                cand = np.nonzero(np.abs(row) > PIVOT_TOL)[0]
                if cand.size:
                    _pivot(T, basis, i, int(cand[0]))
        keep_rows = [i for i in range(nrow) if basis[i] < a0]
        if len(keep_rows) < nrow:  # redundant constraints
            T = np.vstack([T[keep_rows], T[-1:]])
            basis = [basis[i] for i in keep_rows]
            nrow = len(keep_rows)
        T = np.hstack([T[:, :a0], T[:, -1:]])
        total = a0

    # phase 2 objective
    T[-1, :] = 0.0
    T[-1, :nvar] = -np.asarray(lp.objective, dtype=float)
    for i, col in enumerate(basis):
        if T[-1, col] != 0.0:
            T[-1] -= T[-1, col] * T[i]
    status = _run_simplex(T, basis, total)
    if status == "unbounded":
        return LPSolution("unbounded", tuple(np.zeros(nvar)), np.inf)

    x = np.zeros(total)
    for i, col in enumerate(basis):
        x[col] = T[i, -1]
    x = np.where(np.abs(x) < 1e-12, 0.0, x)[:nvar]
    value = float(np.asarray(lp.objective) @ x)
    _certify(lp, x)
    if debug:
        print(lp.dump())
    return LPSolution("optimal", tuple(x), value)


def _certify(lp: LinearProgram, x: np.ndarray) -> None:
    """Post-check primal feasibility of a claimed optimum."""
    if np.any(x < -CERT_TOL):
        raise NumericalBreakdown("negative variable in claimed optimum")
    if lp.rows:
        A = np.asarray(lp.rows, dtype=float)
        b = np.asarray(lp.rhs, dtype=float)
        lhs = A @ x
        scale = max(1.0, float(np.abs(b).max()))
        for i, rel in enumerate(lp.relations):
            resid = lhs[i] - b[i]
            if rel == "<=" and resid > CERT_TOL * scale:
                raise NumericalBreakdown(f"row {i} violated by {resid:.2e}")
            if rel == ">=" and resid < -CERT_TOL * scale:
                raise NumericalBreakdown(f"row {i} violated by {-resid:.2e}")
            if rel == "=" and abs(resid) > CERT_TOL * scale:
                raise NumericalBreakdown(f"row {i} violated by {abs(resid):.2e}")
