"""Linear programming: a dense bounded-variable primal simplex plus a HiGHS backend.

The simplex handles everything up to a few hundred thousand tableau entries;
larger fair-assignment LPs are routed to HiGHS (through highspy) by
``method="auto"``. Both paths return the same ``LpSolution`` and go through
the same independent feasibility check.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .core import InputError, SolverError

log = logging.getLogger(__name__)

LE, GE, EQ = "<=", ">=", "="

OPTIMAL, INFEASIBLE, UNBOUNDED = "Optimal", "Infeasible", "Unbounded"

AUTO_DENSE_LIMIT = 400_000


@dataclass(eq=False)
class LpInstance:
    """``min c.x  s.t.  A x (<=|>=|=) b,  lo <= x <= hi``.

    ``A`` may be a dense array or a scipy sparse matrix.
    """

    c: np.ndarray
    A: np.ndarray | sp.spmatrix
    senses: Sequence[str]
    b: np.ndarray
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    labels: Sequence | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        N = self.c.shape[0]
        if sp.issparse(self.A):
            self.A = sp.csr_matrix(self.A, dtype=float)
        else:
            A = np.asarray(self.A, dtype=float)
            self.A = A.reshape(0, N) if A.size == 0 else np.atleast_2d(A)
        if self.A.shape[1] != N:
            raise InputError(f"constraint rows have width {self.A.shape[1]}, objective has {N}")
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.senses = list(self.senses)
        if not (len(self.senses) == self.A.shape[0] == self.b.shape[0]):
            raise InputError("A, senses and b disagree on the number of rows")
        if any(s not in (LE, GE, EQ) for s in self.senses):
            raise InputError("row senses must be '<=', '>=' or '='")
        self.lo = np.broadcast_to(np.asarray(0.0 if self.lo is None else self.lo, dtype=float), (N,)).copy()
        self.hi = np.broadcast_to(np.asarray(1.0 if self.hi is None else self.hi, dtype=float), (N,)).copy()
        if np.any(self.lo > self.hi):
            raise InputError("variable bounds must satisfy lo <= hi")
        if not np.all(np.isfinite(self.lo)):
            raise InputError("lower bounds must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def dense(self) -> np.ndarray:
        return self.A.toarray() if sp.issparse(self.A) else self.A

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.A @ x).reshape(-1)


@dataclass(eq=False)
class LpSolution:
    status: str
    values: np.ndarray | None
    objective_value: float
    iterations: int = 0
    method: str = ""
    duals: np.ndarray | None = None
    certificate: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def max_violation(inst: LpInstance, x: np.ndarray) -> float:
    """Largest constraint or bound violation of ``x``, computed from scratch."""
    act = inst.row_activity(x)
    s = np.array(inst.senses)
    viol = np.zeros_like(act)
    viol[s == LE] = np.maximum(act[s == LE] - inst.b[s == LE], 0)
    viol[s == GE] = np.maximum(inst.b[s == GE] - act[s == GE], 0)
    viol[s == EQ] = np.abs(act[s == EQ] - inst.b[s == EQ])
    bnd = np.maximum(np.maximum(inst.lo - x, x - inst.hi), 0)
    return float(max(viol.max(initial=0.0), bnd.max(initial=0.0)))


class HighsSession:
    """A reusable HiGHS instance that warm-starts from the last optimal basis.

    Useful when many LPs of identical shape are solved in sequence, such as
    repeated trials that only change constraint coefficients. A basis of the
    wrong shape is simply not reused.
    """

    def __init__(self):
        import highspy

        self._hs = highspy
        self.highs = highspy.Highs()
        self.highs.setOptionValue("output_flag", False)
        self._basis = None
        self._shape = None

    def solve(self, inst: LpInstance, feas_tol: float) -> LpSolution:
        hs, h = self._hs, self.highs
        h.clearModel()
        h.setOptionValue("primal_feasibility_tolerance", feas_tol)
        h.setOptionValue("dual_feasibility_tolerance", feas_tol)
        h.passModel(_highs_lp(hs, inst))
        if self._basis is not None and self._shape == inst.shape:
            h.setBasis(self._basis)
        h.run()
        status = h.getModelStatus()
        M = hs.HighsModelStatus
        if status == M.kInfeasible:
            # the last optimal basis stays a valid start for the next solve
            return LpSolution(INFEASIBLE, None, np.nan, method="highs",
                              certificate={"message": h.modelStatusToString(status)})
        if status in (M.kUnbounded, M.kUnboundedOrInfeasible):
            self._basis = None
            return LpSolution(UNBOUNDED, None, -np.inf, method="highs")
        if status != M.kOptimal:
            raise SolverError(f"HiGHS failed: {h.modelStatusToString(status)}")
        self._basis, self._shape = h.getBasis(), inst.shape
        sol = h.getSolution()
        x = np.clip(np.asarray(sol.col_value), inst.lo, inst.hi)
        iters = int(h.getInfo().simplex_iteration_count)
        return LpSolution(OPTIMAL, x, float(inst.c @ x), iters, "highs",
                          np.asarray(sol.row_dual, dtype=float))


def _highs_lp(hs, inst: LpInstance):
    A = sp.csc_matrix(inst.A)
    s = np.array(inst.senses)
    inf = hs.kHighsInf
    lp = hs.HighsLp()
    lp.num_col_, lp.num_row_ = A.shape[1], A.shape[0]
    lp.col_cost_ = inst.c
    lp.col_lower_ = inst.lo
    lp.col_upper_ = np.where(np.isfinite(inst.hi), inst.hi, inf)
    lp.row_lower_ = np.where(s == LE, -inf, inst.b)
    lp.row_upper_ = np.where(s == GE, inf, inst.b)
    lp.a_matrix_.format_ = hs.MatrixFormat.kColwise
    lp.a_matrix_.start_ = A.indptr
    lp.a_matrix_.index_ = A.indices
    lp.a_matrix_.value_ = A.data
    return lp


def solve_lp(inst: LpInstance, feas_tol: float = 1e-7, opt_tol: float = 1e-7,
             method: str = "auto", max_iter: int | None = None,
             session: HighsSession | None = None) -> LpSolution:
    """Solve ``inst``; ``method`` is ``"simplex"``, ``"highs"`` or ``"auto"``.

    A ``session`` is used for the HiGHS path and carries a warm start between calls.
    """
    m, N = inst.shape
    if method == "auto":
        method = "simplex" if m * (N + 2 * m) <= AUTO_DENSE_LIMIT and session is None else "highs"
    if method == "simplex":
        sol = _BoundedSimplex(inst, feas_tol, opt_tol, max_iter).run()
    elif method == "highs":
        sol = (session or HighsSession()).solve(inst, feas_tol)
    else:
        raise InputError(f"unknown LP method {method!r}")
    if sol.optimal:
        scale = max(1.0, float(np.abs(inst.b).max(initial=0.0)))
        v = max_violation(inst, sol.values)
        sol.certificate["max_violation"] = v
        if v > feas_tol * scale * 10:
            raise SolverError(f"{sol.method} returned a point violating constraints by {v:.3g}")
    return sol


_AT_LO, _AT_HI, _BASIC, _FIXED = 0, 1, 2, 3


class _BoundedSimplex:
    """Two-phase dense-tableau primal simplex with variable upper bounds.

    Dantzig pricing, switching to Bland's rule after a streak of degenerate
    pivots and back after progress resumes.
    """

    DEGENERATE_STREAK = 50
    PIVOT_TOL = 1e-9

    def __init__(self, inst: LpInstance, feas_tol: float, opt_tol: float, max_iter: int | None):
        self.inst = inst
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        A = inst.dense()
        m, N = A.shape
        s = np.array(inst.senses)
        ineq = np.flatnonzero(s != EQ)
        slack = np.zeros((m, len(ineq)))
        slack[ineq, np.arange(len(ineq))] = np.where(s[ineq] == LE, 1.0, -1.0)
        self.m, self.N, self.ns = m, N, len(ineq)
        Afull = np.hstack([A, slack])
        upper = np.concatenate([inst.hi - inst.lo, np.full(len(ineq), np.inf)])
        rhs = inst.b - A @ inst.lo
        sign = np.where(rhs < 0, -1.0, 1.0)
        self.sign = sign
        Afull *= sign[:, None]
        rhs = rhs * sign
        self.ntot = N + len(ineq)
        self.T = np.hstack([Afull, np.eye(m)])
        self.A0 = self.T.copy()
        self.rhs = rhs
        self.upper = np.concatenate([upper, np.full(m, np.inf)])
        self.status = np.full(self.ntot + m, _AT_LO)
        self.basis = np.arange(self.ntot, self.ntot + m)
        self.status[self.basis] = _BASIC
        self.beta = rhs.copy()
        self.iters = 0
        self.max_iter = max_iter or 50 * (m + N)

    def _reduced(self, cost: np.ndarray) -> np.ndarray:
        return cost - cost[self.basis] @ self.T

    def _value_nonbasic(self) -> np.ndarray:
        v = np.zeros(self.ntot + self.m)
        hi = self.status == _AT_HI
        v[hi] = self.upper[hi]
        return v

    def _iterate(self, cost: np.ndarray) -> str:
        d = self._reduced(cost)
        streak = 0
        bland = False
        while True:
            if self.iters >= self.max_iter:
                raise SolverError(
                    f"simplex iteration cap {self.max_iter} reached (m={self.m}, n={self.N})")
            at_lo = (self.status == _AT_LO) & (d < -self.opt_tol)
            at_hi = (self.status == _AT_HI) & (d > self.opt_tol)
            elig = at_lo | at_hi
            if not elig.any():
                return OPTIMAL
            if bland:
                j = int(np.flatnonzero(elig)[0])
            else:
                j = int(np.argmax(np.where(elig, np.abs(d), -1.0)))
            direction = 1.0 if self.status[j] == _AT_LO else -1.0
            col = self.T[:, j]
            rate = -direction * col
            limits = np.full(self.m, np.inf)
            to_hi = np.zeros(self.m, bool)
            dec = rate < -self.PIVOT_TOL
            limits[dec] = np.maximum(self.beta[dec], 0.0) / -rate[dec]
            ub = self.upper[self.basis]
            inc = (rate > self.PIVOT_TOL) & np.isfinite(ub)
            limits[inc] = np.maximum(ub[inc] - self.beta[inc], 0.0) / rate[inc]
            to_hi[inc] = True
            t = limits.min(initial=np.inf)
            if not np.isfinite(t) and not np.isfinite(self.upper[j]):
                return UNBOUNDED
            if self.upper[j] <= t:
                t = self.upper[j]
                self.beta += rate * t
                self.status[j] = _AT_HI if self.status[j] == _AT_LO else _AT_LO
                self.iters += 1
                streak = 0 if t > 0 else streak + 1
                continue
            ties = np.flatnonzero(limits <= t + 1e-12)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(col[ties]))])
            enter_val = (0.0 if self.status[j] == _AT_LO else self.upper[j]) + direction * t
            self.beta += rate * t
            leaving = self.basis[r]
            self.status[leaving] = _AT_HI if to_hi[r] else _AT_LO
            if self.status[leaving] == _AT_HI and not np.isfinite(self.upper[leaving]):
                self.status[leaving] = _AT_LO
            self._pivot(r, j)
            self.beta[r] = enter_val
            d -= d[j] * self.T[r]
            self.iters += 1
            if t <= 1e-12:
                streak += 1
                if streak > self.DEGENERATE_STREAK:
                    bland = True
            else:
                streak = 0
                bland = False

    def _pivot(self, r: int, j: int):
        T = self.T
        T[r] /= T[r, j]
        colj = T[:, j].copy()
        colj[r] = 0.0
        T -= np.outer(colj, T[r])
        self.basis[r] = j
        self.status[j] = _BASIC

    def _refresh_beta(self):
        """Recompute basic values from the original columns to shed drift."""
        xN = self._value_nonbasic()
        xN[self.basis] = 0.0
        B = self.A0[:, self.basis]
        rhs = self.rhs - self.A0 @ xN
        try:
            self.beta = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError:
            pass

    def run(self) -> LpSolution:
        m, ntot = self.m, self.ntot
        art = np.arange(ntot, ntot + m)
        c1 = np.zeros(ntot + m)
        c1[art] = 1.0
        if m:
            st = self._iterate(c1)
            self._refresh_beta()
            infeas = float(self.beta[np.isin(self.basis, art)].clip(min=0).sum())
            scale = max(1.0, float(np.abs(self.rhs).max(initial=0.0)))
            if st != OPTIMAL or infeas > self.feas_tol * scale:
                y = c1[self.basis] @ self.T[:, art]  # phase-one duals on the signed rows
                rows = [int(self.basis[r] - ntot) for r in range(m)
                        if self.basis[r] in set(art) and self.beta[r] > self.feas_tol]
                return LpSolution(INFEASIBLE, None, np.nan, self.iters, "simplex",
                                  certificate={"infeasibility": infeas,
                                               "violated_rows": rows,
                                               "farkas": y * self.sign})
            # drive zero-valued artificials out of the basis
            for r in range(m):
                if self.basis[r] >= ntot:
                    cand = np.flatnonzero((np.abs(self.T[r, :ntot]) > 1e-7)
                                          & (self.status[:ntot] != _BASIC))
                    if cand.size:
                        j = int(cand[0])
                        val = 0.0 if self.status[j] == _AT_LO else self.upper[j]
                        self.status[self.basis[r]] = _FIXED
                        self._pivot(r, j)
                        self.beta[r] = val
            self.status[art[self.status[art] != _BASIC]] = _FIXED
            self.upper[art] = 0.0
        c2 = np.zeros(ntot + m)
        c2[:self.N] = self.inst.c
        st = self._iterate(c2)
        if st == UNBOUNDED:
            return LpSolution(UNBOUNDED, None, -np.inf, self.iters, "simplex")
        self._refresh_beta()
        full = self._value_nonbasic()
        full[self.basis] = self.beta
        y = np.clip(full[:self.N], 0.0, self.inst.hi - self.inst.lo)
        x = y + self.inst.lo
        B = self.A0[:, self.basis]
        try:
            duals = np.linalg.solve(B.T, c2[self.basis])
        except np.linalg.LinAlgError:
            duals = c2[self.basis] @ self.T[:, art]
        dj = c2[:ntot] - duals @ self.A0[:, :ntot]
        st_ = self.status[:ntot]
        dual_infeas = max(
            float(np.max(-dj[st_ == _AT_LO], initial=0.0)),
            float(np.max(dj[st_ == _AT_HI], initial=0.0)),
            float(np.max(np.abs(dj[st_ == _BASIC]), initial=0.0)),
        )
        return LpSolution(OPTIMAL, x, float(self.inst.c @ x), self.iters, "simplex",
                          duals * self.sign, certificate={"dual_infeasibility": dual_infeas})


def dump_lp(inst: LpInstance, path: str | Path | None = None) -> str:
    """Render ``inst`` in CPLEX LP text format (for cross-checking elsewhere)."""

    def term(coef, j, first):
        sign = "-" if coef < 0 else ("" if first else "+")
        return f"{sign} {abs(coef):.12g} x{j}".strip()

    def expr(coefs):
        nz = [(j, v) for j, v in enumerate(coefs) if v != 0]
        if not nz:
            return "0 x0"
        return " ".join(term(v, j, i == 0) for i, (j, v) in enumerate(nz))

    A = inst.dense()
    lines = ["Minimize", f" obj: {expr(inst.c)}", "Subject To"]
    for r, (row, s, rhs) in enumerate(zip(A, inst.senses, inst.b)):
        lines.append(f" r{r}: {expr(row)} {s} {rhs:.12g}")
    lines.append("Bounds")
    for j, (l, u) in enumerate(zip(inst.lo, inst.hi)):
        lines.append(f" {l:.12g} <= x{j} <= {u:.12g}" if np.isfinite(u) else f" x{j} >= {l:.12g}")
    lines.append("End")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
