"""Per-segment 0-1 program: constraint containers, assembly, exact solving.

A program has one binary variable per candidate.  Prior accepted candidates
enter as variables fixed to 1.  Constraint rows have coefficients in {-1, +1}
and a single relation against a constant bound.
"""

from __future__ import annotations

import enum
import math
import re
import sys
from dataclasses import dataclass, field

from .candidates import Candidate, TimeWindow
from .instance import MACHINE, Instance

EQ, LE, GE = "=", "<=", ">="


class ConstraintContainer:
    """Signed sum of candidate values; repeated terms for one variable merge."""

    def __init__(self):
        self._coef: dict[int, int] = {}

    def add(self, var: int) -> None:
        self._coef[var] = self._coef.get(var, 0) + 1

    def sub(self, var: int) -> None:
        self._coef[var] = self._coef.get(var, 0) - 1

    @property
    def terms(self) -> list[tuple[int, int]]:
        out = [(v, c) for v, c in self._coef.items() if c]
        for v, c in out:
            if c not in (1, -1):
                raise ValueError(f"coefficient {c} for variable {v} is not +-1")
        return out

    def __len__(self) -> int:
        return len(self.terms)


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: tuple[tuple[int, int], ...]
    relation: str
    bound: float

    def holds(self, assignment: dict[int, int]) -> bool:
        lhs = sum(c * assignment[v] for v, c in self.terms)
        if self.relation == EQ:
            return lhs == self.bound
        if self.relation == LE:
            return lhs <= self.bound
        return lhs >= self.bound


@dataclass
class BinaryProgram:
    variables: list[int] = field(default_factory=list)
    fixed: dict[int, int] = field(default_factory=dict)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)

    def add_variable(self, var: int, cost: float = 0.0) -> None:
        if var in self.objective:
            raise ValueError(f"variable {var} declared twice")
        self.variables.append(var)
        self.objective[var] = cost

    def fix(self, var: int, value: int = 1) -> None:
        if var not in self.objective:
            self.add_variable(var, 0.0)
        self.fixed[var] = value

    def add_constraint(self, terms, relation: str, bound: float, name: str = "") -> None:
        if isinstance(terms, ConstraintContainer):
            terms = terms.terms
        terms = tuple(terms)
        for v, c in terms:
            if v not in self.objective:
                raise ValueError(f"constraint {name!r} references undeclared variable {v}")
            if c not in (1, -1):
                raise ValueError(f"constraint {name!r}: coefficient {c} is not +-1")
        if relation not in (EQ, LE, GE):
            raise ValueError(f"unknown relation {relation!r}")
        self.constraints.append(Constraint(name or f"r{len(self.constraints)}", terms, relation, bound))

    def evaluate(self, assignment: dict[int, int]) -> float:
        return math.fsum(self.objective[v] for v in self.variables if assignment[v])

    def violations(self, assignment: dict[int, int]) -> list[str]:
        bad = [c.name for c in self.constraints if not c.holds(assignment)]
        bad += [f"fixed_c{v}" for v, x in self.fixed.items() if assignment[v] != x]
        return bad

    def to_lp(self) -> str:
        """CPLEX-LP text for cross-checking with an external solver."""

        def expr(pairs):
            parts = []
            for v, c in pairs:
                sign = "-" if c < 0 else "+"
                parts.append(f"{sign} {abs(c)!r} c{v}" if abs(c) != 1 else f"{sign} c{v}")
            s = " ".join(parts) or "0 c0"
            return s[2:] if s.startswith("+ ") else s

        lines = ["\\ ffsched segment program", "Minimize", " obj: " + expr(self.objective.items())]
        lines.append("Subject To")
        for c in self.constraints:
            lines.append(f" {_lp_name(c.name)}: {expr(c.terms)} {c.relation} {_num(c.bound)}")
        for v, x in self.fixed.items():
            lines.append(f" fixed_c{v}: c{v} = {x}")
        lines.append("Binary")
        for i in range(0, len(self.variables), 10):
            lines.append(" " + " ".join(f"c{v}" for v in self.variables[i : i + 10]))
        lines.append("End")
        return "\n".join(lines) + "\n"


def _lp_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.]", "_", name)


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    NO_ASSIGNMENT = "NoAssignment"


@dataclass
class SolveResult:
    status: Status
    assignment: dict[int, int]
    objective_value: float
    nodes: int = 0


def candidate_cost(c: Candidate, instance: Instance) -> float:
    """Objective coefficient of a candidate's decision variable."""
    w = instance.weights
    if c.job_id is None:
        return w.alpha * c.energy
    cost = w.alpha * c.energy + w.beta * float(c.finish) ** w.k_exponent
    due = instance.job_by_id[c.job_id].due_time
    if due is not None and w.zeta:
        cost += w.zeta * float(c.times[1] - due) ** 2
    return cost


# --- assembly ----------------------------------------------------------------


def _machine_intervals(c: Candidate, instance: Instance):
    for s, kind in enumerate(c.path.kinds):
        if kind == MACHINE:
            m = c.path.nodes[s]
            yield m, c.times[s], c.times[s] + instance.facility_by_id[m].processing_time


def build_program(
    candidates: list[Candidate],
    fixed_schedule: list[Candidate],
    window: TimeWindow,
    instance: Instance,
) -> BinaryProgram:
    """Assemble the segment program.

    Base stock and storage rows are emitted at the window start and at every
    dispatch (stock) or arrival (storage) tick from the window start onward,
    including ticks past the window end: counts only change at those ticks,
    so this is exact.  Fixed candidates whose base events all precede the
    window start are folded into the row bound.
    """
    prog = BinaryProgram()
    ws = window.start
    for c in fixed_schedule:
        prog.fix(c.var_id, 1)
    for c in candidates:
        prog.add_variable(c.var_id, candidate_cost(c, instance))

    # job-once
    per_job: dict[str, ConstraintContainer] = {}
    for c in candidates:
        if c.job_id is not None:
            per_job.setdefault(c.job_id, ConstraintContainer()).add(c.var_id)
    for jid, box in per_job.items():
        prog.add_constraint(box, EQ, 1, f"job_{jid}")

    # machine capacity, per tick where some free candidate is in service
    free_iv: dict[str, list] = {}
    for c in candidates:
        for m, lo, hi in _machine_intervals(c, instance):
            free_iv.setdefault(m, []).append((c.var_id, lo, hi))
    fixed_iv: dict[str, list] = {}
    for c in fixed_schedule:
        for m, lo, hi in _machine_intervals(c, instance):
            if hi >= ws and m in free_iv:
                fixed_iv.setdefault(m, []).append((c.var_id, lo, hi))
    for mach in instance.machines:
        ivs = free_iv.get(mach.id)
        if not ivs:
            continue
        ticks = sorted({t for _, lo, hi in ivs for t in range(lo, hi + 1)})
        allv = fixed_iv.get(mach.id, []) + ivs
        for t in ticks:
            box = ConstraintContainer()
            for v, lo, hi in allv:
                if lo <= t <= hi:
                    box.add(v)
            prog.add_constraint(box, LE, mach.capacity, f"machine_{mach.id}_t{t}")

    # base stock and storage
    for b in instance.bases:
        pt = b.processing_time
        disp, ready, arr = [], [], []  # (tick, var, is_free)
        base_avail = b.initial_transporters
        base_store = b.initial_transporters
        for c, free in [(c, False) for c in fixed_schedule] + [(c, True) for c in candidates]:
            if c.dispatch_base == b.id:
                if c.times[0] < ws:
                    base_avail -= 1
                    base_store -= 1
                else:
                    disp.append((c.times[0], c.var_id, free))
            if c.receive_base == b.id:
                r = c.arrival + pt
                if r < ws:
                    base_avail += 1
                else:
                    ready.append((r, c.var_id, free))
                if c.arrival < ws:
                    base_store += 1
                else:
                    arr.append((c.arrival, c.var_id, free))
        if not any(f for *_, f in disp + ready + arr):
            continue
        for t in sorted({ws} | {t for t, _, _ in disp}):
            box = ConstraintContainer()
            has_free = False
            for tk, v, free in disp:
                if tk <= t:
                    box.sub(v)
                    has_free |= free
            for tk, v, free in ready:
                if tk <= t:
                    box.add(v)
                    has_free |= free
            if has_free and len(box):
                prog.add_constraint(box, GE, -base_avail, f"avail_{b.id}_t{t}")
        for t in sorted({ws} | {t for t, _, _ in arr}):
            box = ConstraintContainer()
            has_free = False
            for tk, v, free in disp:
                if tk <= t:
                    box.sub(v)
                    has_free |= free
            for tk, v, free in arr:
                if tk <= t:
                    box.add(v)
                    has_free |= free
            if has_free and len(box):
                prog.add_constraint(box, LE, b.storage_capacity - base_store, f"storage_{b.id}_t{t}")
    return prog


# --- exact branch and bound ----------------------------------------------------


class _BranchAndBound:
    """Depth-first 0-1 search with bound propagation.

    Each node branches on a row that the all-remaining-zero completion
    violates: the child set is "first repairing variable set to 1" over the
    row's free repairing variables in (cost, index) order.  Rows that become
    tight force their free variables.  The lower bound is the running cost
    plus, for a disjoint family of all-plus-one covering rows, the cheapest
    way to meet each row's remaining demand.
    """

    def __init__(self, prog: BinaryProgram):
        self.prog = prog
        self.ids = list(prog.variables)
        idx = {v: i for i, v in enumerate(self.ids)}
        n = len(self.ids)
        self.c = [float(prog.objective[v]) for v in self.ids]
        self.var_cons: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        self.terms: list[list[tuple[int, int]]] = []
        self.L: list[float] = []
        self.U: list[float] = []
        inf = math.inf
        for k, con in enumerate(prog.constraints):
            terms = [(idx[v], a) for v, a in con.terms]
            self.terms.append(terms)
            for i, a in terms:
                self.var_cons[i].append((k, a))
            if con.relation == EQ:
                self.L.append(con.bound)
                self.U.append(con.bound)
            elif con.relation == LE:
                self.L.append(-inf)
                self.U.append(con.bound)
            else:
                self.L.append(con.bound)
                self.U.append(inf)
        m = len(self.terms)
        self.s1 = [0] * m
        self.fpos = [sum(1 for _, a in t if a > 0) for t in self.terms]
        self.fneg = [sum(1 for _, a in t if a < 0) for t in self.terms]
        self.val = [-1] * n
        self.trail: list[int] = []
        self.cost_hist: list[float] = []
        self.cost = 0.0
        self.viol = {k for k in range(m) if not self.L[k] <= 0 <= self.U[k]}
        self.fixed = [(idx[v], x) for v, x in prog.fixed.items()]
        self.neg = sorted((i for i in range(n) if self.c[i] < 0), key=lambda i: (self.c[i], i))

        # disjoint covering rows for the bound
        used: set[int] = set()
        self.cover: list[tuple[int, list[int]]] = []
        for k, terms in enumerate(self.terms):
            if self.L[k] >= 1 and terms and all(a > 0 for _, a in terms):
                vs = [i for i, _ in terms]
                if used.isdisjoint(vs):
                    used.update(vs)
                    self.cover.append((k, sorted(vs, key=lambda i: (max(self.c[i], 0.0), i))))
        self.best = math.inf
        self.best_val: list[int] | None = None
        self.nodes = 0

    # state changes

    def _assign(self, queue: list[tuple[int, int]]) -> bool:
        val, s1, fpos, fneg, L, U = self.val, self.s1, self.fpos, self.fneg, self.L, self.U
        while queue:
            i, x = queue.pop()
            cur = val[i]
            if cur != -1:
                if cur != x:
                    return False
                continue
            val[i] = x
            self.trail.append(i)
            self.cost_hist.append(self.cost)
            if x:
                self.cost += self.c[i]
            conflict = False
            tight = []
            for k, a in self.var_cons[i]:
                if a > 0:
                    fpos[k] -= 1
                    if x:
                        s1[k] += 1
                else:
                    fneg[k] -= 1
                    if x:
                        s1[k] -= 1
                s = s1[k]
                if x:
                    if L[k] <= s <= U[k]:
                        self.viol.discard(k)
                    else:
                        self.viol.add(k)
                lo = s - fneg[k]
                hi = s + fpos[k]
                if lo > U[k] or hi < L[k]:
                    conflict = True
                elif (lo == U[k] or hi == L[k]) and (fpos[k] or fneg[k]):
                    tight.append(k)
            if conflict:
                return False
            for k in tight:
                s = s1[k]
                at_upper = s - fneg[k] == U[k]
                for j, a in self.terms[k]:
                    if val[j] == -1:
                        # at the upper bound every free term must not raise the sum
                        if at_upper:
                            queue.append((j, 0 if a > 0 else 1))
                        else:
                            queue.append((j, 1 if a > 0 else 0))
        return True

    def _undo(self, mark: int) -> None:
        val, s1, fpos, fneg, L, U = self.val, self.s1, self.fpos, self.fneg, self.L, self.U
        trail = self.trail
        if len(trail) > mark:
            self.cost = self.cost_hist[mark]
        while len(trail) > mark:
            i = trail.pop()
            self.cost_hist.pop()
            x = val[i]
            val[i] = -1
            for k, a in self.var_cons[i]:
                if a > 0:
                    fpos[k] += 1
                    if x:
                        s1[k] -= 1
                else:
                    fneg[k] += 1
                    if x:
                        s1[k] += 1
                if x:
                    if L[k] <= s1[k] <= U[k]:
                        self.viol.discard(k)
                    else:
                        self.viol.add(k)

    # search

    def _bound(self) -> float:
        lb = self.cost
        val = self.val
        for i in self.neg:
            if val[i] == -1:
                lb += self.c[i]
        for k, order in self.cover:
            need = self.L[k] - self.s1[k]
            if need <= 0:
                continue
            for i in order:
                if val[i] == -1:
                    lb += max(self.c[i], 0.0)
                    need -= 1
                    if need <= 0:
                        break
        return lb

    def _dfs(self) -> None:
        self.nodes += 1
        if self._bound() >= self.best:
            return
        val = self.val
        if not self.viol:
            neg_free = [i for i in self.neg if val[i] == -1]
            if not neg_free:
                self.best = self.cost
                self.best_val = [x if x != -1 else 0 for x in val]
                return
            i = neg_free[0]
            for x in (1, 0):
                mark = len(self.trail)
                if self._assign([(i, x)]):
                    self._dfs()
                self._undo(mark)
            return

        def repairers(k):
            return self.fpos[k] if self.s1[k] < self.L[k] else self.fneg[k]

        k = min(self.viol, key=lambda k: (repairers(k), k))
        want = 1 if self.s1[k] < self.L[k] else -1
        fix = sorted((i for i, a in self.terms[k] if a == want and val[i] == -1), key=lambda i: (self.c[i], i))
        base = len(self.trail)
        for i in fix:
            mark = len(self.trail)
            if self._assign([(i, 1)]):
                self._dfs()
            self._undo(mark)
            if not self._assign([(i, 0)]):
                break
        self._undo(base)

    def run(self) -> SolveResult:
        queue = [(i, x) for i, x in self.fixed]
        ok = self._assign(queue)
        if ok:
            # rows already infeasible or tight before any assignment
            for k in range(len(self.terms)):
                lo, hi = -self.fneg[k] + self.s1[k], self.fpos[k] + self.s1[k]
                if lo > self.U[k] or hi < self.L[k]:
                    ok = False
                    break
                if (lo == self.U[k] or hi == self.L[k]) and (self.fpos[k] or self.fneg[k]):
                    at_upper = lo == self.U[k]
                    forced = [
                        (j, (0 if a > 0 else 1) if at_upper else (1 if a > 0 else 0))
                        for j, a in self.terms[k]
                        if self.val[j] == -1
                    ]
                    if not self._assign(forced):
                        ok = False
                        break
        if ok:
            limit = sys.getrecursionlimit()
            sys.setrecursionlimit(max(limit, 10 * len(self.ids) + 1000))
            try:
                self._dfs()
            finally:
                sys.setrecursionlimit(limit)
        if self.best_val is None:
            return SolveResult(Status.INFEASIBLE, {}, math.nan, self.nodes)
        assignment = {v: self.best_val[i] for i, v in enumerate(self.ids)}
        return SolveResult(Status.OPTIMAL, assignment, self.prog.evaluate(assignment), self.nodes)


def _sparse_rows(prog: BinaryProgram, idx: dict[int, int]):
    """Rewrite nested row chains as running sums.

    Stock and storage rows repeat every earlier event, so consecutive rows
    whose terms contain the previous row's terms become
    ``y_k = y_(k-1) + new terms`` with the row bounds moved onto the
    continuous ``y_k``.  Exact for any assignment; only the nonzero count
    changes.  Returns (triplets, row bounds, extra column bounds).
    """
    n = len(idx)
    rows, cols, vals = [], [], []
    row_lo, row_hi, col_lo, col_hi = [], [], [], []
    prev: dict[int, int] | None = None
    prev_col = -1
    for con in prog.constraints:
        cur = dict(con.terms)
        lo = con.bound if con.relation in (EQ, GE) else -math.inf
        hi = con.bound if con.relation in (EQ, LE) else math.inf
        chained = prev is not None and len(prev) <= len(cur) and all(cur.get(v) == a for v, a in prev.items())
        r = len(row_lo)
        if chained:
            y = n + len(col_lo)
            col_lo.append(lo)
            col_hi.append(hi)
            rows += [r, r]
            cols += [y, prev_col]
            vals += [1.0, -1.0]
            for v, a in cur.items():
                if v not in prev:
                    rows.append(r)
                    cols.append(idx[v])
                    vals.append(-float(a))
            row_lo.append(0.0)
            row_hi.append(0.0)
            prev_col = y
        else:
            # start of a possible chain: carry the row value in its own column
            y = n + len(col_lo)
            col_lo.append(lo)
            col_hi.append(hi)
            rows.append(r)
            cols.append(y)
            vals.append(1.0)
            for v, a in cur.items():
                rows.append(r)
                cols.append(idx[v])
                vals.append(-float(a))
            row_lo.append(0.0)
            row_hi.append(0.0)
            prev_col = y
        prev = cur
    return (rows, cols, vals), (row_lo, row_hi), (col_lo, col_hi)


def _solve_highs(prog: BinaryProgram) -> SolveResult:
    """Exact optimum through HiGHS; both MIP gaps are zeroed so it proves optimality."""
    import highspy
    import numpy as np

    n = len(prog.variables)
    if n == 0:
        ok = all(c.holds({}) for c in prog.constraints)
        return SolveResult(Status.OPTIMAL if ok else Status.INFEASIBLE, {}, 0.0 if ok else math.nan)
    idx = {v: i for i, v in enumerate(prog.variables)}
    (rows, cols, vals), (row_lo, row_hi), (ylo, yhi) = _sparse_rows(prog, idx)
    n_all = n + len(ylo)
    m = len(row_lo)
    inf = highspy.kHighsInf

    lb = np.zeros(n_all)
    ub = np.ones(n_all)
    for v, x in prog.fixed.items():
        lb[idx[v]] = ub[idx[v]] = x
    lb[n:] = np.clip(ylo, -inf, inf)
    ub[n:] = np.clip(yhi, -inf, inf)
    cost = np.zeros(n_all)
    cost[:n] = [prog.objective[v] for v in prog.variables]

    # column-wise storage
    cols_a = np.asarray(cols, dtype=np.int64)
    order = np.lexsort((np.asarray(rows, dtype=np.int64), cols_a))
    start = np.zeros(n_all + 1, dtype=np.int64)
    np.add.at(start, cols_a + 1, 1)
    start = np.cumsum(start)

    lp = highspy.HighsLp()
    lp.num_col_ = n_all
    lp.num_row_ = m
    lp.col_cost_ = cost
    lp.col_lower_ = lb
    lp.col_upper_ = ub
    lp.row_lower_ = np.array(row_lo, dtype=float)
    lp.row_upper_ = np.array(row_hi, dtype=float)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = start.astype(np.int32)
    lp.a_matrix_.index_ = np.asarray(rows, dtype=np.int32)[order]
    lp.a_matrix_.value_ = np.asarray(vals, dtype=float)[order]
    lp.integrality_ = [highspy.HighsVarType.kInteger] * n + [highspy.HighsVarType.kContinuous] * (n_all - n)

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", 1)
    h.setOptionValue("mip_rel_gap", 0.0)
    h.setOptionValue("mip_abs_gap", 0.0)
    h.setOptionValue("presolve", "off")
    h.passModel(lp)
    h.run()
    if h.getModelStatus() != highspy.HighsModelStatus.kOptimal:
        return SolveResult(Status.INFEASIBLE, {}, math.nan)
    x = h.getSolution().col_value
    assignment = {v: int(round(x[i])) for i, v in enumerate(prog.variables)}
    if prog.violations(assignment):
        return SolveResult(Status.INFEASIBLE, {}, math.nan)
    return SolveResult(Status.OPTIMAL, assignment, prog.evaluate(assignment), int(h.getInfo().mip_node_count))


BACKENDS = {
    "bnb": lambda prog: _BranchAndBound(prog).run(),
    "highs": _solve_highs,
}


def solve(program: BinaryProgram, backend: str = "highs") -> SolveResult:
    """Exact minimum of ``program``; ``backend`` selects the search engine."""
    try:
        engine = BACKENDS[backend]
    except KeyError:
        raise ValueError(f"unknown backend {backend!r}; choose from {sorted(BACKENDS)}") from None
    res = engine(program)
    if res.status is Status.OPTIMAL:
        job_rows = [c for c in program.constraints if c.name.startswith("job_")]
        if job_rows and not any(res.assignment[v] for c in job_rows for v, _ in c.terms):
            # job-once rows make this unreachable; reported upstream as infeasible
            return SolveResult(Status.INFEASIBLE, {}, math.nan, res.nodes)
    return res
