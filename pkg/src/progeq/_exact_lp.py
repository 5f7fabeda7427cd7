"""Dense two-phase simplex over Fractions (Bland's rule).

Solves  min c·x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0.
Small problems only; exactness is the point.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

F = Fraction


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: list | None = None
    value: Fraction | None = None


def _pivot(tab, basis, row, col):
    prow = tab[row]
    pv = prow[col]
    if pv != 1:
        prow[:] = [v / pv for v in prow]
    for r, line in enumerate(tab):
        if r != row:
            f = line[col]
            if f:
                line[:] = [a - f * b for a, b in zip(line, prow)]
    basis[row] = col


def _run(tab, basis, ncols, allowed):
    """Minimise the objective stored in the last row (as reduced costs)."""
    m = len(tab) - 1
    obj = tab[m]
    while True:
        col = next((j for j in range(ncols) if allowed[j] and obj[j] < 0), None)
        if col is None:
            return "optimal"
        best = None
        for r in range(m):
            a = tab[r][col]
            if a > 0:
                ratio = tab[r][-1] / a
                if best is None or ratio < best[0] or (ratio == best[0] and basis[r] < basis[best[1]]):
                    best = (ratio, r)
        if best is None:
            return "unbounded"
        _pivot(tab, basis, best[1], col)


def linprog_exact(c: Sequence, A_ub: Sequence[Sequence] = (), b_ub: Sequence = (),
                  A_eq: Sequence[Sequence] = (), b_eq: Sequence = ()) -> LPResult:
    nvar = len(c)
    rows = []
    for a, b in zip(A_ub, b_ub):
        rows.append(([F(v) for v in a], F(b), "ub"))
    for a, b in zip(A_eq, b_eq):
        rows.append(([F(v) for v in a], F(b), "eq"))
    n_slack = sum(1 for r in rows if r[2] == "ub")
    m = len(rows)
    ncols = nvar + n_slack + m  # variables, slacks, artificials
    tab = []
    basis = []
    s = 0
    for k, (a, b, kind) in enumerate(rows):
        line = list(a) + [F(0)] * (n_slack + m) + [b]
        if kind == "ub":
            line[nvar + s] = F(1)
            s += 1
        if b < 0:
            line = [-v for v in line]
        line[nvar + n_slack + k] = F(1)
        tab.append(line)
        basis.append(nvar + n_slack + k)
    # phase one: minimise the sum of artificials
    obj = [F(0)] * (ncols + 1)
    for line in tab:
        for j in range(nvar + n_slack):
            obj[j] -= line[j]
        obj[-1] -= line[-1]
    tab.append(obj)
    allowed = [True] * (nvar + n_slack) + [False] * m
    _run(tab, basis, ncols, allowed)
    if tab[-1][-1] != 0:
        return LPResult("infeasible")
    # drive remaining artificials out of the basis
    for r in range(m):
        if basis[r] >= nvar + n_slack:
            col = next((j for j in range(nvar + n_slack) if tab[r][j] != 0), None)
            if col is not None:
                _pivot(tab, basis, r, col)
    # phase two
    cz = [F(v) for v in c] + [F(0)] * (n_slack + m)
    obj = cz + [F(0)]
    for r in range(m):
        cb = cz[basis[r]]
        if cb:
            obj = [o - cb * v for o, v in zip(obj, tab[r])]
    tab[-1] = obj
    status = _run(tab, basis, ncols, allowed)
    if status == "unbounded":
        return LPResult("unbounded")
    x = [F(0)] * nvar
    for r in range(m):
        if basis[r] < nvar:
            x[basis[r]] = tab[r][-1]
    value = sum((F(ci) * xi for ci, xi in zip(c, x)), F(0))
    return LPResult("optimal", x, value)
