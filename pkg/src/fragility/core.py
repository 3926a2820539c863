"""Fragility searches: the exact signed index for 2x2 tables, the greedy
generalized index over permitted case-level modifications, and exact subset
reversibility for exchangeable tables.

Sign convention: a finite index is positive when the original decision was
significant (modifications destroy significance) and negative when it was
not (modifications create it). UNBOUNDED marks decisions no permitted set
of modifications can reverse.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np

from ._kernels import log_factorials, prefix_sums, reversal_grid
from .cases import CaseFrame, ModificationPlan, Modifier, table_from_frame
from .errors import InvalidParameterError, UnconvergedFitError
from .stats import Table2x2, TestSpec, is_significant

__all__ = [
    "UNBOUNDED",
    "is_unbounded",
    "FragilityResult",
    "fi_2x2_exact",
    "gfi_greedy",
    "reversible",
    "reversible_2x2_exact",
]


class _Unbounded:
    """Singleton sentinel: no permitted modification set reverses the decision."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNBOUNDED"

    def __reduce__(self):
        return (_Unbounded, ())


UNBOUNDED = _Unbounded()

Index = Union[int, _Unbounded]


def is_unbounded(index: Index) -> bool:
    return isinstance(index, _Unbounded)


@dataclass(frozen=True)
class FragilityResult:
    """Outcome of a fragility search.

    index is the signed count of outcome modifications (UNBOUNDED when no
    reversal exists); plan realizes one minimizing (or greedy) reversal.
    """

    index: Index
    plan: ModificationPlan
    initial_significant: bool
    p_before: float
    p_after: Optional[float]

    def __post_init__(self):
        if is_unbounded(self.index):
            if len(self.plan) != 0 or self.p_after is not None:
                raise InvalidParameterError("unbounded result cannot carry a plan")
            return
        if self.index == 0:
            raise InvalidParameterError("a finite index is never zero")
        if (self.index > 0) != self.initial_significant:
            raise InvalidParameterError("index sign must reflect the initial decision")
        if len(self.plan) != abs(self.index):
            raise InvalidParameterError("plan length must equal |index|")

    @property
    def unbounded(self) -> bool:
        return is_unbounded(self.index)


# ----------------------------------------------------------------------
# exchangeable-table machinery
# ----------------------------------------------------------------------


class _TableReversal:
    """Reversal geometry of a 2x2 table under net event shifts.

    Lazily builds a boolean grid over shifts (i, j) -- restricted to the
    per-cell permitted directions -- marking where the test decision flips,
    plus 2D prefix sums so "does this shift rectangle contain a reversal?"
    is O(1). Windows grow by doubling, so total work is at most twice the
    final grid.
    """

    def __init__(
        self,
        table: Table2x2,
        alpha: float,
        perms: tuple[bool, bool, bool, bool] = (True, True, True, True),
        table_p=None,
        kernel: bool = True,
    ):
        self.table = table
        self.alpha = float(alpha)
        self.perms = tuple(bool(x) for x in perms)
        if not kernel and table_p is None:
            raise InvalidParameterError("generic context needs a table_p callable")
        self.kernel = kernel
        self._table_p = table_p
        self.lf = log_factorials(table.n)
        self.p0 = self.p_of_shift(0, 0)
        self.sig0 = self.p0 < self.alpha
        self._K = -1
        self.grid: Optional[np.ndarray] = None
        self.prefix: Optional[np.ndarray] = None
        self.gi_lo = self.gj_lo = 0

    def p_of_shift(self, i: int, j: int) -> float:
        t = self.table
        if self.kernel:
            from ._kernels import fisher_p

            return float(fisher_p(self.lf, t.a + i, t.b - i, t.c + j, t.d - j))
        return float(self._table_p(t.a + i, t.b - i, t.c + j, t.d - j))

    def _extents(self, K: int) -> tuple[int, int, int, int]:
        t = self.table
        pa, pb, pc, pd = self.perms
        return (
            min(t.a, K) if pa else 0,
            min(t.b, K) if pb else 0,
            min(t.c, K) if pc else 0,
            min(t.d, K) if pd else 0,
        )

    def ensure(self, K: int) -> None:
        """Make the grid cover all shifts reachable by K flips per direction."""
        if K <= self._K:
            return
        t = self.table
        K = min(max(K, 8), t.n)
        if self._K >= 0:
            K = min(max(K, 2 * self._K), t.n)
        ea, eb, ec, ed = self._extents(K)
        gi_lo, gi_hi = -ea, eb
        gj_lo, gj_hi = -ec, ed
        if self.kernel:
            grid = reversal_grid(
                self.lf, t.a, t.b, t.c, t.d, self.alpha,
                1 if self.sig0 else 0, gi_lo, gi_hi, gj_lo, gj_hi,
            )
        else:
            grid = np.zeros((gi_hi - gi_lo + 1, gj_hi - gj_lo + 1), dtype=np.uint8)
            for ii, i in enumerate(range(gi_lo, gi_hi + 1)):
                for jj, j in enumerate(range(gj_lo, gj_hi + 1)):
                    sig = self.p_of_shift(i, j) < self.alpha
                    if sig != self.sig0:
                        grid[ii, jj] = 1
        self.grid = grid
        self.prefix = prefix_sums(grid)
        self.gi_lo, self.gj_lo = gi_lo, gj_lo
        self._K = K

    def ensure_full(self) -> None:
        t = self.table
        self.ensure(max(t.a, t.b, t.c, t.d))

    def rect_has_reversal(self, i0: int, i1: int, j0: int, j1: int) -> bool:
        """Any reversing shift with i0 <= i <= i1 and j0 <= j <= j1?
        Bounds must already lie within the ensured window."""
        S = self.prefix
        x0, x1 = i0 - self.gi_lo, i1 - self.gi_lo
        y0, y1 = j0 - self.gj_lo, j1 - self.gj_lo
        cnt = S[x1 + 1, y1 + 1] - S[x0, y1 + 1] - S[x1 + 1, y0] + S[x0, y0]
        return bool(cnt > 0)

    def comp_reversible(self, comp: tuple[int, int, int, int]) -> bool:
        """Can a subset with this 4-cell composition reverse the decision,
        flipping each member at most once and only in permitted directions?"""
        k1, k2, k3, k4 = comp
        self.ensure(max(k1, k2, k3, k4))
        pa, pb, pc, pd = self.perms
        return self.rect_has_reversal(
            -k1 if pa else 0,
            k2 if pb else 0,
            -k3 if pc else 0,
            k4 if pd else 0,
        )

    def prob_reversal(self, k: int) -> float:
        """Exact P[a uniform k-subset admits a permitted reversal]."""
        from ._kernels import comp_prob

        t = self.table
        self.ensure(k)
        pa, pb, pc, pd = self.perms
        return float(
            comp_prob(
                self.lf, self.prefix, t.a, t.b, t.c, t.d, k,
                pa, pb, pc, pd, self.gi_lo, self.gj_lo,
            )
        )

    def min_cost(self) -> Optional[tuple[int, tuple[int, int]]]:
        """Minimum |i|+|j| over permitted reversing shifts, with the
        realizing shift (ties: smallest i, then smallest j); None if the
        whole permitted lattice contains no reversal."""
        t = self.table
        K = 8
        while True:
            self.ensure(K)
            K = self._K
            hit = np.argwhere(self.grid == 1)
            if hit.size:
                i = hit[:, 0] + self.gi_lo
                j = hit[:, 1] + self.gj_lo
                cost = np.abs(i) + np.abs(j)
                best = int(cost.min())
                if best <= K:
                    # argwhere is row-major, so the first minimal-cost hit
                    # already has the smallest (i, j)
                    at = int(np.argmax(cost == best))
                    return best, (int(i[at]), int(j[at]))
            if K >= max(t.a, t.b, t.c, t.d):
                return None
            K *= 2


_CTX_CACHE: "OrderedDict[tuple, _TableReversal]" = OrderedDict()
_CTX_CACHE_MAX = 16


def _fisher_context(
    table: Table2x2, alpha: float, perms: tuple[bool, bool, bool, bool]
) -> _TableReversal:
    key = (table.as_tuple(), alpha, perms)
    ctx = _CTX_CACHE.get(key)
    if ctx is None:
        ctx = _TableReversal(table, alpha, perms=perms, kernel=True)
        _CTX_CACHE[key] = ctx
        while len(_CTX_CACHE) > _CTX_CACHE_MAX:
            _CTX_CACHE.popitem(last=False)
    else:
        _CTX_CACHE.move_to_end(key)
    return ctx


def _context_for(
    table: Table2x2,
    test: TestSpec,
    perms: tuple[bool, bool, bool, bool] = (True, True, True, True),
) -> _TableReversal:
    if test.table_p is None:
        raise InvalidParameterError(f"test {test.name!r} is not table-reducible")
    if test.kernel == "fisher":
        return _fisher_context(table, test.alpha, perms)
    return _TableReversal(table, test.alpha, perms=perms, table_p=test.table_p, kernel=False)


def _frame_cell_codes(frame: CaseFrame) -> np.ndarray:
    """Cell of each case in table orientation: 0=a, 1=b, 2=c, 3=d."""
    return frame.arm_codes * 2 + frame.outcome_codes


def _modifier_cell_perms(modifier: Modifier) -> tuple[bool, bool, bool, bool]:
    """Per-cell permission to flip to the opposite outcome (binary only).
    Cells with no member are reported False (vacuous)."""
    if not modifier.cell_uniform:
        raise InvalidParameterError("modifier is not cell-uniform")
    if len(modifier.outcome_levels) != 2:
        raise InvalidParameterError("cell permissions need a binary outcome")
    pm = modifier.probs >= modifier.q
    cells = modifier.base_arm_codes * 2 + modifier.base_outcome_codes
    out = []
    for cell in range(4):
        rows = np.nonzero(cells == cell)[0]
        if rows.size == 0:
            out.append(False)
        else:
            target = 1 - (cell % 2)
            out.append(bool(pm[rows[0], target]))
    return tuple(out)


def _modifier_table(modifier: Modifier) -> Table2x2:
    cells = modifier.base_arm_codes * 2 + modifier.base_outcome_codes
    counts = [int(np.sum(cells == c)) for c in range(4)]
    return Table2x2(*counts)


def _exchangeable(frame: CaseFrame, modifier: Modifier, test: TestSpec) -> bool:
    return (
        test.table_p is not None
        and modifier.cell_uniform
        and len(frame.arm_levels) <= 2
        and len(frame.outcome_levels) == 2
    )


# ----------------------------------------------------------------------
# public operations
# ----------------------------------------------------------------------


def fi_2x2_exact(table: Table2x2, test: TestSpec) -> FragilityResult:
    """Exact signed fragility index of a 2x2 table.

    Searches net event shifts (i, j) for the cheapest |i| + |j| whose
    shifted table flips the decision; the plan realizes that shift on the
    canonical long-format frame (ids 0..n-1 in cell order a, b, c, d).
    """
    ctx = _context_for(table, test)
    p0, sig0 = ctx.p0, ctx.sig0
    found = ctx.min_cost()
    if found is None:
        return FragilityResult(UNBOUNDED, ModificationPlan(()), sig0, p0, None)
    cost, (i, j) = found
    plan = _plan_for_shift(table, i, j)
    p_after = ctx.p_of_shift(i, j)
    return FragilityResult(cost if sig0 else -cost, plan, sig0, p0, p_after)


def _plan_for_shift(table: Table2x2, i: int, j: int) -> ModificationPlan:
    a, b, c, d = table.as_tuple()
    entries: list[tuple[int, str]] = []
    if i < 0:
        entries += [(cid, "nonevent") for cid in range(0, -i)]
    elif i > 0:
        entries += [(cid, "event") for cid in range(a, a + i)]
    if j < 0:
        entries += [(cid, "nonevent") for cid in range(a + b, a + b - j)]
    elif j > 0:
        entries += [(cid, "event") for cid in range(a + b + c, a + b + c + j)]
    return ModificationPlan(tuple(entries))


def gfi_greedy(
    frame: CaseFrame,
    modifier: Modifier,
    test: TestSpec,
    restriction: Optional[Iterable[int]] = None,
) -> FragilityResult:
    """Greedy generalized fragility index.

    Repeatedly applies the permitted single-case outcome change that moves
    the p-value furthest toward the reversal boundary (each case modified
    at most once, ties broken by lowest case id then smallest outcome
    label), until the decision flips or candidates run out (UNBOUNDED).
    restriction limits the modifiable cases to the given ids.
    """
    if modifier.probs.shape[0] != frame.n:
        raise InvalidParameterError("modifier was built for a different frame")
    p0 = test.p_value(frame)
    sig0 = is_significant(p0, test.alpha)
    allowed = np.zeros(frame.n, dtype=bool)
    if restriction is None:
        allowed[:] = True
    else:
        allowed[frame.positions_of(restriction)] = True

    available = modifier.permitted_matrix() & allowed[:, None]
    levels = frame.outcome_levels
    L = len(levels)
    y = np.array(frame.outcome_codes)
    tabular = (
        test.table_p is not None and len(frame.arm_levels) <= 2 and L == 2
    )
    fast_eval = None
    if not tabular and test.make_fast_eval is not None and L == 2:
        fast_eval = test.make_fast_eval(frame)
        fast_eval.refit(y.astype(np.float64))

    entries: list[tuple[int, str]] = []
    p_cur = p0
    for step in range(1, frame.n + 1):
        rows = np.nonzero(available.any(axis=1))[0]
        if rows.size == 0:
            break
        cands: list[tuple[float, int, str, int, int]] = []
        if tabular:
            t = _counts(frame.arm_codes, y)
            cell_p: dict[int, float] = {}
            for r in rows:
                m = 1 - y[r]  # binary: the only candidate level
                if not available[r, m]:
                    continue
                cell = int(frame.arm_codes[r] * 2 + y[r])
                if cell not in cell_p:
                    cell_p[cell] = test.table_p(*_moved(t, cell))
                cands.append(
                    (cell_p[cell], int(frame.case_ids[r]), levels[m], int(r), int(m))
                )
        elif fast_eval is not None:
            targets = 1 - y[rows]
            usable = available[rows, targets]
            rows = rows[usable]
            if rows.size:
                ps = fast_eval.p_after_flips(y.astype(np.float64), rows)
                for p, r in zip(ps, rows):
                    m = 1 - y[r]
                    cands.append(
                        (float(p), int(frame.case_ids[r]), levels[m], int(r), int(m))
                    )
        else:
            for r in rows:
                for m in range(L):
                    if not available[r, m]:
                        continue
                    y2 = np.array(y)
                    y2[r] = m
                    p = test.p_value(frame.replace_outcomes(y2))
                    cands.append(
                        (float(p), int(frame.case_ids[r]), levels[m], int(r), int(m))
                    )
        best = _select_candidate(cands, sig0)
        if best is None:
            if cands:
                raise UnconvergedFitError(
                    "no candidate modification produced a usable p-value"
                )
            break
        p_new, cid, label, r, m = best
        y[r] = m
        available[r, :] = False
        entries.append((cid, label))
        if fast_eval is not None:
            # exact refit: authoritative p for the decision check, and the
            # warm start for the next step
            p_new = fast_eval.refit(y.astype(np.float64))
        p_cur = p_new
        if is_significant(p_cur, test.alpha) != sig0:
            index = step if sig0 else -step
            return FragilityResult(
                index, ModificationPlan(tuple(entries)), sig0, p0, p_cur
            )
    return FragilityResult(UNBOUNDED, ModificationPlan(()), sig0, p0, None)


def _counts(arm_codes: np.ndarray, y: np.ndarray) -> tuple[int, int, int, int]:
    a = int(np.sum((arm_codes == 0) & (y == 0)))
    b = int(np.sum((arm_codes == 0) & (y == 1)))
    c = int(np.sum((arm_codes == 1) & (y == 0)))
    d = int(np.sum((arm_codes == 1) & (y == 1)))
    return a, b, c, d


def _moved(t: tuple[int, int, int, int], cell: int) -> tuple[int, int, int, int]:
    """Counts after moving one case out of `cell` to its opposite outcome."""
    a, b, c, d = t
    if cell == 0:
        return a - 1, b + 1, c, d
    if cell == 1:
        return a + 1, b - 1, c, d
    if cell == 2:
        return a, b, c - 1, d + 1
    return a, b, c + 1, d - 1


def _select_candidate(cands, sig0):
    """Best candidate under the step objective with deterministic ties:
    maximize p when initially significant, minimize otherwise; ties go to
    the lowest case id, then the smallest outcome label. NaN p-values are
    unusable and skipped."""
    best = None
    for cand in cands:
        p, cid, label = cand[0], cand[1], cand[2]
        if math.isnan(p):
            continue
        if best is None:
            best = cand
            continue
        if p == best[0]:
            if (cid, label) < (best[1], best[2]):
                best = cand
        elif (p > best[0]) if sig0 else (p < best[0]):
            best = cand
    return best


def reversible(
    frame: CaseFrame,
    modifier: Modifier,
    test: TestSpec,
    restriction: Optional[Iterable[int]] = None,
) -> bool:
    """Can permitted modifications of the (restricted) cases reverse the
    decision?

    Exchangeable instances (table-reducible test, cell-uniform modifier,
    binary two-arm frame) are answered exactly through the composition
    oracle; everything else falls back to the greedy search.
    """
    if _exchangeable(frame, modifier, test):
        ctx = _context_for(
            table_from_frame(frame), test, _modifier_cell_perms(modifier)
        )
        cells = _frame_cell_codes(frame)
        if restriction is not None:
            cells = cells[frame.positions_of(restriction)]
        comp = tuple(int(np.sum(cells == c)) for c in range(4))
        return ctx.comp_reversible(comp)
    return not is_unbounded(gfi_greedy(frame, modifier, test, restriction).index)


def reversible_2x2_exact(
    table: Table2x2,
    composition: tuple[int, int, int, int],
    modifier: Modifier,
    test: TestSpec,
) -> bool:
    """Ground truth for subset reversibility on exchangeable tables.

    composition counts the subset's members per cell (a, b, c, d). The
    modifier must be cell-uniform and built over a frame aggregating to
    `table`.
    """
    comp = tuple(int(x) for x in composition)
    if len(comp) != 4 or any(x < 0 for x in comp):
        raise InvalidParameterError(f"invalid composition {composition!r}")
    cells = table.as_tuple()
    if any(comp[i] > cells[i] for i in range(4)):
        raise InvalidParameterError(
            f"composition {comp} exceeds cell counts {cells}"
        )
    if _modifier_table(modifier).as_tuple() != cells:
        raise InvalidParameterError("modifier was built over a different table")
    ctx = _context_for(table, test, _modifier_cell_perms(modifier))
    return ctx.comp_reversible(comp)
