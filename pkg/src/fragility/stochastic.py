"""Stochastic (generalized) fragility indices.

SGFI_{r,q} is the smallest k such that a uniformly random k-subset of cases
admits permitted modifications reversing the decision with probability
exceeding r. probability_reversal estimates that probability by Monte
Carlo; sgfi finds the crossing by Polyak-Ruppert averaged stochastic
approximation plus a +-1 confirmation walk; exact_sfi_2x2 computes the
probabilities exactly on exchangeable 2x2 tables by summing multivariate
hypergeometric masses of reversible compositions.

Determinism: every Monte Carlo trial draws from its own generator seeded by
(seed, trial index), so results are bit-identical for a given (inputs,
seed, trials) regardless of thread count or scheduling.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .cases import CaseFrame, Modifier, table_from_frame
from .core import (
    UNBOUNDED,
    Index,
    _context_for,
    _exchangeable,
    _frame_cell_codes,
    _modifier_cell_perms,
    _modifier_table,
    gfi_greedy,
    is_unbounded,
    reversible,
)
from .errors import DiagnosticError, InvalidParameterError
from .stats import Table2x2, TestSpec, is_significant

__all__ = [
    "ReversalEstimate",
    "SgfiConfig",
    "SgfiIteration",
    "SgfiResult",
    "ExactSfiResult",
    "probability_reversal",
    "sgfi",
    "exact_sfi_2x2",
]

RValue = Union[float, str]  # a probability level in [0, 1) or the "1-" sentinel

# exact composition enumeration refuses subset sizes beyond this
COMPOSITION_GUARD = 300
# exhaustive worst-case subset search (r = "1-", non-exchangeable) refuses
# frames larger than this
WORST_CASE_GUARD = 16


@dataclass(frozen=True)
class ReversalEstimate:
    """Monte Carlo estimate of P[a uniform k-subset admits a reversal]."""

    k: int
    p_hat: float
    trials: int
    reversals: int
    seed: int


@dataclass(frozen=True)
class SgfiConfig:
    """Knobs for the stochastic root finder.

    r is the probability level ("1-" asks for the almost-sure index);
    trials is the per-iteration Monte Carlo size B; iterations is the
    Robbins-Monro horizon T; step_scale a0 defaults to n/4; the final
    answer is confirmed with confirm_factor * trials per estimate.
    """

    r: RValue = 0.5
    trials: int = 200
    iterations: int = 60
    step_scale: Optional[float] = None
    gamma: float = 0.75
    burn_in: float = 0.2
    confirm_factor: int = 4
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if isinstance(self.r, str):
            if self.r != "1-":
                raise InvalidParameterError(f"r must be in [0, 1) or '1-', got {self.r!r}")
        elif not 0.0 <= float(self.r) < 1.0:
            raise InvalidParameterError(f"r must be in [0, 1) or '1-', got {self.r!r}")
        if self.trials < 1:
            raise InvalidParameterError("trials must be >= 1")
        if self.iterations < 2:
            raise InvalidParameterError("iterations must be >= 2")
        if self.step_scale is not None and self.step_scale <= 0:
            raise InvalidParameterError("step_scale must be positive")
        if not 0.5 < self.gamma <= 1.0:
            raise InvalidParameterError("gamma must lie in (0.5, 1]")
        if not 0.0 <= self.burn_in < 1.0:
            raise InvalidParameterError("burn_in must lie in [0, 1)")
        if self.confirm_factor < 1:
            raise InvalidParameterError("confirm_factor must be >= 1")
        if self.seed < 0:
            raise InvalidParameterError("seed must be >= 0")
        if self.threads < 1:
            raise InvalidParameterError("threads must be >= 1")


@dataclass(frozen=True)
class SgfiIteration:
    """One Robbins-Monro step: estimate at k_eval, then move to k_next."""

    step: int
    k_eval: int
    p_hat: float
    k_next: float


@dataclass(frozen=True)
class SgfiResult:
    index: Index
    initial_significant: bool
    p_before: float
    r: RValue
    polyak_mean: float
    trajectory: tuple[SgfiIteration, ...]
    final_at: Optional[ReversalEstimate]
    final_below: Optional[ReversalEstimate]
    config: SgfiConfig

    @property
    def unbounded(self) -> bool:
        return is_unbounded(self.index)


@dataclass(frozen=True)
class ExactSfiResult:
    index: Index
    p_at: Optional[float]
    p_below: Optional[float]
    initial_significant: bool
    p_before: float

    @property
    def unbounded(self) -> bool:
        return is_unbounded(self.index)


def _derive_seed(*parts: int) -> int:
    ss = np.random.SeedSequence(entropy=tuple(int(x) for x in parts))
    return int(ss.generate_state(1, np.uint64)[0])


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trial),))
    return np.random.Generator(np.random.PCG64(ss))


def probability_reversal(
    k: int,
    frame: CaseFrame,
    modifier: Modifier,
    test: TestSpec,
    trials: int = 200,
    seed: int = 0,
    threads: int = 1,
) -> ReversalEstimate:
    """Monte Carlo estimate of P[a uniform k-subset admits a permitted
    reversal].

    Exchangeable instances sample cell compositions and consult the exact
    rectangle oracle; general instances sample case subsets and run the
    restricted greedy search. Results depend only on (inputs, seed,
    trials), never on the thread count.
    """
    if not 0 <= k <= frame.n:
        raise InvalidParameterError(f"k must lie in [0, {frame.n}], got {k}")
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    if threads < 1:
        raise InvalidParameterError("threads must be >= 1")

    if _exchangeable(frame, modifier, test):
        ctx = _context_for(
            table_from_frame(frame), test, _modifier_cell_perms(modifier)
        )
        ctx.ensure(k)
        cells = _frame_cell_codes(frame)
        colors = np.asarray([int(np.sum(cells == c)) for c in range(4)])

        def run_trial(t: int) -> bool:
            rng = _trial_rng(seed, t)
            comp = rng.multivariate_hypergeometric(colors, k)
            return ctx.comp_reversible((int(comp[0]), int(comp[1]), int(comp[2]), int(comp[3])))

    else:
        ids = frame.case_ids

        def run_trial(t: int) -> bool:
            rng = _trial_rng(seed, t)
            pos = rng.choice(frame.n, size=k, replace=False)
            sub = ids[np.sort(pos)]
            return not is_unbounded(gfi_greedy(frame, modifier, test, restriction=sub).index)

    if threads == 1:
        hits = sum(1 for t in range(trials) if run_trial(t))
    else:
        def run_chunk(chunk: np.ndarray) -> int:
            return sum(1 for t in chunk if run_trial(int(t)))

        with ThreadPoolExecutor(max_workers=threads) as ex:
            hits = sum(ex.map(run_chunk, np.array_split(np.arange(trials), threads)))

    return ReversalEstimate(
        k=k, p_hat=hits / trials, trials=trials, reversals=hits, seed=seed
    )


def _deterministic_index(frame: CaseFrame, modifier: Modifier, test: TestSpec) -> int:
    """Size of the package's deterministic minimal reversal: the exact
    permitted minimum on exchangeable instances, the greedy count
    otherwise. Caller guarantees the full frame is reversible."""
    if _exchangeable(frame, modifier, test):
        ctx = _context_for(
            table_from_frame(frame), test, _modifier_cell_perms(modifier)
        )
        found = ctx.min_cost()
        if found is None:  # pragma: no cover - contradicts reversibility
            raise DiagnosticError("reversible frame has no minimal reversal")
        return found[0]
    res = gfi_greedy(frame, modifier, test)
    if is_unbounded(res.index):  # pragma: no cover - contradicts reversibility
        raise DiagnosticError("reversible frame defeated the greedy search")
    return abs(res.index)


def _worst_case_k(frame: CaseFrame, modifier: Modifier, test: TestSpec) -> int:
    """Smallest k such that EVERY k-subset admits a permitted reversal
    (the r = '1-' index). Caller guarantees the full frame is reversible."""
    if _exchangeable(frame, modifier, test):
        table = table_from_frame(frame)
        perms = _modifier_cell_perms(modifier)
        ctx = _context_for(table, test, perms)
        return _worst_case_exchangeable(ctx, table, perms) + 1
    if frame.n > WORST_CASE_GUARD:
        raise InvalidParameterError(
            f"r='1-' needs exhaustive subset search; frame has {frame.n} cases "
            f"(guard: {WORST_CASE_GUARD})"
        )
    ids = [int(c) for c in frame.case_ids]
    for k in range(1, frame.n + 1):
        if all(
            not is_unbounded(gfi_greedy(frame, modifier, test, restriction=sub).index)
            for sub in itertools.combinations(ids, k)
        ):
            return k
    raise DiagnosticError("reversible frame has no almost-sure index")  # pragma: no cover


def _worst_case_exchangeable(ctx, table: Table2x2, perms) -> int:
    """Maximum size of a NON-reversing composition, by scanning extents of
    the permitted-shift rectangle against the full reversal grid."""
    ctx.ensure_full()
    a, b, c, d = table.as_tuple()
    pa, pb, pc, pd = perms
    # members of permission-less cells enlarge a subset without enlarging
    # its shift rectangle
    base = (0 if pa else a) + (0 if pb else b) + (0 if pc else c) + (0 if pd else d)
    A = a if pa else 0
    B = b if pb else 0
    C = c if pc else 0
    D = d if pd else 0
    S = ctx.prefix
    gi_lo, gj_lo = ctx.gi_lo, ctx.gj_lo
    # per-column prefix over rows: Pi[x, j] = reversals in rows < x, column j
    Pi = S[:, 1:] - S[:, :-1]
    j0 = -gj_lo
    kb_rows = np.arange(B + 1) - gi_lo + 1  # row index just past i = kb
    best = -1
    for ka in range(A + 1):
        lo_row = -ka - gi_lo
        clean = Pi[kb_rows] == Pi[lo_row][None, :]  # (B+1, J)
        valid = clean[:, j0]
        if not valid.any():
            continue
        down = np.full(B + 1, 0, dtype=np.int64)
        up = np.full(B + 1, 0, dtype=np.int64)
        if C > 0:
            dn = ~clean[:, j0 - 1 :: -1][:, :C]
            hasd = dn.any(axis=1)
            down = np.where(hasd, dn.argmax(axis=1), C)
        if D > 0:
            upb = ~clean[:, j0 + 1 :][:, :D]
            hasu = upb.any(axis=1)
            up = np.where(hasu, upb.argmax(axis=1), D)
        total = ka + np.arange(B + 1) + down + up
        total = np.where(valid, total, -1)
        m = int(total.max())
        if m > best:
            best = m
    return base + best


def sgfi(
    frame: CaseFrame,
    modifier: Modifier,
    test: TestSpec,
    config: Optional[SgfiConfig] = None,
) -> SgfiResult:
    """Stochastic generalized fragility index SGFI_{r, q}.

    Finds the root of P[reversal by a uniform k-subset] - r by averaged
    stochastic approximation (k_{t+1} = clamp(k_t - a_t (p_hat - r), 1, n)
    with a_t = a0 / t^gamma), then walks the rounded Polyak average by +-1
    steps under confirm_factor-times-larger estimates until
    p_hat(k) > r >= p_hat(k-1).

    r = 0 (or r below the smallest achievable positive subset probability)
    reduces to the deterministic index; r = "1-" asks for the smallest k
    such that every k-subset reverses, computed without sampling.
    """
    config = config or SgfiConfig()
    n = frame.n
    p0 = test.p_value(frame)
    sig0 = is_significant(p0, test.alpha)

    def result(index, polyak=math.nan, traj=(), at=None, below=None):
        return SgfiResult(
            index=index,
            initial_significant=sig0,
            p_before=p0,
            r=config.r,
            polyak_mean=polyak,
            trajectory=tuple(traj),
            final_at=at,
            final_below=below,
            config=config,
        )

    if not reversible(frame, modifier, test):
        return result(UNBOUNDED)

    if config.r == "1-":
        k = _worst_case_k(frame, modifier, test)
        return result(k if sig0 else -k)

    r = float(config.r)
    det = _deterministic_index(frame, modifier, test)
    # below the probability of hitting one specific det-sized subset, the
    # crossing provably sits at the deterministic index
    if r == 0.0 or math.log(r) < -_lchoose(n, det):
        return result(det if sig0 else -det)

    a0 = config.step_scale if config.step_scale is not None else n / 4.0
    # the crossing sits at or above the deterministic index, so that is a
    # far better anchor than n/2 when r is away from 1/2
    k_real = float(det)
    traj: list[SgfiIteration] = []
    for t in range(1, config.iterations + 1):
        k_eval = int(min(max(round(k_real), 1), n))
        est = probability_reversal(
            k_eval, frame, modifier, test,
            trials=config.trials,
            seed=_derive_seed(config.seed, 1, t),
            threads=config.threads,
        )
        step = (a0 / t**config.gamma) * (est.p_hat - r)
        k_real = min(max(k_real - step, 1.0), float(n))
        traj.append(SgfiIteration(step=t, k_eval=k_eval, p_hat=est.p_hat, k_next=k_real))

    burn = int(math.ceil(config.iterations * config.burn_in))
    tail = [it.k_next for it in traj[burn:]]
    polyak = float(np.mean(tail))
    k_hat = int(min(max(round(polyak), 1), n))

    conf_trials = config.trials * config.confirm_factor

    def confirm(kk: int) -> ReversalEstimate:
        if kk <= 0:
            # an empty subset never reverses; exact, no sampling needed
            return ReversalEstimate(
                k=0, p_hat=0.0, trials=conf_trials, reversals=0,
                seed=_derive_seed(config.seed, 2, 0),
            )
        return probability_reversal(
            kk, frame, modifier, test,
            trials=conf_trials,
            seed=_derive_seed(config.seed, 2, kk),
            threads=config.threads,
        )

    walk_guard = config.iterations
    steps = 0
    est_at = confirm(k_hat)
    if est_at.p_hat > r:
        below = confirm(k_hat - 1)
        while k_hat > 1 and below.p_hat > r:
            steps += 1
            if steps > walk_guard:
                raise DiagnosticError(
                    f"confirmation walk failed to bracket r={r} within "
                    f"{walk_guard} steps",
                    trajectory=tuple(traj),
                )
            k_hat -= 1
            est_at = below
            below = confirm(k_hat - 1)
    else:
        below = est_at
        while est_at.p_hat <= r:
            steps += 1
            if steps > walk_guard or k_hat >= n:
                raise DiagnosticError(
                    f"confirmation walk failed to bracket r={r} within "
                    f"{walk_guard} steps",
                    trajectory=tuple(traj),
                )
            below = est_at
            k_hat += 1
            est_at = confirm(k_hat)

    return result(
        k_hat if sig0 else -k_hat,
        polyak=polyak,
        traj=traj,
        at=est_at,
        below=below,
    )


def _lchoose(n: int, k: int) -> float:
    if k < 0 or k > n:
        return -math.inf
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def exact_sfi_2x2(
    table: Table2x2,
    modifier: Modifier,
    test: TestSpec,
    r: float = 0.5,
    max_k: int = COMPOSITION_GUARD,
) -> ExactSfiResult:
    """Exact stochastic fragility index of an exchangeable 2x2 table.

    Sums multivariate hypergeometric masses of reversible compositions to
    get P[E_k] exactly, returning the minimal k with P[E_k] > r along with
    the crossing probabilities. UNBOUNDED when even the full table admits
    no permitted reversal; a guard refuses k beyond max_k.
    """
    if isinstance(r, str) or not 0.0 <= float(r) < 1.0:
        raise InvalidParameterError(f"r must lie in [0, 1), got {r!r}")
    r = float(r)
    cells = table.as_tuple()
    if _modifier_table(modifier).as_tuple() != cells:
        raise InvalidParameterError("modifier was built over a different table")
    ctx = _context_for(table, test, _modifier_cell_perms(modifier))
    p0, sig0 = ctx.p0, ctx.sig0
    if not ctx.comp_reversible(cells):
        return ExactSfiResult(UNBOUNDED, None, None, sig0, p0)
    prev = 0.0
    for k in range(1, min(table.n, max_k) + 1):
        pk = ctx.prob_reversal(k)
        if pk > r:
            index = k if sig0 else -k
            return ExactSfiResult(index, pk, prev, sig0, p0)
        prev = pk
    raise InvalidParameterError(
        f"composition enumeration guard: P[E_k] has not crossed r={r} by k={max_k}"
    )
