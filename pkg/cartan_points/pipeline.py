from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Iterable, Iterator, Optional, Sequence

from mpmath import mp, mpf

from . import __version__
from .bounds import BoundLedger, baker_B0, companion_spread, davenport_reduce, reduction_bits
from .cm import cm_points_on_curve, cm_q, cm_table
from .config import AppConfig, RunConfig, load_config
from .cyclotomic import UnitSystem, build_unit_system
from .enumeration import (
    CM_MATCH,
    DEFAULT_CHUNK,
    INTEGER_J_UNVERIFIED,
    UNRESOLVED,
    Candidate,
    EnumDomain,
    Injection,
    QuickResult,
    UnitResult,
    WorkUnit,
    build_domain,
    choose_nu,
    inject_point,
    plan_work_units,
    quick_enumerate,
    resolve_candidate,
    run_work_unit,
)
from .errors import AmbiguousValue, NoSignChange, PrecisionExhausted
from .frobenius import EXCLUDED, UNDETERMINED, screen_small_j
from .modp import GroupContext, build_group_context
from .persist import Checkpoint, to_jsonable
from .precision import BigReal, escalate, with_precision
from .relation import CuspFrame, UnitLogMatrix, build_cusp_frame, build_unit_log_matrix, kappa_of
from .settings import Defaults, load_defaults
from .validation import ValidationSummary, validate_precomputation

log = logging.getLogger("cartan.pipeline")

STATUS_COMPLETE = "complete"
STATUS_INCOMPLETE = "incomplete"
STATUS_VALIDATED = "validated"


class StageClock:
    def __init__(self) -> None:
        self.timings: dict[str, float] = {}

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        log.info("stage %s: start", name)
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self.timings[name] = round(self.timings.get(name, 0.0) + elapsed, 3)
            log.info("stage %s: done in %.2fs", name, elapsed)


@dataclass
class SlowStats:
    units: int = 0
    resumed: int = 0
    retried: int = 0
    b1_total: int = 0
    pruned: dict[str, int] = field(default_factory=dict)
    candidates: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    accounted: int = 0


@dataclass
class CuspOutcome:
    cusp: int
    pivot: int
    companion: int
    nu: int
    delta: tuple[BigReal, ...]
    theta: tuple[BigReal, ...]
    ledger: BoundLedger
    reduction_bits: int
    quick: QuickResult
    t_intervals: tuple[tuple[mpf, mpf], ...]
    slow: SlowStats


@dataclass(frozen=True)
class IntegralPoint:
    j: int
    disc: Optional[int]
    cusp: int
    b_vector: tuple[Fraction, ...]
    classification: str


@dataclass
class SmallJSummary:
    ell_budget: int
    excluded: int
    undetermined: list[int]


@dataclass
class InjectionCheck:
    disc: int
    j: int
    q: BigReal
    hits: list[Injection]
    recovered: Optional[list[int]] = None


@dataclass
class RunReport:
    version: str
    config: dict[str, Any]
    fingerprint: str
    status: str
    group: dict[str, Any]
    units: dict[str, Any]
    validation: ValidationSummary
    injections: list[InjectionCheck] = field(default_factory=list)
    cusps: list[CuspOutcome] = field(default_factory=list)
    candidates: list[Candidate] = field(default_factory=list)
    integral_points: list[IntegralPoint] = field(default_factory=list)
    small_j: Optional[SmallJSummary] = None
    timings: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        return to_jsonable(self)

    def j_list(self) -> list[int]:
        return sorted({pt.j for pt in self.integral_points})


# precomputation


def cusp_labels(ctx: GroupContext) -> list[int]:
    return list(range(1, (ctx.p - 1) // 2 + 1))


def build_matrix(units: UnitSystem, bits: int) -> UnitLogMatrix:
    with with_precision(bits):
        return build_unit_log_matrix(units)


def build_frames(
    ctx: GroupContext, units: UnitSystem, bits: int, nu: int, cusps: Optional[Iterable[int]] = None
) -> tuple[UnitLogMatrix, list[CuspFrame]]:
    labels = cusp_labels(ctx) if cusps is None else list(cusps)
    with with_precision(bits):
        matrix = build_unit_log_matrix(units)
        frames = [build_cusp_frame(ctx, units, matrix, c, nu) for c in labels]
    return matrix, frames


def _group_echo(ctx: GroupContext) -> dict[str, Any]:
    return {
        "p": ctx.p,
        "subgroup": ctx.subgroup_label,
        "H": list(ctx.H),
        "h_order": ctx.h_order,
        "d": ctx.d,
        "m": ctx.m,
        "xi": ctx.xi,
        "generator": ctx.generator,
    }


def injection_checks(p: int, frames: Sequence[CuspFrame], index: int, app: AppConfig) -> list[InjectionCheck]:
    """Real-q CM points that lie on the curve, with the cusps where their exponents are integral."""
    checks = []
    for entry in cm_points_on_curve(p, app.config_dir):
        with with_precision(frames[0].bits):
            q = cm_q(entry.disc)
        hits = inject_point(frames, q, index)
        log.info("CM point D=%d (j=%d): integral exponents at cusps %s", entry.disc, entry.j, [h.cusp for h in hits])
        checks.append(InjectionCheck(entry.disc, entry.j, q, hits))
    return checks


# enumeration stages


def bound_cusp(
    ctx: GroupContext, units: UnitSystem, frame: CuspFrame, cfg: RunConfig
) -> tuple[BoundLedger, int]:
    with with_precision(frame.bits):
        ledger = baker_B0(ctx, units, frame)
    bits = max(reduction_bits(ledger.B0, cfg.t0), frame.bits)
    log.info("cusp %d: reduction at %d bits", frame.cusp, bits)

    def reduce_at(b: int):
        # reduction only needs δ and ϑ
        _, (sharp,) = build_frames(ctx, units, b, 0, [frame.cusp])
        with with_precision(b):
            chain = davenport_reduce(sharp, ledger.B0, cfg.t0)
            spread = companion_spread(sharp, ledger.B0, cfg.t0) if cfg.companion_check else None
        return chain, spread

    chain, spread = escalate(reduce_at, bits, max(cfg.max_bits, bits))
    ledger.reduction = chain
    ledger.companion_spread = spread
    if chain.stalled and not chain.steps:
        log.warning("cusp %d: reduction stalled at once; Xi_hat falls back to B0", frame.cusp)
        ledger.notes.append("reduction stalled before the first step; Xi_hat derived from B0")
    elif chain.stalled:
        ledger.notes.append(f"reduction stalled after {len(chain.steps)} steps")
    if spread is not None and spread > mpf("0.5"):
        ledger.notes.append(f"companion choice moves Xi_hat by {mp.nstr(spread * 100, 3)}%")
    return ledger, bits


def _run_units(frame: CuspFrame, pending: Sequence[WorkUnit], index: int, workers: int) -> Iterator[UnitResult]:
    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_work_unit, frame, unit, index) for unit in pending]
            for fut in as_completed(futures):
                yield fut.result()
        return
    for unit in pending:
        yield run_work_unit(frame, unit, index)


def _retry_failures(
    ctx: GroupContext,
    units: UnitSystem,
    frame: CuspFrame,
    plan: dict[str, WorkUnit],
    results: dict[str, UnitResult],
    cfg: RunConfig,
    checkpoint: Checkpoint,
) -> int:
    failing = [r for r in results.values() if r.failures]
    if not failing:
        return 0
    bits = frame.bits * 2
    if bits > cfg.max_bits:
        log.warning("cusp %d: %d b1 values failed and max_bits forbids a retry", frame.cusp, sum(len(r.failures) for r in failing))
        return 0
    _, (sharp,) = build_frames(ctx, units, bits, frame.nu, [frame.cusp])
    retried = 0
    for result in failing:
        unit = plan[result.key]
        still: list[tuple[str, str]] = []
        for b1_text, _ in result.failures:
            n = int(Fraction(b1_text) * cfg.index)
            again = run_work_unit(sharp, WorkUnit(unit.cusp, unit.piece, n, n + 1), cfg.index)
            retried += 1
            for stage, count in again.pruned.items():
                result.pruned[stage] = result.pruned.get(stage, 0) + count
            result.candidates.extend(again.candidates)
            result.warnings.extend(again.warnings)
            still.extend(again.failures)
        result.failures = still
        checkpoint.record(result)
    log.info("cusp %d: retried %d b1 values at %d bits", frame.cusp, retried, bits)
    return retried


def slow_phase(
    ctx: GroupContext,
    units: UnitSystem,
    frame: CuspFrame,
    domain: EnumDomain,
    cfg: RunConfig,
    defaults: Defaults,
    checkpoint: Checkpoint,
) -> tuple[SlowStats, list[Candidate]]:
    chunk = int(defaults.get("slow", "chunk", DEFAULT_CHUNK))
    with with_precision(frame.bits):
        plan = plan_work_units(frame, domain, cfg.index, chunk)
    by_key = {u.key: u for u in plan}
    results: dict[str, UnitResult] = {}
    pending = []
    for unit in plan:
        if checkpoint.done(unit.key):
            results[unit.key] = checkpoint.units[unit.key]
        else:
            pending.append(unit)
    stats = SlowStats(units=len(plan), resumed=len(results))
    log.info("cusp %d: %d work units, %d resumed", frame.cusp, len(plan), stats.resumed)
    for result in _run_units(frame, pending, cfg.index, cfg.workers):
        results[result.key] = result
        checkpoint.record(result)
    stats.retried = _retry_failures(ctx, units, frame, by_key, results, cfg, checkpoint)

    found: list[Candidate] = []
    for unit in plan:
        result = results[unit.key]
        stats.b1_total += unit.stop - unit.start
        stats.accounted += result.accounted()
        for stage, count in result.pruned.items():
            stats.pruned[stage] = stats.pruned.get(stage, 0) + count
        stats.failures.extend(result.failures)
        stats.warnings.extend(result.warnings)
        found.extend(result.candidates)
    stats.candidates = len(found)
    if stats.accounted != stats.b1_total:
        msg = f"cusp {frame.cusp}: {stats.accounted} of {stats.b1_total} b1 values accounted for"
        stats.warnings.append(msg)
        log.warning(msg)
    return stats, sorted(found, key=Candidate.sort_key)


def resolve_all(
    ctx: GroupContext,
    units: UnitSystem,
    frame: CuspFrame,
    found: Sequence[Candidate],
    cm_values: Iterable[int],
    cfg: RunConfig,
) -> list[Candidate]:
    """Resolve candidates on frames of 4× bits and 2ν, doubling bits while j stays ambiguous."""
    cm_values = frozenset(cm_values)
    start = frame.bits * 4
    ceiling = max(cfg.max_bits, start)
    sharp: Optional[CuspFrame] = None
    out = []
    for cand in found:
        bits = start
        resolved = None
        while resolved is None:
            try:
                if sharp is None or sharp.bits != bits:
                    _, (sharp,) = build_frames(ctx, units, bits, 2 * frame.nu, [frame.cusp])
                resolved = resolve_candidate(sharp, cand, cm_values)
            except (AmbiguousValue, PrecisionExhausted, NoSignChange) as exc:
                if bits * 2 > ceiling:
                    log.warning("cusp %d b1=%s unresolved at %d bits: %s", cand.cusp, cand.b1, bits, exc)
                    resolved = replace(cand, classification=UNRESOLVED, stage="resolve")
                else:
                    bits *= 2
        out.append(resolved)
    return out


def integral_points(candidates: Iterable[Candidate], app: AppConfig) -> list[IntegralPoint]:
    table = cm_table(app.config_dir)
    points: dict[tuple[int, int], IntegralPoint] = {}
    for cand in candidates:
        if cand.classification not in (CM_MATCH, INTEGER_J_UNVERIFIED) or cand.j is None:
            continue
        with with_precision(max(mp.prec, 64)):
            j = int(mp.nint(cand.j.value))
        entry = table.by_j(j)
        key = (j, cand.cusp)
        if key not in points:
            points[key] = IntegralPoint(j, entry.disc if entry else None, cand.cusp, cand.b_vector, cand.classification)
    return sorted(points.values(), key=lambda pt: (pt.j, pt.cusp))


def _mark_recovered(checks: Sequence[InjectionCheck], candidates: Sequence[Candidate]) -> list[str]:
    seen = {(c.cusp, c.b_vector) for c in candidates if c.classification == CM_MATCH}
    missed = []
    for check in checks:
        check.recovered = sorted(h.cusp for h in check.hits if (h.cusp, h.b_vector) in seen)
        for h in check.hits:
            if (h.cusp, h.b_vector) not in seen:
                missed.append(f"CM point D={check.disc} at cusp {h.cusp} not among candidates")
    for msg in missed:
        log.error(msg)
    return missed


def run_pipeline(cfg: RunConfig, app: Optional[AppConfig] = None) -> RunReport:
    app = app or load_config()
    cfg.validate()
    defaults = load_defaults(app.config_dir)
    clock = StageClock()
    fingerprint = cfg.fingerprint()
    log.info("run p=%d H=%s fingerprint=%s", cfg.p, cfg.subgroup, fingerprint)

    with clock.stage("setup"):
        ctx = build_group_context(cfg.p, cfg.subgroup)
        with with_precision(cfg.bits):
            units = build_unit_system(ctx, cfg.unit_basis_path)
        matrix = escalate(lambda b: build_matrix(units, b), cfg.bits, cfg.max_bits)
        with with_precision(matrix.bits):
            kappa = kappa_of(matrix)
            Theta = kappa * (ctx.m * (ctx.p + 1) * ctx.h_order)
            nu = choose_nu(Theta, ctx.p, mpf(cfg.epsilon))
        log.info("p=%d: kappa=%s Theta=%s nu=%d", ctx.p, mp.nstr(kappa.value, 8), mp.nstr(Theta.value, 8), nu)
        matrix, frames = escalate(lambda b: build_frames(ctx, units, b, nu), matrix.bits, cfg.max_bits)
        work_bits = matrix.bits

    with clock.stage("validation"):
        vdefaults = defaults.validation
        summary = validate_precomputation(
            ctx,
            units,
            matrix,
            frames,
            validation_bits=cfg.validation_bits,
            samples=int(vdefaults.get("samples", 10)),
            seed=int(vdefaults.get("seed", 0)),
            tolerance=mpf(vdefaults.get("identity_tolerance", 1e-20)),
            cross_mode_points=int(vdefaults.get("cross_mode_points", 50)),
        )
        summary.raise_for_failures()
        injections = injection_checks(ctx.p, frames, cfg.index, app)

    report = RunReport(
        version=__version__,
        config=cfg.echo(),
        fingerprint=fingerprint,
        status=STATUS_VALIDATED,
        group=_group_echo(ctx),
        units={
            "source": units.source,
            "heights": list(units.heights()),
            "kappa": kappa,
            "Theta": Theta,
            "nu": nu,
            "bits": work_bits,
        },
        validation=summary,
        injections=injections,
    )
    if cfg.validate_only:
        report.timings = clock.timings
        return report

    cm_values = cm_table(app.config_dir).j_values()
    checkpoint = Checkpoint.open(cfg.checkpoint_path, fingerprint)
    problems: list[str] = []
    for frame in frames:
        with clock.stage("bounds"):
            ledger, rbits = bound_cusp(ctx, units, frame, cfg)
        with clock.stage("quick"):
            with with_precision(frame.bits):
                quick = quick_enumerate(frame, ledger.Xi_hat, cfg.index)
                domain = build_domain(frame, quick.Upsilon)
        ledger.Upsilon = quick.Upsilon
        with clock.stage("slow"):
            stats, found = slow_phase(ctx, units, frame, domain, cfg, defaults, checkpoint)
        with clock.stage("resolve"):
            resolved = resolve_all(ctx, units, frame, found, cm_values, cfg)
        report.candidates.extend(resolved)
        report.cusps.append(
            CuspOutcome(
                cusp=frame.cusp,
                pivot=frame.pivot,
                companion=ledger.reduction.companion if ledger.reduction else 0,
                nu=frame.nu,
                delta=frame.delta,
                theta=frame.theta,
                ledger=ledger,
                reduction_bits=rbits,
                quick=quick,
                t_intervals=domain.t_intervals,
                slow=stats,
            )
        )
        if stats.failures or stats.accounted != stats.b1_total:
            problems.append(f"cusp {frame.cusp}: {len(stats.failures)} b1 values failed")

    report.candidates.sort(key=Candidate.sort_key)
    problems.extend(
        f"cusp {c.cusp} b1={c.b1} unresolved" for c in report.candidates if c.classification == UNRESOLVED
    )
    problems.extend(_mark_recovered(report.injections, report.candidates))
    report.integral_points = integral_points(report.candidates, app)

    with clock.stage("small-j"):
        screened = screen_small_j(ctx.p, cfg.ell_budget)
    report.small_j = SmallJSummary(
        ell_budget=cfg.ell_budget,
        excluded=sum(r.status == EXCLUDED for r in screened),
        undetermined=[r.j for r in screened if r.status == UNDETERMINED],
    )
    if report.small_j.undetermined:
        problems.append(f"{len(report.small_j.undetermined)} small j values undetermined")

    report.status = STATUS_INCOMPLETE if problems else STATUS_COMPLETE
    for msg in problems:
        log.warning("incomplete: %s", msg)
    report.timings = clock.timings
    log.info("p=%d: status %s, integral j %s", ctx.p, report.status, report.j_list())
    return report
