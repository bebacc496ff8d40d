"""
Runs the CLI verbs against a resolved scenario and builds report models.

Parameter precedence is CLI flag > scenario ``overrides`` > settings.
"""
import logging
import time
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional

import numpy as np

from securestate.config import settings
from securestate.errors import ConfigError, NotSparseObservableError, PreconditionError
from securestate.schemas.report import (
    AttackValue,
    AuditReport,
    AuditRunReport,
    CandidateEntry,
    ClusterEntry,
    FallbackEntry,
    GuaranteeEntry,
    MethodReport,
    RoundEntry,
    RunReport,
    SynthesisReport,
)
from securestate.services.adversary import (
    SESGC,
    check_sesgc_defeat,
    check_sesvs_defeat,
    synthesize_sesgc_defeat,
    synthesize_sesvs_defeat,
)
from securestate.services.linsys import simulate
from securestate.services.observability import ObservabilityAnalyzer, SystemAudit, audit_system
from securestate.services.reconstruct import (
    Outcome,
    ReconstructionReport,
    known_support_reconstruct,
    sesgc_reconstruct,
    sesvs_reconstruct,
)
from securestate.services.scenario_loader import ResolvedScenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_AMBIGUOUS = 2
EXIT_INFEASIBLE = 3

OUTCOME_EXIT = {
    Outcome.UNIQUE: EXIT_OK,
    Outcome.AMBIGUOUS: EXIT_AMBIGUOUS,
    Outcome.INFEASIBLE: EXIT_INFEASIBLE,
}

# Closed-loop bias agreement
BIAS_MATCH_TOL = 1e-6


@dataclass
class RunOptions:
    """CLI-level overrides; None falls through to the scenario file, then settings"""
    r: Optional[int] = None
    eq_tol: Optional[float] = None
    residual_tol: Optional[float] = None
    max_rounds: Optional[int] = None
    target: Optional[str] = None
    rounds: Optional[int] = None


def _pick(cli_value, scenario_value):
    return cli_value if cli_value is not None else scenario_value


def _floats(vector) -> List[float]:
    return [float(v) for v in np.asarray(vector, dtype=float).reshape(-1)]


def audit_report(system_audit: SystemAudit, p: int) -> AuditReport:
    return AuditReport(
        n=system_audit.n,
        p=p,
        q=system_audit.q,
        s_max=system_audit.s_max,
        lower_bounds=dict(system_audit.lower_bounds),
        guarantee_table=[GuaranteeEntry(**asdict(row)) for row in system_audit.guarantee_table],
    )


def method_report(report: ReconstructionReport) -> MethodReport:
    diagnostics = report.diagnostics
    return MethodReport(
        method=report.method,
        outcome=report.outcome.value,
        exit_code=OUTCOME_EXIT[report.outcome],
        k=report.k,
        r=report.r,
        start=report.start,
        state=_floats(report.state) if report.state is not None else None,
        representatives=[_floats(rep) for rep in report.representatives],
        lower_bound=diagnostics.get("lower_bound"),
        threshold=diagnostics.get("threshold"),
        guarantee=diagnostics.get("guarantee"),
        solves=diagnostics.get("solves", 0),
        excluded=diagnostics.get("excluded", []),
        unobservable=diagnostics.get("unobservable", []),
        fallbacks=[FallbackEntry(**entry) for entry in diagnostics.get("fallbacks", [])],
        clusters=[
            ClusterEntry(members=c.members, representative=_floats(c.representative), spread=c.spread)
            for c in report.clusters
        ],
        rounds=[RoundEntry(**entry) for entry in diagnostics.get("rounds", [])],
        survivors=diagnostics.get("survivors", []),
        candidates=[
            CandidateEntry(ordinal=c.ordinal, subset=list(c.subset), estimate=_floats(c.estimate), solver_ok=c.solver_ok)
            for c in (report.candidates or [])
        ],
    )


def _skipped(method: str, exc: PreconditionError) -> MethodReport:
    return MethodReport(method=method, outcome="skipped", exit_code=EXIT_INFEASIBLE, skipped=exc.message)


def _default_window(analyzer: ObservabilityAnalyzer, m: int, tag: str) -> int:
    """The m-sparse observable lower bound, taken over the observable hypotheses when some never are"""
    report = analyzer.report(m)
    if report.observable_bound is None:
        raise NotSparseObservableError(m, report.failing_subset)
    if not report.observable:
        logger.warning(f"[{tag}] hypotheses {report.unobservable} are unobservable; window r={report.observable_bound} covers the rest")
    return report.observable_bound


def _run_method(kind: str, scenario: ResolvedScenario, meas, analyzer: ObservabilityAnalyzer,
                options: RunOptions) -> ReconstructionReport:
    method = scenario.config.method
    overrides = scenario.config.overrides
    system = scenario.system
    r = _pick(options.r, overrides.r)
    eq_tol_abs = _pick(options.eq_tol, overrides.eq_tol)

    if kind == "sesvs":
        if system.q < scenario.s + method.tau + 1:
            raise PreconditionError(
                f"(s+tau)-sparse observability with s={scenario.s}, tau={method.tau} cannot hold with q={system.q} sensors"
            )
        r = r if r is not None else _default_window(analyzer, scenario.s + method.tau, "SESVS")
        return sesvs_reconstruct(
            system, meas, k=method.start + r - 1, s=scenario.s, tau=method.tau,
            eq_tol_abs=eq_tol_abs, eq_tol_rel=overrides.eq_tol_rel, r=r,
            rank_policy=method.rank_policy, analyzer=analyzer,
        )
    if kind == "sesgc":
        r = r if r is not None else _default_window(analyzer, scenario.s, "SESGC")
        return sesgc_reconstruct(
            system, meas, k=method.start + r - 1, s=scenario.s, r=r,
            residual_tol=_pick(options.residual_tol, overrides.residual_tol),
            max_rounds=_pick(options.max_rounds, overrides.max_rounds),
            eq_tol_abs=eq_tol_abs, eq_tol_rel=overrides.eq_tol_rel,
            rank_policy=method.rank_policy, analyzer=analyzer,
        )
    gamma = scenario.attack.gamma
    if r is None:
        r = analyzer.min_r(gamma)
        if r is None:
            raise PreconditionError(f"deleting the attacked sensors {list(gamma)} leaves the system unobservable")
    return known_support_reconstruct(system, meas, k=method.start + r - 1, gamma=gamma, r=r)


def run_scenario(scenario: ResolvedScenario, options: Optional[RunOptions] = None) -> RunReport:
    """Simulate, audit and reconstruct; the exit code is the worst over the methods run"""
    options = options or RunOptions()
    started = time.perf_counter()
    trajectory = scenario.trajectory()
    meas = trajectory.measurements
    analyzer = ObservabilityAnalyzer(scenario.system)
    audit = audit_report(audit_system(scenario.system, analyzer=analyzer), scenario.system.p)
    timings: Dict[str, float] = {"audit": time.perf_counter() - started}

    kind = scenario.config.method.kind
    kinds = ["sesvs", "sesgc"] if kind == "both" else [kind]
    methods: List[MethodReport] = []
    for name in kinds:
        try:
            report = _run_method(name, scenario, meas, analyzer, options)
        except PreconditionError as exc:
            logger.warning(f"[{name.upper()}] skipped: {exc.message}")
            methods.append(_skipped(name.upper(), exc))
            continue
        timings[name] = report.elapsed
        methods.append(method_report(report))

    ran = [m for m in methods if m.skipped is None]
    if ran:
        exit_code = max(m.exit_code for m in ran)
    else:
        exit_code = EXIT_INFEASIBLE
    timings["total"] = time.perf_counter() - started
    start = scenario.config.method.start
    logger.info(f"Scenario {scenario.name}: exit {exit_code} ({', '.join(f'{m.method}={m.outcome}' for m in methods)})")
    return RunReport(
        scenario=scenario.name,
        exit_code=exit_code,
        true_state=_floats(trajectory.states[min(start, trajectory.K)]),
        audit=audit,
        methods=methods,
        timings=timings,
        resolved_config=scenario.resolved_config(),
    )


def audit_scenario(scenario: ResolvedScenario) -> AuditRunReport:
    started = time.perf_counter()
    audit = audit_report(audit_system(scenario.system), scenario.system.p)
    return AuditRunReport(
        scenario=scenario.name,
        audit=audit,
        timings={"audit": time.perf_counter() - started},
        resolved_config=scenario.resolved_config(),
    )


def _values(values: Dict[Any, float]) -> List[AttackValue]:
    return [AttackValue(step=step, sensor=sensor, value=value) for (step, sensor), value in sorted(values.items())]


def synthesize(scenario: ResolvedScenario, options: Optional[RunOptions] = None) -> SynthesisReport:
    """
    Synthesize a defeat certificate for the scenario's attacked set, then close
    the loop: simulate with the certified attack and rerun the target method.
    """
    options = options or RunOptions()
    started = time.perf_counter()
    synthesis = scenario.config.synthesis
    target = (_pick(options.target, synthesis.target if synthesis else None) or "sesvs").lower()
    rounds = _pick(options.rounds, synthesis.rounds if synthesis else None)
    rounds = 1 if rounds is None else rounds
    exhaustive = synthesis.exhaustive if synthesis else False
    system = scenario.system
    gamma = scenario.attack.gamma
    s = len(gamma)
    analyzer = ObservabilityAnalyzer(system)

    r = _pick(options.r, scenario.config.overrides.r)
    if target == "sesvs":
        r = r if r is not None else analyzer.lower_bound(s + 1)
        rounds = 0
    else:
        r = r if r is not None else analyzer.lower_bound(s)
    k = synthesis.k if synthesis and synthesis.k is not None else scenario.config.method.start + r - 1
    if k + rounds > scenario.K:
        raise ConfigError([{
            "field": "horizon",
            "message": f"synthesis window needs measurements through step {k + rounds}, horizon is {scenario.K}",
        }])

    if target == "sesvs":
        certificate = synthesize_sesvs_defeat(system, r, gamma, k, exhaustive=exhaustive, analyzer=analyzer)
    else:
        certificate = synthesize_sesgc_defeat(system, gamma, k, rounds, r=r, analyzer=analyzer)
    timings = {"synthesis": time.perf_counter() - started}

    base = dict(scenario=scenario.name, target=target.upper(), gamma=list(gamma), k=k, r=r, rounds=rounds,
                resolved_config=scenario.resolved_config())
    if certificate is None:
        timings["total"] = time.perf_counter() - started
        return SynthesisReport(exit_code=EXIT_INFEASIBLE, found=False, timings=timings, **base)

    if certificate.target_method == SESGC:
        check = check_sesgc_defeat(system, certificate.subsets[0], certificate.attacks)
    else:
        check = check_sesvs_defeat(system, certificate.r, certificate.subsets, certificate.attacks)

    trajectory = simulate(system, scenario.x0, scenario.inputs, certificate.attack_scenario(), scenario.K)
    meas = trajectory.measurements
    true_state = trajectory.states[certificate.k - certificate.r + 1]
    loop_started = time.perf_counter()
    if certificate.target_method == SESGC:
        loop = sesgc_reconstruct(system, meas, k=certificate.k, s=s, r=certificate.r, max_rounds=rounds,
                                 rank_policy="skip", analyzer=analyzer)
        v = certificate.ordinals[0]
        kept = v in loop.diagnostics.get("survivors", [])
        measured = loop.candidates.by_ordinal(v).estimate - true_state
    else:
        loop = sesvs_reconstruct(system, meas, k=certificate.k, s=s, r=certificate.r, rank_policy="skip",
                                 analyzer=analyzer)
        offsets = [rep - true_state for rep in loop.representatives]
        measured = max(offsets, key=lambda o: float(np.linalg.norm(o))) if offsets else np.zeros(system.n)
        kept = True
    timings["closed_loop"] = time.perf_counter() - loop_started

    bias_ok = float(np.linalg.norm(measured - certificate.bias)) <= BIAS_MATCH_TOL * max(1.0, float(np.linalg.norm(certificate.bias)))
    verified = check.holds and kept and loop.outcome == Outcome.AMBIGUOUS and bias_ok
    if verified:
        logger.info(f"[defeat:{certificate.target_method}] certificate verified in closed loop")
    else:
        logger.error(
            f"[defeat:{certificate.target_method}] closed loop did not confirm the certificate "
            f"(check={check.holds}, outcome={loop.outcome.value}, bias match={bias_ok})"
        )
    timings["total"] = time.perf_counter() - started
    return SynthesisReport(
        exit_code=EXIT_OK if verified else EXIT_INFEASIBLE,
        found=True,
        families_tried=certificate.families_tried,
        subsets=[list(subset) for subset in certificate.subsets],
        ordinals=certificate.ordinals,
        bias=_floats(certificate.bias),
        values=_values(certificate.values),
        check_holds=check.holds,
        closed_loop=method_report(loop),
        closed_loop_bias=_floats(measured),
        verified=verified,
        timings=timings,
        **base,
    )
