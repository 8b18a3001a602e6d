"""
Main - Command-line front end.

Each command reads the artifacts of earlier commands from the output directory
and writes its own there:

    trajgen       -> reference.txt
    sysid         -> cable_model.txt, spectrum_*.txt, spectra.svg
    tvlqr         -> riccati.txt
    synth         -> funnel.txt, synthesis.txt
    verify-tvlqr  -> funnel_tvlqr.txt, verification.txt
    simulate      -> simulation_<controller>.txt
    montecarlo    -> trials/trial_NNN.txt, montecarlo.txt
    library       -> library/<id>/..., library/index.txt
    continuous    -> swings/swing_NN.txt, continuous.txt
    export-plots  -> plots/*.txt, plots/*.svg

Failures are raised as ``PybrachError`` subclasses and turned into exit codes
here and nowhere else.
"""

import argparse
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from ..control.tvlqr import linearize, load_riccati, riccati_backward, save_riccati
from ..core.config import Config
from ..core.errors import ConfigError, NotCertifiedError, PybrachError, UsageError
from ..core.event_bus import Event, EventType, get_event_bus
from ..funnel.model import load_funnel, project_area, save_funnel
from ..funnel.synthesis import SynthesisProblem, synthesize, verify_fixed_controller
from ..funnel.validate import validate_funnel
from ..model.brachiator import dynamics_spring
from ..model.trajectory import Trajectory
from ..sim.closed_loop import simulate_closed_loop
from ..sim.collocation import generate_reference
from ..sim.library import (build_library, continuous_brachiation, library_initial_conditions,
                           load_library, save_library)
from ..sim.monte_carlo import monte_carlo
from ..sim.plants import FullCablePlant, Plant, SpringPlant
from ..storage.database import ResultStore
from ..sysid.output_error import fit_cable_model, fullcable_response, response_harmonics, spring_response, \
    swing_excitation
from . import plots

logger = logging.getLogger(__name__)
events_logger = logging.getLogger("pybrach.events")

REFERENCE = "reference.txt"
RICCATI = "riccati.txt"
FUNNEL = "funnel.txt"
FUNNEL_TVLQR = "funnel_tvlqr.txt"
CABLE_MODEL = "cable_model.txt"
LIBRARY = "library"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pybrach", description="Funnel synthesis and simulation for a cable-brachiating robot")
    parser.add_argument("--config", help="key=value configuration file (defaults when omitted)")
    parser.add_argument("--out", help="artifact directory (default: paths.out)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for parallel steps")
    parser.add_argument("--seed", type=int, help="override simulation.seed")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("trajgen", help="reference swing by direct collocation")
    sub.add_parser("sysid", help="fit the spring cable model to the full-cable response")
    sub.add_parser("tvlqr", help="TVLQR along the reference")
    sub.add_parser("synth", help="synthesize funnel and output-feedback controller")
    verify = sub.add_parser("verify-tvlqr", help="largest funnel of the fixed TVLQR law")
    verify.add_argument("--full-state", action="store_true", help="verify the unprojected full-state gains")
    simulate = sub.add_parser("simulate", help="one closed-loop run")
    simulate.add_argument("--controller", choices=("sos", "tvlqr"), default="sos")
    simulate.add_argument("--off-nominal", action="store_true", help="start from trajectory.off_nominal")
    sub.add_parser("montecarlo", help="closed-loop trials from random starts in the funnel")
    sub.add_parser("library", help="build the trajectory library")
    sub.add_parser("continuous", help="chain library swings along the cable")
    export = sub.add_parser("export-plots", help="projection and trajectory data plus drawings")
    export.add_argument("--pair", default="theta1:theta2", help="state pair, e.g. theta1:dtheta1")
    return parser


def plant_from_config(config: Config, w: Optional[float] = None) -> Plant:
    rp = config.robot_params()
    kind = config["simulation.plant"]
    if kind == "spring":
        return SpringPlant(rp, config.spring_model(), config["simulation.w"] if w is None else w)
    if kind == "fullcable":
        return FullCablePlant(rp, config.full_cable(), config["simulation.stiffness_scale"])
    raise ConfigError(f"unknown plant {kind!r}; expected spring or fullcable")


class _Context:
    def __init__(self, config: Config, out: Path, threads: int, args: argparse.Namespace):
        self.config = config
        self.out = out
        self.threads = threads
        self.args = args
        self.rp = config.robot_params()
        self.cm = config.spring_model()
        location = config["paths.database"]
        self.store = ResultStore(location) if location else None

    def path(self, name: str) -> Path:
        return self.out / name

    def reference(self) -> Trajectory:
        return Trajectory.load(self.path(REFERENCE))

    def spring_dynamics(self, x, u, w):
        return dynamics_spring(x, u, w, self.rp, self.cm)

    def problem(self) -> SynthesisProblem:
        settings = self.config.synthesis_settings(self.threads)
        return SynthesisProblem.from_reference(
            self.spring_dynamics, self.reference(), load_riccati(self.path(RICCATI)),
            self.config.torque_limits(), self.config.uncertainty(), settings)

    def record(self, command: str, status: str, integral: Optional[float] = None, detail: str = "") -> Optional[int]:
        if self.store is None:
            return None
        return self.store.record_run(command, status, integral, detail)


def _trajgen(ctx: _Context) -> None:
    reference = generate_reference(ctx.config.reference_settings(), ctx.rp, ctx.cm)
    reference.save(ctx.path(REFERENCE))
    print(f"reference: {len(reference)} samples over {reference.duration:.3f} s, "
          f"max |u| {np.abs(reference.inputs).max():.3f} N m")
    ctx.record("trajgen", "ok")


def _sysid(ctx: _Context) -> None:
    settings = ctx.config.sysid_settings()
    reference = ctx.reference()
    excitation = swing_excitation(reference)
    joints = tuple(reference.initial_state[:2])
    target_signal = fullcable_response(ctx.config.full_cable(), excitation, ctx.rp, settings, joints)
    target_spectrum, target = response_harmonics(target_signal, settings)
    result = fit_cable_model(target, ctx.cm, None, excitation, ctx.rp, settings, joints)
    ctx.path(CABLE_MODEL).write_text(result.model.to_text())
    fitted_spectrum, _ = response_harmonics(spring_response(result.model, excitation, ctx.rp, settings, joints),
                                            settings)
    plots.export_spectra({"fullcable": target_spectrum, "fitted": fitted_spectrum}, ctx.out)
    print(f"identified cable model, cost {result.cost:.6g} (from {result.initial_cost:.6g})"
          f"{'' if result.converged else ', iteration budget exhausted'}")
    ctx.record("sysid", "ok" if result.converged else "budget", detail=repr(result.cost))


def _tvlqr(ctx: _Context) -> None:
    reference = ctx.reference()
    n = ctx.config["synthesis.n_samples"]
    times = np.linspace(reference.t0, reference.tf, n + 1)
    riccati = riccati_backward(linearize(lambda x, u: ctx.spring_dynamics(x, u, 0.0), reference, times),
                               ctx.config.lqr_weights())
    save_riccati(riccati, ctx.path(RICCATI))
    print(f"riccati: {len(times)} samples, trace S(t0) {np.trace(riccati.S[0]):.6g}")
    ctx.record("tvlqr", "ok")


def _history_text(result) -> str:
    lines = ["# round integral"] + [f"{k} {value!r}" for k, value in enumerate(result.history)]
    lines.append(f"# rounds {result.rounds} converged {int(result.converged)}")
    return "\n".join(lines) + "\n"


def _synth(ctx: _Context) -> None:
    problem = ctx.problem()
    result = synthesize(problem, ctx.config.synthesis_settings(ctx.threads))
    save_funnel(result.funnel, ctx.path(FUNNEL))
    ctx.path("synthesis.txt").write_text(_history_text(result))
    report = validate_funnel(result.funnel, ctx.spring_dynamics, ctx.reference(),
                             ctx.config["simulation.validation_samples"],
                             np.random.default_rng(ctx.config.seed_for("validation")))
    print(f"funnel: integral of r {result.funnel.integral():.6g} after {result.rounds} rounds"
          f" ({'converged' if result.converged else 'not converged'}); validation "
          f"{'passed' if report.passed else 'failed'}")
    ctx.record("synth", "ok" if report.passed else "validation-failed", result.funnel.integral())
    if not report.passed:
        raise NotCertifiedError(
            f"sampling validation failed: {100 * report.strict_fraction:.1f}% strict, "
            f"worst excess {report.worst_excess:.3g}",
            {"strict_fraction": report.strict_fraction, "worst_excess": report.worst_excess,
             "torque_violations": report.torque_violations})


def _verify_tvlqr(ctx: _Context) -> None:
    result = verify_fixed_controller(ctx.problem(), ctx.config.synthesis_settings(ctx.threads),
                                     full_state=ctx.args.full_state)
    save_funnel(result.funnel, ctx.path(FUNNEL_TVLQR))
    ctx.path("verification.txt").write_text(_history_text(result))
    message = f"TVLQR funnel: integral of r {result.funnel.integral():.6g}"
    if ctx.path(FUNNEL).exists():
        synthesized = load_funnel(ctx.path(FUNNEL))
        area = project_area(synthesized, synthesized.t0, (0, 1))
        message += (f"; synthesized {synthesized.integral():.6g}; theta1-theta2 area at t0 "
                    f"{project_area(result.funnel, result.funnel.t0, (0, 1)):.4g} vs {area:.4g}")
    print(message)
    ctx.record("verify-tvlqr", "ok", result.funnel.integral())


def _simulate(ctx: _Context) -> None:
    reference = ctx.reference()
    funnel = load_funnel(ctx.path(FUNNEL))
    riccati = load_riccati(ctx.path(RICCATI)) if ctx.args.controller == "tvlqr" else None
    x0 = reference.initial_state
    if ctx.args.off_nominal:
        x0 = x0 + np.asarray(ctx.config.off_nominal_offset())
    result = simulate_closed_loop(plant_from_config(ctx.config), funnel, reference, x0,
                                  ctx.config.simulation_settings(), ctx.args.controller, riccati)
    result.trajectory.save(ctx.path(f"simulation_{ctx.args.controller}.txt"))
    final = np.degrees(result.trajectory.final_state[:2])
    print(f"{ctx.args.controller}: goal {'reached' if result.reached_goal else 'missed'}, final angles "
          f"[{final[0]:.2f}, {final[1]:.2f}] deg, max |u| {result.max_abs_torque:.3f} N m, "
          f"contained at {int(result.contained.sum())}/{len(result.contained)} samples")
    ctx.record("simulate", "goal" if result.reached_goal else "missed")


def _montecarlo(ctx: _Context) -> None:
    config = ctx.config
    reference = ctx.reference()
    funnel = load_funnel(ctx.path(FUNNEL))
    spring = config["simulation.plant"] == "spring"
    summary = monte_carlo(funnel, reference, lambda w: plant_from_config(config, w),
                          config["simulation.trials"], config.seed_for("montecarlo"),
                          config.simulation_settings(), config.uncertainty() if spring else None,
                          config["simulation.radius_scale"], ctx.threads)
    trials_dir = ctx.path("trials")
    trials_dir.mkdir(exist_ok=True)
    for trial in summary.trials:
        if trial.result is not None:
            trial.result.trajectory.save(trials_dir / f"trial_{trial.index:03d}.txt")
    ctx.path("montecarlo.txt").write_text(summary.to_text())
    print(f"monte carlo: {len(summary.trials)} trials, goal rate {summary.goal_rate:.2f}, "
          f"containment rate {summary.containment_rate:.2f}")
    run_id = ctx.record("montecarlo", "ok", detail=f"goal_rate={summary.goal_rate!r}")
    if run_id is not None:
        parameter = None if spring else config["simulation.stiffness_scale"]
        ctx.store.record_trials(run_id, [
            {"index": t.index, "parameter": t.w if spring else parameter, "reached_goal": t.reached_goal,
             "max_abs_torque": t.result.max_abs_torque if t.result else None,
             "final_state": t.result.trajectory.final_state if t.result else None}
            for t in summary.trials])


def _library(ctx: _Context) -> None:
    config = ctx.config
    base = config.reference_settings()
    initial = library_initial_conditions(base.initial, config["simulation.library_size"])
    entries = build_library(initial, base, ctx.rp, ctx.cm, config.lqr_weights(),
                            config.synthesis_settings(ctx.threads), config.torque_limits(),
                            config.uncertainty())
    save_library(entries, ctx.path(LIBRARY))
    print(f"library: {len(entries)} of {len(initial)} entries certified")
    ctx.record("library", "ok", detail=f"{len(entries)}/{len(initial)}")


def _continuous(ctx: _Context) -> None:
    config = ctx.config
    library = load_library(ctx.path(LIBRARY))
    chain = continuous_brachiation(library, plant_from_config(config), library[0].reference.initial_state,
                                   config["simulation.n_swings"], config["simulation.pause"],
                                   config.simulation_settings())
    swings_dir = ctx.path("swings")
    swings_dir.mkdir(exist_ok=True)
    lines = ["# swing entry reached_goal final_theta1_deg final_theta2_deg max_abs_u"]
    for k, (entry_id, result) in enumerate(zip(chain.entries, chain.results)):
        result.trajectory.save(swings_dir / f"swing_{k:02d}.txt")
        final = np.degrees(result.trajectory.final_state[:2])
        lines.append(f"{k} {entry_id} {int(result.reached_goal)} {final[0]!r} {final[1]!r} "
                     f"{result.max_abs_torque!r}")
    lines.append(f"# completed {int(chain.completed)} {chain.reason}".rstrip())
    ctx.path("continuous.txt").write_text("\n".join(lines) + "\n")
    ctx.record("continuous", "ok" if chain.completed else "aborted", detail=chain.reason)
    if not chain.completed:
        raise NotCertifiedError(f"brachiation stopped after {chain.swings} swings: {chain.reason}")
    print(f"continuous brachiation: {chain.swings} swings completed")


def _export_plots(ctx: _Context) -> None:
    dims = plots.parse_pair(ctx.args.pair)
    funnels = {"sos": load_funnel(ctx.path(FUNNEL))}
    if ctx.path(FUNNEL_TVLQR).exists():
        funnels["tvlqr"] = load_funnel(ctx.path(FUNNEL_TVLQR))
    out = ctx.path("plots")
    written = plots.export_projections(funnels, dims, out)
    written += plots.export_levels(funnels, out)
    trajectories = {"reference": ctx.reference()}
    for controller in ("sos", "tvlqr"):
        path = ctx.path(f"simulation_{controller}.txt")
        if path.exists():
            trajectories[f"simulation_{controller}"] = Trajectory.load(path)
    written += plots.export_trajectories(trajectories, dims, out)
    print(f"wrote {len(written)} plot files to {out}")


COMMANDS: Dict[str, Callable[[_Context], None]] = {
    "trajgen": _trajgen,
    "sysid": _sysid,
    "tvlqr": _tvlqr,
    "synth": _synth,
    "verify-tvlqr": _verify_tvlqr,
    "simulate": _simulate,
    "montecarlo": _montecarlo,
    "library": _library,
    "continuous": _continuous,
    "export-plots": _export_plots,
}


def _log_event(event: Event) -> None:
    events_logger.info("%s %s", event.event_type.name.lower(), event.data)


def run(argv: Optional[List[str]] = None) -> int:
    """
    Run one command.

    Returns:
        0 on success, otherwise the exit code of the raised ``PybrachError``
    """
    bus = get_event_bus()
    bus.subscribe_all(_log_event)
    try:
        args = build_parser().parse_args(argv)
        level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
        logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        config = Config.load(args.config)
        if args.seed is not None:
            config.set("simulation.seed", args.seed)
        out = Path(args.out or config["paths.out"])
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](_Context(config, out, args.threads, args))
    except PybrachError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    finally:
        for event_type in EventType:
            bus.unsubscribe(event_type, _log_event)
    return 0
