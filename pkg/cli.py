"""witnesskit command line: compatibility checks, witness conversions and reproduction reports."""
from __future__ import annotations

import functools
import logging
import sys
import time
from pathlib import Path

import click
import numpy as np

from models.algebra import Algebra, basis_measurement, ic_povm
from models.channels import (
    broadcast_abelian,
    conditional_preparation,
    depolarizing,
    from_measurement,
    identity_channel,
    trivial_channel,
)
from services import catalog
from services.compatibility import check_compatibility, p_post, p_prior
from services.reproduce import SECTIONS, reproduce
from services.witnesses import (
    detects,
    evaluate,
    lift_witness,
    sampled_minimum,
    task_from_witness,
    tighten,
    witness_from_incompatible_pair,
    witness_from_task,
)
from store.files import JsonStore, StoreError
from utils.config import settings
from utils.errors import ReasonCodes, VerificationError, WitnessKitError
from utils.report import RunReport, digest

logger = logging.getLogger("witnesskit")


def configure_logging() -> None:
    logging.basicConfig(
        level=getattr(logging, settings.log.upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _digest_files(*paths) -> str:
    return digest(*(Path(p).read_bytes() for p in paths if p is not None and Path(p).exists()))


def command(fn):
    """Run a subcommand, print its report, and map failures to exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        started = time.perf_counter()
        try:
            report: RunReport = fn(*args, **kwargs)
        except WitnessKitError as e:
            logger.debug("command failed", exc_info=True)
            click.echo(f"error: {e.describe()}", err=True)
            ctx.exit(e.exit_code)
            return
        except StoreError as e:
            click.echo(f"error: [{ReasonCodes.PARSE_ERROR}] {e}", err=True)
            ctx.exit(2)
            return
        if ctx.obj.get("timing"):
            report.wall_time = time.perf_counter() - started
        click.echo(report.render())
        output = kwargs.get("output")
        if output and ctx.obj.get("report_to_output", True):
            ctx.obj["store"].save_report(report, output)
        if not report.ok:
            ctx.exit(VerificationError.exit_code)

    return wrapper


@click.group()
@click.option("--seed", type=int, default=None, help="Seed for every sampled verification.")
@click.option("--jobs", type=int, default=None, help="Parallel workers for independent SDP solves.")
@click.option("--timing", is_flag=True, help="Include wall time in reports.")
@click.pass_context
def cli(ctx, seed, jobs, timing):
    """Channel compatibility and incompatibility witnesses."""
    configure_logging()
    previous = settings.seed, settings.jobs
    ctx.call_on_close(lambda: _restore_settings(*previous))
    if seed is not None:
        settings.seed = seed
    if jobs is not None:
        settings.jobs = jobs
    ctx.ensure_object(dict)
    ctx.obj["timing"] = timing
    ctx.obj["store"] = JsonStore(".")


def _restore_settings(seed: int, jobs: int) -> None:
    settings.seed, settings.jobs = seed, jobs


def _rng() -> np.random.Generator:
    return np.random.default_rng(settings.seed)


@cli.command()
@click.argument("first", type=click.Path(exists=True, dir_okay=False))
@click.argument("second", type=click.Path(exists=True, dir_okay=False))
@click.option("--tol", type=float, default=None, help="Decision tolerance on the optimal slack e*.")
@click.option("--emit-witness", type=click.Path(dir_okay=False), default=None)
@click.option("--emit-joint", type=click.Path(dir_okay=False), default=None)
@click.option("--dump-sdp", type=click.Path(dir_okay=False), default=None, help="Write the compatibility SDP as JSON.")
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="Write the report as JSON.")
@click.pass_context
@command
def check(ctx, first, second, tol, emit_witness, emit_joint, dump_sdp, output):
    """Decide whether two channels are compatible."""
    store: JsonStore = ctx.obj["store"]
    c1, c2 = store.load_channel(first), store.load_channel(second)
    verdict = check_compatibility(c1, c2, tol)
    report = RunReport(command="check", inputs_digest=_digest_files(first, second), diagnostics=verdict.solution.diagnostics())
    report.add("verdict", verdict.status.upper())
    report.add("e*", verdict.slack)
    if dump_sdp:
        store.save_problem(verdict.solution.problem, dump_sdp)
        report.add("sdp", dump_sdp)
    if emit_joint and verdict.joint is not None:
        store.save_channel(verdict.joint, emit_joint)
        report.add("joint", emit_joint)
    if emit_witness and verdict.status == "incompatible":
        w = witness_from_incompatible_pair(c1, c2, _rng())
        store.save_witness(w, emit_witness)
        report.add("witness value at pair", evaluate(w, c1, c2))
    return report


@cli.command("scan-gamma")
@click.argument("d", type=click.Choice(["2", "3"]))
@click.option("--lo", type=float, default=0.5, show_default=True)
@click.option("--hi", type=float, default=1.0, show_default=True)
@click.option("--steps", type=int, default=12, show_default=True)
@click.option("--output", type=click.Path(dir_okay=False), default=None)
@command
def scan_gamma(d, lo, hi, steps, output):
    """Bisect the noise level where the noisy MUB measurements stop being compatible."""
    dim = int(d)
    result = catalog.scan_gamma(dim, lo, hi, steps)
    report = RunReport(command=f"scan-gamma {dim} --lo {lo} --hi {hi} --steps {steps}")
    for row in result.rows:
        report.add(f"gamma={row.parameter:.8f}", row.status, detail=f"e*={row.slack:.3e}")
    threshold = catalog.gamma_threshold(dim)
    report.add("boundary estimate", result.estimate)
    report.add("gamma_threshold", threshold)
    report.add("|estimate - threshold|", abs(result.estimate - threshold))
    return report


@cli.group()
def witness():
    """Evaluate, tighten and convert witnesses."""


@witness.command("eval")
@click.argument("witness_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("first", type=click.Path(exists=True, dir_okay=False))
@click.argument("second", type=click.Path(exists=True, dir_okay=False))
@click.option("--output", type=click.Path(dir_okay=False), default=None)
@click.pass_context
@command
def witness_eval(ctx, witness_file, first, second, output):
    """Value of a witness on a channel pair."""
    store: JsonStore = ctx.obj["store"]
    w = store.load_witness(witness_file)
    c1, c2 = store.load_channel(first), store.load_channel(second)
    report = RunReport(command="witness eval", inputs_digest=_digest_files(witness_file, first, second))
    report.add("value", evaluate(w, c1, c2))
    report.add("detects", detects(w, c1, c2))
    return report


def _writes_object(ctx) -> None:
    ctx.obj["report_to_output"] = False


@witness.command("tighten")
@click.argument("witness_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--output", type=click.Path(dir_okay=False), required=True)
@click.pass_context
@command
def witness_tighten(ctx, witness_file, output):
    """Shift δ₀ so the minimum over compatible pairs is zero."""
    _writes_object(ctx)
    store: JsonStore = ctx.obj["store"]
    w = store.load_witness(witness_file)
    tight = tighten(w)
    store.save_witness(tight, output)
    report = RunReport(command="witness tighten", inputs_digest=_digest_files(witness_file))
    report.add("delta0 before", w.delta0)
    report.add("delta0 after", tight.delta0)
    return report


@witness.command("to-task")
@click.argument("witness_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--m1", "m1_file", type=click.Path(exists=True, dir_okay=False), default=None, help="IC readout for slot 1 (default: built-in IC POVM).")
@click.option("--m2", "m2_file", type=click.Path(exists=True, dir_okay=False), default=None, help="IC readout for slot 2 (default: built-in IC POVM).")
@click.option("--output", type=click.Path(dir_okay=False), required=True)
@click.pass_context
@command
def witness_to_task(ctx, witness_file, m1_file, m2_file, output):
    """Discrimination task whose prior guessing probability reproduces the witness."""
    _writes_object(ctx)
    store: JsonStore = ctx.obj["store"]
    w = store.load_witness(witness_file)
    m1 = store.load_measurement(m1_file) if m1_file else ic_povm(w.out_algs[0], prefix="a")
    m2 = store.load_measurement(m2_file) if m2_file else ic_povm(w.out_algs[1], prefix="b")
    built = task_from_witness(w, m1, m2)
    store.save_task(built.task, output)
    report = RunReport(command="witness to-task", inputs_digest=_digest_files(witness_file, m1_file, m2_file))
    report.add("alpha", built.alpha)
    report.add("delta", built.delta)
    report.add("beta", built.beta)
    report.add("decomposition residual", built.residual)
    post, prior = p_post(built.task), p_prior(built.task)
    report.add("p_post", post)
    report.add("p_prior", prior)
    report.add("p_post <= delta < p_prior", None, passed=post <= built.delta + 1e-6 and built.delta < prior)
    return report


@witness.command("from-task")
@click.argument("task_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--output", type=click.Path(dir_okay=False), required=True)
@click.pass_context
@command
def witness_from_task_cmd(ctx, task_file, output):
    """Tight witness P_post − P_prior(·‖task)."""
    _writes_object(ctx)
    store: JsonStore = ctx.obj["store"]
    w = witness_from_task(store.load_task(task_file))
    store.save_witness(w, output)
    report = RunReport(command="witness from-task", inputs_digest=_digest_files(task_file))
    report.add("delta0 (p_post)", w.delta0)
    report.add("sampled minimum", sampled_minimum(w, _rng()), passed=None)
    return report


@witness.command("from-pair")
@click.argument("first", type=click.Path(exists=True, dir_okay=False))
@click.argument("second", type=click.Path(exists=True, dir_okay=False))
@click.option("--output", type=click.Path(dir_okay=False), required=True)
@click.pass_context
@command
def witness_from_pair(ctx, first, second, output):
    """Witness separating an incompatible pair from the compatible set."""
    _writes_object(ctx)
    store: JsonStore = ctx.obj["store"]
    c1, c2 = store.load_channel(first), store.load_channel(second)
    w = witness_from_incompatible_pair(c1, c2, _rng())
    store.save_witness(w, output)
    report = RunReport(command="witness from-pair", inputs_digest=_digest_files(first, second))
    report.add("value at pair", evaluate(w, c1, c2))
    return report


@witness.command("lift")
@click.argument("witness_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("measurement_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--slot", type=click.Choice(["1", "2"]), default="2", show_default=True)
@click.option("--output", type=click.Path(dir_okay=False), required=True)
@click.pass_context
@command
def witness_lift(ctx, witness_file, measurement_file, slot, output):
    """Lift an abelian output slot through a projective measurement."""
    _writes_object(ctx)
    store: JsonStore = ctx.obj["store"]
    w = lift_witness(store.load_witness(witness_file), store.load_measurement(measurement_file), int(slot))
    store.save_witness(w, output)
    report = RunReport(command="witness lift", inputs_digest=_digest_files(witness_file, measurement_file))
    report.add("slot", int(slot))
    report.add("terms", len(w.terms(int(slot))))
    return report


@cli.command("reproduce")
@click.option("--section", type=click.Choice([str(s) for s in SECTIONS]), required=True)
@click.option("--full", is_flag=True, help="Also run the d=3 rows.")
@click.option("--output", type=click.Path(dir_okay=False), default=None)
@command
def reproduce_cmd(section, full, output):
    """Run the acceptance rows for one results section and print PASS/FAIL."""
    return reproduce(int(section), settings.jobs, full)


def _pick(pair, member: int):
    return pair[member - 1]


EXPORTS = {
    "xi_mm": ("witness", lambda d, g, m: catalog.xi_mm(d)),
    "xi_mc": ("witness", lambda d, g, m: catalog.xi_mc(d)),
    "xi_cc": ("witness", lambda d, g, m: catalog.xi_cc(d)),
    "xi_cc_clone": ("witness", lambda d, g, m: catalog.xi_cc_clone(d)),
    "noisy_mub": ("measurement", lambda d, g, m: _pick(catalog.noisy_mub_measurements(d, g), m)),
    "noisy_mub_channel": ("channel", lambda d, g, m: _pick(catalog.measurement_channels(d, g), m)),
    "cloning_margin": ("channel", lambda d, g, m: _pick(catalog.cloning_margins(d), m)),
    "perturbed_cloning": ("channel", lambda d, g, m: _pick(catalog.perturbed_cloning_pair(d, g), m)),
    "depolarizing": ("channel", lambda d, g, m: depolarizing(d, g)),
    "identity": ("channel", lambda d, g, m: identity_channel(Algebra.full(d))),
    "identity_abelian": ("channel", lambda d, g, m: identity_channel(Algebra.abelian(d))),
    "broadcast": ("channel", lambda d, g, m: broadcast_abelian(d)),
    "projection_channel": ("channel", lambda d, g, m: _pick(catalog.projection_pair(d), m)),
    "conditional_preparation": ("channel", lambda d, g, m: conditional_preparation(basis_measurement(catalog.fourier_mub(d).f))),
    "trivial": ("channel", lambda d, g, m: trivial_channel(Algebra.full(d))),
    "ic_povm": ("measurement", lambda d, g, m: ic_povm(Algebra.full(d), prefix="a" if m == 1 else "b")),
    "ic_povm_channel": ("channel", lambda d, g, m: from_measurement(ic_povm(Algebra.full(d)))),
    "basis": ("measurement", lambda d, g, m: _basis_measurement(d, m)),
}


def _basis_measurement(d: int, member: int):
    mub = catalog.fourier_mub(d)
    return basis_measurement(mub.e if member == 1 else mub.f, prefix="e" if member == 1 else "f")


@cli.command("export")
@click.argument("name", type=click.Choice(sorted(EXPORTS)))
@click.argument("output", type=click.Path(dir_okay=False))
@click.option("--d", "d", type=int, default=2, show_default=True)
@click.option("--gamma", type=float, default=None, help="Noise or perturbation parameter (default per object).")
@click.option("--member", type=click.Choice(["1", "2"]), default="1", show_default=True, help="Which member of a pair.")
@click.pass_context
@command
def export(ctx, name, output, d, gamma, member):
    """Write a catalog object as JSON."""
    _writes_object(ctx)
    kind, build = EXPORTS[name]
    if gamma is None:
        gamma = 0.02 if name == "perturbed_cloning" else catalog.gamma_threshold(d)
    obj = build(d, gamma, int(member))
    store: JsonStore = ctx.obj["store"]
    getattr(store, f"save_{kind}")(obj, output)
    report = RunReport(command=f"export {name} --d {d}")
    report.add(kind, output)
    return report


if __name__ == "__main__":
    cli(obj={})
