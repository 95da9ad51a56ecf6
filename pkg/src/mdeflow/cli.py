"""Command-line interface: ``mdeflow simulate|verify|converge|distance``.

Exit codes: 0 success or pass, 1 verification failure, 2 input error,
3 numerical error.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import click

from . import __version__
from .afas import AfasConfig, Partition, build_afas, convergence_study
from .fields import FlowError, standard_test_battery
from .measure import MeasureError, read_cloud_csv, read_curve, write_curve
from .residual import ResidualError, residual_suite
from .scenarios import ScenarioError, from_config
from .transport import SinkhornConvergenceError, TransportError, wasserstein
from .vfp import VfpError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger("mdeflow")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

NUMERIC_ERRORS = (FlowError, SinkhornConvergenceError, FloatingPointError, ArithmeticError)
INPUT_ERRORS = (
    OSError,
    tomllib.TOMLDecodeError,
    KeyError,
    TypeError,
    ScenarioError,
    MeasureError,
    ResidualError,
    TransportError,
    VfpError,
    ValueError,
)


class ConfigError(ValueError):
    pass


@contextmanager
def _thread_limit():
    """Cap BLAS/OpenMP pools at MDE_THREADS when set."""
    n = os.environ.get("MDE_THREADS")
    if not n:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        log.warning("MDE_THREADS set but threadpoolctl is not installed; ignoring")
        yield
        return
    with threadpool_limits(limits=int(n)):
        yield


def _run(fn):
    """Map exceptions onto the documented exit codes."""
    try:
        with _thread_limit():
            code = fn()
    except NUMERIC_ERRORS as exc:
        click.echo(f"numerical error: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)
    except INPUT_ERRORS as exc:
        click.echo(f"input error: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    sys.exit(code or EXIT_OK)


def load_config(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _afas_config(cfg: dict) -> AfasConfig:
    known = {"particle_budget", "seed", "flow_substeps", "record_half_steps", "reevaluate_after_f"}
    table = cfg.get("afas", {})
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"unknown [afas] keys {sorted(unknown)}")
    return AfasConfig(**table)


def _partition(cfg: dict, horizon: float) -> Partition:
    table = cfg.get("partition")
    if table is None:
        raise ConfigError("config needs a [partition] table")
    if "nodes" in table:
        return Partition(table["nodes"])
    return Partition.uniform(float(table.get("horizon", horizon)), int(table["steps"]))


def _scenario(cfg: dict):
    if "scenario" not in cfg:
        raise ConfigError("config needs a [scenario] table")
    return from_config(cfg["scenario"])


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Simulate and verify measure differential equations on R^n."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(name)s: %(message)s")


@main.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory (default: [output].directory or ./<scenario>_run).")
def simulate(config_path, out_dir):
    """Run AFAS for the scenario in CONFIG_PATH and write the curve and a run manifest."""

    def go():
        raw = Path(config_path).read_bytes()
        cfg = load_config(config_path)
        sc = _scenario(cfg)
        afas_cfg = _afas_config(cfg)
        P = _partition(cfg, sc.horizon)
        out = Path(out_dir or cfg.get("output", {}).get("directory", f"{sc.name}_run"))
        t0 = time.perf_counter()
        curve = build_afas(sc.V, sc.mu0, P, afas_cfg)
        index = write_curve(curve, out)
        wall = time.perf_counter() - t0
        manifest = {
            "tool": "mdeflow",
            "version": __version__,
            "config": str(config_path),
            "config_sha256": hashlib.sha256(raw).hexdigest(),
            "scenario": cfg["scenario"],
            "partition": {"steps": P.steps, "horizon": P.horizon, "mesh": P.mesh},
            "afas": {
                "particle_budget": afas_cfg.particle_budget,
                "seed": afas_cfg.seed,
                "flow_substeps": afas_cfg.flow_substeps,
                "record_half_steps": afas_cfg.record_half_steps,
                "reevaluate_after_f": afas_cfg.reevaluate_after_f,
            },
            "files": [index.name] + json.loads(index.read_text())["files"],
            "wall_time_s": wall,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
        click.echo(str(index))
        return EXIT_OK

    _run(go)


@main.command()
@click.argument("curve_index", type=click.Path(dir_okay=False))
@click.argument("scenario_config", type=click.Path(dir_okay=False))
@click.option("--threshold", type=float, required=True, help="Pass iff max_residual <= threshold.")
@click.option("--radius", type=float, default=1.0, show_default=True, help="Test-battery radius R.")
def verify(curve_index, scenario_config, threshold, radius):
    """Weak-form residual of the curve at CURVE_INDEX against the scenario's VFP map."""

    def go():
        for f in (curve_index, scenario_config):
            if not Path(f).is_file():
                raise FileNotFoundError(f"no such file: {f}")
        curve = read_curve(curve_index)
        sc = _scenario(load_config(scenario_config))
        if curve.dim != sc.dim:
            raise ConfigError(f"curve dim {curve.dim} != scenario dim {sc.dim}")
        report = residual_suite(curve, sc.V, standard_test_battery(sc.dim, radius))
        out = report.to_dict()
        out["threshold"] = threshold
        out["passed"] = report.max_residual <= threshold
        click.echo(json.dumps(out, indent=1))
        return EXIT_OK if out["passed"] else EXIT_FAIL

    _run(go)


@main.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--out", "out_csv", type=click.Path(dir_okay=False), default=None, help="Write the CSV here.")
def converge(config_path, out_csv):
    """Convergence study across the [converge].levels of CONFIG_PATH."""

    def go():
        cfg = load_config(config_path)
        sc = _scenario(cfg)
        afas_cfg = _afas_config(cfg)
        table = cfg.get("converge", {})
        levels = table.get("levels")
        if not levels:
            raise ConfigError("[converge] needs a nonempty 'levels' list")
        report = convergence_study(
            sc.V,
            sc.mu0,
            float(table.get("horizon", sc.horizon)),
            levels,
            afas_cfg,
            p=float(table.get("p", sc.p)),
            reference=sc.reference if table.get("use_reference", True) else None,
            noise_seeds=int(table.get("noise_seeds", 2)),
        )
        text = report.to_csv()
        if out_csv:
            Path(out_csv).write_text(text)
        click.echo(text, nl=False)
        if report.non_monotone:
            click.echo(f"non-monotone levels above noise floor {report.noise_floor:.3g}: {report.non_monotone}", err=True)
        return EXIT_OK

    _run(go)


@main.command()
@click.argument("cloud_a", type=click.Path(dir_okay=False))
@click.argument("cloud_b", type=click.Path(dir_okay=False))
@click.option("--p", "p", type=float, default=2.0, show_default=True)
@click.option("--method", type=click.Choice(["auto", "Exact1D", "Assignment", "Sinkhorn"]), default="auto",
              show_default=True)
def distance(cloud_a, cloud_b, p, method):
    """W_p distance between two cloud CSV files, printed as JSON."""

    def go():
        rep = wasserstein(read_cloud_csv(cloud_a), read_cloud_csv(cloud_b), p, method)
        click.echo(json.dumps(rep.to_dict()))
        return EXIT_OK

    _run(go)


if __name__ == "__main__":  # pragma: no cover
    main()
