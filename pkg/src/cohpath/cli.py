"""Batch driver: TOML experiment configs in, JSON + CSV artifacts out.

Every subcommand reads one TOML file (``--config``), validates the
parameters against the owning module's preconditions before any compute
starts, runs the named computation, and writes
``<out>/<computation>.json`` — a single document carrying the result,
the fully resolved config echo, the seed, and library versions.  The
only volatile key is ``generated_at``; reruns with the same config and
seed are otherwise byte-identical.  Some computations also write CSV
tables (comma-separated, ``.`` decimal point, header row, LF endings).

Config layout (sections not used by a subcommand are ignored)::

    [system]
    n_constrained = 1          # gauge modes (listed first)
    n_reduced = 1              # physical modes
    hbar = 1.0
    widths = [1.0, 1.0]        # optional fiducial widths, one per mode
    operator = '''
    1.0 : 0,0 ; 1,1            # coeff : m,n per mode  (see opspec)
    0.5 : 0,0 ; 0,0
    '''

    [labels.a]                 # bra endpoint
    p = [0.0]                  # constrained-sector momenta
    q = [0.3]                  # constrained-sector positions
    z = [[-0.2, 0.5]]          # reduced-sector (p, q) pairs
    [labels.b]                 # ket endpoint, same shape

    [run]
    seed = 0                   # overridden by --seed

    [lattice]                  # lattice subcommand
    n_slices = 8
    total_time = 0.2
    route = "upper"            # or "lower"
    evaluator = "chain"        # or "quadrature"
    axes = [[-6.0, 6.0, 61]]   # per-axis [lo, hi, nodes], quadrature only

    [wiener]                   # wiener subcommand (bridge Monte Carlo)
    nu = 40.0
    n_samples = 20000
    n_slices = 8
    total_time = 0.2
    route = "lower"
    csv_samples = 0            # write this many sample paths as CSV

    [equivalence]              # constraint-equivalence subcommand
    total_time = 0.2
    nu_ladder = [5.0, 20.0, 80.0]
    extended_n_slices = 12
    projected_n_slices = 16384
    box_length = 10.0
    n_momentum = 12
    n_trunc = 40
    route = "lower"
    lambda_common = 0.0

    [convergence]              # convergence subcommand
    total_time = 0.2
    n_list = [2, 4, 8, 16]
    routes = ["upper", "lower"]
    evaluator = "chain"
    n_trunc = 60

Exit codes: 0 success, 2 config/parse error, 3 precondition violation,
4 budget or truncation refusal, 1 internal error.  On failure a
machine-readable error document goes to stdout and a one-line note to
stderr.  The default output directory is ``$COHPATH_OUT`` or ``.``.
"""

from __future__ import annotations

import csv
import datetime
import functools
import json
import os
import platform
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import click
import numpy as np
import scipy

from . import __version__
from .constraints import equivalence_report
from .errors import (
    BudgetError,
    DimensionMismatchError,
    OperatorFormatError,
    PreconditionError,
    TruncationError,
)
from .lattice import (
    LatticeConfig,
    convergence_study,
    propagator_gaussian_chain,
    propagator_quadrature,
)
from .opspec import parse_operator, serialize_operator
from .quadrature import AxisSpec, QuadratureGrid
from .states import FiducialSpec, Label, ModeSpace, log_overlap, overlap
from .symbols import lower_symbol, transition_symbol, upper_symbol
from .wiener import WienerConfig, regularized_propagator_mc, sample_pinned_bridges

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_BUDGET = 4

_SCHEMA = "cohpath/v1"


class ConfigError(Exception):
    """A config field is missing or has the wrong type; message names it."""


# -- config plumbing ----------------------------------------------------

_REQUIRED = object()


def _get(table: dict, section: str, key: str, kind, default=_REQUIRED):
    """Fetch ``section.key`` with a type check; errors name the path."""
    if key not in table:
        if default is _REQUIRED:
            raise ConfigError(f"{section}.{key}: required key is missing")
        return default
    value = table[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
    if not isinstance(value, kind):
        raise ConfigError(
            f"{section}.{key}: expected {kind.__name__}, got {type(value).__name__}"
        )
    return value


def _float_list(table, section, key, default=_REQUIRED):
    raw = _get(table, section, key, list, default)
    if raw is default and default is not _REQUIRED:
        return raw
    try:
        return [float(v) for v in raw]
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key}: expected a list of numbers") from None


def _load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        # the decoder message carries line/column
        raise ConfigError(f"{path}: {exc}") from None


def _system_from(cfg: dict, need_operator: bool):
    table = _get(cfg, "config", "system", dict, {})
    space = ModeSpace(
        _get(table, "system", "n_constrained", int, 0),
        _get(table, "system", "n_reduced", int, 0),
        _get(table, "system", "hbar", float, 1.0),
    )
    widths = _float_list(table, "system", "widths", None)
    fiducial = FiducialSpec(widths) if widths is not None else None
    op = None
    text = _get(table, "system", "operator", str, None)
    if need_operator:
        if text is None:
            raise ConfigError("system.operator: required key is missing")
        op = parse_operator(text, n_modes=space.n_modes)
    resolved = {
        "n_constrained": space.n_constrained,
        "n_reduced": space.n_reduced,
        "hbar": space.hbar,
        "widths": widths,
        "operator": serialize_operator(op) if op is not None else None,
    }
    return space, op, fiducial, resolved


def _label_from(cfg: dict, space: ModeSpace, name: str) -> tuple:
    labels = _get(cfg, "config", "labels", dict, {})
    table = _get(labels, "labels", name, dict, _REQUIRED)
    p = _float_list(table, f"labels.{name}", "p", [])
    q = _float_list(table, f"labels.{name}", "q", [])
    z_raw = _get(table, f"labels.{name}", "z", list, [])
    try:
        z = [[float(v) for v in row] for row in z_raw]
    except (TypeError, ValueError):
        raise ConfigError(f"labels.{name}.z: expected rows of [p, q] numbers") from None
    label = Label(space, p=p, q=q, z=z)
    return label, {"p": p, "q": q, "z": z}


def _seed_from(cfg: dict, override) -> int:
    if override is not None:
        return int(override)
    run = _get(cfg, "config", "run", dict, {})
    return _get(run, "run", "seed", int, 0)


# -- output plumbing ----------------------------------------------------


def _c(value: complex) -> dict:
    value = complex(value)
    return {"re": value.real, "im": value.imag}


def _write_json(out_dir: str, computation: str, document: dict) -> str:
    path = os.path.join(out_dir, computation.replace("-", "_") + ".json")
    with open(path, "w", newline="\n") as fh:
        json.dump(document, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_csv(out_dir: str, name: str, header, rows) -> str:
    path = os.path.join(out_dir, name + ".csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _driver(computation: str):
    """Wrap a subcommand body with config loading, artifacts, exit codes.

    The body receives the parsed config dict plus the resolved seed and
    returns (resolved_config, result_dict, tables, summary_lines) where
    tables maps a CSV basename to (header, rows).
    """

    def decorate(body):
        @click.command(name=computation)
        @click.option(
            "--config", "config_path", required=True,
            type=click.Path(), help="TOML experiment config.",
        )
        @click.option(
            "--out", "out_dir", default=None, type=click.Path(),
            help="Output directory (default: $COHPATH_OUT or '.').",
        )
        @click.option("--seed", default=None, type=click.IntRange(0, 2**64 - 1),
                      help="Override [run].seed.")
        @click.option("--quiet", is_flag=True, help="Suppress the summary table.")
        @functools.wraps(body)
        def command(config_path, out_dir, seed, quiet):
            if out_dir is None:
                out_dir = os.environ.get("COHPATH_OUT", ".")
            try:
                cfg = _load_config(config_path)
                resolved_seed = _seed_from(cfg, seed)
                resolved, result, tables, summary = body(cfg, resolved_seed)
                os.makedirs(out_dir, exist_ok=True)
                document = {
                    "schema": _SCHEMA,
                    "computation": computation,
                    "generated_at": datetime.datetime.now(
                        datetime.timezone.utc
                    ).isoformat(),
                    "seed": resolved_seed,
                    "config": resolved,
                    "versions": {
                        "cohpath": __version__,
                        "numpy": np.__version__,
                        "scipy": scipy.__version__,
                        "python": platform.python_version(),
                    },
                    "result": result,
                }
                paths = [_write_json(out_dir, computation, document)]
                for name, (header, rows) in tables.items():
                    paths.append(_write_csv(out_dir, name, header, rows))
                if not quiet:
                    for line in summary:
                        click.echo(line)
                    for path in paths:
                        click.echo(f"wrote {path}")
            except (ConfigError, OperatorFormatError) as exc:
                _fail(computation, exc, EXIT_CONFIG, quiet)
            except (PreconditionError, DimensionMismatchError) as exc:
                _fail(computation, exc, EXIT_PRECONDITION, quiet)
            except (BudgetError, TruncationError) as exc:
                _fail(computation, exc, EXIT_BUDGET, quiet)
            except Exception as exc:  # noqa: BLE001 - last-resort mapping
                _fail(computation, exc, EXIT_INTERNAL, quiet)

        return command

    return decorate


def _fail(computation: str, exc: Exception, code: int, quiet: bool):
    document = {
        "schema": _SCHEMA,
        "computation": computation,
        "error": {
            "exit_code": code,
            "type": type(exc).__name__,
            "message": str(exc),
        },
    }
    click.echo(json.dumps(document, indent=2, sort_keys=True))
    if not quiet:
        click.echo(f"{computation}: {type(exc).__name__}: {exc}", err=True)
    sys.exit(code)


# -- subcommands --------------------------------------------------------


@click.group()
@click.version_option(version=__version__)
def main():
    """Coherent-state propagator computations from TOML configs."""


@_driver("overlap")
def _overlap_cmd(cfg, seed):
    """Coherent-state overlap <a|b> between the two labels."""
    space, _, fiducial, sys_resolved = _system_from(cfg, need_operator=False)
    a, a_res = _label_from(cfg, space, "a")
    b, b_res = _label_from(cfg, space, "b")
    amp = overlap(a, b, fiducial)
    log = log_overlap(a, b, fiducial)
    result = {"amplitude": _c(amp), "log": _c(log), "abs": abs(amp)}
    resolved = {"system": sys_resolved, "labels": {"a": a_res, "b": b_res}}
    summary = [f"<a|b> = {amp.real:+.12f} {amp.imag:+.12f}j   |<a|b>| = {abs(amp):.12f}"]
    return resolved, result, {}, summary


@_driver("symbols")
def _symbols_cmd(cfg, seed):
    """Upper/lower/transition symbols of the operator at the labels."""
    space, op, fiducial, sys_resolved = _system_from(cfg, need_operator=True)
    a, a_res = _label_from(cfg, space, "a")
    b, b_res = _label_from(cfg, space, "b")
    up = upper_symbol(op, a, fiducial)
    low = lower_symbol(op, a, fiducial)
    trans = transition_symbol(op, a, b, fiducial)
    result = {
        "upper_at_a": _c(up),
        "lower_at_a": _c(low),
        "gap_at_a": _c(up - low),
        "transition_ab": _c(trans),
    }
    resolved = {"system": sys_resolved, "labels": {"a": a_res, "b": b_res}}
    summary = [
        f"upper(a)      = {up:+.12g}",
        f"lower(a)      = {low:+.12g}",
        f"gap(a)        = {up - low:+.12g}",
        f"transition    = {trans:+.12g}",
    ]
    return resolved, result, {}, summary


def _axes_from(table, section) -> QuadratureGrid | None:
    axes = _get(table, section, "axes", list, None)
    if axes is None:
        return None
    specs = []
    for k, row in enumerate(axes):
        try:
            lo, hi, num = float(row[0]), float(row[1]), int(row[2])
        except (TypeError, ValueError, IndexError):
            raise ConfigError(
                f"{section}.axes[{k}]: expected [lo, hi, nodes]"
            ) from None
        specs.append(AxisSpec(lo, hi, num))
    return QuadratureGrid(specs)


@_driver("lattice")
def _lattice_cmd(cfg, seed):
    """Sliced propagator via the Gaussian chain or grid quadrature."""
    space, op, fiducial, sys_resolved = _system_from(cfg, need_operator=True)
    a, a_res = _label_from(cfg, space, "a")
    b, b_res = _label_from(cfg, space, "b")
    table = _get(cfg, "config", "lattice", dict, _REQUIRED)
    config = LatticeConfig(
        _get(table, "lattice", "n_slices", int, _REQUIRED),
        _get(table, "lattice", "total_time", float, _REQUIRED),
        _get(table, "lattice", "route", str, "upper"),
    )
    evaluator = _get(table, "lattice", "evaluator", str, "chain")
    grid = _axes_from(table, "lattice")
    if evaluator == "chain":
        res = propagator_gaussian_chain(op, a, b, config, fiducial)
    elif evaluator == "quadrature":
        res = propagator_quadrature(op, a, b, config, grid, fiducial)
    else:
        raise ConfigError(
            f"lattice.evaluator: expected 'chain' or 'quadrature', got {evaluator!r}"
        )
    result = {
        "amplitude": _c(res.amplitude),
        "error_estimate": res.error_estimate,
        "method": res.method,
        "epsilon": config.epsilon,
    }
    resolved = {
        "system": sys_resolved,
        "labels": {"a": a_res, "b": b_res},
        "lattice": {
            "n_slices": config.n_slices,
            "total_time": config.total_time,
            "route": config.route,
            "evaluator": evaluator,
            "axes": [[ax.lo, ax.hi, ax.num] for ax in grid.axes] if grid else None,
        },
    }
    summary = [
        f"{res.method}: amplitude = {res.amplitude:+.12g}   "
        f"error_estimate = {res.error_estimate:.3e}"
    ]
    return resolved, result, {}, summary


@_driver("wiener")
def _wiener_cmd(cfg, seed):
    """Pinned-bridge Monte-Carlo estimate of the regularized propagator."""
    space, op, fiducial, sys_resolved = _system_from(cfg, need_operator=True)
    a, a_res = _label_from(cfg, space, "a")
    b, b_res = _label_from(cfg, space, "b")
    table = _get(cfg, "config", "wiener", dict, _REQUIRED)
    lattice = LatticeConfig(
        _get(table, "wiener", "n_slices", int, _REQUIRED),
        _get(table, "wiener", "total_time", float, _REQUIRED),
        _get(table, "wiener", "route", str, "lower"),
    )
    config = WienerConfig(
        _get(table, "wiener", "nu", float, _REQUIRED),
        _get(table, "wiener", "n_samples", int, _REQUIRED),
        seed,
        lattice,
    )
    csv_samples = _get(table, "wiener", "csv_samples", int, 0)
    if csv_samples < 0:
        raise ConfigError("wiener.csv_samples: must be non-negative")
    res = regularized_propagator_mc(op, a, b, config, fiducial=fiducial)
    result = {
        "amplitude": _c(res.amplitude),
        "error_estimate": res.error_estimate,
        "method": res.method,
        "nu": config.nu,
        "n_samples": config.n_samples,
    }
    tables = {}
    if csv_samples:
        times = np.linspace(0.0, lattice.total_time, lattice.n_slices + 2)
        values = sample_pinned_bridges(
            seed, csv_samples, b.flat(), a.flat(), times, config.nu
        )
        names = [
            f"{kind}{k}" for k in range(space.n_modes) for kind in ("p", "q")
        ]
        rows = [
            [s, f"{float(times[t])!r}"] + [f"{float(v)!r}" for v in values[s, t]]
            for s in range(csv_samples)
            for t in range(times.shape[0])
        ]
        tables["wiener_bridges"] = (["sample", "time"] + names, rows)
    resolved = {
        "system": sys_resolved,
        "labels": {"a": a_res, "b": b_res},
        "wiener": {
            "nu": config.nu,
            "n_samples": config.n_samples,
            "n_slices": lattice.n_slices,
            "total_time": lattice.total_time,
            "route": lattice.route,
            "csv_samples": csv_samples,
        },
    }
    summary = [
        f"wiener_mc: amplitude = {res.amplitude:+.12g}   "
        f"standard_error = {res.error_estimate:.3e}   "
        f"(nu = {config.nu}, {config.n_samples} samples, seed = {seed})"
    ]
    return resolved, result, tables, summary


def _equivalence_table(report) -> list:
    lines = []
    header = f"{'route':<16} {'amplitude_re':>18} {'amplitude_im':>18} {'error':>12}  status"
    lines.append(header)
    lines.append("-" * len(header))
    for name, route in report.routes.items():
        if route.ok:
            status = route.message or "ok"
            lines.append(
                f"{name:<16} {route.amplitude.real:>18.12f} "
                f"{route.amplitude.imag:>18.12f} {route.error_estimate:>12.3e}  {status}"
            )
        else:
            lines.append(f"{name:<16} {'-':>18} {'-':>18} {'-':>12}  FAILED: {route.message}")
    lines.append("")
    lines.append(f"{'pair':<34} {'deviation':>12}")
    for pair, dev in report.deviations.items():
        lines.append(f"{pair:<34} {dev:>12.3e}")
    lines.append("")
    lines.append(
        f"gauge term = {report.gauge_term:+.6g}  "
        f"(breaking: {'yes' if report.gauge_breaking else 'no'})"
    )
    return lines


@_driver("constraint-equivalence")
def _equivalence_cmd(cfg, seed):
    """Run every constraint route and tabulate pairwise deviations."""
    space, op, fiducial, sys_resolved = _system_from(cfg, need_operator=True)
    a, a_res = _label_from(cfg, space, "a")
    b, b_res = _label_from(cfg, space, "b")
    table = _get(cfg, "config", "equivalence", dict, _REQUIRED)
    params = {
        "total_time": _get(table, "equivalence", "total_time", float, _REQUIRED),
        "nu_ladder": _float_list(table, "equivalence", "nu_ladder", [5.0, 20.0, 80.0]),
        "extended_n_slices": _get(table, "equivalence", "extended_n_slices", int, 12),
        "projected_n_slices": _get(table, "equivalence", "projected_n_slices", int, 16384),
        "box_length": _get(table, "equivalence", "box_length", float, 10.0),
        "n_momentum": _get(table, "equivalence", "n_momentum", int, 12),
        "n_trunc": _get(table, "equivalence", "n_trunc", int, 40),
        "route": _get(table, "equivalence", "route", str, "lower"),
        "lambda_common": _get(table, "equivalence", "lambda_common", float, 0.0),
    }
    reduced_space = ModeSpace(0, space.n_reduced, space.hbar)
    z_bra = Label(reduced_space, z=a.z)
    z_ket = Label(reduced_space, z=b.z)
    report = equivalence_report(
        op, space, a.q, b.q, z_bra, z_ket,
        params["total_time"],
        fiducial=fiducial,
        nu_ladder=tuple(params["nu_ladder"]),
        extended_n_slices=params["extended_n_slices"],
        projected_n_slices=params["projected_n_slices"],
        box_length=params["box_length"],
        n_momentum=params["n_momentum"],
        n_trunc=params["n_trunc"],
        route=params["route"],
        lambda_common=params["lambda_common"],
    )
    rows = [
        [f"{row['nu']!r}", f"{row['gap_to_limit']!r}", str(row["monotone"]).lower()]
        for row in report.trend
    ]
    tables = {"equivalence_trend": (["nu", "gap_to_limit", "monotone"], rows)}
    resolved = {
        "system": sys_resolved,
        "labels": {"a": a_res, "b": b_res},
        "equivalence": params,
    }
    return resolved, report.to_json_dict(), tables, _equivalence_table(report)


@_driver("convergence")
def _convergence_cmd(cfg, seed):
    """Lattice error against the Fock oracle over an N ladder."""
    space, op, fiducial, sys_resolved = _system_from(cfg, need_operator=True)
    a, a_res = _label_from(cfg, space, "a")
    b, b_res = _label_from(cfg, space, "b")
    table = _get(cfg, "config", "convergence", dict, _REQUIRED)
    total_time = _get(table, "convergence", "total_time", float, _REQUIRED)
    n_list = _get(table, "convergence", "n_list", list, _REQUIRED)
    if not n_list or not all(isinstance(n, int) and not isinstance(n, bool) for n in n_list):
        raise ConfigError("convergence.n_list: expected a list of integers")
    routes = _get(table, "convergence", "routes", list, ["upper", "lower"])
    evaluator = _get(table, "convergence", "evaluator", str, "gaussian_chain")
    if evaluator == "chain":
        evaluator = "gaussian_chain"
    n_trunc = _get(table, "convergence", "n_trunc", int, 60)
    grid = _axes_from(table, "convergence")
    study = convergence_study(
        op, a, b, total_time, n_list,
        routes=tuple(routes), evaluator=evaluator, grid=grid,
        n_trunc=n_trunc, fiducial=fiducial,
    )
    rows = []
    for route in routes:
        for n, eps, amp, err in study.rows[route]:
            rows.append([route, n, f"{eps!r}", f"{amp.real!r}", f"{amp.imag!r}", f"{err!r}"])
    tables = {
        "convergence": (
            ["route", "n_slices", "epsilon", "amplitude_re", "amplitude_im", "abs_error"],
            rows,
        )
    }
    result = {
        "reference": _c(study.reference),
        "slopes": {route: study.slopes[route] for route in routes},
        "extrapolated": {route: _c(study.extrapolated[route]) for route in routes},
        "route_limit_gap": study.route_limit_gap,
    }
    resolved = {
        "system": sys_resolved,
        "labels": {"a": a_res, "b": b_res},
        "convergence": {
            "total_time": total_time,
            "n_list": list(n_list),
            "routes": list(routes),
            "evaluator": evaluator,
            "n_trunc": n_trunc,
        },
    }
    summary = [f"reference(Fock) = {study.reference:+.12g}"]
    for route in routes:
        summary.append(
            f"{route:<6} slope = {study.slopes[route]:+.3f}   "
            f"extrapolated = {study.extrapolated[route]:+.12g}"
        )
    if len(routes) == 2:
        summary.append(f"route limit gap = {study.route_limit_gap:.3e}")
    return resolved, result, tables, summary


main.add_command(_overlap_cmd)
main.add_command(_symbols_cmd)
main.add_command(_lattice_cmd)
main.add_command(_wiener_cmd)
main.add_command(_equivalence_cmd)
main.add_command(_convergence_cmd)


if __name__ == "__main__":
    main()
