"""
Sweep runner and command-line interface for ECS Metrology.

Runs the pipeline spectral -> dynamics/boundstate -> fockstate -> qfi over one
sweep axis (t, N or omega_c), optionally for several series values of a second
parameter, and writes the rows as CSV or JSON with a provenance header.
"""

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

import boundstate
import config_utils
import dynamics
import fockstate
import qfi
import spectral
from version import VERSION, outdated_dependencies, solver_versions

logger = logging.getLogger(__name__)

CONVERGENCE_FRACTION = 0.9
CONVERGENCE_TOLERANCE = 1e-3

COLUMNS = {
    "amplitude": ["series", "t", "method", "omega_c", "eta", "abs_c", "re_c", "im_c", "transmission", "error"],
    "residue": ["series", "omega_c", "eta", "bound_state", "varpi_b", "z", "abs_c_long", "converged", "error"],
    "spectrum": ["series", "omega_c", "eta", "index", "eigenfrequency", "error"],
    "precision": ["series", "value", "method", "n_avg", "t", "omega_c", "eta", "z", "f_q", "delta_gamma",
                  "snl", "weak_hl", "zeno", "error"],
}


@dataclass
class PointParameters:
    """Physical parameters of one pipeline evaluation."""

    sd: spectral.SpectralDensity
    probe: spectral.ProbeConfig
    n_avg: float
    t: float

    @property
    def omega_c(self):
        return self.sd.omega_c

    @property
    def eta(self):
        return self.sd.eta


def resolve_point(config, series_value=None, value=None):
    """
    Physical parameters for a series value and a sweep value.

    Sweep value overrides series value overrides the base configuration; the
    eta rule and t = t_factor/omega_c are applied last.
    """
    params = {"omega_c": config.omega_c, "N": config.n_avg, "t": config.t}
    if series_value is not None:
        params[config.series_variable] = series_value
    if value is not None:
        params[config.variable] = value

    probe = spectral.ProbeConfig(omega0=config.omega0, gamma=config.gamma)
    omega_c = float(params["omega_c"])
    eta = config.eta
    if config.eta_ratio is not None:
        eta = spectral.eta_for_ratio(config.s, omega_c, probe, config.eta_ratio)
    sd = spectral.SpectralDensity(s=config.s, eta=eta, omega_c=omega_c)
    t = float(params["t"])
    if config.t_factor is not None and config.variable != "t":
        t = config.t_factor / omega_c
    return PointParameters(sd=sd, probe=probe, n_avg=float(params["N"]), t=t)


def _blank_row(quantity, **values):
    row = {column: math.nan for column in COLUMNS[quantity]}
    row["error"] = ""
    row.update(values)
    return row


def _error_code(error):
    return type(error).__name__


# ---------------------------------------------------------------------------
# Point evaluators (module level so worker processes can unpickle them)


def _precision_value(method, config, point, trajectory, bound):
    """QFI of one method at one point; returns (f_q, z, grid time)."""
    n_avg, t = point.n_avg, point.t
    if method == "ideal":
        return qfi.qfi_ideal(n_avg, t), math.nan, t
    if method == "markovian":
        kappa, _ = spectral.markov_rates(point.sd, point.probe)
        return qfi.qfi_markovian(n_avg, t, kappa), math.nan, t

    alpha = fockstate.alpha_of_n(n_avg)
    if method in ("asymptotic", "asymptotic_exact"):
        if bound is None:
            raise boundstate.NoBoundStateError(f"no bound state at omega_c = {point.omega_c:g}")
        closed_form = qfi.qfi_asymptotic if method == "asymptotic" else qfi.qfi_asymptotic_exact
        return closed_form(n_avg, alpha, t, bound.z), bound.z, t

    grid_t, c_value, dc_value = trajectory.at(t)
    if n_avg == 0:
        return 0.0, math.nan, grid_t
    rho = fockstate.rho_of_t(alpha, c_value, point.probe.omega0 * grid_t, config.cutoff, dc_dgamma=dc_value)
    return qfi.qfi_mixed(rho, config.eps_rank), math.nan, grid_t


def _precision_rows(config, series_value, values):
    """Rows for sweep values that share one trajectory (or one per value for omega_c sweeps)."""
    rows = []
    cache = {}
    for value in values:
        point = resolve_point(config, series_value, value)
        key = (point.sd, point.probe)
        if key not in cache:
            cache.clear()
            cache[key] = _shared_inputs(config, series_value, values, point)
        trajectory, bound, shared_error = cache[key]

        for method in config.methods:
            row = _blank_row(
                "precision", series=series_value, value=float(value), method=method, n_avg=point.n_avg,
                t=point.t, omega_c=point.omega_c, eta=point.eta,
            )
            try:
                if method == "exact" and shared_error is not None:
                    raise shared_error
                f_q, z, grid_t = _precision_value(method, config, point, trajectory, bound)
                if f_q < 0:
                    raise spectral.DomainError(f"negative QFI {f_q:.6g}")
                row.update(f_q=f_q, z=z, t=grid_t)
            except Exception as e:
                logger.warning("point %s=%g method %s flagged: %s", config.variable, value, method, e)
                row["error"] = _error_code(e)
            rows.append(row)
    return _with_precision_series(rows, config.mu)


def _with_precision_series(rows, mu):
    """Fill delta_gamma and the benchmark columns from one qfi.PrecisionSeries per method."""
    for method in dict.fromkeys(row["method"] for row in rows):
        selected = [row for row in rows if row["method"] == method]
        flagged = [bool(row["error"]) for row in selected]
        series = qfi.precision_series(
            "value",
            [row["value"] for row in selected],
            [0.0 if bad else row["f_q"] for row, bad in zip(selected, flagged)],
            n_avg=np.array([row["n_avg"] for row in selected]),
            t=np.array([row["t"] for row in selected]),
            mu=mu,
            with_zeno=True,
        )
        for row, computed, bad in zip(selected, series.to_rows(), flagged):
            row.update(snl=computed["snl"], weak_hl=computed["weak_hl"], zeno=computed["zeno"])
            if not bad:
                row["delta_gamma"] = computed["delta_gamma"]
    return rows


def _shared_inputs(config, series_value, values, point):
    """Trajectory (with sensitivity) and bound state reused across points with equal physics."""
    trajectory, bound, error = None, None, None
    if "exact" in config.methods:
        t_end = point.t
        if config.variable == "t":
            t_end = max(resolve_point(config, series_value, v).t for v in values)
        try:
            trajectory = dynamics.solve_c(point.sd, point.probe, t_end, config.dt, with_sensitivity=True)
        except Exception as e:
            error = e
    if any(m.startswith("asymptotic") for m in config.methods):
        bound = boundstate.residue_or_none(point.sd, point.probe)
    return trajectory, bound, error


def _amplitude_rows(config, series_value, values):
    point = resolve_point(config, series_value, None)
    rows = []
    trajectory, error = None, None
    if "exact" in config.methods:
        try:
            trajectory = dynamics.solve_c(point.sd, point.probe, max(values.max(), 1e-12), config.dt)
        except Exception as e:
            error = e

    for value in values:
        for method in config.methods:
            row = _blank_row("amplitude", series=series_value, t=float(value), method=method,
                             omega_c=point.omega_c, eta=point.eta)
            try:
                if method == "exact":
                    if error is not None:
                        raise error
                    grid_t, c_value, _ = trajectory.at(float(value))
                    row["t"] = grid_t
                elif method == "markovian":
                    c_value = dynamics.markovian_c(point.sd, point.probe, float(value))
                elif method == "asymptotic":
                    c_value = dynamics.asymptotic_c(boundstate.find_bound_state(point.sd, point.probe), float(value))
                else:
                    raise config_utils.ConfigError("methods", f"'{method}' has no amplitude")
                row.update(abs_c=abs(c_value), re_c=c_value.real, im_c=c_value.imag)
                row["transmission"] = dynamics.transmission(c_value)
            except Exception as e:
                row["error"] = _error_code(e)
            rows.append(row)
    return rows


def _residue_rows(config, series_value, values):
    rows = []
    for value in values:
        point = resolve_point(config, series_value, value)
        row = _blank_row("residue", series=series_value, omega_c=point.omega_c, eta=point.eta,
                         bound_state=boundstate.bound_state_exists(point.sd, point.probe))
        try:
            if row["bound_state"]:
                bound = boundstate.find_bound_state(point.sd, point.probe, config.tol)
                row.update(varpi_b=bound.varpi_b, z=bound.z)
            if config.t_long:
                trajectory = dynamics.solve_c(point.sd, point.probe, config.t_long, config.dt)
                _, late, _ = trajectory.at(config.t_long)
                _, earlier, _ = trajectory.at(CONVERGENCE_FRACTION * config.t_long)
                row["abs_c_long"] = abs(late)
                row["converged"] = abs(abs(late) - abs(earlier)) < CONVERGENCE_TOLERANCE
        except Exception as e:
            logger.warning("omega_c=%g flagged: %s", point.omega_c, e)
            row["error"] = _error_code(e)
        rows.append(row)
    return rows


def _spectrum_rows(config, series_value, values):
    rows = []
    for value in values:
        point = resolve_point(config, series_value, value)
        try:
            spectrum = boundstate.discretized_spectrum(point.sd, point.probe, config.spectrum_modes)
        except Exception as e:
            rows.append(_blank_row("spectrum", series=series_value, omega_c=point.omega_c, eta=point.eta,
                                   error=_error_code(e)))
            continue
        for index, frequency in enumerate(spectrum.eigenfrequencies):
            rows.append(_blank_row("spectrum", series=series_value, omega_c=point.omega_c, eta=point.eta,
                                   index=index, eigenfrequency=float(frequency)))
    return rows


_EVALUATORS = {
    "amplitude": _amplitude_rows,
    "residue": _residue_rows,
    "spectrum": _spectrum_rows,
    "precision": _precision_rows,
}


def evaluate_task(config_data, series_value, values):
    """
    Evaluate one task of a sweep.

    Returns:
        Tuple of (success, rows, error_message)
    """
    try:
        config = config_utils.ExperimentConfig.from_dict(config_data)
        rows = _EVALUATORS[config.quantity](config, series_value, np.asarray(values, dtype=float))
        return True, rows, None
    except Exception as e:
        return False, [], f"{_error_code(e)}: {e}"


# ---------------------------------------------------------------------------
# Results


def _format_value(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, ".17g")
    if hasattr(value, "dtype"):
        return _format_value(value.item())
    return str(value)


@dataclass
class SweepResult:
    """Ordered rows of a sweep plus the provenance header."""

    config: config_utils.ExperimentConfig
    columns: list
    rows: list
    provenance: dict = field(default_factory=dict)

    @property
    def flagged_rows(self):
        return [row for row in self.rows if row.get("error")]

    def header_lines(self):
        lines = [f"# {key}: {value}" for key, value in self.provenance.items()]
        lines.append("# config: " + json.dumps(self.config.to_dict(), sort_keys=True))
        return lines

    def body_lines(self):
        """CSV lines of the column header and the rows (no provenance)."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_format_value(row.get(column)) for column in self.columns])
        return buffer.getvalue().splitlines()

    def to_csv(self, path):
        """Write header and body to CSV. Returns (success, error)."""
        try:
            with open(path, "w", encoding="utf-8", newline="") as f:
                f.write("\n".join(self.header_lines() + self.body_lines()) + "\n")
            return True, None
        except Exception as e:
            return False, str(e)

    def to_json(self, path):
        """Write provenance, config and rows as JSON. Returns (success, error)."""
        def clean(value):
            if isinstance(value, float) and not math.isfinite(value):
                return None
            if hasattr(value, "item"):
                return clean(value.item())
            return value

        document = {
            "provenance": self.provenance,
            "config": self.config.to_dict(),
            "columns": self.columns,
            "rows": [{column: clean(row.get(column)) for column in self.columns} for row in self.rows],
        }
        try:
            with open(path, "w", encoding="utf-8") as f:
                json.dump(document, f, indent=2)
            return True, None
        except Exception as e:
            return False, str(e)

    def write(self, path, fmt="csv"):
        return self.to_json(path) if fmt == "json" else self.to_csv(path)


def format_sweep_summary(result):
    """Human-readable summary of a finished sweep."""
    config = result.config
    lines = [
        "Sweep Summary:",
        f"Name: {config.name}",
        f"Quantity: {config.quantity} over {config.variable} "
        f"[{config.start:g}, {config.stop:g}] ({config.count} points, {config.spacing})",
    ]
    if config.series:
        lines.append(f"Series ({config.series_variable}): {', '.join(f'{v:g}' for v in config.series)}")
    lines.append(f"Rows: {len(result.rows)}")
    flagged = result.flagged_rows
    if flagged:
        codes = sorted({row['error'] for row in flagged})
        lines.append(f"Flagged rows: {len(flagged)} ({', '.join(codes)})")
    if config.quantity == "precision":
        finite = [row for row in result.rows if not row.get("error") and math.isfinite(row["delta_gamma"])]
        if finite:
            best = min(finite, key=lambda row: row["delta_gamma"])
            lines.append(
                f"Best precision: {best['delta_gamma']:.6g} ({best['method']}, {config.variable}={best[config.variable]:g})"
            )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Runner


class SweepRunner:
    """Splits a configuration into independent tasks and gathers rows in sweep order."""

    def __init__(self, config, log_callback=None):
        """
        Initialize the sweep runner.

        Args:
            config: Validated ExperimentConfig
            log_callback: Function to call for progress messages
        """
        self.config = config.validate()
        self.log_callback = log_callback or (lambda msg: None)
        self.tasks_done = 0

    def log(self, message):
        """Log a message using the callback if available"""
        if self.log_callback:
            self.log_callback(message)

    def build_tasks(self):
        """
        List of (series value, sweep values) pairs.

        Sweeps over t or N at fixed bath parameters share one trajectory per
        series value; everything else is split point by point.
        """
        values = [float(v) for v in self.config.sweep_values()]
        shared = self.config.quantity == "amplitude" or (
            self.config.quantity == "precision" and self.config.variable in ("t", "N")
        )
        tasks = []
        for series_value in self.config.series_values():
            if shared:
                tasks.append((series_value, values))
            else:
                tasks.extend((series_value, [v]) for v in values)
        return tasks

    def _workers(self, task_count):
        budget = self.config.workers or os.cpu_count() or 1
        return max(1, min(budget, task_count))

    def run(self):
        tasks = self.build_tasks()
        config_data = self.config.to_dict()
        workers = self._workers(len(tasks))
        started = datetime.now(timezone.utc)
        self.log(f"Running {self.config.name}: {len(tasks)} task(s) on {workers} worker(s)")

        outcomes = [None] * len(tasks)
        if workers == 1:
            for index, (series_value, values) in enumerate(tasks):
                outcomes[index] = evaluate_task(config_data, series_value, values)
                self._progress(index, len(tasks))
        else:
            with ProcessPoolExecutor(max_workers=workers) as executor:
                futures = {
                    executor.submit(evaluate_task, config_data, series_value, values): index
                    for index, (series_value, values) in enumerate(tasks)
                }
                for future in as_completed(futures):
                    index = futures[future]
                    outcomes[index] = future.result()
                    self._progress(index, len(tasks))

        rows = []
        for (series_value, values), (success, task_rows, error) in zip(tasks, outcomes):
            if success:
                rows.extend(task_rows)
                continue
            logger.error("task for series %s failed: %s", series_value, error)
            code = error.split(":", 1)[0]
            for value in values:
                rows.append(self._failed_row(series_value, value, code))

        if self.config.quantity == "precision":
            for row in rows:
                row[self.config.variable] = row.pop("value", math.nan)

        provenance = {
            "generator": f"ecs-metrology {VERSION}",
            "started": started.isoformat(timespec="seconds"),
            "finished": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }
        provenance.update({f"version.{name}": value for name, value in solver_versions().items()})
        return SweepResult(self.config, self._columns(), rows, provenance)

    def _progress(self, index, total):
        self.tasks_done += 1
        self.log(f"Finished task {index + 1} ({self.tasks_done}/{total})")

    def _columns(self):
        columns = list(COLUMNS[self.config.quantity])
        if self.config.quantity == "precision":
            columns[columns.index("value")] = self.config.variable
        return columns

    def _failed_row(self, series_value, value, code):
        quantity = self.config.quantity
        key = {"amplitude": "t", "residue": "omega_c", "spectrum": "omega_c", "precision": "value"}[quantity]
        return _blank_row(quantity, series=series_value, error=code, **{key: value})


def run_sweep(config, log_callback=None):
    """Evaluate every point of `config` and return the ordered SweepResult."""
    return SweepRunner(config, log_callback).run()


def run_preset(name, out=None, workers=None, dt=None, fmt=None, log_callback=None):
    """Run a named figure preset; writes the result when `out` is given."""
    config = config_utils.apply_overrides(
        config_utils.preset_config(name), workers=workers, dt=dt, out=out, format=fmt
    )
    result = run_sweep(config, log_callback)
    if out:
        success, error = result.write(out, config.format)
        if not success:
            raise OSError(f"could not write {out}: {error}")
    return result


# ---------------------------------------------------------------------------
# Command line


def parse_args(argv=None):
    parser = argparse.ArgumentParser(
        prog="ecs-metrology",
        description="Non-Markovian ECS metrology: amplitude dynamics, bound states and quantum Fisher information",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    preset = subparsers.add_parser("preset", help="Run a named figure preset")
    preset.add_argument("name", choices=sorted(config_utils.PRESETS), help="Preset name")

    sweep = subparsers.add_parser("sweep", help="Run a sweep described by a JSON config file")
    sweep.add_argument("config", help="Path to the JSON configuration")

    for sub in (preset, sweep):
        sub.add_argument("--out", "-o", help="Output file (CSV or JSON)")
        sub.add_argument("--workers", "-w", type=int, help="Number of worker processes")
        sub.add_argument("--dt", type=float, help="Time step of the memory-kernel solver")
        sub.add_argument("--format", "-f", choices=config_utils.FORMATS, help="Output format")
        sub.add_argument("--save-config", help="Write the effective configuration to this JSON file")
        sub.add_argument("--verbose", "-v", action="store_true", help="Print progress messages")
        sub.add_argument("--log-level", default="WARNING",
                         choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level")

    return parser.parse_args(argv)


def main(argv=None):
    """Entry point of the ecs-metrology command. Returns the exit code."""
    args = parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s [%(levelname)8s] %(name)s: %(message)s")

    for name in outdated_dependencies():
        logger.warning("%s is older than the tested minimum version", name)

    try:
        if args.command == "preset":
            base = config_utils.preset_config(args.name)
        else:
            if not os.path.exists(args.config):
                raise config_utils.ConfigError("config", f"file not found: {args.config}")
            base = config_utils.load_config(args.config)
        config = config_utils.apply_overrides(
            base, out=args.out, workers=args.workers, dt=args.dt, format=args.format
        )
    except config_utils.ConfigError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return 2

    if args.save_config:
        success, error = config_utils.save_config(config, args.save_config)
        if not success:
            print(error, file=sys.stderr)
            return 1

    try:
        result = run_sweep(config, log_callback=(lambda msg: print(msg, file=sys.stderr)) if args.verbose else None)
    except Exception as e:
        logger.exception("sweep failed")
        print(f"Error: {e}", file=sys.stderr)
        return 1

    if config.out:
        success, error = result.write(config.out, config.format)
        if not success:
            print(f"Error writing output: {error}", file=sys.stderr)
            return 1
        print(f"Results written to {config.out}")
    else:
        sys.stdout.write("\n".join(result.header_lines() + result.body_lines()) + "\n")

    print(format_sweep_summary(result), file=sys.stderr if not config.out else sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
