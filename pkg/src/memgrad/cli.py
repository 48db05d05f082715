"""``memgrad`` command line: simulate, relax, rest, verify, cocontent, export-plots.

Every subcommand except ``export-plots`` reads an experiment file (YAML) and
writes into one output directory. Results are staged in a private directory
and moved into place only when the command has produced all of them, so a
failing run leaves no partial files behind.

Exit codes: 0 ok, 1 bad config or missing inputs, 2 solver failure,
3 relaxation not converged, 4 relaxation diverged, 5 verification failure.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import math
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

import numpy as np
import yaml

from . import _suites
from ._schema import ConfigError, fields, integer, number
from .circuits import (
    EquilibriumError,
    energy_balance,
    ode_solve,
    read_report_csv,
    rest_state,
    steady_current,
    waveform_relax,
    write_report_csv,
)
from .elements import IntegrationError
from .gradient import IdentityCheck, cocontent_path
from .neuron import ExperimentSpec, build_circuit, count_spikes
from .trajectory import Trajectory, inner, norm

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_NOT_CONVERGED = 3
EXIT_DIVERGED = 4
EXIT_VERIFY = 5

OUT_ENV = "MEMGRAD_OUT"
DEFAULT_OUT = "memgrad-out"
LOCK_NAME = ".memgrad.lock"

PANELS = ("ode_voltage", "relax_voltage", "input_current", "residuals")


class InputError(Exception):
    """Inputs needed by a command are missing or unusable (exit 1)."""


# --- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class VerifyConfig:
    suites: tuple[str, ...] = tuple(_suites.SUITES)
    seed: int = 0
    corrupt_dissipation_offset: float = 0.0  # test hook: added to every branch current

    def to_dict(self) -> dict:
        return {
            "suites": list(self.suites),
            "seed": self.seed,
            "corrupt_dissipation_offset": self.corrupt_dissipation_offset,
        }

    @classmethod
    def from_dict(cls, data: Any) -> "VerifyConfig":
        d = fields(data if data is not None else {}, "verify", (), ("suites", "seed", "corrupt_dissipation_offset"))
        suites = d.get("suites", list(_suites.SUITES))
        if suites is None:
            suites = []
        if not isinstance(suites, list) or not all(isinstance(s, str) for s in suites):
            raise ConfigError("verify.suites: expected a list of suite names")
        unknown = [s for s in suites if s not in _suites.SUITES]
        if unknown:
            raise ConfigError(f"verify.suites: unknown suite(s) {', '.join(unknown)}; known: {', '.join(_suites.SUITES)}")
        return cls(
            tuple(suites),
            integer(d.get("seed", 0), "verify.seed"),
            number(d.get("corrupt_dissipation_offset", 0.0), "verify.corrupt_dissipation_offset"),
        )


@dataclass(frozen=True)
class RunConfig:
    """An experiment file: the experiment itself plus the verification settings."""

    experiment: ExperimentSpec
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    def to_dict(self) -> dict:
        d = self.experiment.to_dict()
        d["verify"] = self.verify.to_dict()
        return d

    @classmethod
    def from_dict(cls, data: Any) -> "RunConfig":
        if not isinstance(data, Mapping):
            raise ConfigError(f"config: expected a mapping at top level, got {type(data).__name__}")
        d = dict(data)
        verify = VerifyConfig.from_dict(d.pop("verify", None))
        return cls(ExperimentSpec.from_dict(d), verify)

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def loads(cls, text: str, overrides: Sequence[str] = ()) -> "RunConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(str(exc)) from None
        return cls.from_dict(apply_overrides(data, overrides))


def apply_overrides(data: Any, overrides: Sequence[str]) -> Any:
    """Apply ``dotted.key=value`` overrides; values are parsed as YAML scalars or lists."""
    if not overrides:
        return data
    if not isinstance(data, dict):
        raise ConfigError("config: overrides need a mapping at top level")
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set {item!r}: expected key=value")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"--set {key}: {exc}") from None
        parts = key.split(".")
        node = data
        for part in parts[:-1]:
            node = _child(node, part, key)
        last = parts[-1]
        if isinstance(node, list):
            node[_index(node, last, key)] = value
        elif isinstance(node, dict):
            node[last] = value
        else:
            raise ConfigError(f"--set {key}: {'.'.join(parts[:-1])} is not a mapping or list")
    return data


def _index(node: list, part: str, key: str) -> int:
    try:
        k = int(part)
        node[k]
    except (ValueError, IndexError):
        raise ConfigError(f"--set {key}: bad list index {part!r}") from None
    return k


def _child(node: Any, part: str, key: str):
    if isinstance(node, list):
        return node[_index(node, part, key)]
    if isinstance(node, dict):
        if part not in node or node[part] is None:
            node[part] = {}
        return node[part]
    raise ConfigError(f"--set {key}: cannot descend into {part!r}")


def load_config(path: str | Path, overrides: Sequence[str] = ()) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{p}: config file not found")
    try:
        return RunConfig.loads(p.read_text(), overrides)
    except ConfigError as exc:
        raise ConfigError(f"{p}: {exc}") from None


# --- output handling ------------------------------------------------------------

@contextlib.contextmanager
def locked(out_dir: Path) -> Iterator[None]:
    """Exclusive ownership of ``out_dir`` for the duration of one command."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise InputError(f"{out_dir} is in use by another run (remove {lock} if stale)") from None
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            lock.unlink()


class Staging:
    """Files written here appear in the output directory only on :meth:`commit`."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.dir = Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir))
        self.names: list[str] = []

    def path(self, name: str) -> Path:
        self.names.append(name)
        return self.dir / name

    def write_text(self, name: str, text: str) -> None:
        with open(self.path(name), "w", newline="") as fh:
            fh.write(text)

    def commit(self) -> list[Path]:
        done = []
        for name in self.names:
            target = self.out_dir / name
            os.replace(self.dir / name, target)
            done.append(target)
        self.discard()
        return done

    def discard(self) -> None:
        shutil.rmtree(self.dir, ignore_errors=True)


def _fmt(x: Any) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if isinstance(x, (list, tuple)):
        return ",".join(_fmt(v) for v in x)
    return str(x)


def format_record(record: Mapping[str, Any], prefix: str = "") -> str:
    """``key: value`` lines; nested mappings become dotted keys."""
    lines = []
    for k, v in record.items():
        if isinstance(v, Mapping):
            lines.append(format_record(v, f"{prefix}{k}."))
        else:
            lines.append(f"{prefix}{k}: {_fmt(v)}\n")
    return "".join(lines)


def parse_record(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line.strip():
            k, _, v = line.partition(": ")
            out[k] = v
    return out


def _write_csv(path: Path, header: Sequence[str], columns: Sequence[Sequence[float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(float(x)) for x in row])


def _balance_record(circuit, report) -> dict:
    eb = energy_balance(circuit, report)
    return {
        "capacitive_delta": eb.capacitive_delta,
        "capacitive_inner": eb.capacitive_inner,
        "residual_open": eb.residual_open,
        "residual_closed": eb.residual_closed,
        "branch_power_scale": eb.branch_power_scale,
        "closed_relative": eb.residual_closed / eb.branch_power_scale if eb.branch_power_scale > 0 else 0.0,
        "dissipation": dict(zip(eb.branch_names, eb.per_branch_dissipation)),
    }


def _solution_record(report, circuit) -> dict:
    v = report.voltage
    k = int(np.argmax(v.samples))
    return {
        "method": report.method,
        "status": report.status,
        "n_iter": report.n_iter,
        "n_samples": v.grid.n_samples,
        "n_spikes": count_spikes(v),
        "peak_v": float(v.samples[k]),
        "peak_time": float(v.times[k]),
        "v_start": float(v.samples[0]),
        "v_end": float(v.samples[-1]),
        "energy": _balance_record(circuit, report),
    }


# --- commands -----------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, base_dir: Path, stage: Staging) -> int:
    circuit = build_circuit(cfg.experiment, base_dir)
    report = ode_solve(circuit)
    write_report_csv(report, circuit, stage.path("simulate.csv"))
    stage.write_text("simulate.summary.txt", format_record(_solution_record(report, circuit)))
    return EXIT_OK


def _comparison(out_dir: Path, v: Trajectory) -> dict | None:
    ref_path = out_dir / "simulate.csv"
    if not ref_path.is_file():
        return None
    ref = read_report_csv(ref_path)
    if len(ref["v"]) != v.grid.n_samples or not np.allclose(ref["time"], v.times, rtol=0, atol=1e-9):
        return {"skipped": "simulate.csv is on a different grid"}
    v_ref = Trajectory(v.grid, ref["v"])
    k_ref, k = int(np.argmax(v_ref.samples)), int(np.argmax(v.samples))
    return {
        "rel_l2": norm(v - v_ref) / max(norm(v_ref), 1.0),
        "peak_time_delta": abs(float(v.times[k] - v.times[k_ref])),
        "peak_value_delta": abs(float(v.samples[k] - v_ref.samples[k_ref])),
        "spikes_ode": count_spikes(v_ref),
    }


def cmd_relax(cfg: RunConfig, base_dir: Path, stage: Staging) -> int:
    circuit = build_circuit(cfg.experiment, base_dir)
    report = waveform_relax(circuit, cfg.experiment.solver)
    write_report_csv(report, circuit, stage.path("relax.csv"))
    iters = np.arange(1, report.n_iter + 1)
    _write_csv(stage.path("relax.residuals.csv"), ["iteration", "residual"], [iters, report.residual_history])
    record = _solution_record(report, circuit)
    record["tol"] = cfg.experiment.solver.tol
    record["residuals"] = list(report.residual_history)
    comparison = _comparison(stage.out_dir, report.voltage)
    if comparison is not None:
        record["comparison"] = comparison
    stage.write_text("relax.summary.txt", format_record(record))
    return {"converged": EXIT_OK, "diverged": EXIT_DIVERGED}.get(report.status, EXIT_NOT_CONVERGED)


def cmd_rest(cfg: RunConfig, base_dir: Path, stage: Staging) -> int:
    circuit = build_circuit(cfg.experiment, base_dir)
    v_rest, states = rest_state(circuit)
    record: dict[str, Any] = {"v_rest": v_rest, "total_current": steady_current(circuit, v_rest)}
    for b, x in zip(circuit.branches, states):
        entry: dict[str, Any] = {"conductance": float(b.conductance_from_gates(x.values))}
        entry.update({gs.name: float(val) for gs, val in zip(b.gates, x.values)})
        record[b.name] = entry
    stage.write_text("rest.summary.txt", format_record(record))
    return EXIT_OK


def cmd_verify(cfg: RunConfig, base_dir: Path, stage: Staging) -> int:
    if not cfg.verify.suites:
        raise ConfigError("verify.suites: empty selection, nothing to verify")
    circuit = build_circuit(cfg.experiment, base_dir)
    checks = _suites.run_suites(circuit, cfg.verify.suites, cfg.verify.seed, cfg.verify.corrupt_dissipation_offset)
    failed = [c for c in checks if not c.passed]
    lines = [c.record() for c in checks]
    lines.append(f"total={len(checks)} failed={len(failed)}")
    stage.write_text("verify.report.txt", "\n".join(lines) + "\n")
    for c in failed:
        print(c.record(), file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_cocontent(cfg: RunConfig, base_dir: Path, stage: Staging) -> int:
    """Co-content of each branch at its port voltage along the simulated trajectory."""
    circuit = build_circuit(cfg.experiment, base_dir)
    v = ode_solve(circuit).voltage
    rng = np.random.default_rng(cfg.verify.seed)
    bend = _suites.smooth_signal(rng, v.grid, 0.0, 30.0)
    checks: list[IdentityCheck] = []
    rows = []
    for b in circuit.branches:
        u = v - b.battery
        expected = 0.5 * inner(u, u)
        for path, waypoints in (("straight", None), ("two-segment", [bend])):
            value = cocontent_path(b, u, waypoints=waypoints)
            check = IdentityCheck(f"cocontent[{b.name}][{path}]", value, expected, 1e-6)
            checks.append(check)
            rows.append([b.name, path, _fmt(value), _fmt(expected), f"{check.rel_err:.3e}", "PASS" if check.passed else "FAIL"])
    path = stage.path("cocontent.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["branch", "path", "value", "expected", "rel_err", "status"])
        w.writerows(rows)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY


# --- plots ------------------------------------------------------------------------------

def _tick(x: float) -> str:
    return format(x, ".4g")


def svg_polyline(x: np.ndarray, y: np.ndarray, title: str, xlabel: str, ylabel: str) -> str:
    """A deterministic single-series line plot with a frame and min/max tick labels."""
    W, H, L, R, T, B = 480, 320, 70, 20, 30, 45
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x0, x1 = float(x.min()), float(x.max())
    y0, y1 = float(y.min()), float(y.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0
    px = L + (x - x0) / (x1 - x0) * (W - L - R)
    py = H - B - (y - y0) / (y1 - y0) * (H - T - B)
    points = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">\n'
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>\n'
        f'<text x="{W / 2:.1f}" y="18" text-anchor="middle" font-family="sans-serif" font-size="13">{title}</text>\n'
        f'<rect x="{L}" y="{T}" width="{W - L - R}" height="{H - T - B}" fill="none" stroke="black"/>\n'
        f'<polyline fill="none" stroke="#1f4e9c" stroke-width="1.2" points="{points}"/>\n'
        f'<text x="{L}" y="{H - B + 15}" text-anchor="middle" font-family="sans-serif" font-size="10">{_tick(x0)}</text>\n'
        f'<text x="{W - R}" y="{H - B + 15}" text-anchor="middle" font-family="sans-serif" font-size="10">{_tick(x1)}</text>\n'
        f'<text x="{L - 5}" y="{H - B}" text-anchor="end" font-family="sans-serif" font-size="10">{_tick(y0)}</text>\n'
        f'<text x="{L - 5}" y="{T + 8}" text-anchor="end" font-family="sans-serif" font-size="10">{_tick(y1)}</text>\n'
        f'<text x="{(L + W - R) / 2:.1f}" y="{H - 10}" text-anchor="middle" font-family="sans-serif" font-size="11">{xlabel}</text>\n'
        f'<text x="15" y="{(T + H - B) / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="11" '
        f'transform="rotate(-90 15 {(T + H - B) / 2:.1f})">{ylabel}</text>\n'
        "</svg>\n"
    )


def cmd_export_plots(out_dir: Path, stage: Staging) -> int:
    needed = ["simulate.csv", "relax.csv", "relax.residuals.csv"]
    missing = [n for n in needed if not (out_dir / n).is_file()]
    if missing:
        raise InputError(f"missing input file(s) in {out_dir}: {', '.join(missing)} (run simulate and relax first)")
    ode = read_report_csv(out_dir / "simulate.csv")
    relax = read_report_csv(out_dir / "relax.csv")
    res = read_report_csv(out_dir / "relax.residuals.csv")
    log_res = np.log10(np.maximum(res["residual"], 1e-300))
    panels = {
        "ode_voltage": (ode["time"], ode["v"], "ODE solution", "time (ms)", "v (mV)", ["time", "v"]),
        "relax_voltage": (relax["time"], relax["v"], "Alternate iteration", "time (ms)", "v (mV)", ["time", "v"]),
        "input_current": (ode["time"], ode["i_in"], "External current", "time (ms)", "i", ["time", "i_in"]),
        "residuals": (res["iteration"], log_res, "Iteration residual", "iteration", "log10 residual",
                      ["iteration", "log10_residual"]),
    }
    for name in PANELS:
        x, y, title, xl, yl, header = panels[name]
        _write_csv(stage.path(f"panel_{name}.csv"), header, [x, y])
        stage.write_text(f"panel_{name}.svg", svg_polyline(x, y, title, xl, yl))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "relax": cmd_relax,
    "rest": cmd_rest,
    "verify": cmd_verify,
    "cocontent": cmd_cocontent,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memgrad", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "integrate the coupled circuit ODE",
        "relax": "solve by alternate (waveform relaxation) iteration",
        "rest": "compute the rest state",
        "verify": "run the identity and property suites",
        "cocontent": "co-content path integrals along the simulated trajectory",
        "export-plots": "write per-panel plot data and SVG files from earlier runs",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, required=name != "export-plots", help="experiment YAML file")
        p.add_argument(
            "--out", type=Path, default=None,
            help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})",
        )
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. solver.max_iter=1")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = args.out if args.out is not None else Path(os.environ.get(OUT_ENV, DEFAULT_OUT))
    try:
        cfg = None
        if args.config is not None:
            cfg = load_config(args.config, args.overrides)
        elif args.overrides:
            raise ConfigError("--set needs --config")
        if args.command == "export-plots" and not out_dir.is_dir():
            raise InputError(f"output directory {out_dir} does not exist (run simulate and relax first)")
        with locked(out_dir):
            stage = Staging(out_dir)
            try:
                if args.command == "export-plots":
                    code = cmd_export_plots(out_dir, stage)
                else:
                    code = COMMANDS[args.command](cfg, args.config.resolve().parent, stage)
            except BaseException:
                stage.discard()
                raise
            for p in stage.commit():
                print(p)
            return code
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, EquilibriumError, FloatingPointError) as exc:
        where = getattr(exc, "time", None)
        at = f" at t={where:.6g} ms" if isinstance(where, float) and math.isfinite(where) else ""
        print(f"solver failure{at}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
