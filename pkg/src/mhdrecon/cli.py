"""Command-line harness for simulations, topology reports, and scenarios.

Exit codes: 0 when the run completes and any verdict matches the expected
one, 2 when the run completes but the verdict differs, 1 on failure
(malformed config, missing file, solver blow-up).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .fields import (
    ConfigurationError,
    SpectralField2D,
    TaylorSpec,
    TorusGrid,
    make_taylor,
    make_tilde_t1,
)
from .scenarios import (
    ConfigError,
    ExperimentConfig,
    Report,
    default_out_root,
    load_config,
    run_scenario,
)
from .snapshots import read_ndjson, read_snapshot, snapshot_to_field, write_snapshot
from .topology import Tolerances, extract_signature

SCENARIO_COMMANDS = {
    "theorem1": "theorem1",
    "theorem2": "theorem2",
    "remark2": "remark2",
    "frozen-in": "frozen-in",
    "stability": "stability",
}


def parse_field_spec(spec: str, grid: TorusGrid) -> SpectralField2D:
    """Build a field from a spec string like 'taylor:4,4', 'tilde-t1:0.5',
    or a '+'-separated sum of such terms."""
    total = None
    for term in spec.split("+"):
        parts = term.strip().split(":")
        kind = parts[0]
        if kind == "taylor":
            if len(parts) < 2:
                raise ConfigurationError(f"field term {term!r} needs indices, e.g. taylor:4,4")
            try:
                n, m = (int(v) for v in parts[1].split(","))
            except ValueError as exc:
                raise ConfigurationError(f"bad taylor indices in {term!r}") from exc
            amp = float(parts[2]) if len(parts) > 2 else 1.0
            f = make_taylor(TaylorSpec(n, m), amp, grid)
        elif kind in ("tilde-t1", "tilde_t1"):
            amp = float(parts[1]) if len(parts) > 1 else 1.0
            f = make_tilde_t1(grid, amp)
        else:
            raise ConfigurationError(f"unknown field kind {kind!r} in {spec!r}")
        total = f if total is None else total + f
    return total


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a scenario config JSON file")
    parser.add_argument("--out", help="output directory (default: $MHD_OUT_DIR/<command>)")
    parser.add_argument("--seed-grid", type=int, default=None,
                        help="seeding lattice resolution for critical-point search")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for sweep runs")
    parser.add_argument("--emit-plots", action="store_true",
                        help="write whitespace-separated plot data and a plotting script")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mhdrecon",
        description="2D incompressible MHD runs with magnetic-line topology verdicts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-field", help="write a field snapshot")
    _add_common(p)
    p.add_argument("--field", required=True, help="field spec, e.g. taylor:4,4+tilde-t1:1e-3")
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--resolution", type=int, default=128)

    p = sub.add_parser("topology", help="critical points and signature of a field")
    _add_common(p)
    p.add_argument("--field", help="field spec, e.g. taylor:1,1")
    p.add_argument("--snapshot", help="read the field from a snapshot file instead")
    p.add_argument("--resolution", type=int, default=128)

    p = sub.add_parser("simulate", help="plain run with diagnostics output")
    _add_common(p)

    for name in SCENARIO_COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} scenario")
        _add_common(p)

    p = sub.add_parser("sweep", help="run several configs concurrently")
    _add_common(p)
    return parser


def _out_dir(args, command: str) -> Path:
    if args.out:
        return Path(args.out)
    return default_out_root() / command


def cmd_gen_field(args) -> int:
    grid = TorusGrid(args.resolution)
    f = parse_field_spec(args.field, grid) * args.amplitude
    out = _out_dir(args, "gen-field")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "field.snap"
    write_snapshot(path, {"b1": f.coeffs[0], "b2": f.coeffs[1]}, time=0.0, nu=0.0, eta=0.0)
    print(path)
    return 0


def cmd_topology(args) -> int:
    if args.snapshot:
        f = snapshot_to_field(read_snapshot(args.snapshot))
    elif args.field:
        f = parse_field_spec(args.field, TorusGrid(args.resolution))
    else:
        raise ConfigurationError("topology needs --field or --snapshot")
    tol = Tolerances() if args.seed_grid is None else Tolerances(seed_resolution=args.seed_grid)
    sig, points = extract_signature(f, tol)
    report = {
        "signature": sig.to_dict(),
        "n_points": len(points),
        "points": [
            {
                "position": p.position.tolist(),
                "kind": p.kind,
                "det": p.det,
                "residual": p.residual,
            }
            for p in points
        ],
    }
    out = _out_dir(args, "topology")
    out.mkdir(parents=True, exist_ok=True)
    (out / "topology.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({"n_points": len(points), **sig.to_dict()}))
    return 0


def _scenario_config(args, scenario: str) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
        if cfg.scenario != scenario and scenario != "custom":
            raise ConfigError(
                f"field 'scenario': config names {cfg.scenario!r} but the "
                f"{scenario!r} command was invoked"
            )
    else:
        cfg = ExperimentConfig.for_scenario(scenario)
    if args.seed_grid is not None:
        cfg.seed_grid = args.seed_grid
    return cfg


def _finish(report: Report, out: Path, emit: bool) -> int:
    print(json.dumps({"scenario": report.scenario, "verdict": report.verdict,
                      "expected": report.expected, "as_expected": report.as_expected}))
    if emit:
        emit_plots(out)
    return 0 if report.as_expected else 2


def cmd_scenario(args, scenario: str) -> int:
    cfg = _scenario_config(args, scenario)
    out = _out_dir(args, scenario)
    report = run_scenario(cfg, out)
    return _finish(report, out, args.emit_plots)


def cmd_simulate(args) -> int:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = ExperimentConfig.for_scenario("custom")
    out = _out_dir(args, "simulate")
    report = run_scenario(cfg, out)
    return _finish(report, out, args.emit_plots)


def cmd_sweep(args) -> int:
    if not args.config:
        raise ConfigError("sweep requires --config with a {\"runs\": [...]} file")
    try:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"malformed JSON in {args.config} at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    runs = data.get("runs")
    if not isinstance(runs, list) or not runs:
        raise ConfigError("field 'runs': must be a non-empty list of configs")
    root = _out_dir(args, "sweep")
    configs = []
    for i, entry in enumerate(runs):
        name = entry.pop("name", f"run_{i:03d}")
        configs.append((name, ExperimentConfig.from_dict(entry)))

    def one(item):
        name, cfg = item
        return name, run_scenario(cfg, root / name)

    with ThreadPoolExecutor(max_workers=max(args.threads, 1)) as pool:
        results = list(pool.map(one, configs))
    worst = 0
    for name, report in results:
        print(json.dumps({"run": name, "verdict": report.verdict,
                          "as_expected": report.as_expected}))
        if not report.as_expected:
            worst = 2
    if args.emit_plots:
        for name, _ in results:
            emit_plots(root / name)
    return worst


PLOT_SCRIPT = """\
#!/usr/bin/env python3
\"\"\"Render the .dat files in this directory (requires matplotlib).\"\"\"
import glob
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

here = os.path.dirname(os.path.abspath(__file__))
for dat in sorted(glob.glob(os.path.join(here, "*.dat"))):
    with open(dat) as fh:
        header = fh.readline().lstrip("#").split()
    data = np.loadtxt(dat, skiprows=1, ndmin=2)
    if data.size == 0:
        continue
    fig, ax = plt.subplots()
    for col in range(1, data.shape[1]):
        ax.plot(data[:, 0], data[:, col], label=header[col] if col < len(header) else str(col))
    ax.set_xlabel(header[0] if header else "t")
    ax.set_yscale("log") if (data[:, 1:] > 0).all() else None
    ax.legend()
    fig.savefig(dat.replace(".dat", ".png"), dpi=150)
    plt.close(fig)
print("plots written next to the .dat files")
"""


def emit_plots(out_dir) -> None:
    """Write whitespace-separated data extracted from a run directory plus a
    self-contained plotting script (no plotting dependency needed here)."""
    out = Path(out_dir)
    if not out.exists():
        return
    for nd in sorted(out.glob("*_diagnostics.ndjson")):
        records = read_ndjson(nd)
        dat = out / (nd.stem.replace("_diagnostics", "") + "_energy.dat")
        with open(dat, "w", encoding="utf-8") as fh:
            fh.write("# t energy_u energy_b cross_helicity\n")
            for rec in records:
                fh.write(f"{rec.t!r} {rec.energy_u!r} {rec.energy_b!r} {rec.cross_helicity!r}\n")
    report_path = out / "report.json"
    if report_path.exists():
        report = json.loads(report_path.read_text(encoding="utf-8"))
        for name, series in report.get("series", {}).items():
            if not series:
                continue
            dat = out / f"{name}.dat"
            with open(dat, "w", encoding="utf-8") as fh:
                fh.write(f"# t {name}\n")
                for t, v in series:
                    fh.write(f"{t!r} {v!r}\n")
    (out / "plot_all.py").write_text(PLOT_SCRIPT, encoding="utf-8")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen-field":
            return cmd_gen_field(args)
        if args.command == "topology":
            return cmd_topology(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command in SCENARIO_COMMANDS:
            return cmd_scenario(args, args.command)
        raise ConfigurationError(f"unknown command {args.command!r}")
    except (ConfigurationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
