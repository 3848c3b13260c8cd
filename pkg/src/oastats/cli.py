"""Command-line front end.

Subcommands: moments, estimate, simulate, optimize, se-report, synth.
Options may come from flags or from a flat key=value config file
(flags override the file).  Every output CSV starts with comment lines
echoing the tool version and the resolved parameters, is written to a
temporary file and renamed on success, and is byte-stable across reruns
of the same command.  Report subcommands also render a PNG figure next
to each CSV unless --no-plot is given.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data_model import (
    AvailabilityModel,
    NoiseModel,
    ObservationPanel,
    TruthSeries,
    WeightVector,
    read_panel_csv,
    read_truth_csv,
    write_panel_csv,
    write_truth_csv,
)
from .delta_stats import REPORT_COLUMNS, full_report, report_row
from .errors import (
    InvalidParameterError,
    IOFailureError,
    OAStatsError,
    ParseError,
)
from .figures import (
    alpha_sweep_figure,
    se_blocks_figure,
    sim_compare_figure,
    weights_figure,
)
from .mc_sim import SimConfig, simulate
from .moments import estimate_moments, load_moments, save_moments
from .oa_solver import QpSolution, minimize_bias, minimize_mse, minimize_variance
from .synth import generate_synthetic

EXIT_CODES = {
    "parse-error": 2,
    "io-error": 3,
    "dimension-mismatch": 4,
    "non-finite-value": 4,
    "degenerate-panel": 4,
    "invalid-weights": 4,
    "invalid-parameter": 4,
    "non-psd-matrix": 5,
    "max-iterations": 5,
    "negative-variance": 5,
    "infeasible-signs": 5,
    "undefined-diagnostic": 5,
    "index-out-of-range": 5,
    "empty-support": 6,
    "all-missing-pattern": 6,
    "too-many-sites": 6,
}

_EPILOG = """\
exit codes:
  0  success
  2  parse-error (bad flags, config file or grid/blocks syntax)
  3  io-error (missing or unreadable input file)
  4  invalid data (dimension-mismatch, non-finite-value, degenerate-panel,
     invalid-weights, invalid-parameter)
  5  numerical failure (non-psd-matrix, max-iterations, negative-variance,
     infeasible-signs, undefined-diagnostic, index-out-of-range)
  6  availability domain (empty-support, all-missing-pattern, too-many-sites)
  1  unexpected error

config file: flat `key = value` lines mirroring the long flag names
(alpha, sigma_eps, objective, seed, realizations, panel, truth, weights,
moments, blocks, out, trace, no_plot).  Flags override the file.
"""


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oastats",
        description=(
            "Bias/variance/MSE statistics and optimal averaging weights for "
            "spatial averages estimated from possibly-missing observations."
        ),
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"oastats {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p, with_truth=True):
        p.add_argument("--config", help="flat key=value config file; flags override it")
        p.add_argument("--panel", help="panel CSV (location_id,lat,lon,t_1,...)")
        if with_truth:
            p.add_argument("--truth", help="truth CSV (t,value)")
        p.add_argument("--alpha", help="availability: single value or start:stop:step grid")
        p.add_argument("--sigma-eps", dest="sigma_eps", help="measurement noise std dev")
        p.add_argument("--out", help="output directory (default .)")
        p.add_argument(
            "--no-plot",
            dest="no_plot",
            action="store_const",
            const=True,
            default=None,
            help="skip the PNG figure next to the CSV output",
        )

    p = sub.add_parser("moments", help="estimate field moments, write a reusable summary")
    add_common(p)

    p = sub.add_parser("estimate", help="bias/variance/MSE/SE report over an alpha grid")
    add_common(p)
    p.add_argument("--moments", help="reuse a saved moment summary instead of panel+truth")
    p.add_argument("--weights", help="weights CSV (beta column); default uniform")

    p = sub.add_parser("simulate", help="Bernoulli-availability ensemble vs the model")
    add_common(p)
    p.add_argument("--weights", help="weights CSV (beta column); default uniform")
    p.add_argument("--seed", help="ensemble seed (default 0)")
    p.add_argument("--realizations", help="ensemble size (default 5000)")
    p.add_argument(
        "--trace",
        action="store_const",
        const=True,
        default=None,
        help="also write a per-realization trace CSV (realization,t,value)",
    )

    p = sub.add_parser("optimize", help="solve for optimal averaging weights")
    add_common(p)
    p.add_argument("--objective", choices=("bias", "variance", "mse"), help="default mse")

    p = sub.add_parser("se-report", help="per-block SE/mean/stdev table")
    add_common(p)
    p.add_argument("--objective", choices=("bias", "variance", "mse"), help="default mse")
    p.add_argument("--weights", help="weights CSV; default: optimize on the full panel")
    p.add_argument("--blocks", help="time blocks 'name=lo:hi,name=lo:hi' (0-based, hi exclusive)")

    p = sub.add_parser("synth", help="generate a synthetic panel + truth pair")
    p.add_argument("--config", help="flat key=value config file; flags override it")
    p.add_argument("--n-sites", dest="n_sites", help="number of observed sites (default 24)")
    p.add_argument("--n-steps", dest="n_steps", help="number of time steps (default 120)")
    p.add_argument("--corr-length", dest="corr_length", help="spatial correlation length (default 0.3)")
    p.add_argument("--sigma-eps", dest="sigma_eps", help="measurement noise std dev")
    p.add_argument("--seed", help="generator seed (default 0)")
    p.add_argument("--layout", choices=("1d", "2d"), help="site layout (default 1d)")
    p.add_argument("--out", help="output directory (default .)")

    return parser


# ---------------------------------------------------------------------------
# configuration resolution
# ---------------------------------------------------------------------------


def _load_config(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise IOFailureError(f"cannot read config file {p}: {exc}") from exc
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"{p}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        entries[key.strip().replace("-", "_")] = value.strip()
    return entries


class Options:
    """Flag/config merge with typed access; flags override the file."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = _load_config(getattr(args, "config", None))
        self.resolved: dict[str, object] = {"subcommand": args.subcommand}

    def get(self, key: str, default=None, cast=str):
        value = getattr(self.args, key, None)
        if value is None:
            value = self.config.get(key)
        if value is None:
            value = default
        elif isinstance(value, str) and cast is not str:
            try:
                value = cast(value)
            except ValueError as exc:
                raise ParseError(f"bad value for {key}: {value!r}") from exc
        self.resolved[key] = value
        return value

    def get_flag(self, key: str) -> bool:
        value = getattr(self.args, key, None)
        if value is None:
            raw = self.config.get(key)
            value = raw is not None and raw.lower() in ("1", "true", "yes", "on")
        self.resolved[key] = bool(value)
        return bool(value)

    def require(self, key: str, cast=str):
        value = self.get(key, None, cast)
        if value is None:
            raise ParseError(f"missing required option --{key.replace('_', '-')}")
        return value


def parse_alpha_spec(spec: str) -> list[float]:
    """Parse '0.8' or a 'start:stop:step' grid, inclusive of stop."""
    try:
        if ":" not in spec:
            values = [float(spec)]
        else:
            parts = spec.split(":")
            if len(parts) != 3:
                raise ValueError
            start, stop, step = (float(x) for x in parts)
            if step <= 0 or stop < start:
                raise ValueError
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            values = [round(start + i * step, 12) for i in range(count)]
    except ValueError as exc:
        raise ParseError(f"bad alpha spec {spec!r}; use a number or start:stop:step") from exc
    for a in values:
        if not (0.0 < a <= 1.0):
            raise ParseError(f"alpha {a} outside (0, 1]")
    return values


def parse_blocks_spec(spec: str, n_time: int) -> list[tuple[str, int, int]]:
    """Parse 'name=lo:hi,...' (names optional) into index ranges."""
    blocks: list[tuple[str, int, int]] = []
    for k, item in enumerate(spec.split(","), start=1):
        item = item.strip()
        name, _, rng = item.rpartition("=")
        name = name.strip() or f"block_{k}"
        try:
            lo_s, _, hi_s = rng.partition(":")
            lo, hi = int(lo_s), int(hi_s)
        except ValueError as exc:
            raise ParseError(f"bad block spec {item!r}; use name=lo:hi") from exc
        if not (0 <= lo < hi <= n_time):
            raise ParseError(f"block {name!r} range [{lo}, {hi}) outside [0, {n_time})")
        if hi - lo < 2:
            raise ParseError(f"block {name!r} needs at least two time steps")
        blocks.append((name, lo, hi))
    return blocks


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _provenance_lines(opts: Options, extra: dict | None = None) -> list[str]:
    items: dict[str, object] = dict(opts.resolved)
    if extra:
        items.update(extra)
    lines = [f"# oastats {__version__}"]
    for key in sorted(items):
        if items[key] is not None:
            lines.append(f"# {key} = {items[key]}")
    return lines


def write_csv_atomic(path: Path, comments: list[str], header: list[str], rows: list[list]) -> None:
    """Write comment lines + header + rows to a temp file, rename on success."""
    tmp = path.with_name(path.name + ".tmp")
    try:
        with tmp.open("w", newline="", encoding="utf-8") as f:
            for line in comments:
                f.write(line + "\n")
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows(rows)
        os.replace(tmp, path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise IOFailureError(f"cannot write {path}: {exc}") from exc


def read_weights_csv(path: str | Path) -> WeightVector:
    """Read a weights CSV: any file with a header containing a beta column."""
    p = Path(path)
    try:
        with p.open("r", newline="", encoding="utf-8") as f:
            rows = [row for row in csv.reader(f) if row and not row[0].startswith("#")]
    except OSError as exc:
        raise IOFailureError(f"cannot read weights file {p}: {exc}") from exc
    if not rows or "beta" not in rows[0]:
        raise ParseError(f"weights file {p} needs a header row with a 'beta' column")
    col = rows[0].index("beta")
    try:
        beta = [float(row[col]) for row in rows[1:]]
    except (ValueError, IndexError) as exc:
        raise ParseError(f"weights file {p} has a malformed row") from exc
    return WeightVector(np.array(beta))


def write_solution_csv(
    path: Path,
    comments: list[str],
    panel: ObservationPanel,
    sol: QpSolution,
) -> None:
    meta = {
        "objective_value": repr(sol.objective),
        "lambda": repr(sol.lam),
        "kkt_residual": repr(sol.kkt_residual),
        "iterations": sol.iterations,
        "ridge_applied": repr(sol.ridge),
        "active_count": len(sol.active_set),
    }
    meta.update({k: repr(v) for k, v in sorted(sol.extras.items())})
    lines = comments + [f"# {k} = {v}" for k, v in meta.items()]
    rows = []
    for i, loc in enumerate(panel.location_ids):
        lat, lon = ("", "") if panel.coords is None else panel.coords[i]
        rows.append(
            [
                loc,
                lat,
                lon,
                repr(float(sol.beta.beta[i])),
                repr(float(sol.rho[i])),
                int(i in sol.active_set),
            ]
        )
    write_csv_atomic(path, lines, ["location_id", "lat", "lon", "beta", "rho", "active"], rows)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _load_pair(opts: Options) -> tuple[ObservationPanel, TruthSeries]:
    panel = read_panel_csv(opts.require("panel"))
    truth = read_truth_csv(opts.require("truth"))
    return panel, truth


def _out_dir(opts: Options) -> Path:
    out = Path(opts.get("out", ".", str))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOFailureError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _load_weights(opts: Options, n: int) -> tuple[str, WeightVector]:
    spec = opts.get("weights", None, str)
    if spec is None or spec == "uniform":
        return "uniform", WeightVector.uniform(n)
    wv = read_weights_csv(spec)
    if len(wv) != n:
        raise InvalidParameterError(f"weights file has {len(wv)} entries for {n} sites")
    return Path(spec).stem, wv


def cmd_moments(opts: Options) -> int:
    panel, truth = _load_pair(opts)
    alphas = parse_alpha_spec(opts.get("alpha", "1.0", str))
    noise = NoiseModel(opts.get("sigma_eps", 0.0, float))
    m = estimate_moments(panel, truth, noise, AvailabilityModel(alphas[0]))
    out = _out_dir(opts)
    path = out / "moments.txt"
    tmp = path.with_name(path.name + ".tmp")
    try:
        save_moments(tmp, m)
        os.replace(tmp, path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise IOFailureError(f"cannot write {path}: {exc}") from exc
    print(f"wrote {path}")
    return 0


def cmd_estimate(opts: Options) -> int:
    moments_path = opts.get("moments", None, str)
    alphas = parse_alpha_spec(opts.get("alpha", "0.1:1.0:0.1", str))
    truth = None
    if moments_path:
        m = load_moments(moments_path)
    else:
        panel, truth = _load_pair(opts)
        noise = NoiseModel(opts.get("sigma_eps", 0.0, float))
        m = estimate_moments(panel, truth, noise, AvailabilityModel(alphas[0]))
    scheme, wv = _load_weights(opts, m.n_locations)

    reports = [full_report(m, wv, AvailabilityModel(a), truth) for a in alphas]
    out = _out_dir(opts)
    rows = [report_row(a, scheme, r) for a, r in zip(alphas, reports)]
    csv_path = out / "estimate.csv"
    write_csv_atomic(csv_path, _provenance_lines(opts), list(REPORT_COLUMNS), rows)
    print(f"wrote {csv_path}")
    if not opts.get_flag("no_plot"):
        fig_path = alpha_sweep_figure(alphas, reports, out / "estimate.png")
        print(f"wrote {fig_path}")
    return 0


def cmd_simulate(opts: Options) -> int:
    panel, truth = _load_pair(opts)
    alphas = parse_alpha_spec(opts.get("alpha", "0.1:1.0:0.1", str))
    noise = NoiseModel(opts.get("sigma_eps", 0.0, float))
    scheme, wv = _load_weights(opts, panel.n_locations)
    cfg = SimConfig(
        n_realizations=opts.get("realizations", 5000, int),
        seed=opts.get("seed", 0, int),
        alpha_grid=tuple(alphas),
    )
    want_trace = opts.get_flag("trace")
    if want_trace and len(alphas) != 1:
        raise ParseError("--trace needs a single alpha, not a grid")
    m = estimate_moments(panel, truth, noise, AvailabilityModel(alphas[0]))

    rows = []
    trace_rows = []
    model_bias, model_var, sim_bias, sim_var = [], [], [], []
    for a in alphas:
        avail = AvailabilityModel(a)
        res = simulate(panel, truth, wv, avail, cfg, collect_ensemble=want_trace)
        report = full_report(m, wv, avail, truth)
        rows.append(
            [
                repr(float(a)),
                scheme,
                repr(res.sim_bias_sq),
                repr(res.sim_variance),
                repr(res.sim_bias_sq + res.sim_variance),
                repr(res.mc_stderr_bias),
                repr(res.mc_stderr_var),
                repr(report.bias_sq),
                repr(report.variance),
                cfg.n_realizations,
                cfg.seed,
            ]
        )
        model_bias.append(report.bias_sq)
        model_var.append(report.variance)
        sim_bias.append(res.sim_bias_sq)
        sim_var.append(res.sim_variance)
        if want_trace:
            for k in range(res.ensemble.shape[0]):
                for t in range(res.ensemble.shape[1]):
                    trace_rows.append([k, panel.time_ids[t], repr(float(res.ensemble[k, t]))])

    out = _out_dir(opts)
    csv_path = out / "simulate.csv"
    header = [
        "alpha",
        "scheme",
        "bias_sq",
        "variance",
        "mse",
        "mc_stderr_bias",
        "mc_stderr_var",
        "model_bias_sq",
        "model_variance",
        "n_realizations",
        "seed",
    ]
    write_csv_atomic(csv_path, _provenance_lines(opts), header, rows)
    print(f"wrote {csv_path}")
    if want_trace:
        trace_path = out / "simulate_trace.csv"
        write_csv_atomic(
            trace_path, _provenance_lines(opts), ["realization", "t", "value"], trace_rows
        )
        print(f"wrote {trace_path}")
    if not opts.get_flag("no_plot"):
        fig_path = sim_compare_figure(
            alphas, model_bias, sim_bias, model_var, sim_var, out / "simulate.png"
        )
        print(f"wrote {fig_path}")
    return 0


def _optimize(m, avail, objective: str) -> QpSolution:
    if objective == "bias":
        return minimize_bias(m)
    if objective == "variance":
        return minimize_variance(m, avail)
    return minimize_mse(m, avail)


def cmd_optimize(opts: Options) -> int:
    panel, truth = _load_pair(opts)
    alphas = parse_alpha_spec(opts.get("alpha", "1.0", str))
    if len(alphas) != 1:
        raise ParseError("optimize takes a single alpha, not a grid")
    noise = NoiseModel(opts.get("sigma_eps", 0.0, float))
    objective = opts.get("objective", "mse", str)
    if objective not in ("bias", "variance", "mse"):
        raise ParseError(f"unknown objective {objective!r}")
    avail = AvailabilityModel(alphas[0])
    m = estimate_moments(panel, truth, noise, avail)
    sol = _optimize(m, avail, objective)

    out = _out_dir(opts)
    csv_path = out / f"weights_{objective}.csv"
    write_solution_csv(csv_path, _provenance_lines(opts), panel, sol)
    print(f"wrote {csv_path}")
    if not opts.get_flag("no_plot"):
        fig_path = weights_figure(
            m.f_diag, sol.beta.beta, out / f"weights_{objective}.png", objective=objective
        )
        print(f"wrote {fig_path}")
    return 0


def cmd_se_report(opts: Options) -> int:
    panel, truth = _load_pair(opts)
    alphas = parse_alpha_spec(opts.get("alpha", "1.0", str))
    if len(alphas) != 1:
        raise ParseError("se-report takes a single alpha, not a grid")
    noise = NoiseModel(opts.get("sigma_eps", 0.0, float))
    objective = opts.get("objective", "mse", str)
    if objective not in ("bias", "variance", "mse"):
        raise ParseError(f"unknown objective {objective!r}")
    avail = AvailabilityModel(alphas[0])

    weights_spec = opts.get("weights", None, str)
    if weights_spec:
        scheme, wv = _load_weights(opts, panel.n_locations)
    else:
        m_full = estimate_moments(panel, truth, noise, avail)
        wv = _optimize(m_full, avail, objective).beta
        scheme = f"{objective}-optimal"

    blocks_spec = opts.get("blocks", f"all=0:{panel.n_time}", str)
    blocks = parse_blocks_spec(blocks_spec, panel.n_time)

    rows = []
    labels, se_list, mean_list, std_list = [], [], [], []
    b = wv.beta
    for name, lo, hi in blocks:
        sub_panel = ObservationPanel(
            values=panel.values[:, lo:hi],
            location_ids=panel.location_ids,
            coords=panel.coords,
            time_ids=panel.time_ids[lo:hi],
        )
        sub_truth = TruthSeries(truth.values[lo:hi])
        m_block = estimate_moments(sub_panel, sub_truth, noise, avail)
        se = float(np.sqrt(b @ m_block.d1 @ b + noise.sigma_eps_sq * b @ b))
        se_noise = float(np.sqrt(noise.sigma_eps_sq * b @ b))
        series = b @ sub_panel.values
        mean = float(series.mean())
        stdev = float(series.std(ddof=1))
        rows.append(
            [name, lo, hi, scheme, repr(se), repr(mean), repr(stdev), repr(se_noise)]
        )
        labels.append(name)
        se_list.append(se)
        mean_list.append(mean)
        std_list.append(stdev)

    out = _out_dir(opts)
    csv_path = out / "se_report.csv"
    header = ["block", "t_start", "t_stop", "scheme", "se", "mean", "stdev", "se_measurement"]
    write_csv_atomic(csv_path, _provenance_lines(opts), header, rows)
    print(f"wrote {csv_path}")
    if not opts.get_flag("no_plot"):
        fig_path = se_blocks_figure(labels, se_list, mean_list, std_list, out / "se_report.png")
        print(f"wrote {fig_path}")
    return 0


def cmd_synth(opts: Options) -> int:
    n = opts.get("n_sites", 24, int)
    n_time = opts.get("n_steps", 120, int)
    corr = opts.get("corr_length", 0.3, float)
    noise = NoiseModel(opts.get("sigma_eps", 0.0, float))
    seed = opts.get("seed", 0, int)
    layout = opts.get("layout", "1d", str)
    panel, truth = generate_synthetic(n, n_time, corr, noise, seed, layout=layout)
    out = _out_dir(opts)
    panel_path = out / "panel.csv"
    truth_path = out / "truth.csv"
    tmp_panel = panel_path.with_name(panel_path.name + ".tmp")
    tmp_truth = truth_path.with_name(truth_path.name + ".tmp")
    try:
        write_panel_csv(tmp_panel, panel)
        write_truth_csv(tmp_truth, truth, panel.time_ids)
        os.replace(tmp_panel, panel_path)
        os.replace(tmp_truth, truth_path)
    except OSError as exc:
        tmp_panel.unlink(missing_ok=True)
        tmp_truth.unlink(missing_ok=True)
        raise IOFailureError(f"cannot write synthetic data: {exc}") from exc
    print(f"wrote {panel_path}")
    print(f"wrote {truth_path}")
    return 0


_COMMANDS = {
    "moments": cmd_moments,
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "se-report": cmd_se_report,
    "synth": cmd_synth,
}


def run(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        opts = Options(args)
        return _COMMANDS[args.subcommand](opts)
    except OAStatsError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
