"""Command-line entry point: ``monospde {probe,simulate,experiment,dbl}``.

Exit status: 0 when every verdict passes, 1 when a verdict fails, 2 for
configuration errors and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .blmetric import METRICS, dbl_exact, dbl_lower_bound, dbl_transport, load_measure, wasserstein1
from .coefficients import Constant, ReactionDiffusion
from .config import PRESETS, RunConfig, load_config
from .errors import ConfigurationError, MonoSPDEError, SizeGuardError
from .hypotheses import _jsonable, reference_constants, probe_all
from .recurrence import KINDS, run_experiment
from .sde import jackknife_mean, simulate

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("monospde")


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


class Output:
    """Output directory with the resolved-config echo, seed manifest and verdict."""

    def __init__(self, cfg: RunConfig, out: str | None, fmt: str, command: str):
        self.dir = Path(out or cfg.run.out)
        self.fmt = fmt
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / "config.resolved.toml").write_text(cfg.to_toml())
        seeds = {
            "command": command,
            "seed": cfg.run.seed,
            "path_ids": [cfg.ensemble.path_offset, cfg.ensemble.path_offset + cfg.ensemble.n_paths - 1],
        }
        (self.dir / "seeds.json").write_text(_dump(seeds))

    def verdict(self, passed, summary: dict):
        label = "PASS" if passed or passed is None else "FAIL"
        if passed is None:
            label = "DIAGNOSTIC"
        (self.dir / "verdict.json").write_text(_dump({"verdict": label, **summary}))
        return label


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_probe(cfg: RunConfig, out: str | None, fmt: str) -> int:
    o = Output(cfg, out, fmt, "probe")
    drift = cfg.build_drift()
    diff = cfg.build_diffusion(drift)
    claimed = reference_constants(drift, diff)
    for k, v in cfg.probe.claimed.items():
        if not hasattr(claimed, k):
            raise ConfigurationError(f"unknown claimed constant {k!r}")
        setattr(claimed, k, v)
    reports = probe_all(drift, diff, cfg.probe.n_samples, cfg.run.seed, claimed)
    rows = []
    for name, rep in reports.items():
        safe = name.replace("'", "p")
        (o.dir / f"probe-{safe}.json").write_text(rep.to_json())
        rows.append((name, "PASS" if rep.passed else "FAIL", rep.worst_margin, rep.n_samples))
    _write_csv(o.dir / "summary.csv", ["hypothesis", "verdict", "worst_margin", "n_samples"], rows)
    passed = all(r.passed for r in reports.values())
    o.verdict(passed, {"hypotheses": {r[0]: r[1] for r in rows}, "constants": claimed.to_dict()})
    for r in rows:
        print(f"{r[0]:6s} {r[1]}  worst margin {r[2]:+.3e}")
    return EXIT_PASS if passed else EXIT_FAIL


def ou_check(cfg: RunConfig, drift, diff, times, states, init) -> dict | None:
    """Exact second moment for the linear (p = 2) constant-coefficient case."""
    if not (isinstance(drift, ReactionDiffusion) and drift.p == 2 and isinstance(drift.phi, Constant)):
        return None
    if not diff.is_additive or any(not isinstance(m, Constant) for m in diff.modulations()):
        return None
    gamma = drift.grid.eigenvalues + drift.a - drift.phi.value
    b2 = np.zeros(drift.grid.num_modes)
    b2[: diff.num_noise] = diff.b(0.0) ** 2
    tau = np.asarray(times) - times[0]
    x0 = init[0]
    exact = (np.exp(-2 * gamma * tau[:, None]) * x0**2 + b2 * (1 - np.exp(-2 * gamma * tau[:, None]))
             / (2 * gamma)).sum(axis=1)
    est = [jackknife_mean(np.sum(s**2, axis=1)) for s in states]
    m = np.array([e[0] for e in est])
    se = np.array([e[1] for e in est])
    dt = cfg.integrator.dt
    ok = np.abs(m - exact) <= 3 * np.nan_to_num(se) + dt * np.maximum(exact, 1e-300) * 10
    return {"exact": exact, "estimate": m, "standard_error": se, "within_tolerance": bool(ok.all())}


def cmd_simulate(cfg: RunConfig, out: str | None, fmt: str, coeffs: bool = False) -> int:
    o = Output(cfg, out, fmt, "simulate")
    plan = cfg.build_plan()
    drift, diff = plan.drift, plan.diff
    init = plan.initial() if cfg.experiment.init_norm > 0 else np.zeros((plan.n_paths, plan.grid.num_modes))
    outs = list(plan.outputs())
    tr = simulate(init, plan.t_start, plan.t_end, plan.cfg, drift, diff, plan.noise(), plan.path_ids,
                  output_times=outs, threads=plan.threads)
    g, piv = plan.grid, drift.pivot
    wh, ws = g.space_weights("H", piv), g.space_weights("S", piv)
    nh = np.sqrt(np.einsum("tpk,k,tpk->tp", tr.states, wh, tr.states))
    ns = np.sqrt(np.einsum("tpk,k,tpk->tp", tr.states, ws, tr.states))
    header = ["time", "path_id", "norm_H", "norm_S"] + ([f"c{k}" for k in range(1, g.num_modes + 1)] if coeffs else [])
    rows = []
    for i, t in enumerate(tr.times):
        for j, pid in enumerate(tr.path_ids):
            rows.append([float(t), int(pid), nh[i, j], ns[i, j]] + (list(tr.states[i, j]) if coeffs else []))
    if fmt == "csv":
        _write_csv(o.dir / "trajectory.csv", header, rows)
    else:
        (o.dir / "trajectory.json").write_text(_dump({"header": header, "rows": rows}))
    moments = [jackknife_mean(nh[i] ** 2) for i in range(len(tr.times))]
    summary = {
        "times": tr.times,
        "second_moment_H": [m[0] for m in moments],
        "standard_error_H": [m[1] for m in moments],
        "second_moment_S": (ns**2).mean(axis=1),
        "solver": tr.stats,
        "noise_checksum": tr.noise_checksum,
    }
    ou = ou_check(cfg, drift, diff, tr.times, tr.states, init)
    if ou is not None:
        summary["ou_check"] = ou
    (o.dir / "summary.json").write_text(_dump(summary))
    passed = ou is None or ou["within_tolerance"]
    o.verdict(passed, {"noise_checksum": tr.noise_checksum})
    print(f"simulated {plan.n_paths} paths on [{plan.t_start}, {plan.t_end}] -> {o.dir}")
    return EXIT_PASS if passed else EXIT_FAIL


def _series(result) -> tuple[list, list] | None:
    d = result.to_dict()
    for keys in (("times", "values"), ("times", "moments"), ("offsets", "distances"), ("n_values", "distances"),
                 ("taus", "distances")):
        if all(k in d for k in keys):
            cols = [k for k in (*keys, "envelope", "bound", "epsilon", "standard_errors") if d.get(k) is not None]
            return cols, list(zip(*[d[c] for c in cols]))
    return None


def cmd_experiment(cfg: RunConfig, out: str | None, fmt: str, kind: str | None = None) -> int:
    o = Output(cfg, out, fmt, "experiment")
    plan = cfg.build_plan(kind)
    result = run_experiment(plan)
    (o.dir / "report.json").write_text(_dump({"kind": plan.kind, **result.to_dict()}))
    series = _series(result)
    if series is not None and fmt == "csv":
        _write_csv(o.dir / "series.csv", *series)
    passed = result.passed
    label = o.verdict(passed, {"kind": plan.kind})
    print(f"{plan.kind}: {label} -> {o.dir}")
    if passed is None:
        return EXIT_PASS
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_dbl(args) -> int:
    mu, nu = load_measure(args.file_a), load_measure(args.file_b)
    weights = None
    if args.weights:
        weights = np.array([float(x) for x in args.weights.split(",")])
    if args.mode == "exact":
        try:
            res = dbl_exact(mu, nu, args.metric, weights)
        except SizeGuardError as exc:
            raise SizeGuardError(f"{exc}; use --mode lower or --mode transport for large inputs") from None
        report = res.to_dict()
    elif args.mode == "transport":
        report = {"value": dbl_transport(mu, nu, args.metric, weights), "method": "transport"}
    else:
        report = {"value": dbl_lower_bound(mu, nu, args.dictionary_size, args.seed or 0, args.metric, weights),
                  "method": "lower-bound"}
    if args.w1:
        report["wasserstein1"] = wasserstein1(mu, nu, args.metric, weights)
    text = _dump(report)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "dbl.json").write_text(text)
    print(text if args.format == "json" else f"value,{float(report['value'])!r}")
    return EXIT_PASS


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="monospde", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="TOML run configuration")
        sp.add_argument("--preset", choices=PRESETS, help="bundled configuration used as the base")
        sp.add_argument("--out", help="output directory (overrides run.out)")
        sp.add_argument("--threads", type=int, help="worker threads; results do not depend on it")
        sp.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
        sp.add_argument("--format", choices=("json", "csv"), default="csv", help="series format")

    common(sub.add_parser("probe", help="check the structural conditions by sampling"))
    sp = sub.add_parser("simulate", help="integrate an ensemble and write trajectories")
    common(sp)
    sp.add_argument("--coeffs", action="store_true", help="include spectral coefficients in the output")
    sp = sub.add_parser("experiment", help="run one experiment")
    common(sp)
    sp.add_argument("--kind", choices=KINDS, help="experiment kind (overrides run.experiment)")
    sp = sub.add_parser("dbl", help="bounded-Lipschitz distance between two CSV measures")
    sp.add_argument("file_a")
    sp.add_argument("file_b")
    sp.add_argument("--metric", choices=METRICS, default="Euclidean")
    sp.add_argument("--weights", help="comma-separated coordinate weights for WeightedH")
    sp.add_argument("--mode", choices=("exact", "transport", "lower"), default="exact")
    sp.add_argument("--dictionary-size", type=int, default=1000)
    sp.add_argument("--w1", action="store_true", help="also report the Wasserstein-1 distance")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    return p


def _config_from(args) -> RunConfig:
    if args.config is None and args.preset is None:
        raise ConfigurationError("pass --config and/or --preset")
    overrides = {}
    if args.seed is not None:
        overrides.setdefault("run", {})["seed"] = args.seed
    if args.threads is not None:
        overrides.setdefault("run", {})["threads"] = args.threads
    return load_config(args.config, args.preset, overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "dbl":
            return cmd_dbl(args)
        cfg = _config_from(args)
        if args.command == "probe":
            return cmd_probe(cfg, args.out, args.format)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out, args.format, args.coeffs)
        return cmd_experiment(cfg, args.out, args.format, args.kind)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MonoSPDEError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
