"""Command-line front end.

    jumprep simulate      --config c.json --seed 7 --paths 100 --out scen.jsonl
    jumprep verify TARGET --config c.json --seed 7 --paths 100000 --out report.json
    jumprep density-sweep --seed 7 --paths 10000 --out sweep.csv
    jumprep gallery CASE  --seed 7 --paths 100000 --steps 2000 --out kw.json

Exit status: 0 when every selected check passes, 1 when one fails, 2 on a
configuration error. Reports are JSON with sorted keys; apart from
``runtime_s`` they depend only on (config, seed).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import density, verifier
from .compensator import CompensatorModel, Constant, PointMasses, TiltSpec
from .errors import ConfigurationError, DomainError, NumericalError
from .functional import Coefficient, SimpleField
from .measure import Interval, MarkRegion
from .simulate import LevyParams, RngStream, run_chunks, sample_levy_batch, sample_prm_batch
from .gallery import doleans, kella_whitt, kw, presets, supremum

VERIFY_TARGETS = ("isometry", "mrt", "adjoint", "measure-change", "oracle")

DEFAULT_MODEL = {"intensity": {"kind": "constant", "rate": 2.0},
                 "mark_law": {"kind": "point_masses", "marks": [[1.0]], "weights": [1.0]}}
DEFAULT_CELLS = [{"interval": [0.5, 1.5]}]


# Config plumbing ------------------------------------------------------------

def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigurationError("config must be a JSON object")
    return cfg


def _settings(args, cfg: dict) -> dict:
    """Merge CLI flags over config keys; the seed is mandatory."""
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        raise ConfigurationError("a seed is required (--seed or config 'seed')")
    paths = args.paths if args.paths is not None else cfg.get("paths", 10_000)
    steps = args.steps if args.steps is not None else cfg.get("steps", 2000)
    if int(paths) < 1:
        raise ConfigurationError("--paths must be >= 1")
    if int(steps) < 2:
        raise ConfigurationError("--steps must be >= 2")
    return {"seed": int(seed), "paths": int(paths), "steps": int(steps),
            "workers": args.workers, "horizon": float(cfg.get("horizon", 1.0))}


def _model(cfg: dict, T: float) -> CompensatorModel:
    return CompensatorModel.from_dict(cfg.get("model", DEFAULT_MODEL), T)


def _cells(cfg: dict):
    return MarkRegion.from_dict(cfg.get("cells", DEFAULT_CELLS)).cells


def _field(cfg: dict, T: float, model: CompensatorModel) -> SimpleField:
    if "field" in cfg:
        return SimpleField.from_dict(cfg["field"], T)
    cells = _cells(cfg)
    return SimpleField((0.0, T), tuple(cells), ((Coefficient(1.0),) * len(cells),))


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dump_report(report: dict, out: str | None) -> str:
    text = json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"
    if out and out != "-":
        Path(out).write_text(text)
    return text


# Subcommands ----------------------------------------------------------------

def cmd_simulate(args, cfg: dict) -> tuple[dict, bool]:
    s = _settings(args, cfg)
    T = s["horizon"]
    out = args.out or "scenarios.jsonl"
    gen = RngStream(s["seed"], 0).generator()
    lines = []
    if "levy" in cfg:
        batch = sample_levy_batch(LevyParams.from_dict(cfg["levy"]), s["steps"], T, gen, s["paths"])
        lines = [batch.scenario(i, s["seed"]).to_json() for i in range(s["paths"])]
        n_atoms = len(batch.jumps.times)
    else:
        model = _model(cfg, T)
        jb = sample_prm_batch(model, T, gen, s["paths"])
        lines = [json.dumps({"seed": s["seed"], "j": jb.measure(i).to_dict(), "model": model.to_dict()},
                            sort_keys=True) for i in range(s["paths"])]
        n_atoms = len(jb.times)
    Path(out).write_text("".join(line + "\n" for line in lines))
    return {"case": "simulate", "n": s["paths"], "atoms": n_atoms, "output": out, "pass": True}, True


def _verify_isometry(cfg, s):
    model = _model(cfg, s["horizon"])
    psi = _field(cfg, s["horizon"], model)
    rep = verifier.isometry_check(psi, model, s["horizon"], s["paths"], s["seed"], s["workers"],
                                  cfg.get("exact_rhs"))
    return [rep.to_dict()]


def _verify_mrt(cfg, s):
    names = cfg.get("cases", list(presets.MRT_CASES))
    C = float(cfg.get("C", 1.0))
    out = []
    for name in names:
        case = presets.representation_case(name, cfg.get(name), s["steps"], s["seed"],
                                           int(cfg.get("pilot_paths", s["paths"])), s["workers"])
        rep = verifier.mrt_residual(case, s["paths"], s["steps"], s["seed"], s["workers"], C,
                                    allowance=name != "brownian_identity")
        out.append(rep.to_dict())
    return out


def _verify_adjoint(cfg, s):
    model, n = presets.doleans_model(cfg.get("doleans"))
    psi = _field(cfg, s["horizon"], model)
    rep = verifier.adjoint_check(doleans.doleans_functional(model, n), doleans.integrand_field(model, n), psi,
                                 model, s["horizon"], s["paths"], s["seed"], s["workers"])
    return [rep.to_dict()]


def _verify_measure_change(cfg, s):
    model, n = presets.doleans_model(cfg.get("doleans"))
    tilts = cfg.get("tilts", [{"kind": "constant", "value": 2.0},
                              {"kind": "mark_step", "edges": [-1.0, 0.0, 1.0], "values": [0.5, 2.0]}])
    support = MarkRegion.from_dict(cfg.get("support", [{"annulus": [0.25, 2.0]}]))
    out = []
    for t in tilts:
        rep = verifier.measure_change_invariance(doleans.doleans_functional(model, n), model,
                                                 TiltSpec.from_dict(t), s["horizon"], s["paths"], s["seed"],
                                                 support, workers=s["workers"],
                                                 grad=doleans.integrand_field(model, n))
        d = rep.to_dict()
        d["tilt"] = t
        out.append(d)
    return out


def _verify_oracle(cfg, s):
    case = presets.kella_whitt_case(cfg.get("kella-whitt"))
    edges = cfg.get("time_edges", [0.0, 0.25, 0.5, 0.75, 1.0])
    bins = [Interval(*b) for b in cfg.get("mark_bins", [[-1.5, -0.5], [-0.5, -0.03125]])]
    res = verifier.integrand_regression_oracle(kella_whitt.bin_statistics(case, edges, bins), s["paths"],
                                               s["seed"], s["workers"])
    return [{"case": "oracle:kella-whitt", "estimate": res["oracle"], "target": res["closed"], "se": res["se"],
             "pass": res["all_pass"], "bin_pass": res["pass"], "n": res["n"], "runtime_s": res["runtime_s"]}]


def cmd_verify(args, cfg: dict) -> tuple[dict, bool]:
    s = _settings(args, cfg)
    fn = {"isometry": _verify_isometry, "mrt": _verify_mrt, "adjoint": _verify_adjoint,
          "measure-change": _verify_measure_change, "oracle": _verify_oracle}[args.target]
    checks = fn(cfg, s)
    ok = all(bool(c["pass"]) for c in checks)
    return {"target": args.target, "seed": s["seed"], "checks": checks, "pass": ok}, ok


def cmd_density(args, cfg: dict) -> tuple[dict, bool]:
    s = _settings(args, cfg)
    T = s["horizon"]
    model = _model(cfg, T) if "model" in cfg else CompensatorModel(
        PointMasses([[1.0]], [1.0]), Constant(1.0))
    cells = _cells(cfg)
    levels = [int(n) for n in cfg.get("levels", [1, 2, 3])]
    f = density.RandomField(lambda t, z, j: t[:, None])  # the smooth test field f(t, z) = t
    rep = density.convergence_sweep(f, cells, levels, model, T, s["paths"], s["seed"], cfg.get("clip"),
                                    s["workers"])
    out = args.out or "density_sweep.csv"
    Path(out).write_text(rep.to_csv())
    d = rep.to_dict()
    d["case"] = "density-sweep"
    d["output"] = out
    return d, rep.passed


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _gallery_kw(cfg, s):
    case = presets.kw_case(cfg)
    rep = verifier.mrt_residual(presets.representation_case("kw", cfg, s["steps"]), s["paths"], s["steps"],
                                s["seed"], s["workers"])
    t0 = time.perf_counter()
    xis = kw.random_integrands(RngStream(s["seed"], 2 ** 30).generator(), int(cfg.get("test_integrands", 5)))
    fn = kw.orthogonality_batch(case, xis)

    def chunk(gen, n, offset):
        return fn(sample_levy_batch(case.levy, s["steps"], case.horizon, gen, n))

    prod = np.concatenate(run_chunks(chunk, s["paths"], s["seed"], s["workers"]))
    orth = [verifier.zero_mean_report(prod[:, k], f"kw:orthogonality[{k}]", t0).to_dict() for k in range(len(xis))]
    grid = np.linspace(0.0, case.horizon, 11)
    rows = [(t, case.ratio * case.scale * math.exp(case.kappa * (case.horizon - t))) for t in grid]
    return [rep.to_dict()] + orth, (["t", "psi_at_X0"], rows), {"ratio": case.ratio, "kappa": case.kappa}


def _gallery_doleans(cfg, s):
    model, n = presets.doleans_model(cfg)
    T = float(cfg.get("horizon", 1.0))
    rep = verifier.mrt_residual(presets.representation_case("doleans", cfg), s["paths"], s["steps"], s["seed"],
                                s["workers"])
    gen = RngStream(s["seed"], 0).generator()
    j = sample_prm_batch(model, T, gen, 1).measure(0)
    p = doleans.doleans_dade(j, model, n)
    rows = list(zip(p.times, p.values))
    return [rep.to_dict()], (["t", "E"], rows), {"first_path_sde_residual": p.sde_residual}


def _gallery_kella_whitt(cfg, s):
    case = presets.kella_whitt_case(cfg)
    t0 = time.perf_counter()
    # frozen from a larger independent run so calibration noise stays below the test's SE
    n_cal = int(cfg.get("calibration_paths", 10 * s["paths"]))
    psi = kella_whitt.calibrate_psi(case, n_cal, s["seed"] + 1, s["workers"])
    tuned = kella_whitt.KellaWhittCase(case.gamma, case.mark_law, case.alpha, psi, case.n, case.horizon)
    m = kella_whitt.martingale_samples(tuned, s["paths"], s["seed"], s["workers"])
    mart = verifier.zero_mean_report(m[:, 0], "kella-whitt:martingale", t0, psi_calibrated=psi,
                                     psi_formula=case.psi_formula).to_dict()
    rep = verifier.mrt_residual(presets.representation_case("kella-whitt", cfg), s["paths"], s["steps"],
                                s["seed"], s["workers"])
    t1 = time.perf_counter()
    levels = cfg.get("ladder", [2, 4, 8])
    means, se = kella_whitt.truncation_ladder(tuned, levels, float(cfg.get("reference", 32)), s["paths"],
                                              s["seed"], s["workers"])
    ladder = {"case": "kella-whitt:truncation_ladder", "estimate": means, "se": se, "levels": levels,
              "pass": bool(np.all(np.diff(means) < 0)), "n": s["paths"], "target": None,
              "runtime_s": time.perf_counter() - t1}
    ys = np.linspace(-1.5, -0.05, 30)
    rows = [(y, -math.expm1(case.alpha * y)) for y in ys]
    return [mart, rep.to_dict(), ladder], (["y", "integrand_at_Z0"], rows), {"psi": psi}


def _gallery_levy_sup(cfg, s):
    case = presets.levy_sup_case(cfg, s["steps"])
    table = supremum.build_tail_table(case, int(cfg.get("pilot_paths", s["paths"])), s["seed"] + 1, s["workers"])
    rc = verifier.RepresentationCase("levy-sup", case.params, case.horizon, supremum.batch_residual(case, table))
    rep = verifier.mrt_residual(rc, s["paths"], s["steps"], s["seed"], s["workers"])
    us = np.linspace(0.0, 1.5, 31)
    rows = [(u, float(table.tail(case.n_steps, u)), float(table.antiderivative(case.n_steps, u))) for u in us]
    return [rep.to_dict()], (["u", "S_T", "G_T"], rows), {"pilot_clamped": table.clamped}


def cmd_gallery(args, cfg: dict) -> tuple[dict, bool]:
    s = _settings(args, cfg)
    fn = {"kw": _gallery_kw, "doleans": _gallery_doleans, "kella-whitt": _gallery_kella_whitt,
          "levy-sup": _gallery_levy_sup}[args.case]
    checks, (header, rows), extra = fn(cfg.get(args.case, cfg), s)
    out = args.out or f"{args.case}.json"
    csv_path = str(Path(out).with_suffix("")) + "_integrand.csv" if out != "-" else f"{args.case}_integrand.csv"
    _write_csv(csv_path, header, rows)
    ok = all(bool(c["pass"]) for c in checks)
    return {"case": args.case, "seed": s["seed"], "checks": checks, "pass": ok, "integrand_csv": csv_path,
            **extra}, ok


# Entry point ----------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="master seed (required here or in the config)")
    p.add_argument("--paths", type=int, help="number of Monte Carlo paths")
    p.add_argument("--steps", type=int, help="Brownian grid size N_t")
    p.add_argument("--out", help="output path ('-' for stdout only)")
    p.add_argument("--workers", type=int, help="worker threads (default: JUMPREP_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jumprep", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("simulate", help="sample scenarios to JSON lines"))
    v = sub.add_parser("verify", help="run a Monte Carlo or pathwise check")
    v.add_argument("target", choices=VERIFY_TARGETS)
    _common(v)
    _common(sub.add_parser("density-sweep", help="approximation error of the lagged cell averages"))
    g = sub.add_parser("gallery", help="run a worked representation case")
    g.add_argument("case", choices=presets.GALLERY_CASES)
    _common(g)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad usage, 0 on --help
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        cmd = {"simulate": cmd_simulate, "verify": cmd_verify, "density-sweep": cmd_density,
               "gallery": cmd_gallery}[args.command]
        report, ok = cmd(args, cfg)
    except (ConfigurationError, DomainError, KeyError, TypeError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 1
    out = args.out
    if args.command in ("simulate", "density-sweep"):
        out = str(Path(args.out or ("scenarios.jsonl" if args.command == "simulate" else "density_sweep.csv"))
                  .with_suffix(".report.json"))
    elif out is None:
        out = "report.json" if args.command == "verify" else f"{args.case}.json"
    text = dump_report(report, out)
    if out == "-":
        sys.stdout.write(text)
    _summary(report, out)
    if not ok:
        failing = [c["case"] for c in report.get("checks", [report]) if not c.get("pass")]
        print("failing checks: " + ", ".join(map(str, failing)), file=sys.stderr)
        return 1
    return 0


def _summary(report: dict, out: str) -> None:
    for c in report.get("checks", [report]):
        est = c.get("estimate")
        est_s = f"{est:.6g}" if isinstance(est, float) else "-"
        print(f"{'PASS' if c.get('pass') else 'FAIL'}  {c.get('case', '?')}  estimate={est_s}")
    if out != "-":
        print(f"report: {out}")


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
