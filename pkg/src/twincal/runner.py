"""CLI orchestration: data generation, fits, persistence, comparison.

Outputs per variant (CSV: comma-delimited, '.' decimal, header row, UTF-8;
floats written with shortest round-trip repr so files parse back exactly):

* ``samples_<variant>.csv``      one row per (chain, draw), constrained scale
* ``summary_<variant>.csv``      per-parameter posterior summary rows
* ``predictions_<variant>.csv``  posterior-predictive bands per individual
* ``diagnostics_<variant>.json`` divergences, step sizes, runtimes
* ``truth.csv``                  simulated ground truth
* ``waveforms.csv``              WK2-vs-WK3 pressure traces (cardio only)

Exit codes: 0 success, 2 configuration error, 3 sampler failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
import time
from pathlib import Path

import numpy as np

from .estimator import HierarchicalCalibrator
from .gp_core import ModelVariant, PosDefError
from .hier_model import Prior, default_priors
from .sampler import SamplerError
from .simulate import (
    CARDIO_SIGMA_P,
    CARDIO_SIGMA_Q,
    CYCLE_PERIOD,
    TOY_NOISE_SD,
    gen_cardio,
    gen_toy,
    wk2_solve,
    wk3_solve,
)

ALL_VARIANTS = ["no_delta", "indep_delta", "common_delta", "shared_delta"]

DISPLAY_TOY = {"u": "u", "alpha_d": "alpha", "rho_d": "rho",
               "sigma_u": "sigma"}
DISPLAY_WK2 = {"R": "R", "C": "C", "alpha_th": "alpha_WK2",
               "rho_th": "rho_WK2", "alpha_d": "alpha", "rho_d": "rho",
               "mu_P": "mu_P", "sigma_u": "sigma_P", "sigma_f": "sigma_Q"}
DISPLAY_GLOBAL = {"m_alpha_d": "m_alpha", "s_alpha_d": "s_alpha",
                  "m_rho_d": "m_rho", "s_rho_d": "s_rho"}


class ConfigError(ValueError):
    pass


def _fmt(v):
    if isinstance(v, float):  # includes numpy float scalars
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


_NAME_RE = re.compile(r"^(?P<base>.+?)(\[(?P<idx>\d+)\])?$")


def split_name(name: str):
    """'R[3]' -> ('R', 3); 'mu_R' -> ('mu_R', None)."""
    m = _NAME_RE.match(name)
    idx = m.group("idx")
    return m.group("base"), (int(idx) if idx is not None else None)


def display_name(name: str, physics: str):
    base, idx = split_name(name)
    table = DISPLAY_TOY if physics == "toy" else DISPLAY_WK2
    if idx is not None:
        base = table.get(base, base)
        return base, idx
    return DISPLAY_GLOBAL.get(base, base), None


# -- config ------------------------------------------------------------------


DEFAULT_CONFIG = {
    "experiment": "toy",
    "variants": "all",
    "chains": 4,
    "warmup": 1000,
    "samples": 1000,
    "target_accept": 0.8,
    "max_tree_depth": 10,
    "seed": 1,
    "out_dir": "out",
    "workers": 1,
    "toy_m": 10,
    "toy_n": 20,
    "pred_points": 40,
    "pred_draws": 100,
}

_INT_KEYS = {"chains", "warmup", "samples", "max_tree_depth", "seed",
             "workers", "toy_m", "toy_n", "pred_points", "pred_draws"}
_FLOAT_KEYS = {"target_accept"}


def parse_config_file(path):
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        cfg[key] = val
    return cfg


def _coerce(key, val):
    if key in _INT_KEYS:
        return int(val)
    if key in _FLOAT_KEYS:
        return float(val)
    return val


def build_config(args, extra_overrides):
    cfg = dict(DEFAULT_CONFIG)
    if args.config:
        for k, v in parse_config_file(args.config).items():
            cfg[k] = v
    for key in ("experiment", "variants", "chains", "warmup", "samples",
                "seed", "out_dir", "workers"):
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            cfg[key] = val
    cfg.update(extra_overrides)
    try:
        cfg = {k: _coerce(k, v) for k, v in cfg.items()}
    except ValueError as err:
        raise ConfigError(str(err)) from err

    if cfg["experiment"] not in ("toy", "cardio"):
        raise ConfigError(f"unknown experiment {cfg['experiment']!r}")
    variants = cfg["variants"]
    if isinstance(variants, str):
        variants = ALL_VARIANTS if variants == "all" else variants.split(",")
    bad = [v for v in variants if v not in ALL_VARIANTS]
    if bad:
        raise ConfigError(f"unknown variants: {bad}")
    if not variants:
        raise ConfigError("at least one variant required")
    cfg["variants"] = variants
    return cfg


def priors_from_config(cfg, physics):
    priors = default_priors(physics)
    for key, val in cfg.items():
        if not key.startswith("prior."):
            continue
        name = key[len("prior."):]
        try:
            kind, a, b = (s.strip() for s in str(val).split(","))
            priors.priors[name] = Prior(kind, float(a), float(b))
        except Exception as err:
            raise ConfigError(f"bad prior override {key}={val}") from err
    return priors


# -- run ---------------------------------------------------------------------


def _truth_rows(experiment, truth):
    rows = []
    if experiment == "toy":
        for m in range(truth.u.size):
            rows.append((m + 1, "u", float(truth.u[m])))
            rows.append((m + 1, "b", float(truth.b[m])))
            rows.append((m + 1, "sigma", float(truth.noise_sd)))
    else:
        for m in range(truth.R1.size):
            rows.append((m + 1, "R1", float(truth.R1[m])))
            rows.append((m + 1, "R2", float(truth.R2[m])))
            rows.append((m + 1, "R", float(truth.R[m])))
            rows.append((m + 1, "C", float(truth.C[m])))
            rows.append((m + 1, "sigma_P", float(truth.sigma_P)))
            rows.append((m + 1, "sigma_Q", float(truth.sigma_Q)))
    return rows


def _truth_lookup(experiment, truth):
    """(display parameter, individual) -> true value, for covered flags."""
    table = {}
    for ind, param, value in _truth_rows(experiment, truth):
        table[(param, ind)] = value
    return table


def _write_samples(path, est):
    names, columns = [], []
    for model, chains in zip(est.models_, est.chains_):
        stacked = np.concatenate([c.constrained_draws for c in chains])
        for j, name in enumerate(model.constrained_names()):
            base, idx = display_name(name, est.physics)
            names.append(base if idx is None else f"{base}[{idx}]")
            columns.append(stacked[:, j])
    n_chains = len(est.chains_[0])
    per_chain = columns[0].size // n_chains
    chain_col = np.repeat(np.arange(n_chains), per_chain)
    draw_col = np.tile(np.arange(per_chain), n_chains)
    rows = zip(chain_col.tolist(), draw_col.tolist(),
               *[c.tolist() for c in columns])
    write_csv(path, ["chain", "draw", *names], rows)


def _write_summary(path, est, truth_table):
    rows = []
    for entry in est.summary():
        base, idx = display_name(entry["name"], est.physics)
        truth = truth_table.get((base, idx), "")
        covered = ""
        if truth != "":
            covered = int(entry["lo"] <= truth <= entry["hi"])
        rows.append((idx if idx is not None else "", base,
                     entry["mean"], entry["sd"], entry["lo"], entry["hi"],
                     truth, entry["rhat"], entry["ess"], covered))
    write_csv(path, ["individual", "parameter", "mean", "sd", "q2.5",
                     "q97.5", "truth", "rhat", "ess", "covered"], rows)


def _write_predictions(path, est, cfg):
    rows = []
    if est.physics == "toy":
        grid = np.linspace(0.0, 4.0, cfg["pred_points"])
        split_at = 2.0
        for data in est.datasets_:
            bands = est.predict(data.id, grid, n_draws=cfg["pred_draws"],
                                seed=cfg["seed"])
            band = bands["u"]
            for i, x in enumerate(grid):
                region = "interp" if x <= split_at else "extrap"
                rows.append((data.id, "u", float(x), band["mean"][i],
                             band["lo"][i], band["hi"][i], region))
    else:
        grid = np.linspace(0.0, CYCLE_PERIOD, cfg["pred_points"])
        for data in est.datasets_:
            bands = est.predict(data.id, grid, x_f_star=grid,
                                n_draws=cfg["pred_draws"], seed=cfg["seed"])
            for block in ("u", "f"):
                band = bands[block]
                for i, x in enumerate(grid):
                    rows.append((data.id, block, float(x), band["mean"][i],
                                 band["lo"][i], band["hi"][i], "interp"))
    write_csv(path, ["individual", "block", "x", "mean", "q2.5", "q97.5",
                     "region"], rows)


def _write_waveforms(path, truth):
    grid = np.linspace(0.0, CYCLE_PERIOD, 161)
    rows = []
    for m in range(truth.R1.size):
        p3 = wk3_solve(truth.R1[m], truth.R2[m], truth.C[m], grid)
        p2 = wk2_solve(truth.R[m], truth.C[m], grid)
        for t, a, b in zip(grid, p3, p2):
            rows.append((m + 1, float(t), float(a), float(b)))
    write_csv(path, ["individual", "t", "pressure_wk3", "pressure_wk2"], rows)


def run(cfg) -> int:
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    physics = "toy" if cfg["experiment"] == "toy" else "wk2"
    priors = priors_from_config(cfg, physics)

    if cfg["experiment"] == "toy":
        datasets, truth = gen_toy(cfg["toy_m"], cfg["seed"],
                                  n_points=cfg["toy_n"])
    else:
        datasets, truth = gen_cardio(cfg["seed"])
    truth_table = _truth_lookup(cfg["experiment"], truth)

    created = []

    def emit(path, writer, *args):
        writer(path, *args)
        created.append(path)

    try:
        emit(out_dir / "truth.csv", write_csv,
             ["individual", "parameter", "value"],
             _truth_rows(cfg["experiment"], truth))
        if cfg["experiment"] == "cardio":
            emit(out_dir / "waveforms.csv", _write_waveforms, truth)

        for variant in cfg["variants"]:
            t0 = time.monotonic()
            est = HierarchicalCalibrator(
                variant=variant, physics=physics, priors=priors,
                n_chains=cfg["chains"], n_warmup=cfg["warmup"],
                n_samples=cfg["samples"],
                target_accept=cfg["target_accept"],
                max_tree_depth=cfg["max_tree_depth"],
                seed=cfg["seed"], workers=cfg["workers"])
            est.fit(datasets)
            emit(out_dir / f"samples_{variant}.csv", _write_samples, est)
            emit(out_dir / f"summary_{variant}.csv", _write_summary, est,
                 truth_table)
            emit(out_dir / f"predictions_{variant}.csv", _write_predictions,
                 est, cfg)
            diag = {
                "variant": variant,
                "runtime_s": time.monotonic() - t0,
                "divergences": est.divergences(),
                "fits": [
                    {
                        "individuals": [d.id for d in model.datasets],
                        "chains": [
                            {"divergences": int(c.divergences),
                             "step_size": float(c.step_size)}
                            for c in chains
                        ],
                    }
                    for model, chains in zip(est.models_, est.chains_)
                ],
            }
            diag_path = out_dir / f"diagnostics_{variant}.json"
            diag_path.write_text(json.dumps(diag, indent=2) + "\n")
            created.append(diag_path)
    except (SamplerError, PosDefError) as err:
        for path in created:
            path.unlink(missing_ok=True)
        print(f"sampler failure: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        for path in created:
            path.unlink(missing_ok=True)
        print(f"output error: {err}", file=sys.stderr)
        return 2
    return 0


# -- compare -----------------------------------------------------------------


def load_summary(path):
    header, rows = read_csv(Path(path))
    idx = {h: i for i, h in enumerate(header)}
    out = []
    for row in rows:
        if row[idx["truth"]] == "":
            continue
        out.append({
            "individual": row[idx["individual"]],
            "parameter": row[idx["parameter"]],
            "truth": float(row[idx["truth"]]),
            "width": float(row[idx["q97.5"]]) - float(row[idx["q2.5"]]),
            "covered": int(row[idx["covered"]]),
        })
    return out


def compare(summary_paths, out_path=None):
    """Cross-variant coverage and CI-width comparison table.

    Returns a list of row dicts; writes them as CSV when out_path is given.
    """
    if len(summary_paths) < 2:
        raise ConfigError("compare needs at least two summary files")
    per_variant = {}
    truth_ref = None
    for path in summary_paths:
        variant = Path(path).stem.replace("summary_", "")
        rows = load_summary(path)
        truths = {(r["parameter"], r["individual"]): r["truth"] for r in rows}
        if truth_ref is None:
            truth_ref = truths
        elif truths != truth_ref:
            raise ConfigError(f"truth values in {path} do not match the "
                              "first summary (different truth files?)")
        per_variant[variant] = rows

    params = sorted({param for param, _ in truth_ref})
    baseline = "indep_delta" if "indep_delta" in per_variant else None
    table = []
    for param in params:
        base_width = None
        if baseline:
            ws = [r["width"] for r in per_variant[baseline]
                  if r["parameter"] == param]
            base_width = float(np.mean(ws)) if ws else None
        for variant, rows in per_variant.items():
            sel = [r for r in rows if r["parameter"] == param]
            if not sel:
                continue
            width = float(np.mean([r["width"] for r in sel]))
            table.append({
                "parameter": param,
                "variant": variant,
                "n": len(sel),
                "coverage": sum(r["covered"] for r in sel),
                "mean_ci_width": width,
                "width_ratio_vs_indep_delta":
                    (width / base_width) if base_width else "",
            })
    if out_path:
        write_csv(Path(out_path),
                  ["parameter", "variant", "n", "coverage", "mean_ci_width",
                   "width_ratio_vs_indep_delta"],
                  [tuple(r.values()) for r in table])
    return table


# -- CLI ---------------------------------------------------------------------


def _parse_extra(tokens):
    """Residual '--key value' pairs become config overrides."""
    extra = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or i + 1 >= len(tokens):
            raise ConfigError(f"cannot parse override {tok!r}")
        extra[tok[2:]] = tokens[i + 1]
        i += 2
    return extra


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="twincal",
        description="Joint Bayesian calibration of imperfect physical models")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate data and fit model variants")
    p_run.add_argument("--experiment", choices=["toy", "cardio"])
    p_run.add_argument("--variants", help="comma list or 'all'")
    p_run.add_argument("--chains", type=int)
    p_run.add_argument("--warmup", type=int)
    p_run.add_argument("--samples", type=int)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out-dir", dest="out_dir")
    p_run.add_argument("--config", help="flat key=value config file")
    p_run.add_argument("--workers", type=int)

    p_cmp = sub.add_parser("compare", help="cross-variant comparison table")
    p_cmp.add_argument("summaries", nargs="+", help="summary_<variant>.csv")
    p_cmp.add_argument("--out", help="output CSV path")

    args, extra = parser.parse_known_args(argv)
    try:
        if args.command == "run":
            cfg = build_config(args, _parse_extra(extra))
            return run(cfg)
        if extra:
            raise ConfigError(f"unexpected arguments: {extra}")
        table = compare(args.summaries, args.out)
        for row in table:
            print(",".join(_fmt(v) for v in row.values()))
        return 0
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
