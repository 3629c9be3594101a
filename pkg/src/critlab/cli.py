"""``criticality-lab``: run any engine from a JSON config and write CSV/JSON outputs.

Config schema (strict, unknown keys rejected)::

    {"model": "inflation", "params": {...}, "seed": 1, "replicas": 1, "output_dir": "out"}

Exit codes: 0 success, 2 configuration error, 3 error signalled by a model.
Replica ``r`` draws from ``RngStream(seed).child(r)``; a scan reuses the same
replica streams for every value (common random numbers).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from critlab import __version__
from critlab.errors import ModelError
from critlab.rng import RngStream
from critlab.series import TimeSeries, write_columns

REQUIRED = object()
TOP_KEYS = ("model", "params", "seed", "replicas", "output_dir")
_MASK64 = (1 << 64) - 1


class ConfigError(Exception):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


@dataclass
class ExperimentConfig:
    model: str
    params: dict
    seed: int
    replicas: int = 1
    output_dir: str | None = None
    source: str = "<config>"
    text: str = ""

    def line_of(self, key: str) -> int | None:
        return _line_of(self.text, key)

    def echo(self) -> dict:
        return {"model": self.model, "params": self.params, "seed": self.seed,
                "replicas": self.replicas, "output_dir": self.output_dir}


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


# -- parameter schemas ------------------------------------------------------------------------


def _coerce(name: str, value, kind):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"parameter {name!r} must be a number")
        return float(value)
    if kind is int:
        if isinstance(value, bool):
            raise ConfigError(f"parameter {name!r} must be an integer")
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(f"parameter {name!r} must be an integer")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"parameter {name!r} must be true or false")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"parameter {name!r} must be a string")
        return value
    raise AssertionError(kind)


def _resolve(schema: dict, params: dict, text: str) -> dict:
    out = {}
    for key in params:
        if key not in schema:
            raise ConfigError(f"unknown parameter {key!r} (expected one of {sorted(schema)})",
                              _line_of(text, key))
    for key, (kind, default) in schema.items():
        if key in params and params[key] is not None:
            try:
                out[key] = _coerce(key, params[key], kind)
            except ConfigError as exc:
                exc.line = _line_of(text, key)
                raise
        elif default is REQUIRED:
            raise ConfigError(f"missing required parameter {key!r}", _line_of(text, "params"))
        else:
            out[key] = default
    return out


# -- model runners ----------------------------------------------------------------------------
# Each runner writes its files into ``outdir`` and returns headline statistics.


def _run_ou(p, rng, outdir, threads):
    from critlab.ou import simulate_ou
    from critlab.series import NoiseSpec

    ts = simulate_ou(p["kappa"], NoiseSpec(p["sigma"]), p["x0"], p["dt"], p["n_steps"], rng)
    ts.to_csv(outdir / "series.csv")
    x = ts.component(0)
    return {"variance": float(x[len(x) // 10:].var()), "variance_theory": p["sigma"] ** 2 / (2 * p["kappa"])
            if p["kappa"] > 0 else math.inf}


def _run_branching(p, rng, outdir, threads):
    from critlab.branching import OffspringDistribution, avalanche_ensemble

    dist = OffspringDistribution(p["offspring"], p["R0"], p["alpha"])
    av = avalanche_ensemble(dist, p["n_runs"], p["size_cap"], rng, threads)
    av.to_csv(outdir / "avalanches.csv")
    return {"mean_size": float(av.size.mean()), "capped_fraction": float(av.capped.mean())}


def _run_sweep(p, rng, outdir, threads):
    from critlab.sweep import SweepConfig, simulate_sweep

    cfg = SweepConfig(p["mu"], p["gamma"], p["dt"], p["system_size"], p["offspring"])
    run = simulate_sweep(cfg, p["t_max"], rng)
    run.write_csv(outdir)
    ks = run.ks_to_stationary() if cfg.gamma > 0 and len(run.trigger_time) else math.nan
    return {"n_avalanches": len(run.trigger_time), "n_landslides": int(run.avalanches.capped.sum()),
            "ks_to_stationary": ks}


def _run_glv(p, rng, outdir, threads):
    from critlab.glv import integrate_glv, random_ecology, stability_report

    eco = random_ecology(p["n"], p["sigma_a"], rng.child(0), p["symmetric"], p["mu"], p["self_regulation"])
    x0 = rng.child(1).generator().uniform(0.5, 1.5, p["n"])
    state = integrate_glv(eco, x0, p["dt"], p["t_max"])
    state.to_csv(outdir / "equilibrium.csv")
    (outdir / "ecology.json").write_text(eco.to_json())
    rep = stability_report(eco, state) if state.survivors.size else None
    info = {"n_survivors": int(state.survivors.size),
            "max_residual": float(np.abs(state.residuals).max()) if state.residuals.size else 0.0}
    if rep is not None:
        d = rep.spectrum.to_dict()
        d.update(kappa_star=rep.kappa_star, lambda_star=rep.lambda_star)
        (outdir / "stability.json").write_text(json.dumps(d))
        info.update(kappa_star=rep.kappa_star, lambda_star=rep.lambda_star)
    return info


def _run_timeliness(p, rng, outdir, threads):
    from critlab import timeliness as tl

    kind = p["network"]
    if kind == "chain":
        net = tl.chain(p["n"])
    elif kind == "ring":
        net = tl.ring(p["n"])
    elif kind == "random-regular":
        net = tl.random_regular(p["n"], p["k"], rng.child(0))
    elif kind == "dag-layered":
        net = tl.dag_layered(p["layers"], p["width"], p["k"], rng.child(0))
    else:
        raise ValueError("network must be chain, ring, random-regular or dag-layered")
    noise = tl.DelayNoise(p["mean_delay"])
    net.to_csv(outdir / "network.csv")
    run = tl.simulate_delays(net, p["B"], noise, p["n_steps"], rng.child(1), record=p["record"])
    m = run.mean_delay
    write_columns(outdir / "mean_delay.csv", ["n", "mean_tau"], [np.arange(len(m)), m])
    write_columns(outdir / "final_delays.csv", ["node", "tau"], [np.arange(net.n), run.final.tau])
    if p["record"]:
        run.write_csv(outdir / "delays.csv")
    info = {"drift": run.drift(), "supercritical": bool(run.drift() > tl.drift_threshold(noise))}
    if p["B_min"] is not None or p["B_max"] is not None:
        if p["B_min"] is None or p["B_max"] is None:
            raise ValueError("B_min and B_max must be given together")
        info["B_c"] = tl.find_critical_buffer(net, noise, (p["B_min"], p["B_max"]), rng.child(2),
                                              n_steps=p["n_steps"])
    return info


def _run_prodnet(p, rng, outdir, threads):
    from critlab import prodnet as pn

    net = pn.random_firm_network(p["n"], p["q"], rng.child(0), p["k"], p["z"], p["weight"], p["labour_share"])
    spec = pn.EntrantSpec(p["entrant_z"], p["entrant_z_spread"], p["k"], p["k"], p["weight"],
                          p["labour_share"], p["customer_share"], p["preferential"])
    run = pn.firm_entry_experiment(net, spec, p["n_entries"], rng.child(1))
    run.min_real_part.to_csv(outdir / "entry.csv")
    final = run.network
    (outdir / "network.json").write_text(final.to_json())
    rep = pn.feasibility(final)
    (outdir / "feasibility.json").write_text(json.dumps(rep.to_dict()))
    return {"min_real_part": rep.min_real_part, "is_m_matrix": rep.is_m_matrix, "n_firms": final.n}


def _run_inflation(p, rng, outdir, threads):
    from critlab import inflation as inf

    cfg = inf.RepricingConfig(p["n_firms"], p["p_minus"], p["p_plus"], p["gamma"], p["J"], p["I0"], p["dt"],
                              p["coupling"], p["exposure"])
    if cfg.J >= 1:
        run = inf.supercritical_run(cfg, p["t_max"] or 100.0, rng)
        run.write_csv(outdir)
        period = inf.dominant_period(run.inflation)
        return {"mean_inflation": run.mean_inflation(), "max_cascade": int(run.cascades.size.max(initial=0)),
                "period": math.nan if period is None else period}
    turnover = cfg.width * (1 - cfg.J) / cfg.I0
    t_max = p["t_max"] or 12 * turnover
    burn = p["burn_in"] if p["burn_in"] is not None else min(2 * turnover, t_max / 2)
    run = inf.run_abm(cfg, t_max, rng, burn_in=burn)
    run.write_csv(outdir)
    return {"mean_inflation": run.mean_inflation(), "predicted_inflation": cfg.I0 / (1 - cfg.J),
            "branching_ratio": run.stationary_cascades().branching_ratio(),
            "ks_to_stationary": run.ks_to_stationary()}


def _kernel(p):
    from critlab.volfeedback import FeedbackKernel

    if p["kernel"] == "exponential":
        return FeedbackKernel("exponential", p["g"], beta=p["beta"])
    return FeedbackKernel(p["kernel"], p["g"], theta=p["theta"], tau_max=p["tau_max"])


def _run_arch(p, rng, outdir, threads):
    from critlab.volfeedback import simulate_arch

    rs = simulate_arch(p["sigma0"], _kernel(p), p["n_steps"], rng, p["burn_in"])
    rs.to_csv(outdir / "returns.csv")
    m, se = rs.mean_variance()
    return {"mean_sigma2": m, "se_sigma2": se, "predicted_sigma2": p["sigma0"] ** 2 / (1 - p["g"])}


def _run_hawkes(p, rng, outdir, threads):
    from critlab.volfeedback import estimate_branching_ratio, simulate_hawkes

    ev = simulate_hawkes(p["lambda0"], _kernel(p), p["t_max"], rng)
    ev.to_csv(outdir / "events.csv")
    rate, se = ev.rate()
    info = {"n_events": len(ev), "rate": rate, "se_rate": se,
            "predicted_rate": p["lambda0"] / (1 - p["g"]) if p["g"] < 1 else math.inf}
    if p["estimate"]:
        fit = estimate_branching_ratio(ev, p["estimate"], tau_max=p["tau_max"])
        info.update(g_hat=fit.g, loglik=fit.loglik)
    return info


_KERNEL_SCHEMA = {"kernel": (str, "exponential"), "g": (float, REQUIRED), "beta": (float, 1.0),
                  "theta": (float, 0.5), "tau_max": (float, 100.0)}

MODELS: dict[str, tuple[dict, Callable]] = {
    "ou": ({"kappa": (float, REQUIRED), "sigma": (float, 1.0), "dt": (float, 0.01),
            "n_steps": (int, 100_000), "x0": (float, 0.0)}, _run_ou),
    "branching": ({"R0": (float, REQUIRED), "offspring": (str, "poisson"), "alpha": (float, None),
                   "n_runs": (int, 100_000), "size_cap": (int, 10**7)}, _run_branching),
    "sweep": ({"mu": (float, REQUIRED), "gamma": (float, REQUIRED), "dt": (float, 0.001),
               "system_size": (int, 10**5), "offspring": (str, "linear-fractional"),
               "t_max": (float, 10_000.0)}, _run_sweep),
    "glv": ({"n": (int, REQUIRED), "sigma_a": (float, REQUIRED), "mu": (float, 1.0),
             "symmetric": (bool, True), "self_regulation": (float, 1.0), "dt": (float, 0.01),
             "t_max": (float, 2000.0)}, _run_glv),
    "timeliness": ({"network": (str, REQUIRED), "B": (float, REQUIRED), "n": (int, 1000), "k": (int, 3),
                    "layers": (int, 10), "width": (int, 100), "mean_delay": (float, 1.0),
                    "n_steps": (int, 10_000), "record": (bool, False), "B_min": (float, None),
                    "B_max": (float, None)}, _run_timeliness),
    "prodnet": ({"n": (int, REQUIRED), "q": (float, 0.0), "k": (int, 3), "z": (float, 1.0),
                 "weight": (float, 0.5), "labour_share": (float, 0.3), "n_entries": (int, 0),
                 "entrant_z": (float, 1.0), "entrant_z_spread": (float, 0.0), "customer_share": (float, 0.05),
                 "preferential": (bool, False)}, _run_prodnet),
    "inflation": ({"J": (float, REQUIRED), "n_firms": (int, 100_000), "p_minus": (float, -0.5),
                   "p_plus": (float, 0.5), "gamma": (float, 0.001), "I0": (float, 0.01), "dt": (float, 1.0),
                   "coupling": (str, "random"), "exposure": (int, 64), "t_max": (float, None),
                   "burn_in": (float, None)}, _run_inflation),
    "arch": ({**_KERNEL_SCHEMA, "sigma0": (float, 1.0), "n_steps": (int, 100_000), "burn_in": (int, None),
              "tau_max": (float, 1000.0)}, _run_arch),
    "hawkes": ({**_KERNEL_SCHEMA, "lambda0": (float, 1.0), "t_max": (float, 1000.0),
                "estimate": (str, None)}, _run_hawkes),
}


# -- config loading ---------------------------------------------------------------------------


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno) from None
    return parse_config(raw, text, str(path))


def parse_config(raw, text: str = "", source: str = "<config>") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object", 1)
    for key in raw:
        if key not in TOP_KEYS:
            raise ConfigError(f"unknown key {key!r} (expected one of {list(TOP_KEYS)})", _line_of(text, key))
    for key in ("model", "params", "seed"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}", 1)
    model = raw["model"]
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r} (expected one of {sorted(MODELS)})", _line_of(text, "model"))
    if not isinstance(raw["params"], dict):
        raise ConfigError("params must be an object", _line_of(text, "params"))
    seed = raw["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= _MASK64:
        raise ConfigError("seed must be an integer in [0, 2**64)", _line_of(text, "seed"))
    replicas = raw.get("replicas", 1)
    if isinstance(replicas, bool) or not isinstance(replicas, int) or replicas < 1:
        raise ConfigError("replicas must be a positive integer", _line_of(text, "replicas"))
    out = raw.get("output_dir")
    if out is not None and not isinstance(out, str):
        raise ConfigError("output_dir must be a string", _line_of(text, "output_dir"))
    params = _resolve(MODELS[model][0], raw["params"], text)
    return ExperimentConfig(model, params, seed, replicas, out, source, text)


# -- execution --------------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _run_replicas(cfg: ExperimentConfig, params: dict, outdir: Path, threads: int) -> list[dict]:
    runner = MODELS[cfg.model][1]
    base = RngStream(cfg.seed)
    dirs = [outdir if cfg.replicas == 1 else outdir / f"replica_{r:03d}" for r in range(cfg.replicas)]
    for d in dirs:
        d.mkdir(parents=True, exist_ok=True)

    def one(r):
        return runner(params, base.child(r), dirs[r], threads)

    if threads > 1 and cfg.replicas > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, range(cfg.replicas)))
    return [one(r) for r in range(cfg.replicas)]


def _headline_columns(results: list[list[dict]]) -> list[str]:
    keys: list[str] = []
    for per_value in results:
        for res in per_value:
            for k in res:
                if k not in keys:
                    keys.append(k)
    return keys


def _mean(values) -> float:
    vals = [float(v) for v in values if v is not None]
    return float(np.mean(vals)) if vals else math.nan


def _write_manifest(outdir: Path, cfg: ExperimentConfig, command: str, wall: float, threads: int,
                    extra: dict | None = None) -> None:
    files = sorted(p for p in outdir.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "tool": "criticality-lab",
        "version": __version__,
        "command": command,
        "config": cfg.echo(),
        "threads": threads,
        "wall_time_s": wall,
        "files": [{"path": str(p.relative_to(outdir)), "sha256": _sha256(p)} for p in files],
    }
    if extra:
        manifest.update(extra)
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o).__name__)


def _summary(path: Path, labels: list, label_name: str, results: list[list[dict]]) -> None:
    keys = _headline_columns(results)
    cols = [list(labels)] + [[_mean(r.get(k) for r in per_value) for per_value in results] for k in keys]
    write_columns(path, [label_name, *keys], cols)


def run(cfg: ExperimentConfig, outdir: Path, threads: int = 1) -> list[dict]:
    t0 = time.perf_counter()
    outdir.mkdir(parents=True, exist_ok=True)
    results = _run_replicas(cfg, cfg.params, outdir, threads)
    _summary(outdir / "summary.csv", list(range(cfg.replicas)), "replica", [[r] for r in results])
    _write_manifest(outdir, cfg, "run", time.perf_counter() - t0, threads,
                    {"headline": results})
    return results


def scan(cfg: ExperimentConfig, param: str, values: list, outdir: Path, threads: int = 1) -> list[list[dict]]:
    schema = MODELS[cfg.model][0]
    if param not in schema:
        raise ConfigError(f"scan parameter {param!r} is not a parameter of model {cfg.model!r}",
                          _line_of(cfg.text, "params"))
    if not values:
        raise ConfigError("scan needs at least one value")
    kind = schema[param][0]
    coerced = [_coerce(param, v, kind) for v in values]
    t0 = time.perf_counter()
    outdir.mkdir(parents=True, exist_ok=True)
    results = []
    for v in coerced:
        params = dict(cfg.params)
        params[param] = v
        _resolve(schema, params, cfg.text)  # re-validate required fields
        results.append(_run_replicas(cfg, params, outdir / f"{param}={v}", threads))
    _summary(outdir / "summary.csv", coerced, param, results)
    _write_manifest(outdir, cfg, f"scan {param}", time.perf_counter() - t0, threads,
                    {"scan": {"param": param, "values": coerced}, "headline": results})
    return results


def _parse_values(text: str) -> list:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            out.append(json.loads(tok))
        except json.JSONDecodeError:
            out.append(tok)
    return out


def _threads(arg: int | None) -> int:
    if arg is not None:
        n = arg
    else:
        env = os.environ.get("CRITLAB_THREADS")
        if env is None or env == "":
            return 1
        try:
            n = int(env)
        except ValueError:
            raise ConfigError("CRITLAB_THREADS must be a positive integer") from None
    if n < 1:
        raise ConfigError("thread count must be a positive integer")
    return n


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="criticality-lab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "scan"):
        sp = sub.add_parser(name)
        sp.add_argument("config")
        sp.add_argument("--output-dir", default=None)
        sp.add_argument("--threads", type=int, default=None)
        if name == "scan":
            sp.add_argument("--param", required=True)
            sp.add_argument("--values", required=True, help="comma-separated list")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        threads = _threads(args.threads)
        out = args.output_dir or cfg.output_dir
        if out is None:
            raise ConfigError("no output directory: set output_dir or pass --output-dir", 1)
        outdir = Path(out)
        if args.command == "run":
            run(cfg, outdir, threads)
        else:
            scan(cfg, args.param, _parse_values(args.values), outdir, threads)
    except ConfigError as exc:
        where = f"{args.config}:{exc.line}: " if exc.line else f"{args.config}: "
        print(f"config error: {where}{exc}", file=sys.stderr)
        return 2
    except ModelError as exc:
        print(f"model error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except (ValueError, TypeError) as exc:
        line = _line_of(cfg.text, "params") if "cfg" in locals() else None
        where = f"{args.config}:{line}: " if line else f"{args.config}: "
        print(f"config error: {where}invalid parameters: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
