"""Experiment driver: ``rfim <experiment> --config <path> [--seed S] [--workers W] [--out DIR]``.

Config files are INI-style with three sections::

    [experiment]
    seed = 0
    out = results/wsm

    [model]
    d = 2
    beta = 0.3
    field = gaussian(1)

    [method]
    radii = 1, 2, 3
    replicas = 200

Keys outside an experiment's schema are rejected.  Exit codes: 0 pass,
1 assertion failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import configparser
import datetime as _dt
import json
import math
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, acceptance, blocks, exact, glauber, lattice, mixing, parallel, sampler, sloc
from ._rng import stream
from .rfim import ConfigError, FieldSpec, RfimInstance, sample_field

# -- value parsers ----------------------------------------------------------------


def _int(s: str) -> int:
    return int(s.strip())


def _float(s: str) -> float:
    return float(s.strip())


def _ints(s: str) -> list:
    return [int(x) for x in s.replace(",", " ").split()]


def _floats(s: str) -> list:
    return [float(x) for x in s.replace(",", " ").split()]


def _str(s: str) -> str:
    return s.strip()


def _field(s: str) -> FieldSpec:
    return FieldSpec.parse(s.strip())


MODEL_KEYS = {"d": (_int, 2), "n": (_int, 1), "shape": (_ints, None), "beta": (_float, 1.0),
              "field": (_field, FieldSpec("gaussian", 1.0))}
EXPERIMENT_KEYS = {"seed": (_int, 0), "out": (_str, None)}

METHOD_KEYS = {
    "wsm-scan": {"radii": (_ints, [1, 2, 3]), "replicas": (_int, 200), "method": (_str, "exact"),
                 "t_burn": (_float, 20.0), "mc_replicas": (_int, 1000)},
    "ssm-scan": {"radii": (_ints, [2, 3]), "replicas": (_int, 50), "box": (_int, 1),
                 "exhaustive_limit": (_int, 16), "n_random": (_int, 32)},
    "gap-scan": {"variances": (_floats, [0.25, 1.0, 4.0, 25.0]), "replicas": (_int, 100)},
    "sampler-validate": {"draws": (_int, 3), "runs": (_int, 100_000), "c_star": (_float, 4.0),
                         "tol": (_float, 0.02)},
    "sl-report": {"times": (_floats, list(sloc.DEFAULT_TIMES)), "replicas": (_int, 10_000), "u": (_ints, None),
                  "ell": (_int, 0), "p": (_ints, [1, 2]), "source": (_str, "exact"), "burn_in": (_float, None)},
    "coarse-report": {"R": (_int, 8), "K": (_float, 1.0), "variant": (_str, "anticoncentration"),
                      "mc_replicas": (_int, 4096), "r_mode": (_str, "literal")},
    "block-gap-check": {"fixtures": (_str, "path4, rect2x3, whole3x3")},
    "plant-demo": {"m": (_int, 3), "pairs": (_int, 200), "dt": (_float, 2.5), "t_burn": (_float, 200.0),
                   "n_samples": (_int, 8000), "threshold": (_float, 5.0)},
    "selftest": {"criteria": (_ints, list(acceptance.CRITERIA))},
}
EXPERIMENTS = tuple(METHOD_KEYS)


@dataclass
class ExperimentConfig:
    name: str
    seed: int = 0
    out: Optional[str] = None
    model: dict = field(default_factory=dict)
    method: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        def show(v):
            if isinstance(v, FieldSpec):
                return v.describe()
            return v
        return {"experiment": self.name, "seed": self.seed, "out": self.out,
                "model": {k: show(v) for k, v in self.model.items()},
                "method": {k: show(v) for k, v in self.method.items()}}

    def domain(self) -> lattice.Domain:
        if self.model.get("shape"):
            return lattice.make_rect(self.model["shape"])
        return lattice.make_box(self.model["n"], self.model["d"])


def _section(cp, name: str, schema: dict) -> dict:
    out = {k: default for k, (_, default) in schema.items()}
    if not cp.has_section(name):
        return out
    for key, raw in cp.items(name):
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} in [{name}]")
        parse = schema[key][0]
        try:
            out[key] = parse(raw)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"bad value for {name}.{key}: {raw!r} ({exc})") from exc
    return out


def parse_config_text(text: str, name: Optional[str] = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config does not parse: {exc}") from exc
    for sec in cp.sections():
        if sec not in ("experiment", "model", "method"):
            raise ConfigError(f"unknown section [{sec}]")
    exp_schema = dict(EXPERIMENT_KEYS, name=(_str, None))
    exp = _section(cp, "experiment", exp_schema)
    name = name or exp["name"]
    if name is None:
        raise ConfigError("experiment name missing")
    if exp["name"] is not None and exp["name"] != name:
        raise ConfigError(f"config is for {exp['name']!r}, not {name!r}")
    if name not in METHOD_KEYS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    cfg = ExperimentConfig(name, exp["seed"], exp["out"], _section(cp, "model", MODEL_KEYS),
                           _section(cp, "method", METHOD_KEYS[name]))
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    m, p = cfg.model, cfg.method
    if m["d"] < 1 or m["n"] < 0:
        raise ConfigError("need d >= 1 and n >= 0")
    if m["beta"] < 0:
        raise ConfigError("beta must be non-negative")
    for key in ("replicas", "runs", "pairs", "draws", "mc_replicas", "n_samples"):
        if key in p and p[key] is not None and p[key] < 1:
            raise ConfigError(f"{key} must be positive")
    if "radii" in p and (not p["radii"] or min(p["radii"]) < 0):
        raise ConfigError("radii must be a nonempty list of non-negative integers")
    if cfg.name == "wsm-scan" and p["method"] not in mixing.METHODS:
        raise ConfigError(f"method must be one of {mixing.METHODS}")
    if cfg.name == "coarse-report":
        if p["variant"] not in blocks.VARIANTS or p["r_mode"] not in blocks.R_MODES:
            raise ConfigError("unknown variant or r_mode")
        blocks.r_range(p["R"], p["r_mode"])
    if cfg.name == "sl-report" and p["source"] not in ("exact", "glauber"):
        raise ConfigError("source must be exact or glauber")
    if cfg.name == "sl-report" and p["source"] == "glauber" and p["burn_in"] is None:
        raise ConfigError("the glauber source needs burn_in")
    if cfg.name == "block-gap-check":
        names = {x.strip() for x in p["fixtures"].split(",") if x.strip()}
        known = {n for n, _, _ in acceptance.block_fixtures(0)}
        if not names or names - known:
            raise ConfigError(f"fixtures must be drawn from {sorted(known)}")


# -- experiments --------------------------------------------------------------------

@dataclass
class Result:
    artifacts: dict
    ok: bool
    summary: str


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _csv(header: str, rows) -> str:
    return "\n".join([header] + [",".join(_fmt(v) for v in r) for r in rows]) + "\n"


def _wsm(cfg, seed):
    m, p = cfg.model, cfg.method
    mc = mixing.McParams(p["t_burn"], p["mc_replicas"])
    scan = mixing.wsm_scan(m["field"], m["beta"], p["radii"], p["replicas"], m["d"], p["method"], mc, seed)
    return Result({"wsm.csv": scan.to_csv(), "fit.txt": scan.fit_block()}, True,
                  scan.fit_block().splitlines()[0])


def _ssm(cfg, seed):
    m, p = cfg.model, cfg.method
    d, b = m["d"], p["box"]
    B = lattice.make_box(b, d)
    host = lattice.make_box(b + 1, d)
    rows, means, ses = [], [], []
    exhaustive = True
    for ell in p["radii"]:
        vals = []
        for k in range(p["replicas"]):
            fs = int(stream(seed, "ssm-field", ell, k).integers(2 ** 62))
            h = sample_field(m["field"].with_seed(fs), host)
            res = mixing.ssm_functional(lambda v: h[host.index(v)], m["beta"], B, (0,) * d, ell,
                                        stream(seed, "ssm-candidates", ell, k), p["exhaustive_limit"], p["n_random"])
            exhaustive &= res.exhaustive
            vals.append(res.value)
        mu, se = float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        means.append(mu)
        ses.append(se)
        rows.append((ell, mu, se, p["replicas"], "exact" if exhaustive else "candidates"))
    fit, note = mixing.fit_decay(p["radii"], means, ses)
    scan = mixing.DecayScan(p["radii"], np.array(means), np.array(ses), p["replicas"],
                            "exact" if exhaustive else "candidates", m["field"].describe(), m["beta"], fit=fit,
                            fit_note=note)
    return Result({"ssm.csv": scan.to_csv(), "fit.txt": scan.fit_block()}, True, scan.fit_block().splitlines()[0])


def _gap(cfg, seed):
    m, p = cfg.model, cfg.method
    dom = cfg.domain()
    rows = []
    for var in p["variances"]:
        gaps = []
        for k in range(p["replicas"]):
            fs = int(stream(seed, "gap-field", var, k).integers(2 ** 62))
            h = sample_field(FieldSpec("gaussian", var, seed=fs), dom)
            gaps.append(exact.spectral_gap(exact.enumerate_gibbs(RfimInstance(dom, m["beta"], h))).gap)
        gaps = np.array(gaps)
        se = float(gaps.std(ddof=1) / math.sqrt(len(gaps))) if len(gaps) > 1 else 0.0
        rows.append((var, float(np.median(gaps)), float(gaps.mean()), se, p["replicas"]))
    med = [r[1] for r in rows]
    trend = "increasing" if all(b > a for a, b in zip(med, med[1:])) else "not monotone"
    return Result({"gaps.csv": _csv("variance,median-gap,mean-gap,stderr,replicas", rows)}, True,
                  f"median gap {trend} in the field variance")


def _sampler(cfg, seed):
    m, p = cfg.model, cfg.method
    dom = cfg.domain()
    beta = m["beta"]
    bound = math.exp(4 * dom.d * beta)
    val_rows, ws_rows = [], []
    ok = True
    for k in range(p["draws"]):
        fs = int(stream(seed, "sampler-field", k).integers(2 ** 62))
        h = sample_field(m["field"].with_seed(fs), dom) if m["field"].random else sample_field(m["field"], dom)
        scfg = sampler.SamplerConfig(C_star=p["c_star"], seed=int(stream(seed, "sampler-runs", k).integers(2 ** 62)))
        codes = sampler.incremental_sample(dom, beta, h, scfg, p["runs"])
        probs = exact.enumerate_gibbs(RfimInstance(dom, beta, h)).probs
        tv = 0.5 * float(np.abs(glauber.empirical_law(codes, dom.N) - probs).sum())
        floor = 0.5 * float(np.sum(np.sqrt(2 * probs * (1 - probs) / (math.pi * p["runs"]))))
        val_rows.append((k, dom.N, dom.N, scfg.k_star(dom.N), tv, floor, p["runs"]))
        ok &= tv < p["tol"]
        for i in range(2, dom.N + 1):
            r = sampler.warm_start_ratio(dom, i, beta, h)
            ws_rows.append((k, i, i, r, bound))
            ok &= r <= bound + 1e-9
    worst = max(r[4] for r in val_rows)
    return Result({"validation.csv": _csv("draw,stage,N_i,k*,empirical-TV,noise-floor,runs", val_rows),
                   "warm_start.csv": _csv("draw,stage,N_i,ratio,bound", ws_rows)}, ok,
                  f"worst TV {worst:.4f} (tolerance {p['tol']:g})")


def _sl(cfg, seed):
    m, p = cfg.model, cfg.method
    dom = cfg.domain()
    h = sample_field(m["field"].with_seed(seed), dom) if m["field"].random else sample_field(m["field"], dom)
    inst = RfimInstance(dom, m["beta"], h)
    source = "exact" if p["source"] == "exact" else ("glauber", p["burn_in"])
    u = tuple(p["u"]) if p["u"] else dom.vertex(0)
    A = stream(seed, "sl-event").random(1 << dom.N) < 0.5
    mag = exact.spin_table(dom.N).sum(axis=1).astype(float)
    t, R = p["times"], p["replicas"]
    rep = sloc.martingale_check(inst, A, t, R, seed, source)
    rep.extend(sloc.variance_decay_check(inst, mag, t, R, seed, source))
    rep.extend(sloc.supermartingale_checks(inst, u, p["ell"], mag, t, R, seed, source))
    ok = rep.ok
    for pp in p["p"]:
        tr = sloc.trace_moment_probe(inst, pp, t, min(R, 2000), seed, source)
        rep.extend(_keyed_notes(tr, pp))
    notes = "\n".join(f"{k}: {_fmt(v)}" for k, v in sorted(rep.notes.items())) + "\n"
    fails = sum(r[5] == "fail" for r in rep.rows)
    return Result({"sl.csv": rep.to_csv(), "notes.txt": notes}, ok, f"{fails} failing SL rows")


def _keyed_notes(rep: sloc.SLReport, p: int) -> sloc.SLReport:
    """Trace-moment report with notes keyed by the moment order."""
    return sloc.SLReport(rep.rows, {f"{k}[p={p}]": v for k, v in rep.notes.items()})


def _coarse(cfg, seed):
    m, p = cfg.model, cfg.method
    dom = cfg.domain()
    h = sample_field(m["field"].with_seed(seed), dom) if m["field"].random else sample_field(m["field"], dom)
    params = blocks.GoodBadParams(K=p["K"], R=p["R"], beta=m["beta"], variant=p["variant"],
                                  mc_replicas=p["mc_replicas"], r_mode=p["r_mode"])
    grid = blocks.classify(dom, h, params, seed)
    bs = blocks.build_blocks(grid)
    geo = blocks.block_geometry_report(bs)
    stats = blocks.bad_cluster_stats(grid)
    summary = (f"variant: {p['variant']}\nR: {p['R']}\nrho: {params.rho(dom.d):.17g}\nbad_sites: "
               f"{len(grid.sites_with(lattice.BAD))}\nmax_bad_cluster: {stats['max']}\nblocks: {len(bs)}\n"
               f"max_ratio: {geo.max_ratio:.17g}\nbound: {geo.bound:.17g}\nchi: {geo.chi}\n")
    return Result({"coarse.csv": _csv("coarse-coords,label,margin", grid.to_csv_rows()),
                   "blocks.csv": bs.to_csv(), "geometry.csv": geo.to_csv(dom), "summary.txt": summary},
                  geo.ok, f"max ratio {geo.max_ratio:.4f} (bound {geo.bound:.4f})")


def _block_gap(cfg, seed):
    want = [x.strip() for x in cfg.method["fixtures"].split(",") if x.strip()]
    rows = []
    ok = True
    for name, inst, bl in acceptance.block_fixtures(seed):
        if name not in want:
            continue
        rep = blocks.block_dynamics_gap_check(inst, bl)
        drift = blocks.stationarity_drift(exact.enumerate_gibbs(inst), bl)
        ok &= rep.ok and drift < 1e-10
        rows.append((name, rep.gap_G, rep.gap_B, rep.min_block_gap, rep.chi, rep.rhs, drift,
                     "pass" if rep.ok and drift < 1e-10 else "fail"))
    return Result({"block_gap.csv": _csv("fixture,gap-G,gap-B,min-block-gap,chi,rhs,drift,verdict", rows)}, ok,
                  f"{sum(r[-1] == 'pass' for r in rows)}/{len(rows)} fixtures pass")


def _plant(cfg, seed):
    m, p = cfg.model, cfg.method
    res = sampler.griffiths_experiment(n=m["n"], m=p["m"], beta=m["beta"], base=m["field"], pairs=p["pairs"],
                                       dt=p["dt"], t_burn=p["t_burn"], n_samples=p["n_samples"], seed=seed,
                                       threshold=p["threshold"])
    rows = [(k, a, b) for k, (a, b) in enumerate(zip(res.tau_typical, res.tau_planted))]
    summary = (f"ratio: {res.ratio:.17g}\nratio_se: {res.ratio_se:.17g}\nlower_3sigma: {res.lower:.17g}\n"
               f"threshold: {res.threshold:.17g}\nestimator: batch-means\n")
    return Result({"taus.csv": _csv("pair,tau-typical,tau-planted", rows), "summary.txt": summary}, res.ok,
                  f"ratio {res.ratio:.2f}, lower 3-sigma {res.lower:.2f}")


def _selftest(cfg, seed):
    lines = []
    outs = acceptance.run_all(seed, only=set(cfg.method["criteria"]), echo=lambda s: (lines.append(s), print(s)))
    ok = all(o.ok for o in outs)
    return Result({"acceptance.txt": "\n".join(lines) + "\n"}, ok,
                  f"{sum(o.ok for o in outs)}/{len(outs)} criteria pass")


RUNNERS: dict = {"wsm-scan": _wsm, "ssm-scan": _ssm, "gap-scan": _gap, "sampler-validate": _sampler,
                 "sl-report": _sl, "coarse-report": _coarse, "block-gap-check": _block_gap,
                 "plant-demo": _plant, "selftest": _selftest}


def execute(cfg: ExperimentConfig, seed: Optional[int] = None, n_workers: Optional[int] = None) -> Result:
    """Run an experiment in memory; artifacts are returned as {file name: text}."""
    seed = cfg.seed if seed is None else int(seed)
    prev = parallel.configured()
    parallel.set_workers(n_workers)
    try:
        res = RUNNERS[cfg.name](cfg, seed)
    finally:
        parallel.set_workers(prev)
    res.artifacts = {k: _with_seed(v, seed) if k.endswith(".csv") else v for k, v in res.artifacts.items()}
    return res


def _with_seed(text: str, seed: int) -> str:
    """Append a seed column so each row can be regenerated on its own."""
    lines = text.splitlines()
    if not lines:
        return text
    out = [lines[0] + ",seed"] + [f"{ln},{seed}" for ln in lines[1:] if ln]
    return "\n".join(out) + "\n"


def reproducibility_configs() -> list:
    """Small configs whose CSVs must not depend on the worker count."""
    return [
        "[experiment]\nname = wsm-scan\n[model]\nbeta = 1\nfield = gaussian(25)\n"
        "[method]\nradii = 1, 2\nreplicas = 6\nmethod = coupled-mc\nt_burn = 5\nmc_replicas = 50\n",
        "[experiment]\nname = sampler-validate\n[model]\nshape = 2, 2\nbeta = 0.5\n"
        "[method]\ndraws = 1\nruns = 300\nc_star = 3\ntol = 1\n",
        "[experiment]\nname = plant-demo\n[model]\nn = 4\nbeta = 1\nfield = gaussian(25)\n"
        "[method]\nm = 2\npairs = 5\ndt = 0.5\nt_burn = 5\nn_samples = 200\nthreshold = 0\n",
        "[experiment]\nname = sl-report\n[model]\nshape = 2, 2\nbeta = 0.5\n"
        "[method]\ntimes = 0, 1\nreplicas = 200\np = 1\n",
    ]


# -- persistence -----------------------------------------------------------------------

def write_outputs(out: Path, cfg: ExperimentConfig, seed: int, n_workers, result: Result) -> None:
    """Write artifacts into a scratch directory, then move them into ``out``."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".rfim-", dir=out.parent))
    try:
        for name, text in result.artifacts.items():
            (tmp / name).write_text(text)
        conf = cfg.resolved()
        conf["seed"] = seed
        manifest = {"config": conf, "version": __version__, "workers": n_workers or parallel.workers(),
                    "artifacts": sorted(result.artifacts), "ok": result.ok, "summary": result.summary}
        (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        (tmp / "timestamp.txt").write_text(_dt.datetime.now(_dt.timezone.utc).isoformat() + "\n")
        if out.exists():
            for f in tmp.iterdir():
                os.replace(f, out / f.name)
            tmp.rmdir()
        else:
            os.replace(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rfim", description="Random-field Ising Glauber dynamics experiments.")
    ap.add_argument("experiment", help=", ".join(EXPERIMENTS))
    ap.add_argument("--config", help="INI config file (optional for selftest)")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--workers", type=int, help="worker processes (default: RFIM_WORKERS or 1)")
    ap.add_argument("--out", help="output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            text = Path(args.config).read_text()
        elif args.experiment == "selftest":
            text = "[experiment]\nname = selftest\n"
        else:
            raise ConfigError("--config is required")
        cfg = parse_config_text(text, args.experiment)
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be positive")
    except (ConfigError, OSError) as exc:
        print(f"rfim: configuration error: {exc}", file=sys.stderr)
        return 2
    seed = cfg.seed if args.seed is None else args.seed
    try:
        result = execute(cfg, seed, args.workers)
    except ConfigError as exc:
        print(f"rfim: configuration error: {exc}", file=sys.stderr)
        return 2
    out = args.out or cfg.out or os.path.join("rfim-out", cfg.name)
    write_outputs(Path(out), cfg, seed, args.workers, result)
    print(f"{cfg.name}: {'pass' if result.ok else 'FAIL'} - {result.summary} -> {out}")
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
