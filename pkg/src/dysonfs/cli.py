"""Experiment front end: config resolution, dispatch, artifact plumbing.

One JSON document configures everything.  Defaults fill what the file
omits, and repeated ``--set dotted.path=value`` flags rewrite leaves from
the command line (values parse as JSON, falling back to bare strings).
Every run resolves the full config, validates the whole document at
once (reporting every violated invariant, not just the first), derives
the model scales, and writes its outputs into a directory addressed by
(subcommand, config digest) next to a versioned manifest.  Reruns of an
identical config are byte-identical; distinct configs land in distinct
directories and never touch each other's artifacts.

Randomness: each subcommand hands the single config seed to the module
it drives; modules derive their internal streams from it with
counter-based generators.  The only extra stream here, the stationary
start of a diffusion run, uses the child key [seed, 11].  Thread counts
(--threads, DYSONFS_THREADS, then the config "threads" entry) cap worker
pools and never change results, so they are excluded from the digest
along with output_dir.

Exit codes: 0 success, 2 validation failure, 3 resource or feasibility
failure, 64 command-line usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .determinantal import SlaterEnsemble, doob_kernel, km_kernel, level_density
from .diffusion import DiffusionConfig, sample_stationary, simulate
from .errors import ResourceError, ValidationError
from .lattice import BUILTIN_STEP_LAWS, WalkModel, verify_km
from .potentials import PowerLaw, solve_scale
from .sampler import McmcConfig, default_endpoints, sample_exact, sample_mcmc
from .spectral import SpectralConfig, solve_eigen
from .stats import mixing_experiment, stationary_top_cdf, \
    tilt_convergence_experiment
from .weyl import ChamberKind, harmonic, harmonicity_residual, \
    meander_exit_check

SUBCOMMANDS = ("spectrum", "kernel", "verify-km", "sample-walks",
               "sample-diffusion", "tilt-convergence", "mixing", "weyl-check")

DEFAULTS = {
    "seed": 0,
    "output_dir": "artifacts",
    "threads": None,
    "potential": {"kind": "power", "alpha": 1.0, "lambda": 0.01},
    "step_law": {"name": "spread"},
    "walks": {"n": 1, "samples": 200, "a_N": 8.0, "N": None,
              "u": None, "v": None, "x_max_multiplier": 8.0},
    "spectral": {"r_max": 30.0, "grid_points": 3000, "num_modes": 8,
                 "sigma2": 1.0},
    "sampler": "exact",
    "diffusion": {"dt": 5e-4, "t_final": 50.0, "boundary_guard": 1e-8,
                  "initial": None},
    "tilt_convergence": {"lambdas": [0.01, 0.005, 0.002], "t_probe": 0.0,
                         "samples": 20000, "joint_bins": 24, "edge": 4.0},
    "mixing": {"T_window": 1.0, "K_values": [1, 2, 3, 4],
               "endpoints": [[[1], [1]], [[4], [4]]], "samples": 0,
               "bins": 40, "edge": 4.0, "horizon_boost": 1.0},
    "weyl": {"chamber": "C", "n": 1, "start": None, "walkers": 20000,
             "steps": 200, "bins": None, "edge": 4.0},
    "km": {"n": 2, "steps": "rademacher", "N": 4, "u": [1, 3], "v": [1, 3],
           "tilt": None},
    "kernel": {"t": 1.0, "probes": 5, "density_points": 400,
               "heatmap_points": 120},
}

_WEYL_STARTS = {1: (0.04,), 2: (0.05, 0.10), 3: (0.3, 0.6, 0.9)}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


# --------------------------------------------------------------- config
def _merge(base, overlay):
    if isinstance(base, dict) and isinstance(overlay, dict):
        out = dict(base)
        for k, v in overlay.items():
            out[k] = _merge(base[k], v) if k in base else v
        return out
    return overlay


def _parse_set(text: str):
    if "=" not in text:
        raise _UsageError(f"--set needs dotted.path=value, got {text!r}")
    path, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path.strip(), value


def _apply_set(cfg: dict, path: str, value, errors: list):
    keys = path.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            errors.append(f"config: unknown key {path!r}")
            return
        node = node[k]
    if not isinstance(node, dict) or keys[-1] not in node:
        errors.append(f"config: unknown key {path!r}")
        return
    node[keys[-1]] = value


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return (_is_int(v) or isinstance(v, float)) and math.isfinite(v)


def _int_list(v) -> bool:
    return isinstance(v, list) and len(v) > 0 and all(_is_int(x) for x in v)


def validate_config(cfg: dict) -> list:
    """Every violated invariant in the resolved document, one line each."""
    e = []

    def bad(msg):
        e.append(f"config: {msg}")

    if not _is_int(cfg["seed"]) or not 0 <= cfg["seed"] < 2 ** 64:
        bad("seed must be an integer in [0, 2^64)")
    if not isinstance(cfg["output_dir"], str) or not cfg["output_dir"]:
        bad("output_dir must be a nonempty path")
    if cfg["threads"] is not None and (not _is_int(cfg["threads"])
                                       or cfg["threads"] < 1):
        bad("threads must be null or an integer >= 1")

    p = cfg["potential"]
    if p["kind"] != "power":
        bad(f"potential.kind must be 'power', got {p['kind']!r}")
    if not _is_num(p["alpha"]) or p["alpha"] <= 0:
        bad("potential.alpha must be positive and finite")
    if not _is_num(p["lambda"]) or p["lambda"] <= 0:
        bad(f"potential.lambda must be positive, got {p['lambda']!r}")

    if cfg["step_law"]["name"] not in BUILTIN_STEP_LAWS:
        bad(f"step_law.name must be one of {sorted(BUILTIN_STEP_LAWS)}")

    w = cfg["walks"]
    if not _is_int(w["n"]) or not 1 <= w["n"] <= 4:
        bad("walks.n must be an integer in 1..4")
    if not _is_int(w["samples"]) or w["samples"] < 1:
        bad("walks.samples must be a positive integer")
    if not _is_num(w["a_N"]) or w["a_N"] <= 0:
        bad("walks.a_N must be positive")
    if w["N"] is not None and (not _is_int(w["N"]) or w["N"] < 1):
        bad("walks.N must be null or a positive integer")
    for key in ("u", "v"):
        if w[key] is not None and not _int_list(w[key]):
            bad(f"walks.{key} must be null or a list of integer sites")
    if not _is_num(w["x_max_multiplier"]) or w["x_max_multiplier"] < 6:
        bad("walks.x_max_multiplier must be >= 6 (box must clear the scale)")

    s = cfg["spectral"]
    if not _is_num(s["r_max"]) or s["r_max"] <= 0:
        bad("spectral.r_max must be positive")
    if not _is_int(s["num_modes"]) or s["num_modes"] < 1:
        bad("spectral.num_modes must be a positive integer")
    if not _is_int(s["grid_points"]) or (_is_int(s["num_modes"])
                                         and s["grid_points"] < 4 * s["num_modes"]):
        bad("spectral.grid_points must be an integer >= 4 * num_modes")
    if not _is_num(s["sigma2"]) or s["sigma2"] <= 0:
        bad("spectral.sigma2 must be positive")

    sp = cfg["sampler"]
    if sp != "exact":
        if not isinstance(sp, dict):
            bad("sampler must be 'exact' or an MCMC settings object")
        else:
            if not _is_int(sp.get("sweeps", 0)) or sp.get("sweeps", 0) < 1:
                bad("sampler.sweeps must be a positive integer")
            if sp.get("burn_in") is not None and not _is_int(sp["burn_in"]):
                bad("sampler.burn_in must be null or an integer")
            if not _is_int(sp.get("thinning", 1)) or sp.get("thinning", 1) < 1:
                bad("sampler.thinning must be a positive integer")

    d = cfg["diffusion"]
    if not _is_num(d["dt"]) or not 0 < d["dt"] <= 1e-3:
        bad("diffusion.dt must lie in (0, 1e-3]")
    if not _is_num(d["t_final"]) or d["t_final"] <= 0:
        bad("diffusion.t_final must be positive")
    if not _is_num(d["boundary_guard"]) or not 0 < d["boundary_guard"] < 1:
        bad("diffusion.boundary_guard must lie in (0, 1)")
    if d["initial"] is not None:
        ok = (isinstance(d["initial"], list) and len(d["initial"]) > 0
              and all(_is_num(x) and x > 0 for x in d["initial"])
              and all(b > a for a, b in zip(d["initial"], d["initial"][1:])))
        if not ok:
            bad("diffusion.initial must be null or a positive increasing list")

    t = cfg["tilt_convergence"]
    lams = t["lambdas"]
    if not isinstance(lams, list) or not lams \
            or not all(_is_num(x) and x > 0 for x in lams) \
            or not all(b < a for a, b in zip(lams, lams[1:])):
        bad("tilt_convergence.lambdas must be a strictly decreasing "
            "positive list")
    if not _is_int(t["samples"]) or t["samples"] < 100:
        bad("tilt_convergence.samples must be an integer >= 100")
    if not _is_num(t["t_probe"]):
        bad("tilt_convergence.t_probe must be a finite number")
    if not _is_int(t["joint_bins"]) or t["joint_bins"] < 2:
        bad("tilt_convergence.joint_bins must be an integer >= 2")
    if not _is_num(t["edge"]) or t["edge"] <= 0:
        bad("tilt_convergence.edge must be positive")

    m = cfg["mixing"]
    if not _is_num(m["T_window"]) or m["T_window"] <= 0:
        bad("mixing.T_window must be positive")
    ks = m["K_values"]
    if not isinstance(ks, list) or not ks \
            or not all(_is_num(x) and x > 0 for x in ks) \
            or not all(b > a for a, b in zip(ks, ks[1:])):
        bad("mixing.K_values must be a strictly increasing positive list")
    ep = m["endpoints"]
    if not (isinstance(ep, list) and len(ep) == 2
            and all(isinstance(q, list) and len(q) == 2
                    and all(_int_list(x) for x in q) for q in ep)):
        bad("mixing.endpoints must be two (u, v) pairs of integer site lists")
    if not _is_int(m["samples"]) or (m["samples"] != 0 and m["samples"] < 100):
        bad("mixing.samples must be 0 (exact) or an integer >= 100")
    if not _is_int(m["bins"]) or m["bins"] < 2:
        bad("mixing.bins must be an integer >= 2")
    if not _is_num(m["edge"]) or m["edge"] <= 0:
        bad("mixing.edge must be positive")
    if not _is_num(m["horizon_boost"]) or m["horizon_boost"] < 0:
        bad("mixing.horizon_boost must be >= 0")

    z = cfg["weyl"]
    if z["chamber"] not in ("A", "C", "D"):
        bad("weyl.chamber must be A, C, or D")
    if not _is_int(z["n"]) or not 1 <= z["n"] <= 3:
        bad("weyl.n must be an integer in 1..3")
    if z["start"] is not None and not (isinstance(z["start"], list)
                                       and all(_is_num(x) for x in z["start"])):
        bad("weyl.start must be null or a list of coordinates")
    if not _is_int(z["walkers"]) or z["walkers"] < 100:
        bad("weyl.walkers must be an integer >= 100")
    if not _is_int(z["steps"]) or z["steps"] < 1:
        bad("weyl.steps must be a positive integer")
    if z["bins"] is not None and (not _is_int(z["bins"]) or z["bins"] < 2):
        bad("weyl.bins must be null or an integer >= 2")
    if not _is_num(z["edge"]) or z["edge"] <= 0:
        bad("weyl.edge must be positive")

    k = cfg["km"]
    if not _is_int(k["n"]) or not 1 <= k["n"] <= 4:
        bad("km.n must be an integer in 1..4")
    if k["steps"] not in BUILTIN_STEP_LAWS:
        bad(f"km.steps must be one of {sorted(BUILTIN_STEP_LAWS)}")
    if not _is_int(k["N"]) or k["N"] < 1:
        bad("km.N must be a positive integer")
    for key in ("u", "v"):
        if not _int_list(k[key]) or (_is_int(k["n"])
                                     and len(k[key]) != k["n"]):
            bad(f"km.{key} must be a list of km.n integer sites")
    if k["tilt"] is not None and (not _is_num(k["tilt"]) or k["tilt"] <= 0):
        bad("km.tilt must be null or a positive tilt strength")

    kn = cfg["kernel"]
    if not _is_num(kn["t"]) or kn["t"] <= 0:
        bad("kernel.t must be positive")
    for key in ("probes", "density_points", "heatmap_points"):
        if not _is_int(kn[key]) or kn[key] < 1:
            bad(f"kernel.{key} must be a positive integer")
    return e


# ------------------------------------------------------------- plumbing
def _f(v) -> str:
    return repr(float(v))


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def science_config(cfg: dict) -> dict:
    """The resolved config minus presentation keys (where to write, how
    many workers): exactly what identifies a run's results."""
    return {k: v for k, v in cfg.items()
            if k not in ("output_dir", "threads")}


def digest(subcommand: str, cfg: dict) -> str:
    return hashlib.sha256(
        _canonical([subcommand, science_config(cfg)]).encode()).hexdigest()[:12]


class _RunDir:
    def __init__(self, cfg: dict, subcommand: str):
        self.digest = digest(subcommand, cfg)
        self.dir = Path(cfg["output_dir"]) / f"{subcommand}-{self.digest}"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.subcommand = subcommand
        self.config = cfg
        self.artifacts = {}
        self.derived = {}

    def write(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(text)
        self.artifacts[name] = hashlib.sha256(text.encode()).hexdigest()
        return path

    def manifest(self) -> dict:
        return {
            "manifest_version": 1,
            "subcommand": self.subcommand,
            "config_digest": self.digest,
            "package_version": __version__,
            "config": science_config(self.config),
            "derived": self.derived,
            "artifacts": self.artifacts,
        }

    def finish(self) -> str:
        text = json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n"
        (self.dir / "manifest.json").write_text(text)
        return str(self.dir)


def _csv(header: str, rows) -> str:
    return header + "\n" + "\n".join(rows) + "\n"


# ------------------------------------------------------- shared builders
def _family(cfg):
    return PowerLaw(cfg["potential"]["alpha"])


def _step(cfg):
    return BUILTIN_STEP_LAWS[cfg["step_law"]["name"]]()


def _basis(cfg):
    s = cfg["spectral"]
    alpha = cfg["potential"]["alpha"]
    spec = SpectralConfig(r_max=s["r_max"], grid_points=s["grid_points"],
                          num_modes=s["num_modes"], sigma2=s["sigma2"])
    return solve_eigen(
        lambda r: np.power(np.asarray(r, dtype=float), alpha), spec)


def _model(cfg, scale):
    w = cfg["walks"]
    x_max = int(math.ceil(w["x_max_multiplier"] * scale.H))
    return WalkModel(_step(cfg), w["n"], x_max,
                     potential_family=_family(cfg),
                     lam=cfg["potential"]["lambda"])


def _resolve_N(cfg, scale) -> int:
    w = cfg["walks"]
    return w["N"] if w["N"] is not None \
        else int(math.ceil(w["a_N"] * scale.H * scale.H))


def _base_derived(cfg, scale, N=None, x_max=None) -> dict:
    return {
        "H_lambda": scale.H,
        "sigma2": _step(cfg).sigma2,
        "N": N,
        "a_N": None if N is None else N / (scale.H * scale.H),
        "x_max": x_max,
    }


# ----------------------------------------------------------- subcommands
def _cmd_spectrum(cfg, run: _RunDir, threads: int) -> str:
    basis = _basis(cfg)
    scale = solve_scale(_family(cfg), cfg["potential"]["lambda"])
    run.derived = _base_derived(cfg, scale)
    run.write("eigenvalues.csv", _csv(
        "k,e_k",
        (f"{k + 1},{_f(ev)}" for k, ev in enumerate(basis.eigenvalues))))
    modes = basis.phi_at(basis.grid)
    header = "r," + ",".join(f"phi{k + 1}" for k in range(modes.shape[0]))
    rows = (",".join([_f(r)] + [_f(v) for v in modes[:, i]])
            for i, r in enumerate(basis.grid))
    run.write("modes.csv", _csv(header, rows))
    tail = ", ".join(f"e_{k + 1}={ev:.6f}"
                     for k, ev in enumerate(basis.eigenvalues[:3]))
    return f"solved {basis.eigenvalues.size} modes: {tail}"


def _cmd_kernel(cfg, run: _RunDir, threads: int) -> str:
    n = cfg["walks"]["n"]
    ens = SlaterEnsemble(_basis(cfg), n)
    scale = solve_scale(_family(cfg), cfg["potential"]["lambda"])
    run.derived = _base_derived(cfg, scale)
    kc = cfg["kernel"]
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence([cfg["seed"], 1])))
    header = "t," + ",".join(f"r{i + 1}" for i in range(n)) + "," \
        + ",".join(f"s{i + 1}" for i in range(n)) + ",kappa,q_t"
    rows = []
    attempts = 0
    while len(rows) < kc["probes"]:
        attempts += 1
        if attempts > 200 * kc["probes"]:
            raise ResourceError("could not place kernel probes clear of "
                                "the chamber walls")
        r = np.sort(rng.uniform(0.15 * ens.r_cut, 0.85 * ens.r_cut, n))
        s = np.sort(rng.uniform(0.15 * ens.r_cut, 0.85 * ens.r_cut, n))
        if np.any(np.diff(r) < 0.1 * ens.r_cut) \
                or np.any(np.diff(s) < 0.1 * ens.r_cut):
            continue
        try:
            kap = km_kernel(ens, kc["t"], r, s)
            qt = doob_kernel(ens, kc["t"], r, s)
        except ValidationError:
            continue  # degenerate probe, walls too close
        rows.append(",".join([_f(kc["t"])] + [_f(x) for x in r]
                             + [_f(x) for x in s] + [_f(kap), _f(qt)]))
    run.write("kernel_table.csv", _csv(header, rows))
    grid = np.linspace(0.0, ens.r_cut, kc["density_points"])
    rho = level_density(ens, grid)
    run.write("density.csv", _csv(
        "r,rho_n", (f"{_f(r)},{_f(v)}" for r, v in zip(grid, rho))))
    hp = kc["heatmap_points"]
    hg = (np.arange(hp) + 0.5) * (ens.r_cut / hp)
    if n == 1:
        d2 = ens.slater_on_grid(hg) ** 2
        srows = (f"{_f(r)},{_f(v)}" for r, v in zip(hg, d2))
        run.write("slater_grid.csv", _csv("r1,delta2", srows))
    elif n == 2:
        d2 = ens.slater_on_grid(hg) ** 2
        srows = (f"{_f(hg[i])},{_f(hg[j])},{_f(d2[i, j])}"
                 for i in range(hp) for j in range(hp))
        run.write("slater_grid.csv", _csv("r1,r2,delta2", srows))
    return f"kernel table over {len(rows)} probe pairs at t={kc['t']}"


def _cmd_verify_km(cfg, run: _RunDir, threads: int) -> str:
    k = cfg["km"]
    step = BUILTIN_STEP_LAWS[k["steps"]]()
    fam = _family(cfg) if k["tilt"] is not None else None
    span = max(max(k["u"]), max(k["v"])) \
        + k["N"] * max(abs(o) for o in step.offsets) + 1
    model = WalkModel(step, k["n"], span, potential_family=fam,
                      lam=k["tilt"], check_box=False)
    rep = verify_km(model, tuple(k["u"]), tuple(k["v"]), k["N"])
    payload = {"det": rep.det, "signed_sum": rep.signed_sum,
               "abs_diff": rep.abs_diff}
    scale = solve_scale(_family(cfg), k["tilt"]) if k["tilt"] is not None \
        else None
    run.derived = {"H_lambda": None if scale is None else scale.H,
                   "sigma2": step.sigma2, "N": k["N"], "a_N": None,
                   "x_max": span}
    text = json.dumps(payload, sort_keys=True)
    run.write("report.json", text + "\n")
    return text


def _paths_csv(paths: np.ndarray) -> str:
    count, T, n = paths.shape
    rows = []
    for sid in range(count):
        block = paths[sid]
        for t in range(T):
            for wix in range(n):
                rows.append(f"{sid},{t},{wix},{int(block[t, wix])}")
    return _csv("sample_id,time_index,walk_index,height", rows)


def _cmd_sample_walks(cfg, run: _RunDir, threads: int, out: str | None) -> str:
    scale = solve_scale(_family(cfg), cfg["potential"]["lambda"])
    model = _model(cfg, scale)
    N = _resolve_N(cfg, scale)
    w = cfg["walks"]
    u = tuple(w["u"]) if w["u"] is not None else default_endpoints(model)
    v = tuple(w["v"]) if w["v"] is not None else default_endpoints(model)
    if cfg["sampler"] == "exact":
        ens = sample_exact(model, u, v, N, w["samples"], cfg["seed"])
    else:
        sp = cfg["sampler"]
        mc = McmcConfig(sweeps=sp["sweeps"], burn_in=sp.get("burn_in"),
                        thinning=sp.get("thinning", 1),
                        proposal=sp.get("proposal", "single_site"))
        ens = sample_mcmc(model, u, v, N, mc, cfg["seed"])
    run.derived = _base_derived(cfg, scale, N=N, x_max=model.x_max)
    run.derived["endpoints"] = {"u": list(u), "v": list(v)}
    text = _paths_csv(ens.paths)
    run.write("paths.csv", text)

    # rescaled mid-time top marginal next to the stationary density, for
    # overlay figures: plots draw columns, they never recompute science
    sig_h = math.sqrt(model.step.sigma2) * scale.H
    mid = ens.paths[:, N // 2, -1]
    x = (mid + model.step.period / 2.0) / sig_h
    cdf = stationary_top_cdf(SlaterEnsemble(_basis(cfg), model.n))
    edges = np.linspace(0.0, 4.0, 31)
    width = edges[1] - edges[0]
    emp, _ = np.histogram(x, edges)
    emp = emp / (x.size * width)
    ref = np.diff(cdf(edges)) / width
    centers = (edges[:-1] + edges[1:]) / 2.0
    run.write("marginal.csv", _csv(
        "x,empirical,reference",
        (f"{_f(a)},{_f(b)},{_f(c)}" for a, b, c in zip(centers, emp, ref))))
    if out:
        Path(out).write_text(text)
        Path(f"{out}.manifest.json").write_text(
            json.dumps(run.manifest(), indent=2, sort_keys=True) + "\n")
    return f"{ens.paths.shape[0]} paths, N={N}, endpoints u={list(u)} " \
           f"v={list(v)}"


def _cmd_sample_diffusion(cfg, run: _RunDir, threads: int,
                          out: str | None) -> str:
    ens = SlaterEnsemble(_basis(cfg), cfg["walks"]["n"])
    d = cfg["diffusion"]
    if d["initial"] is not None:
        initial = tuple(float(x) for x in d["initial"])
    else:
        child = int(np.random.SeedSequence(
            [cfg["seed"], 11]).generate_state(1)[0])
        initial = sample_stationary(ens, child)
    traj = simulate(DiffusionConfig(
        ensemble=ens, t_final=d["t_final"], initial=initial,
        seed=cfg["seed"], dt=d["dt"], boundary_guard=d["boundary_guard"]))
    scale = solve_scale(_family(cfg), cfg["potential"]["lambda"])
    run.derived = _base_derived(cfg, scale)
    run.derived["initial"] = list(initial)
    run.derived["rejected_steps"] = traj.rejected
    header = "step,t," + ",".join(f"x{i + 1}" for i in range(ens.n))
    rows = (",".join([str(k), _f(k * traj.dt)]
                     + [_f(v) for v in traj.states[k]])
            for k in range(traj.states.shape[0]))
    text = _csv(header, rows)
    run.write("trajectory.csv", text)
    if out:
        Path(out).write_text(text)
        Path(f"{out}.manifest.json").write_text(
            json.dumps(run.manifest(), indent=2, sort_keys=True) + "\n")
    return f"{traj.states.shape[0] - 1} steps at dt={traj.dt}, " \
           f"{traj.rejected} rejections"


def _cmd_tilt_convergence(cfg, run: _RunDir, threads: int) -> str:
    t = cfg["tilt_convergence"]
    w = cfg["walks"]
    fam = _family(cfg)
    step = _step(cfg)
    models = []
    for lam in t["lambdas"]:
        sc = solve_scale(fam, lam)
        x_max = int(math.ceil(w["x_max_multiplier"] * sc.H))
        models.append(WalkModel(step, w["n"], x_max,
                                potential_family=fam, lam=lam))
    reference = SlaterEnsemble(_basis(cfg), w["n"])
    rows = tilt_convergence_experiment(
        models, t["t_probe"], reference, samples=t["samples"],
        seed=cfg["seed"], a_target=w["a_N"], joint_bins=t["joint_bins"],
        edge=t["edge"], threads=threads)
    run.derived = {
        "H_lambda": [r.H for r in rows],
        "sigma2": step.sigma2,
        "N": [r.N for r in rows],
        "a_N": w["a_N"],
        "x_max": [m.x_max for m in models],
    }
    lines = []
    for lam, row in zip(t["lambdas"], rows):
        for rep in row.reports:
            lines.append(",".join([
                _f(lam), _f(row.H), str(row.N), str(rep.sample_count),
                rep.metric, _f(rep.value), _f(rep.noise_floor)]))
    run.write("convergence.csv", _csv(
        "lambda,H,N,samples,metric,value,noise_floor", lines))
    last = rows[-1].reports[0]
    return f"{len(rows)} tilts; {last.metric} at smallest lambda: " \
           f"{last.value:.4f} (floor {last.noise_floor:.4f})"


def _cmd_mixing(cfg, run: _RunDir, threads: int) -> str:
    mx = cfg["mixing"]
    scale = solve_scale(_family(cfg), cfg["potential"]["lambda"])
    model = _model(cfg, scale)
    pairs = tuple((tuple(int(x) for x in pair[0]),
                   tuple(int(x) for x in pair[1]))
                  for pair in mx["endpoints"])
    rep = mixing_experiment(
        model, mx["T_window"], list(mx["K_values"]), pairs,
        samples=mx["samples"], seed=cfg["seed"], bins=mx["bins"],
        edge=mx["edge"], horizon_boost=mx["horizon_boost"], threads=threads)
    run.derived = _base_derived(cfg, scale, x_max=model.x_max)
    run.write("mixing.csv", _csv(
        "K,tv,noise_floor",
        (f"{_f(r.K)},{_f(r.tv)},{_f(r.noise_floor)}" for r in rep.rows)))
    summary = {
        "slope": rep.slope,
        "intercept": rep.intercept,
        "inconclusive": rep.inconclusive,
        "method": rep.method,
        "fit": "least squares of ln(tv) on K over rows with tv > 0",
        "rows": [dataclasses.asdict(r) for r in rep.rows],
    }
    run.write("summary.json",
              json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return f"slope {rep.slope:.4f} over {len(rep.rows)} horizons " \
           f"({rep.method}); inconclusive={rep.inconclusive}"


_RESIDUAL_POINTS = {
    ("A", 1): (0.5,), ("A", 2): (0.25, 1.5), ("A", 3): (0.25, 1.5, 3.0),
    ("D", 1): (0.5,), ("D", 2): (0.5, 1.5), ("D", 3): (0.25, 1.0, 2.5),
}


def _cmd_weyl_check(cfg, run: _RunDir, threads: int) -> str:
    z = cfg["weyl"]
    chamber = ChamberKind(z["chamber"], z["n"])
    if z["chamber"] == "C":
        start = tuple(z["start"]) if z["start"] is not None \
            else _WEYL_STARTS[z["n"]]
        rep = meander_exit_check(chamber, start, z["walkers"], z["steps"],
                                 cfg["seed"], bins=z["bins"], edge=z["edge"])
        payload = dataclasses.asdict(rep)
    else:
        # A and D have no conditioned exit reference here; report how
        # well the chamber polynomial annihilates the grid Laplacian
        start = tuple(z["start"]) if z["start"] is not None \
            else _RESIDUAL_POINTS[(z["chamber"], z["n"])]
        h = 1e-3
        value = harmonic(chamber, start)
        residual = harmonicity_residual(chamber, start, h)
        payload = {"metric": "HarmonicityResidual", "chamber": z["chamber"],
                   "n": z["n"], "point": list(start), "h": h,
                   "residual": residual,
                   "relative_residual": residual / max(abs(value), 1e-300),
                   "value_at_point": value}
    run.derived = {"chamber": z["chamber"], "n": z["n"],
                   "start": list(start), "H_lambda": None, "sigma2": 1.0,
                   "N": z["steps"], "a_N": None, "x_max": None}
    text = json.dumps(payload, sort_keys=True)
    run.write("report.json", text + "\n")
    return text


# ------------------------------------------------------------------ main
def _build_parser() -> _Parser:
    parser = _Parser(prog="dysonfs", description=__doc__.split("\n\n")[0])
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--set", action="append", default=[],
                        metavar="PATH=VALUE",
                        help="override a config leaf (repeatable)")
    common.add_argument("--out-dir", help="override output_dir")
    common.add_argument("--threads", type=int,
                        help="worker pool cap (also DYSONFS_THREADS)")
    subs = parser.add_subparsers(dest="subcommand", parser_class=_Parser)
    for name in ("spectrum", "kernel", "tilt-convergence", "mixing"):
        subs.add_parser(name, parents=[common])
    km = subs.add_parser("verify-km", parents=[common])
    km.add_argument("--n", type=int, dest="km_n")
    km.add_argument("--steps", dest="km_steps")
    km.add_argument("--N", type=int, dest="km_N")
    km.add_argument("--u", dest="km_u")
    km.add_argument("--v", dest="km_v")
    km.add_argument("--tilt", type=float, dest="km_tilt")
    for name in ("sample-walks", "sample-diffusion"):
        sw = subs.add_parser(name, parents=[common])
        sw.add_argument("--out", help="also write the CSV here, with a "
                                      "sidecar manifest")
    wc = subs.add_parser("weyl-check", parents=[common])
    wc.add_argument("--chamber", dest="weyl_chamber")
    wc.add_argument("--n", type=int, dest="weyl_n")
    return parser


def _flag_overrides(args) -> list:
    over = []
    if getattr(args, "km_n", None) is not None:
        over.append(("km.n", args.km_n))
    if getattr(args, "km_steps", None) is not None:
        over.append(("km.steps", args.km_steps))
    if getattr(args, "km_N", None) is not None:
        over.append(("km.N", args.km_N))
    for flag in ("km_u", "km_v"):
        raw = getattr(args, flag, None)
        if raw is not None:
            try:
                sites = [int(x) for x in raw.split(",")]
            except ValueError:
                raise _UsageError(
                    f"--{flag[-1]} wants comma-separated integers, got {raw!r}")
            over.append((flag.replace("_", "."), sites))
    if getattr(args, "km_tilt", None) is not None:
        over.append(("km.tilt", args.km_tilt))
    if getattr(args, "weyl_chamber", None) is not None:
        over.append(("weyl.chamber", args.weyl_chamber))
    if getattr(args, "weyl_n", None) is not None:
        over.append(("weyl.n", args.weyl_n))
    return over


def _resolve_config(args):
    errors = []
    cfg = DEFAULTS
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = _merge(cfg, json.load(fh))
        except OSError as exc:
            return None, [f"config: cannot read {args.config}: {exc}"]
        except json.JSONDecodeError as exc:
            return None, [f"config: {args.config} is not valid JSON: {exc}"]
    cfg = json.loads(json.dumps(cfg))  # deep copy, JSON-clean
    for text in args.set:
        path, value = _parse_set(text)
        _apply_set(cfg, path, value, errors)
    for path, value in _flag_overrides(args):
        _apply_set(cfg, path, value, errors)
    if args.out_dir:
        cfg["output_dir"] = args.out_dir
    if errors:
        return None, errors
    return cfg, validate_config(cfg)


def _resolve_threads(cfg, args) -> int:
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get("DYSONFS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(
                f"DYSONFS_THREADS must be an integer, got {env!r}")
    if cfg["threads"]:
        return cfg["threads"]
    return os.cpu_count() or 1


_JSON_OUTPUT = ("verify-km", "weyl-check")


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        if args.subcommand is None:
            raise _UsageError(
                f"choose a subcommand from {', '.join(SUBCOMMANDS)}")
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 64
    try:
        cfg, errors = _resolve_config(args)
        if errors:
            for line in errors:
                print(line, file=sys.stderr)
            return 2
        threads = _resolve_threads(cfg, args)
        run = _RunDir(cfg, args.subcommand)
        if args.subcommand == "spectrum":
            text = _cmd_spectrum(cfg, run, threads)
        elif args.subcommand == "kernel":
            text = _cmd_kernel(cfg, run, threads)
        elif args.subcommand == "verify-km":
            text = _cmd_verify_km(cfg, run, threads)
        elif args.subcommand == "sample-walks":
            text = _cmd_sample_walks(cfg, run, threads, args.out)
        elif args.subcommand == "sample-diffusion":
            text = _cmd_sample_diffusion(cfg, run, threads, args.out)
        elif args.subcommand == "tilt-convergence":
            text = _cmd_tilt_convergence(cfg, run, threads)
        elif args.subcommand == "mixing":
            text = _cmd_mixing(cfg, run, threads)
        else:
            text = _cmd_weyl_check(cfg, run, threads)
        where = run.finish()
        print(text)
        print(f"artifacts: {where}",
              file=sys.stderr if args.subcommand in _JSON_OUTPUT else sys.stdout)
        return 0
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 64
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
