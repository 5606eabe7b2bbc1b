"""Command-line front end.

Subcommands: spectrum, walk, llt, selfsim, diagnostics.  Every run
writes delimited tables plus rendered figures into --out-dir, appends a
record to manifest.jsonl there, and exits 0 on success, 1 when a
numerical check fails, 2 on usage or configuration errors.  Set
ISOMLAB_CACHE to persist the coupling-coefficient table across runs.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import harmonics as hrm
from . import measures as ms
from . import reports
from . import selfsim as ss
from . import spectral as sp
from . import walklab as wl
from .manifest import RunManifest, append_manifest

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2


def _load(args) -> dict:
    if args.config:
        cfg = cfgmod.load_config(args.config)
    else:
        cfg = cfgmod.validate_config({})
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.workers is not None:
        cfg["workers"] = args.workers
    if args.lmax is not None:
        cfg["lmax_cap"] = args.lmax
    return cfg


def _measure(cfg: dict):
    if "measure" in cfg:
        return cfgmod.parse_measure(cfg["measure"])
    return cfgmod.default_gap_measure()


def _prepared(cfg: dict):
    """Acceptance pipeline: symmetrize, center, normalize the configured
    measure; power 0 means use it untouched (no factorization speedup)."""
    mu = _measure(cfg)
    power = cfg.get("symmetrize_power", 3)
    if power == 0:
        return {"mu": mu, "half": None}
    prep = ms.prepare_symmetric(mu, power=power)
    return prep


def _start(cfg: dict, command: str, out_dir: str) -> tuple[RunManifest, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest(command=command, config_digest=cfgmod.config_digest(cfg),
                      seed=cfg["seed"], workers=cfg["workers"])
    return man, out


def _finish(man: RunManifest, out: Path) -> None:
    man.finish()
    append_manifest(out / "manifest.jsonl", man)


def cmd_spectrum(args) -> int:
    cfg = _load(args)
    prep = _prepared(cfg)
    r_grid = cfg.get("r_grid")
    if r_grid is None:
        r_grid = list(np.geomspace(0.05, 8.0, 30))
    man, out = _start(cfg, "spectrum", args.out_dir)
    curve = sp.spectral_curve(prep["mu"], r_grid, tol=cfg["tolerance"],
                              cap=cfg["lmax_cap"], half=prep.get("half"))
    prefix = cfg.get("out_prefix", "spectrum")
    for path in reports.spectral_table(out / (prefix + ".csv"), curve,
                                       man.run_id):
        man.add_output(path)
    _finish(man, out)
    ok = (np.all(curve.norms <= 1.0 - 1e-3 + curve.err_bars)
          and curve.fitted_c_conservative > 0.0)
    print("spectrum: fitted c = %.6g (conservative %.6g), M = %.4g, %s"
          % (curve.fitted_c, curve.fitted_c_conservative, curve.M,
             "PASS" if ok else "FAIL"))
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_walk(args) -> int:
    cfg = _load(args)
    mu = _measure(cfg)
    l = cfg.get("l", 100)
    n = cfg.get("n", 100_000)
    man, out = _start(cfg, "walk", args.out_dir)
    ens = wl.simulate_walk(mu, None, l, n, cfg["seed"])
    prefix = cfg.get("out_prefix", "walk")
    bin_path = out / (prefix + "_endpoints.bin")
    ens.endpoints.astype("<f8").tofile(bin_path)
    man.add_output(str(bin_path))
    model = wl.gaussian_fit(ens)
    rows = [[ens.d, ens.l, ens.n, ens.seed, ens.mu_digest,
             " ".join(repr(float(c)) for c in model.y0), model.sigma]]
    for path in reports.generic_table(
            out / (prefix + ".csv"),
            ["d", "l", "n", "seed", "mu_digest", "mean", "sigma"],
            rows, man.run_id):
        man.add_output(path)
    _finish(man, out)
    print("walk: %d endpoints at l=%d, sigma=%.6g" % (n, l, model.sigma))
    return EXIT_OK


def _probe_balls(model, l, d, count=20):
    s = model.sigma * math.sqrt(l)
    direction = np.zeros(d)
    direction[0] = 1.0
    balls = []
    radii = (s / 4.0, s / 2.0)
    for i in range(count):
        t = 3.0 * s * (i // len(radii)) / max(count // len(radii) - 1, 1)
        balls.append((model.y0 + t * direction, radii[i % len(radii)]))
    return balls


def cmd_llt(args) -> int:
    cfg = _load(args)
    mu = _measure(cfg)
    l = cfg.get("l", 100)
    n = cfg.get("n", 100_000)
    man, out = _start(cfg, "llt", args.out_dir)
    fit_ens = wl.simulate_walk(mu, None, l, n, cfg["seed"] + 1)
    model = wl.gaussian_fit(fit_ens)
    ens = wl.simulate_walk(mu, None, l, n, cfg["seed"])
    report = wl.llt_report(ens, model, _probe_balls(model, l, mu.dim))
    prefix = cfg.get("out_prefix", "llt")
    for path in reports.llt_table(out / (prefix + ".csv"), report, man.run_id):
        man.add_output(path)
    _finish(man, out)
    ok = report["max_abs_zscore"] <= 4.0 and report["chi2_p"] > 1e-3
    print("llt: max |z| = %.3f, chi2 p = %.4g, %s"
          % (report["max_abs_zscore"], report["chi2_p"],
             "PASS" if ok else "FAIL"))
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_selfsim(args) -> int:
    cfg = _load(args)
    if "ifs" not in cfg:
        raise cfgmod.ConfigError("ifs", "selfsim requires an 'ifs' section")
    ifs = cfgmod.parse_ifs(cfg["ifs"])
    if ifs.degenerate:
        raise cfgmod.ConfigError("ifs", "maps share a common fixed point")
    r_grid = cfg.get("r_grid")
    if r_grid is None:
        r_grid = list(np.geomspace(0.25, 8.0, 10))
    man, out = _start(cfg, "selfsim", args.out_dir)
    profile = ss.decay_profile(ifs, r_grid, tol=cfg["tolerance"],
                               lmax_cap=cfg["lmax_cap"])
    prefix = cfg.get("out_prefix", "selfsim")
    for path in reports.decay_table(out / (prefix + "_decay.csv"), profile,
                                    man.run_id):
        man.add_output(path)
    c = cfg["c"]
    gap = cfg.get("gap", None)
    if gap is None and ifs.d == 3:
        gap = 1.0 - sp.t_gap(ms.project_theta(
            ms.project_g(ifs.similarity_measure())), 8)["norm"]
    if gap is not None:
        rows = []
        for n_diff in (1, 2, 3):
            thr = ss.smoothness_threshold(n_diff, 1.0, max(gap, 1e-12), c)
            rows.append([n_diff, thr, c, ifs.k, ifs.p_min,
                         "up to an unspecified absolute constant"])
        for path in reports.generic_table(
                out / (prefix + "_thresholds.csv"),
                ["n", "lambda_bar", "c", "k", "p_min", "caveat"],
                rows, man.run_id):
            man.add_output(path)
    if "l0" in cfg:
        comp = ss.extract_gap_component(ifs, cfg["l0"])
        rows = [[str(comp.q0), comp.l1, comp.separation,
                 len(comp.eta0.atoms), str(comp.a)]]
        for path in reports.generic_table(
                out / (prefix + "_gap_component.csv"),
                ["q0", "l1", "separation", "atoms", "type_vector"],
                rows, man.run_id):
            man.add_output(path)
    _finish(man, out)
    print("selfsim: slope %.4f (method %s), n_est %s"
          % (profile["slope"], profile["method"], profile["n_est"]))
    return EXIT_OK


def cmd_diagnostics(args) -> int:
    cfg = _load(args)
    man, out = _start(cfg, "diagnostics", args.out_dir)
    seed = cfg["seed"]
    rng = np.random.default_rng(seed)
    all_ok = True

    rows = []
    for l in range(1, 7):
        u = rng.standard_normal(2 * l + 1) + 1j * rng.standard_normal(2 * l + 1)
        v = rng.standard_normal(2 * l + 1) + 1j * rng.standard_normal(2 * l + 1)
        res = sp.schur_average(l, u, v, cfg.get("n", 20000), seed + l)
        ok = abs(res["mean"] - res["exact"]) <= 3.0 * res["mc_sigma"]
        all_ok &= ok
        rows.append([l, res["mean"], res["exact"], res["mc_sigma"], int(ok)])
    for path in reports.generic_table(
            out / "schur.csv", ["l", "mean", "exact", "mc_sigma", "ok"],
            rows, man.run_id):
        man.add_output(path)

    hs = sp.hs_fourier_check(4, 0.5, cfg.get("n", 20000), seed)
    all_ok &= hs["ok"]
    for path in reports.generic_table(
            out / "hs_fourier.csv", ["hs_norm", "bound", "cap_mass", "ok"],
            [[hs["hs_norm"], hs["bound"], hs["cap_mass"], int(hs["ok"])]],
            man.run_id):
        man.add_output(path)

    prep = _prepared(cfg)
    mu = prep["mu"]
    rows = []
    lmax = min(cfg["lmax_cap"], 32)
    op = sp.densify(sp.transfer_operator(mu, 0.5, lmax))
    for i in range(cfg.get("n_phi", 10)):
        phi = hrm.random_band(lmax, lmax // 2, rng)
        res = sp.littlewood_paley_check(op, 0.5, 16, 4, phi)
        all_ok &= res["ok"]
        rows.append([i, res["lhs"], res["rhs"], res["slack"], int(res["ok"])])
    for path in reports.generic_table(
            out / "littlewood_paley.csv",
            ["trial", "lhs", "rhs", "slack", "ok"], rows, man.run_id):
        man.add_output(path)

    rows = []
    for _ in range(5):
        r1 = float(rng.uniform(0.3, 3.0))
        r2 = r1 + float(rng.uniform(0.01, 0.2))
        res = sp.two_radius_check(mu, r1, r2, cap=lmax, half=prep.get("half"))
        all_ok &= res["ok"]
        rows.append([r1, r2, res["gap1"], res["gap2"], res["c_fit"],
                     int(res["ok"])])
    for path in reports.generic_table(
            out / "two_radius.csv",
            ["r1", "r2", "gap1", "gap2", "c_fit", "ok"], rows, man.run_id):
        man.add_output(path)

    _finish(man, out)
    print("diagnostics: %s" % ("PASS" if all_ok else "FAIL"))
    return EXIT_OK if all_ok else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="isomlab",
        description="spectral, Monte Carlo, and self-similar-measure "
                    "experiments for random walks on the motion group")
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--workers", type=int, help="worker count override")
    p.add_argument("--out-dir", default="isomlab-out",
                   help="output directory (default isomlab-out)")
    p.add_argument("--lmax", type=int, help="band-limit cap override")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", help="averaging-operator norm curve")
    sub.add_parser("walk", help="simulate a walk ensemble")
    sub.add_parser("llt", help="Gaussian local-limit comparison")
    sub.add_parser("selfsim", help="self-similar measure decay + thresholds")
    sub.add_parser("diagnostics", help="Schur, block-inequality, two-radius checks")
    return p


_COMMANDS = {
    "spectrum": cmd_spectrum,
    "walk": cmd_walk,
    "llt": cmd_llt,
    "selfsim": cmd_selfsim,
    "diagnostics": cmd_diagnostics,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cache = os.environ.get("ISOMLAB_CACHE")
    if cache and os.path.exists(cache):
        hrm.load_threej_cache(cache)
    try:
        code = _COMMANDS[args.command](args)
    except cfgmod.ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, ms.DegenerateError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    if cache:
        hrm.save_threej_cache(cache)
    return code


if __name__ == "__main__":
    sys.exit(main())
