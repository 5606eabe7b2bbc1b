"""Delimited result tables and the figures rendered alongside them.

Every CSV starts with a comment line referencing the run manifest, then
a header row naming every column.  Numbers are written with repr-exact
formatting so a rerun under the same seed reproduces the file byte for
byte.  Each table helper also renders a matplotlib figure next to the
CSV (same stem, .png).
"""

from __future__ import annotations

import csv

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def fmt(x) -> str:
    """Deterministic scalar formatting: shortest round-trip for floats."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def write_csv(path, header, rows, run_id: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# manifest: %s\n" % run_id)
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(x) for x in row])


def _save(fig, path):
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def spectral_table(path, curve, run_id: str, figure: bool = True) -> list:
    """SpectralCurve -> CSV (r, norm, err_bar, gap, bound_rhs) + figure."""
    rows = []
    for r, norm, err, lmax, deg in zip(curve.rs, curve.norms, curve.err_bars,
                                       curve.lmaxes, curve.degraded):
        rhs = 1.0 - curve.fitted_c_conservative * min(r * r, 1.0 / curve.M**2)
        rows.append([r, norm, err, 1.0 - norm, rhs, lmax, int(deg)])
    write_csv(path, ["r", "norm", "err_bar", "gap", "bound_rhs",
                     "lmax", "degraded"], rows, run_id)
    out = [str(path)]
    if figure:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.errorbar(curve.rs, curve.norms, yerr=curve.err_bars, fmt="o-",
                    ms=3, lw=1, label="norm estimate")
        rr = np.asarray(curve.rs)
        with np.errstate(all="ignore"):
            bound = (1.0 - curve.fitted_c_conservative
                     * np.minimum(rr**2, 1.0 / curve.M**2))
        if np.all(np.isfinite(bound)):
            ax.plot(rr, bound, "--", label="fitted bound")
        ax.set_xscale("log")
        ax.set_xlabel("r")
        ax.set_ylabel("averaging-operator norm")
        ax.legend()
        fig_path = str(path).rsplit(".", 1)[0] + ".png"
        _save(fig, fig_path)
        out.append(fig_path)
    return out


def llt_table(path, report, run_id: str, figure: bool = True) -> list:
    rows = []
    for row in report["rows"]:
        z = row["z"]
        rows.append([" ".join(repr(float(c)) for c in z), row["r"],
                     row["phat"], row["pred"], row["mc_sigma"], row["zscore"]])
    write_csv(path, ["center", "radius", "empirical", "gaussian",
                     "mc_sigma", "zscore"], rows, run_id)
    out = [str(path)]
    if figure:
        fig, ax = plt.subplots(figsize=(6, 4))
        zs = [row["zscore"] for row in report["rows"]]
        ax.plot(zs, "o")
        ax.axhline(4, color="r", ls="--")
        ax.axhline(-4, color="r", ls="--")
        ax.set_xlabel("probe ball index")
        ax.set_ylabel("z-score vs Gaussian model")
        ax.set_title("chi2 p = %.3g" % report["chi2_p"])
        fig_path = str(path).rsplit(".", 1)[0] + ".png"
        _save(fig, fig_path)
        out.append(fig_path)
    return out


def decay_table(path, profile, run_id: str, figure: bool = True) -> list:
    rows = [[r, n, e, profile["slope"]]
            for r, n, e in zip(profile["rs"], profile["norms"],
                               profile["errs"])]
    write_csv(path, ["r", "norm", "err", "slope_window"], rows, run_id)
    out = [str(path)]
    if figure:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.loglog(profile["rs"], np.maximum(profile["norms"], 1e-300), "o-")
        ax.set_xlabel("r")
        ax.set_ylabel("sphere-restricted transform norm")
        ax.set_title("slope %.3f (%s)" % (profile["slope"], profile["method"]))
        fig_path = str(path).rsplit(".", 1)[0] + ".png"
        _save(fig, fig_path)
        out.append(fig_path)
    return out


def generic_table(path, header, rows, run_id: str) -> list:
    write_csv(path, header, rows, run_id)
    return [str(path)]
