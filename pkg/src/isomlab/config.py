"""Experiment configuration: a JSON document with a versioned schema.

Atom lists describe measures over isometries (weight, rotation,
translation) or systems of similarities (plus a contraction ratio per
atom).  Rotations are given as {"axis": [x, y, z], "angle": radians}
(d = 3) or as an explicit row-major matrix.  Validation errors name the
offending field.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from .geom import Rotation, Isometry, Similarity, axis_rotation
from .measures import DiscreteMeasure
from .selfsim import IFS

SCHEMA_VERSION = 1
GOLDEN_ANGLE = 2.0 * math.pi * (math.sqrt(5.0) - 1.0) / 2.0


class ConfigError(ValueError):
    """Invalid configuration; the message names the field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__("%s: %s" % (field, message))


def parse_rotation(obj, d: int, field: str = "rotation") -> Rotation:
    if isinstance(obj, dict):
        if d != 3:
            raise ConfigError(field, "axis/angle form requires d = 3")
        missing = {"axis", "angle"} - set(obj)
        if missing:
            raise ConfigError(field, "missing %s" % sorted(missing))
        try:
            return axis_rotation(obj["axis"], float(obj["angle"]))
        except ValueError as exc:
            raise ConfigError(field, str(exc)) from None
    try:
        return Rotation(np.asarray(obj, dtype=float).reshape(d, d))
    except ValueError as exc:
        raise ConfigError(field, str(exc)) from None


def _parse_atom(atom, d: int, field: str, with_lambda: bool):
    if not isinstance(atom, dict):
        raise ConfigError(field, "atom must be an object")
    for key in ("weight", "rotation", "translation"):
        if key not in atom:
            raise ConfigError(field + "." + key, "missing")
    w = float(atom["weight"])
    if w <= 0.0:
        raise ConfigError(field + ".weight", "must be positive")
    rot = parse_rotation(atom["rotation"], d, field + ".rotation")
    v = np.asarray(atom["translation"], dtype=float)
    if v.shape != (d,):
        raise ConfigError(field + ".translation", "expected a %d-vector" % d)
    if with_lambda:
        if "lambda" not in atom:
            raise ConfigError(field + ".lambda", "missing")
        lam = float(atom["lambda"])
        if not 0.0 < lam < 1.0:
            raise ConfigError(field + ".lambda", "must lie in (0, 1)")
        return Similarity(lam, rot, v), w
    return Isometry(v, rot), w


def parse_measure(obj, field: str = "measure") -> DiscreteMeasure:
    if not isinstance(obj, dict) or "atoms" not in obj:
        raise ConfigError(field, "expected an object with an 'atoms' list")
    d = int(obj.get("d", 3))
    atoms = obj["atoms"]
    if not atoms:
        raise ConfigError(field + ".atoms", "empty")
    pairs = [_parse_atom(a, d, "%s.atoms[%d]" % (field, i), False)
             for i, a in enumerate(atoms)]
    tot = sum(w for _, w in pairs)
    if abs(tot - 1.0) > 1e-9:
        raise ConfigError(field + ".atoms", "weights sum to %.10g, not 1" % tot)
    return DiscreteMeasure.from_pairs(pairs)


def parse_ifs(obj, field: str = "ifs") -> IFS:
    if not isinstance(obj, dict) or "atoms" not in obj:
        raise ConfigError(field, "expected an object with an 'atoms' list")
    d = int(obj.get("d", 3))
    atoms = obj["atoms"]
    if not atoms:
        raise ConfigError(field + ".atoms", "empty")
    pairs = [_parse_atom(a, d, "%s.atoms[%d]" % (field, i), True)
             for i, a in enumerate(atoms)]
    tot = sum(w for _, w in pairs)
    if abs(tot - 1.0) > 1e-9:
        raise ConfigError(field + ".atoms", "weights sum to %.10g, not 1" % tot)
    try:
        return IFS(pairs, d=d)
    except ValueError as exc:
        raise ConfigError(field, str(exc)) from None


def default_gap_measure() -> DiscreteMeasure:
    """Two golden-angle rotations about orthogonal axes, orthogonal shifts.

    The irrational angles generate a dense rotation subgroup and the two
    axes rule out a common fixed point; the truncated rotation-average
    norm certifies a positive gap for this pair.
    """
    a1 = Isometry(np.array([0.0, 0.0, 1.0]),
                  axis_rotation([1.0, 0.0, 0.0], GOLDEN_ANGLE))
    a2 = Isometry(np.array([1.0, 0.0, 0.0]),
                  axis_rotation([0.0, 0.0, 1.0], GOLDEN_ANGLE))
    return DiscreteMeasure.from_pairs([(a1, 0.5), (a2, 0.5)])


def default_gap_measure_config() -> dict:
    return {
        "d": 3,
        "atoms": [
            {"weight": 0.5,
             "rotation": {"axis": [1.0, 0.0, 0.0], "angle": GOLDEN_ANGLE},
             "translation": [0.0, 0.0, 1.0]},
            {"weight": 0.5,
             "rotation": {"axis": [0.0, 0.0, 1.0], "angle": GOLDEN_ANGLE},
             "translation": [1.0, 0.0, 0.0]},
        ],
    }


_KNOWN_KEYS = {
    "schema_version", "measure", "ifs", "seed", "workers", "lmax_cap",
    "r_grid", "l", "n", "rho_grid", "tolerance", "c", "l0", "symmetrize_power",
    "balls", "out_prefix", "gap", "n_phi",
}


def validate_config(cfg: dict) -> dict:
    """Fill defaults, check types and ranges; returns the effective config."""
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = set(cfg) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    out = dict(cfg)
    version = out.setdefault("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", "unsupported version %r" % version)
    out.setdefault("seed", 0)
    out.setdefault("workers", 1)
    out.setdefault("lmax_cap", 64)
    out.setdefault("tolerance", 1e-6)
    out.setdefault("c", 1.0)
    out.setdefault("symmetrize_power", 3)
    for key, lo in (("seed", 0), ("workers", 1), ("lmax_cap", 2)):
        val = out[key]
        if not isinstance(val, int) or val < lo:
            raise ConfigError(key, "must be an integer >= %d" % lo)
    if not out["tolerance"] > 0:
        raise ConfigError("tolerance", "must be positive")
    for key in ("n", "l", "l0"):
        if key in out and (not isinstance(out[key], int) or out[key] < 1):
            raise ConfigError(key, "must be a positive integer")
    for key in ("r_grid", "rho_grid"):
        if key in out:
            grid = out[key]
            if (not isinstance(grid, list) or not grid
                    or any(float(x) <= 0 for x in grid)):
                raise ConfigError(key, "must be a nonempty list of positive numbers")
    if "measure" in out:
        parse_measure(out["measure"])
    if "ifs" in out:
        parse_ifs(out["ifs"])
    return out


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", "invalid JSON: %s" % exc) from None
    return validate_config(cfg)


def config_digest(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
