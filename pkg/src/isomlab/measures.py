"""Finitely supported probability measures on isometries / similarities.

Convolution, symmetrization, projections, exact walk laws by word
enumeration, the second/third moment reduction (minimizing pair, N, M),
centering and dilation normalization, and the collision-based L2
diagnostic for smoothed convolution powers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import geom
from .geom import Isometry, Rotation, Similarity

MERGE_TOL = 1e-10
WEIGHT_TOL = 1e-12
ENUM_CAP = 10**6


class KindMismatchError(TypeError):
    """Mixing isometry-supported and similarity-supported measures."""


class EnumerationCapError(RuntimeError):
    """Word enumeration would exceed the atom cap."""


class NearSingularError(RuntimeError):
    """Mean rotation too close to having eigenvalue 1: no unique fixed point."""


class DegenerateError(RuntimeError):
    """Second moment vanishes; nothing to normalize."""


def _element_key(el) -> tuple:
    """Quantized coordinates for merging nearby duplicate atoms."""
    if isinstance(el, Similarity):
        coords = np.concatenate(([el.lam], el.rot.matrix.ravel(), el.v))
    else:
        coords = np.concatenate((el.rot.matrix.ravel(), el.v))
    return tuple(np.round(coords / MERGE_TOL).astype(np.int64).tolist())


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability measure with finitely many atoms on a group of motions."""

    atoms: tuple  # of (Isometry | Similarity, weight)

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("measure needs at least one atom")
        kinds = {type(el) for el, _ in self.atoms}
        if len(kinds) > 1:
            raise KindMismatchError("atoms must all be isometries or all similarities")
        total = sum(w for _, w in self.atoms)
        if any(w <= 0 for _, w in self.atoms):
            raise ValueError("weights must be positive")
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {total}, expected 1")
        object.__setattr__(self, "atoms", tuple(self.atoms))

    @property
    def dim(self) -> int:
        return self.atoms[0][0].dim

    @property
    def kind(self):
        return type(self.atoms[0][0])

    def elements(self):
        return [el for el, _ in self.atoms]

    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms])

    @staticmethod
    def from_pairs(pairs: Sequence[tuple]) -> "DiscreteMeasure":
        """Build a measure, merging atoms that coincide within tolerance."""
        merged: dict = {}
        for el, w in pairs:
            key = _element_key(el)
            if key in merged:
                merged[key] = (merged[key][0], merged[key][1] + w)
            else:
                merged[key] = (el, w)
        total = sum(w for _, w in merged.values())
        return DiscreteMeasure(tuple((el, w / total) for el, w in merged.values()))


def dirac(el) -> DiscreteMeasure:
    return DiscreteMeasure(((el, 1.0),))


def _compose_any(a, b):
    if isinstance(a, Similarity):
        return geom.compose_similarity(a, b)
    return geom.compose(a, b)


def _inverse_any(a):
    if isinstance(a, Similarity):
        lam = 1.0 / a.lam
        if lam > 1.0:
            raise ValueError("inverse of a strict contraction is not a contraction")
        rt = a.rot.matrix.T
        return Similarity(lam, Rotation(rt.copy()), -(rt @ a.v) / a.lam)
    return geom.inverse(a)


def convolve(mu: DiscreteMeasure, nu: DiscreteMeasure) -> DiscreteMeasure:
    """Law of g1 g2 with g1 ~ mu, g2 ~ nu independent."""
    if mu.kind is not nu.kind or mu.dim != nu.dim:
        raise KindMismatchError("convolution operands must match in kind and dimension")
    pairs = [
        (_compose_any(g1, g2), w1 * w2)
        for g1, w1 in mu.atoms
        for g2, w2 in nu.atoms
    ]
    return DiscreteMeasure.from_pairs(pairs)


def convolve_power(mu: DiscreteMeasure, l: int) -> DiscreteMeasure:
    out = dirac(Isometry.identity(mu.dim) if mu.kind is Isometry else
                Similarity(1.0, Rotation.identity(mu.dim), np.zeros(mu.dim)))
    for _ in range(l):
        out = convolve(out, mu)
    return out


def reverse(mu: DiscreteMeasure) -> DiscreteMeasure:
    """Pushforward under g -> g^{-1} (the measure written with a check mark)."""
    return DiscreteMeasure.from_pairs([(_inverse_any(g), w) for g, w in mu.atoms])


def symmetrize(mu0: DiscreteMeasure) -> DiscreteMeasure:
    """reverse(mu0) * mu0; always symmetric, contains the identity."""
    return convolve(reverse(mu0), mu0)


def is_symmetric(mu: DiscreteMeasure, tol: float = 1e-9) -> bool:
    rev = reverse(mu)
    keys = {_element_key(g): w for g, w in mu.atoms}
    rkeys = {_element_key(g): w for g, w in rev.atoms}
    if set(keys) != set(rkeys):
        return False
    return all(abs(keys[k] - rkeys[k]) <= tol for k in keys)


def project_theta(mu: DiscreteMeasure) -> DiscreteMeasure:
    """Pushforward to the rotation components; a convolution homomorphism.

    Returned as a measure over Isometry atoms with zero translation, so
    the DiscreteMeasure machinery applies unchanged.
    """
    d = mu.dim
    return DiscreteMeasure.from_pairs(
        [(Isometry(np.zeros(d), g.rot), w) for g, w in mu.atoms]
    )


def project_g(eta: DiscreteMeasure) -> DiscreteMeasure:
    """Drop contraction ratios: (lam, theta, v) -> (v, theta).  Not a homomorphism."""
    if eta.kind is not Similarity:
        raise KindMismatchError("project_g expects a measure over similarities")
    return DiscreteMeasure.from_pairs(
        [(k.to_isometry(), w) for k, w in eta.atoms]
    )


def act(mu: DiscreteMeasure, x0, l: int, cap: int = ENUM_CAP):
    """Exact law of Y_l = X_l ... X_1(x0) by word enumeration.

    Returns (points, masses): an (n, d) array and matching probabilities.
    """
    if mu.kind is not Isometry:
        raise KindMismatchError("act expects a measure over isometries")
    k = len(mu.atoms)
    if k**l > cap:
        raise EnumerationCapError(f"{k}^{l} words exceed cap {cap}")
    x0 = np.asarray(x0, dtype=float)
    pts = x0[None, :]
    masses = np.array([1.0])
    for _ in range(l):
        new_pts = np.concatenate([geom.apply(g, pts) for g, _ in mu.atoms])
        new_masses = np.concatenate([w * masses for _, w in mu.atoms])
        pts, masses = _merge_points(new_pts, new_masses)
    return pts, masses


def _merge_points(pts: np.ndarray, masses: np.ndarray, tol: float = MERGE_TOL):
    keys = np.round(pts / tol).astype(np.int64)
    _, idx, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    merged = np.zeros(len(idx))
    np.add.at(merged, inv, masses)
    return pts[idx], merged


@dataclass(frozen=True)
class MomentReport:
    """Minimizing pair and normalized moments of |g(v1) - v2| under mu."""

    v1: np.ndarray
    v2: np.ndarray
    N: float        # root second moment at the minimizer
    M: float        # third moment / N^3 (>= 1 by the power-mean inequality)
    degenerate: bool


def _linear_part(el) -> np.ndarray:
    if isinstance(el, Similarity):
        return el.lam * el.rot.matrix
    return el.rot.matrix


def _apply_el(el, x):
    if isinstance(el, Similarity):
        return geom.apply_similarity(el, x)
    return geom.apply(el, x)


def min_second_moment(mu: DiscreteMeasure) -> MomentReport:
    """Minimize Q(v1, v2) = sum_i w_i |g_i(v1) - v2|^2.

    The minimizer can be non-unique (deterministic translations along a
    subspace); the minimal-norm representative is returned via pinv with
    singular-value cutoff 1e-9.
    """
    d = mu.dim
    ws = mu.weights()
    rows = []
    rhs = []
    for (g, w) in mu.atoms:
        sw = math.sqrt(w)
        a = np.hstack([_linear_part(g), -np.eye(d)])
        rows.append(sw * a)
        rhs.append(-sw * np.asarray(g.v))
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    sol = np.linalg.pinv(A, rcond=1e-9) @ b
    v1, v2 = sol[:d], sol[d:]
    resid = np.array([np.linalg.norm(_apply_el(g, v1) - v2) for g, _ in mu.atoms])
    n2 = float(np.dot(ws, resid**2))
    n = math.sqrt(max(n2, 0.0))
    scale = max(
        (np.linalg.norm(np.asarray(g.v)) + np.linalg.norm(v1) + np.linalg.norm(v2)
         for g, _ in mu.atoms),
        default=1.0,
    )
    degenerate = n < 1e-9 * max(scale, 1.0)
    m = float(np.dot(ws, resid**3) / n**3) if not degenerate else math.inf
    return MomentReport(v1=v1, v2=v2, N=n, M=m, degenerate=degenerate)


def mean_rotation(mu: DiscreteMeasure) -> np.ndarray:
    return sum(w * _linear_part(g) for g, w in mu.atoms)


def mean_translation(mu: DiscreteMeasure) -> np.ndarray:
    return sum(w * np.asarray(g.v) for g, w in mu.atoms)


def center_fixed_point(mu: DiscreteMeasure) -> np.ndarray:
    """Unique x0 with int g(x0) d(mu_check * mu)(g) = x0.

    Solved as (I - A) x = b with A, b the mean rotation/translation of
    mu_check * mu.  Raises NearSingularError when the mean rotation has
    operator norm too close to 1 (common fixed axis and the like).
    """
    mu1 = convolve(reverse(mu), mu)
    A = mean_rotation(mu1)
    if np.linalg.norm(A, ord=2) >= 1.0 - 1e-6:
        raise NearSingularError("mean rotation nearly singular; fixed point not unique")
    b = mean_translation(mu1)
    x0 = np.linalg.solve(np.eye(mu.dim) - A, b)
    return x0


def recenter(mu: DiscreteMeasure, x0) -> DiscreteMeasure:
    """Conjugate by the translation taking x0 to the origin."""
    x0 = np.asarray(x0, dtype=float)

    def shift(g):
        new_v = np.asarray(g.v) + _linear_part(g) @ x0 - x0
        if isinstance(g, Similarity):
            return Similarity(g.lam, g.rot, new_v)
        return Isometry(new_v, g.rot)

    return DiscreteMeasure.from_pairs([(shift(g), w) for g, w in mu.atoms])


def dilate(mu: DiscreteMeasure, scale: float) -> DiscreteMeasure:
    """Divide every translation part by `scale`; rotations unchanged."""

    def d(g):
        if isinstance(g, Similarity):
            return Similarity(g.lam, g.rot, np.asarray(g.v) / scale)
        return Isometry(np.asarray(g.v) / scale, g.rot)

    return DiscreteMeasure.from_pairs([(d(g), w) for g, w in mu.atoms])


def moment(mu: DiscreteMeasure, m: int) -> float:
    """int |v(g)|^m dmu(g)."""
    ws = mu.weights()
    norms = np.array([np.linalg.norm(np.asarray(g.v)) for g, _ in mu.atoms])
    return float(np.dot(ws, norms**m))


def normalize(mu: DiscreteMeasure) -> tuple[DiscreteMeasure, float]:
    """Recenter at the fixed point and dilate to unit second moment.

    For symmetric mu the recentered measure has zero mean translation; the
    returned scale is the dilation factor applied to translations.
    """
    x0 = center_fixed_point(mu)
    centered = recenter(mu, x0)
    m2 = moment(centered, 2)
    if m2 <= 0.0:
        raise DegenerateError("second moment is zero")
    scale = math.sqrt(m2)
    return dilate(centered, scale), scale


def prepare_symmetric(mu0: DiscreteMeasure, power: int = 3) -> dict:
    """Symmetrize a self-convolution power of mu0, then center and normalize.

    Returns the prepared measure together with the equally transported
    "half" measure whose symmetrization it is; spectral norms of the
    prepared measure factor through the half measure.  power >= 2 is
    usually needed: a single symmetrization of a 2-atom measure yields an
    abelian rotation set with no averaging gap at all.
    """
    half_raw = convolve_power(mu0, power)
    sym = symmetrize(half_raw)
    x0 = center_fixed_point(sym)
    centered = recenter(sym, x0)
    m2 = moment(centered, 2)
    if m2 <= 0.0:
        raise DegenerateError("second moment is zero")
    scale = math.sqrt(m2)
    return {
        "mu": dilate(centered, scale),
        "half": dilate(recenter(half_raw, x0), scale),
        "x0": x0,
        "scale": scale,
        "power": power,
    }


def walk_moment_check(mu: DiscreteMeasure, l: int, cap: int = ENUM_CAP) -> float:
    """Relative error in E|Y_l(0)|^2 = l * E|v|^2 for a centered measure."""
    if np.linalg.norm(mean_translation(mu)) > 1e-9:
        raise ValueError("walk_moment_check requires a centered measure")
    pts, masses = act(mu, np.zeros(mu.dim), l, cap=cap)
    lhs = float(np.dot(masses, np.sum(pts**2, axis=1)))
    rhs = l * moment(mu, 2)
    return abs(lhs - rhs) / rhs


def third_moment_growth(mu: DiscreteMeasure, l: int, cap: int = ENUM_CAP) -> float:
    """Ratio (E|Y_l|^3)^{2/3} / (l * (E|v|^3)^{2/3}): the martingale-moment constant."""
    pts, masses = act(mu, np.zeros(mu.dim), l, cap=cap)
    lhs = float(np.dot(masses, np.sum(pts**2, axis=1) ** 1.5)) ** (2.0 / 3.0)
    rhs = l * moment(mu, 3) ** (2.0 / 3.0)
    return lhs / rhs


# ---------------------------------------------------------------------------
# Collision-based L2 diagnostic for smoothed convolution powers.

def rotation_ball_volume(delta: float) -> float:
    """Haar mass of {R in SO(3): ||R - I||_op <= delta}.

    The operator-norm distance is 2 sin(angle/2); the Haar angle density
    is (1 - cos a)/pi on [0, pi].
    """
    if delta >= 2.0:
        return 1.0
    a = 2.0 * math.asin(delta / 2.0)
    return (a - math.sin(a)) / math.pi


def cell_volume(delta: float, l1: int, d: int = 3) -> float:
    """Volume of the anisotropic neighborhood: rotation scale delta,
    translation scale delta * sqrt(l1)."""
    t = delta * math.sqrt(l1)
    ball = math.pi ** (d / 2) / math.gamma(d / 2 + 1) * t**d
    return rotation_ball_volume(delta) * ball


def _axis_angle_vector(m: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle) of a 3x3 rotation matrix."""
    cos_t = np.clip((np.trace(m) - 1.0) / 2.0, -1.0, 1.0)
    t = math.acos(cos_t)
    if t < 1e-12:
        return np.zeros(3)
    w = np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    s = np.linalg.norm(w)
    if s < 1e-12:
        # angle ~ pi: extract axis from m + I
        b = m + np.eye(3)
        axis = b[:, np.argmax(np.sum(b**2, axis=0))]
        axis = axis / np.linalg.norm(axis)
        return t * axis
    return (t / s) * w


def collision_l2(
    eta: DiscreteMeasure,
    k: int,
    delta: float,
    l1: int,
    nsamples: int,
    seed: int,
) -> dict:
    """Pair-collision estimate of ||eta^{*(k)} smoothed at scale (delta, delta*sqrt(l1))||_2^2.

    Two independent samples collide when they land in the same quantized
    cell (rotation pitch delta, translation pitch delta*sqrt(l1)).  The
    hash over-merges by at most 2^dim relative to true balls; that slack
    is recorded in the output.
    """
    if not 0.0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    elements = eta.elements()
    weights = eta.weights()
    d = eta.dim

    idx = rng.choice(len(elements), size=(nsamples, k), p=weights)
    cells = []
    tpitch = delta * math.sqrt(l1)
    for row in idx:
        g = elements[row[0]]
        for j in row[1:]:
            g = _compose_any(g, elements[j])
        if isinstance(g, Similarity):
            g = g.to_isometry()
        rvec = _axis_angle_vector(g.rot.matrix) if d == 3 else g.rot.matrix.ravel()
        key = tuple(np.round(rvec / delta).astype(np.int64).tolist()) + tuple(
            np.round(np.asarray(g.v) / tpitch).astype(np.int64).tolist()
        )
        cells.append(key)

    counts: dict = {}
    for c in cells:
        counts[c] = counts.get(c, 0) + 1
    n = nsamples
    pairs = sum(c * (c - 1) for c in counts.values())
    collision_freq = pairs / (n * (n - 1))
    vol = cell_volume(delta, l1, d)
    return {
        "collision_freq": collision_freq,
        "estimate": collision_freq / vol,
        "cell_volume": vol,
        "over_merge_factor": 2 ** (d + (3 if d == 3 else d * d)),
        "nsamples": nsamples,
    }
