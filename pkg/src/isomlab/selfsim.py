"""Self-similar measures of iterated function systems of contracting similarities.

A stationary measure satisfies nu = sum_i p_i (kappa_i)_* nu.  Its Fourier
transform obeys the exact recursion
    nu_hat(xi) = sum_i p_i e(<xi, v_i>) nu_hat(lambda_i theta_i^T xi),
which this module evaluates pointwise (memoized, with explicit error
accounting) or, for equal contraction ratios in d=3, by iterating the
band-limited averaging operator on spheres of geometrically growing radii.
Also: the equal-ratio decomposition of the l0-fold convolution into
multinomial classes, the pivot construction that produces a positive-mass
single-ratio component, and the associated threshold formulas.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize

from . import harmonics as hrm
from .geom import Similarity, Rotation
from .measures import (DiscreteMeasure, dirac, convolve, project_g,
                       project_theta, min_second_moment)

ENUM_CAP = 10**6


class CommonFixedPointError(ValueError):
    """All maps fix a common point; no nondegenerate stationary measure."""


class RecursionBudgetError(RuntimeError):
    """The transform recursion exceeded its evaluation budget."""


class NoPivotError(RuntimeError):
    """No pivot achieved the separation threshold (normalization bug)."""


def _separation(maps, x):
    return max(
        float(np.linalg.norm(k.lam * (k.rot.matrix @ x) + k.v - x))
        for k in maps
    )


def min_displacement(maps) -> tuple[np.ndarray, float]:
    """Minimize over x the largest displacement max_i |kappa_i(x) - x|.

    The objective is convex (max of norms of affine maps); the minimum is
    zero iff the maps share a fixed point.
    """
    d = maps[0].dim
    x0 = np.zeros(d)
    res = minimize(lambda x: _separation(maps, x), x0, method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
    return res.x, float(res.fun)


@dataclass
class IFS:
    """Finitely many contracting similarities with selection probabilities."""

    maps: list          # of (Similarity, probability)
    d: int = None

    def __post_init__(self):
        if not self.maps:
            raise ValueError("empty system")
        if self.d is None:
            self.d = self.maps[0][0].dim
        tot = sum(p for _, p in self.maps)
        if abs(tot - 1.0) > 1e-9 or any(p <= 0 for _, p in self.maps):
            raise ValueError("probabilities must be positive and sum to 1")
        for k, _ in self.maps:
            if not (0.0 < k.lam < 1.0):
                raise ValueError("contraction ratios must lie in (0, 1)")
            if k.dim != self.d:
                raise ValueError("dimension mismatch among maps")
        _, sep = min_displacement([k for k, _ in self.maps])
        # a shared fixed point collapses the stationary measure to a point;
        # keep the system usable (transform is then exactly a character)
        # but flag it so gap extraction can refuse it
        self.degenerate = sep <= 1e-9

    @property
    def k(self) -> int:
        return len(self.maps)

    @property
    def p_min(self) -> float:
        return min(p for _, p in self.maps)

    @property
    def lam_max(self) -> float:
        return max(k.lam for k, _ in self.maps)

    def similarity_measure(self) -> DiscreteMeasure:
        return DiscreteMeasure.from_pairs(list(self.maps))

    def barycenter(self) -> np.ndarray:
        a = sum(p * k.lam * k.rot.matrix for k, p in self.maps)
        b = sum(p * np.asarray(k.v, dtype=float) for k, p in self.maps)
        return np.linalg.solve(np.eye(self.d) - a, b)

    def covariance(self, tol: float = 1e-14, maxiter: int = 100000) -> np.ndarray:
        """Stationary covariance from its linear fixed-point equation."""
        b = self.barycenter()
        terms = []
        for k, p in self.maps:
            m = k.lam * (k.rot.matrix @ b) + k.v - b
            terms.append((p, k.lam, k.rot.matrix, np.outer(m, m)))
        c = np.zeros((self.d, self.d))
        for _ in range(maxiter):
            nxt = sum(p * (lam**2 * (rot @ c @ rot.T) + mm)
                      for p, lam, rot, mm in terms)
            if np.max(np.abs(nxt - c)) < tol:
                return nxt
            c = nxt
        return c

    def radius_bound(self) -> float:
        """Radius of a ball about the barycenter containing the support."""
        b = self.barycenter()
        disp = max(
            float(np.linalg.norm(k.lam * (k.rot.matrix @ b) + k.v - b))
            for k, _ in self.maps
        )
        return disp / (1.0 - self.lam_max)


def sample_stationary(ifs: IFS, n: int, depth: int | None = None,
                      seed: int = 0, tol: float = 1e-9) -> np.ndarray:
    """n samples of the stationary measure, within tol of exact samples.

    Iterating the random maps forward for `depth` steps has the same law
    at fixed depth as the backward (converging) iteration; depth is chosen
    so the contraction ratio beats tol against the support diameter.
    """
    diam = max(2.0 * ifs.radius_bound(), 1e-12)
    if depth is None:
        depth = max(1, int(math.ceil(math.log(tol / diam)
                                     / math.log(ifs.lam_max))))
    rng = np.random.default_rng(seed)
    probs = np.array([p for _, p in ifs.maps])
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    rot = np.stack([k.lam * k.rot.matrix for k, _ in ifs.maps])
    vs = np.stack([np.asarray(k.v, dtype=float) for k, _ in ifs.maps])
    x = np.tile(ifs.barycenter(), (n, 1))
    for _ in range(depth):
        idx = np.searchsorted(cum, rng.random(n), side="right")
        x = np.einsum("nij,nj->ni", rot[idx], x) + vs[idx]
    return x


# ---------------------------------------------------------------------------
# Pointwise Fourier transform

def nu_hat_err(ifs: IFS, xi, tol: float = 1e-8,
               budget: int = 2_000_000) -> tuple[complex, float]:
    """nu_hat(xi) with an explicit error bound.

    The recursion stops once the argument is small enough that the
    second-order Taylor base value e(<zeta, barycenter>) is within tol/2;
    arguments are memoized on a quantized grid whose pitch contributes the
    other half of the budgeted error.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    xi = np.asarray(xi, dtype=float)
    b = ifs.barycenter()
    trc = float(np.trace(ifs.covariance()))
    radius = ifs.radius_bound()
    xi_small = math.sqrt(tol / (4.0 * math.pi**2 * max(trc, 1e-300)))
    pitch = tol / (4.0 * math.pi * max(radius + np.linalg.norm(b), 1e-12))
    factors = [(p, k.lam * k.rot.matrix.T, np.asarray(k.v, dtype=float))
               for k, p in ifs.maps]
    memo: dict[tuple, tuple[complex, float]] = {}
    count = 0

    def rec(z: np.ndarray) -> tuple[complex, float]:
        nonlocal count
        zn = float(np.linalg.norm(z))
        if zn <= xi_small:
            err = 2.0 * math.pi**2 * trc * zn**2
            return np.exp(-2j * math.pi * float(np.dot(z, b))), err
        key = tuple(np.round(z / pitch).astype(np.int64))
        hit = memo.get(key)
        if hit is not None:
            return hit
        count += 1
        if count > budget:
            raise RecursionBudgetError("transform recursion budget exceeded")
        val = 0.0 + 0.0j
        err = 2.0 * math.pi * radius * pitch * math.sqrt(len(z))
        for p, mt, v in factors:
            sub, suberr = rec(mt @ z)
            val += p * np.exp(-2j * math.pi * float(np.dot(z, v))) * sub
            err += p * suberr
        memo[key] = (val, err)
        return val, err

    return rec(xi)


def nu_hat(ifs: IFS, xi, tol: float = 1e-8, budget: int = 2_000_000) -> complex:
    return nu_hat_err(ifs, xi, tol, budget)[0]


# ---------------------------------------------------------------------------
# Sphere-averaged decay profiles

def _equal_ratio(ifs: IFS) -> bool:
    lams = [k.lam for k, _ in ifs.maps]
    return max(lams) - min(lams) <= 1e-12


def _base_band(ifs: IFS, r0: float, lmax: int) -> hrm.BandFunction:
    """Second-order model of the transform restricted to a small sphere."""
    b = ifs.barycenter()
    c = ifs.covariance()
    quad = hrm.quadrature(lmax)
    zeta = r0 * quad.nodes
    vals = (np.exp(-2j * math.pi * (zeta @ b))
            * np.exp(-2.0 * math.pi**2 * np.einsum("ni,ij,nj->n", zeta, c, zeta)))
    return hrm.analyze(vals, quad, lmax)


def decay_profile(ifs: IFS, r_grid, quad=None, tol: float = 1e-6,
                  method: str = "auto", lmax_cap: int = 64) -> dict:
    """L2 norm of the transform on spheres of radius r, with a slope fit.

    method "pointwise": quadrature over nu_hat values (any d; cost grows
    with the recursion branching, i.e. with lambda close to 1).
    method "chain" (equal ratios, d=3): push a band-limited restriction up
    the radius ladder r0, r0/lam, ... with the sphere-averaging operator of
    the lam->1 projections; each step is exact for the true transform, so
    only the base model and band truncation contribute error.

    Returns radii, norms, error estimates, the log-log slope over the
    upper half of the grid, and the heuristic differentiability verdict
    n_est = largest integer n with slope <= -(d + n + 1).
    """
    rs = np.sort(np.asarray(r_grid, dtype=float))
    if np.any(rs <= 0):
        raise ValueError("radii must be positive")
    d = ifs.d
    if method == "auto":
        method = ("chain" if d == 3 and _equal_ratio(ifs)
                  and ifs.lam_max > 0.5 else "pointwise")

    if method == "pointwise":
        norms, errs = [], []
        if quad is not None:
            nodes, weights = quad.nodes, quad.weights
        elif d == 3:
            ql = int(min(80, 2 * math.pi * rs[-1] * ifs.radius_bound() + 20))
            q = hrm.quadrature(ql)
            nodes, weights = q.nodes, q.weights
        elif d == 1:
            nodes, weights = np.array([[1.0], [-1.0]]), np.array([0.5, 0.5])
        else:
            raise ValueError("pointwise profiles implemented for d in {1, 3}")
        for r in rs:
            vals, es = [], []
            for node in nodes:
                v, e = nu_hat_err(ifs, r * node, tol)
                vals.append(v)
                es.append(e)
            sq = float(np.dot(weights, np.abs(vals) ** 2))
            norms.append(math.sqrt(max(sq, 0.0)))
            errs.append(float(np.dot(weights, es)))
    elif method == "chain":
        if d != 3 or not _equal_ratio(ifs):
            raise ValueError("chain method needs equal ratios in d = 3")
        lam = ifs.maps[0][0].lam
        mu_g = project_g(ifs.similarity_measure())
        from . import spectral as sp
        lmax, degraded = sp.auto_lmax(mu_g, rs[-1], tol=1e-6, cap=lmax_cap)
        # ladder from a small base radius through every requested radius
        steps = int(math.ceil(math.log(rs[-1] / min(rs[0], 0.05))
                              / math.log(1.0 / lam))) + 1
        ladder = rs[-1] * lam ** np.arange(steps, -1, -1)
        phi = _base_band(ifs, ladder[0], lmax)
        err = 1e-4 * (ladder[0] * ifs.radius_bound()) ** 3
        chain_pts = {}
        for j in range(1, len(ladder)):
            op = sp.transfer_operator(mu_g, ladder[j], lmax)
            phi = op.apply_band(phi)
            err += min(op.tail_bound, 1.0)
            chain_pts[j] = (float(phi.norm()), err)
        norms, errs = [], []
        for r in rs:
            j = int(np.argmin(np.abs(ladder - r)))
            if abs(ladder[j] - r) > 1e-9 * r:
                raise ValueError(
                    "chain method needs a radius grid of the form "
                    "r_max * lam^j; got off-ladder radius %g" % r)
            n, e = chain_pts[j]
            norms.append(n)
            # an accumulated bound past 1 certifies nothing; say so
            errs.append(e if e < 1.0 else math.inf)
    else:
        raise ValueError("unknown method %r" % method)

    norms = np.array(norms)
    errs = np.array(errs)
    upper = rs >= np.median(rs)
    x = np.log(rs[upper])
    y = np.log(np.maximum(norms[upper], 1e-300))
    slope = float(np.polyfit(x, y, 1)[0]) if upper.sum() >= 2 else 0.0
    n_est = -math.inf if slope >= -1e-9 else int(math.floor(-slope)) - d - 1
    return {"rs": rs, "norms": norms, "errs": errs, "slope": slope,
            "n_est": n_est, "method": method}


# ---------------------------------------------------------------------------
# Equal-ratio decomposition and the gap component

@dataclass
class RatioClass:
    a: tuple                 # type vector, sum = l0
    weight: Fraction         # multinomial class mass
    words: list              # Similarity for every word in the class
    cond_weight: Fraction    # uniform conditional weight of each word
    lam: float               # common contraction ratio lambda^a


def _rational_probs(ifs: IFS) -> list[Fraction]:
    ps = [Fraction(p).limit_denominator(10**12) for _, p in ifs.maps]
    tot = sum(ps)
    return [p / tot for p in ps]


def ratio_decomposition(ifs: IFS, l0: int, cap: int = ENUM_CAP) -> list[RatioClass]:
    """Partition the words of length l0 by their type vector.

    Words with the same letter counts share the contraction ratio
    lambda^a; the class masses are exact multinomials and the conditional
    weight of each word within its class is uniform.
    """
    if l0 < 1:
        raise ValueError("l0 must be >= 1")
    if ifs.k ** l0 > cap:
        raise ValueError("enumeration cap exceeded")
    ps = _rational_probs(ifs)
    sims = [k for k, _ in ifs.maps]
    classes: dict[tuple, RatioClass] = {}
    from .geom import compose_similarity
    for word in itertools.product(range(ifs.k), repeat=l0):
        a = tuple(word.count(i) for i in range(ifs.k))
        comp = sims[word[0]]
        for i in word[1:]:
            comp = compose_similarity(comp, sims[i])
        if a not in classes:
            weight = Fraction(math.factorial(l0))
            cond = Fraction(1)
            for i, ai in enumerate(a):
                weight = weight * ps[i] ** ai / math.factorial(ai)
                cond = cond * Fraction(math.factorial(ai))
            cond = cond / math.factorial(l0)
            lam = float(np.prod([s.lam ** ai for s, ai in zip(sims, a)]))
            classes[a] = RatioClass(a=a, weight=weight, words=[comp],
                                    cond_weight=cond, lam=lam)
        else:
            classes[a].words.append(comp)
    return sorted(classes.values(), key=lambda c: c.a)


def class_measure(cls: RatioClass) -> DiscreteMeasure:
    """The class as a probability measure (uniform conditional weights)."""
    w = 1.0 / len(cls.words)
    return DiscreteMeasure.from_pairs([(k, w) for k in cls.words])


@dataclass
class GapComponent:
    q0: Fraction
    eta0: DiscreteMeasure
    l1: int
    kappa0: Similarity
    a: tuple
    separation: float
    normalization_shift: np.ndarray
    normalization_scale: float


def _normalize_ifs(ifs: IFS) -> tuple[IFS, np.ndarray, float]:
    """Move the origin and rescale so max_i |v(kappa_i)| = 1 and every
    point is displaced by at least 1 by some map."""
    maps = [k for k, _ in ifs.maps]
    x_star, sep = min_displacement(maps)
    if sep <= 1e-9:
        raise CommonFixedPointError("maps share a common fixed point")
    scale = sep
    out = []
    for k, p in ifs.maps:
        v = (k.lam * (k.rot.matrix @ x_star) + k.v - x_star) / scale
        out.append((Similarity(k.lam, k.rot, v), p))
    return IFS(out), x_star, scale


def extract_gap_component(ifs: IFS, l0: int) -> GapComponent:
    """Single-ratio component of positive mass inside the (2l0+1 or 2l0+2)-fold
    convolution, built around a pivot that separates the minimizing pair.

    In the normalized coordinates (largest translation 1, every point
    moved by at least 1), some original map -- or its composition with the
    first map -- moves v1 at least 1/2 away from v2; inserting it between
    two copies of the dominant equal-ratio class gives eta0.
    """
    if ifs.k < 2:
        raise ValueError("need at least two maps")
    norm_ifs, shift, scale = _normalize_ifs(ifs)
    classes = ratio_decomposition(norm_ifs, l0)
    cls = max(classes, key=lambda c: c.weight)
    eta_a = class_measure(cls)
    rep = min_second_moment(eta_a)
    v1, v2 = rep.v1, rep.v2
    from .geom import apply_similarity, compose_similarity
    maps = [k for k, _ in norm_ifs.maps]
    ps = _rational_probs(norm_ifs)
    kappa0 = None
    for i, k in enumerate(maps):
        if np.linalg.norm(apply_similarity(k, v1) - v2) >= 0.5:
            kappa0 = k
            q0 = cls.weight ** 2 * ps[i]
            l1 = 2 * l0 + 1
            break
    if kappa0 is None:
        y = apply_similarity(maps[0], v1)
        for i, k in enumerate(maps):
            if np.linalg.norm(apply_similarity(k, y) - y) > 1.0 - 1e-9:
                kappa0 = compose_similarity(k, maps[0])
                q0 = cls.weight ** 2 * ps[i] * ps[0]
                l1 = 2 * l0 + 2
                break
    if kappa0 is None:
        raise NoPivotError("no pivot reached the separation threshold; "
                           "normalization is broken")
    sep = float(np.linalg.norm(apply_similarity(kappa0, v1) - v2))
    if sep < 0.5 - 1e-9:
        raise NoPivotError("pivot separation below 1/2")
    eta0 = convolve(convolve(eta_a, dirac(kappa0)), eta_a)
    return GapComponent(q0=q0, eta0=eta0, l1=l1, kappa0=kappa0, a=cls.a,
                        separation=sep, normalization_shift=shift,
                        normalization_scale=scale)


def gap_component_t_gap(comp: GapComponent, lcap: int = 8) -> dict:
    """Rotation-averaging gap of the component's isometry projection."""
    from .spectral import t_gap
    return t_gap(project_theta(project_g(comp.eta0)), lcap)


# ---------------------------------------------------------------------------
# Threshold formulas

def abert_bound(q0: float, c: float = 1.0, alpha: DiscreteMeasure | None = None,
                lcap: int = 8) -> dict:
    """1 - c (q0 / log(1/q0))^2, with the optional precondition check
    that the full average has norm at most q0/2 on mean-zero functions."""
    if not 0.0 < q0 < 1.0:
        raise ValueError("q0 must lie in (0, 1)")
    value = 1.0 - c * (q0 / math.log(1.0 / q0)) ** 2
    out = {"value": value, "q0": q0, "c": c}
    if alpha is not None:
        from .spectral import t_gap
        norm = t_gap(alpha, lcap)["norm"]
        out["precondition_norm"] = norm
        out["precondition_ok"] = norm <= q0 / 2.0
    return out


def smoothness_threshold(n: int, M: float, gap: float, c: float = 1.0) -> float:
    """Contraction-ratio threshold above which an n-times differentiable
    density is predicted, up to the theory's unspecified constant c."""
    if n < 1 or M < 1 or not 0.0 < gap <= 1.0 or c <= 0:
        raise ValueError("need n >= 1, M >= 1, gap in (0, 1], c > 0")
    return max(0.0, 1.0 - c * gap / (n * M * M))
