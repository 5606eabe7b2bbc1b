"""Spherical-harmonic infrastructure on S^2.

Convention: the surface measure is NORMALIZED (total mass 1) and the basis
is sqrt(4*pi) times the conventional orthonormal harmonics, so the constant
function has norm 1 and Y_00 == 1.  Coefficients of a band-limited function
are indexed lexicographically by (l, m), flat index l*l + l + m.

The Wigner matrices returned here are matrix elements, in that basis, of
the action phi -> phi(R^{-1} .); the convention is pinned by tests
(identity, z-rotation phases) rather than by an external name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special as _sp

SQRT4PI = math.sqrt(4.0 * math.pi)


def lm_index(l: int, m: int) -> int:
    return l * l + l + m


def band_dim(lmax: int) -> int:
    return (lmax + 1) ** 2


def lm_arrays(lmax: int):
    """Degree and order arrays aligned with the flat (l, m) index."""
    ls = np.concatenate([np.full(2 * l + 1, l) for l in range(lmax + 1)])
    ms = np.concatenate([np.arange(-l, l + 1) for l in range(lmax + 1)])
    return ls, ms


@dataclass
class BandFunction:
    """Function on S^2 truncated to spherical-harmonic degrees <= Lmax."""

    Lmax: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (band_dim(self.Lmax),):
            raise ValueError("coefficient vector has wrong length")
        self.coeffs = c

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def block(self, l: int) -> np.ndarray:
        return self.coeffs[l * l: (l + 1) * (l + 1)]

    @staticmethod
    def constant(lmax: int, value: complex = 1.0) -> "BandFunction":
        c = np.zeros(band_dim(lmax), dtype=complex)
        c[0] = value
        return BandFunction(lmax, c)


def random_band(lmax: int, degree: int, rng: np.random.Generator) -> BandFunction:
    """Unit-norm Gaussian coefficients on degrees <= degree, zero above."""
    if degree > lmax:
        raise ValueError("degree exceeds the band limit")
    c = np.zeros(band_dim(lmax), dtype=complex)
    k = band_dim(degree)
    c[:k] = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    c /= np.linalg.norm(c)
    return BandFunction(lmax, c)


def sph_harm(l: int, m: int, xi) -> complex | np.ndarray:
    """Normalized-measure harmonic at unit vector(s) xi; Y_00 == 1."""
    if abs(m) > l:
        raise ValueError("|m| must not exceed l")
    xi = np.asarray(xi, dtype=float)
    theta = np.arccos(np.clip(xi[..., 2], -1.0, 1.0))
    phi = np.arctan2(xi[..., 1], xi[..., 0])
    return SQRT4PI * _sp.sph_harm_y(l, m, theta, phi)


@dataclass
class SphereQuadrature:
    """Positive quadrature on S^2 with weights summing to 1."""

    nodes: np.ndarray       # (n, 3) unit vectors
    weights: np.ndarray     # (n,), sum 1
    exactness_degree: int


def quadrature(lmax: int, exactness: int | None = None) -> SphereQuadrature:
    """Gauss-Legendre in cos(theta) times uniform azimuth.

    Exact (to roundoff) for integrands of total harmonic degree up to
    `exactness` (default 2*lmax + 1).
    """
    if exactness is None:
        exactness = 2 * lmax + 1
    n_t = max(exactness // 2 + 1, 1)
    n_p = max(exactness + 1, 1)
    x, w = leggauss(n_t)
    phis = 2.0 * math.pi * np.arange(n_p) / n_p
    st = np.sqrt(1.0 - x**2)
    nodes = np.empty((n_t * n_p, 3))
    nodes[:, 0] = np.outer(st, np.cos(phis)).ravel()
    nodes[:, 1] = np.outer(st, np.sin(phis)).ravel()
    nodes[:, 2] = np.repeat(x, n_p)
    weights = np.repeat(w / (2.0 * n_p), n_p)
    return SphereQuadrature(nodes=nodes, weights=weights, exactness_degree=exactness)


def integrate(values, quad: SphereQuadrature) -> complex:
    """Average of a function over S^2 (normalized measure)."""
    return complex(np.dot(quad.weights, np.asarray(values)))


def basis_matrix(points: np.ndarray, lmax: int) -> np.ndarray:
    """Matrix Y[i, (l, m)] of normalized harmonics at unit vectors."""
    points = np.asarray(points, dtype=float)
    theta = np.arccos(np.clip(points[:, 2], -1.0, 1.0))
    phi = np.arctan2(points[:, 1], points[:, 0])
    ls, ms = lm_arrays(lmax)
    return SQRT4PI * _sp.sph_harm_y(
        ls[None, :], ms[None, :], theta[:, None], phi[:, None]
    )


def analyze(values: np.ndarray, quad: SphereQuadrature, lmax: int) -> BandFunction:
    """Project point values onto the band-limited basis."""
    y = basis_matrix(quad.nodes, lmax)
    coeffs = y.conj().T @ (quad.weights * np.asarray(values, dtype=complex))
    return BandFunction(lmax, coeffs)


def synthesize(phi: BandFunction, points: np.ndarray) -> np.ndarray:
    """Evaluate a band-limited function at unit vectors."""
    return basis_matrix(points, phi.Lmax) @ phi.coeffs


def bessel_j(l, x):
    """Spherical Bessel function of the first kind (scipy backend)."""
    return _sp.spherical_jn(np.asarray(l, dtype=int), np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# Wigner rotation matrices

@lru_cache(maxsize=None)
def _jy_eig(l: int):
    """Eigendecomposition of the angular-momentum generator J_y for spin l."""
    m = np.arange(-l, l + 1)
    dim = 2 * l + 1
    jy = np.zeros((dim, dim), dtype=complex)
    for i in range(dim - 1):
        mm = m[i]
        # raising: <m+1| J+ |m> = sqrt(l(l+1) - m(m+1))
        cp = math.sqrt(l * (l + 1) - mm * (mm + 1))
        jy[i + 1, i] += cp / 2j
        jy[i, i + 1] += -cp / 2j
    w, v = np.linalg.eigh(jy)
    return w, v


def zyz_euler(matrix: np.ndarray) -> tuple[float, float, float]:
    """Euler angles with R = Rz(alpha) Ry(beta) Rz(gamma)."""
    m = np.asarray(matrix, dtype=float)
    c = np.clip(m[2, 2], -1.0, 1.0)
    # sin(beta) from the off-diagonal entries, which carry it linearly;
    # acos(m22) alone loses half the digits near beta = 0 or pi
    s = math.hypot(m[0, 2], m[1, 2])
    beta = math.atan2(s, c)
    if s > 1e-12:
        alpha = math.atan2(m[1, 2], m[0, 2])
        gamma = math.atan2(m[2, 1], -m[2, 0])
    elif c > 0.0:
        alpha = math.atan2(m[1, 0], m[0, 0])
        gamma = 0.0
    else:
        alpha = math.atan2(-m[1, 0], -m[0, 0])
        gamma = 0.0
    return alpha, beta, gamma


def wigner_d_small(l: int, beta: float) -> np.ndarray:
    """d^l(beta) = exp(-i beta J_y); real orthogonal, rows/cols m' , m."""
    w, v = _jy_eig(l)
    d = (v * np.exp(-1j * beta * w)) @ v.conj().T
    return d.real.copy()


def wigner_D(l: int, rotation) -> np.ndarray:
    """Matrix of phi -> phi(R^{-1} .) on the degree-l coefficients.

    (rotate phi)_{m'} = sum_m D_{m'm} phi_m.  For R = Rz(alpha) this is
    diagonal with phases exp(-i m alpha).
    """
    matrix = rotation.matrix if hasattr(rotation, "matrix") else np.asarray(rotation)
    alpha, beta, gamma = zyz_euler(matrix)
    m = np.arange(-l, l + 1)
    d = wigner_d_small(l, beta)
    return np.exp(-1j * m[:, None] * alpha) * d * np.exp(-1j * m[None, :] * gamma)


def rotate_band(phi: BandFunction, rotation) -> BandFunction:
    """Unitary rotation action: (rotate phi)(xi) = phi(R^{-1} xi)."""
    out = np.empty_like(phi.coeffs)
    for l in range(phi.Lmax + 1):
        out[l * l: (l + 1) * (l + 1)] = wigner_D(l, rotation) @ phi.block(l)
    return BandFunction(phi.Lmax, out)


# ---------------------------------------------------------------------------
# Exact Wigner 3j and Gaunt coefficients

_threej_cache: dict = {}


def load_threej_cache(path) -> int:
    """Preload 3j values from a pickle written by save_threej_cache."""
    import pickle
    with open(path, "rb") as fh:
        _threej_cache.update(pickle.load(fh))
    return len(_threej_cache)


def save_threej_cache(path) -> int:
    import pickle
    with open(path, "wb") as fh:
        pickle.dump(_threej_cache, fh)
    return len(_threej_cache)


def wigner_3j(l1: int, l2: int, l3: int, m1: int, m2: int, m3: int) -> float:
    """Wigner 3j symbol, evaluated exactly in rational arithmetic.

    Racah's formula with Python integers; the final square root is the
    only floating-point step, so the result is accurate to ~1e-15
    relative for any l within reach of a dense assembly.  Values are
    memoized in a table that can persist across runs (see
    load_threej_cache / save_threej_cache).
    """
    key = (l1, l2, l3, m1, m2, m3)
    hit = _threej_cache.get(key)
    if hit is None:
        hit = _threej_cache[key] = _wigner_3j_exact(l1, l2, l3, m1, m2, m3)
    return hit


def _wigner_3j_exact(l1, l2, l3, m1, m2, m3):
    if m1 + m2 + m3 != 0:
        return 0.0
    if not (abs(l1 - l2) <= l3 <= l1 + l2):
        return 0.0
    if abs(m1) > l1 or abs(m2) > l2 or abs(m3) > l3:
        return 0.0
    f = math.factorial
    tmin = max(0, l2 - l3 - m1, l1 - l3 + m2)
    tmax = min(l1 + l2 - l3, l1 - m1, l2 + m2)
    s = Fraction(0)
    for t in range(tmin, tmax + 1):
        den = (
            f(t) * f(l3 - l2 + t + m1) * f(l3 - l1 + t - m2)
            * f(l1 + l2 - l3 - t) * f(l1 - t - m1) * f(l2 - t + m2)
        )
        s += Fraction((-1) ** t, den)
    if s == 0:
        return 0.0
    delta = Fraction(
        f(l1 + l2 - l3) * f(l1 - l2 + l3) * f(-l1 + l2 + l3),
        f(l1 + l2 + l3 + 1),
    )
    norm = delta * (
        f(l1 + m1) * f(l1 - m1) * f(l2 + m2) * f(l2 - m2) * f(l3 + m3) * f(l3 - m3)
    )
    sign = (-1) ** (l1 - l2 - m3) * (1 if s > 0 else -1)
    return sign * math.sqrt(float(norm * s * s))


def gaunt(l1: int, m1: int, l2: int, m2: int, l3: int, m3: int) -> float:
    """Average over S^2 of the product of three normalized-basis harmonics.

    Zero unless m1 + m2 + m3 = 0, the triangle inequality holds and
    l1 + l2 + l3 is even.  gaunt(0,0,0,0,0,0) = 1 in this normalization.
    """
    for l, m in ((l1, m1), (l2, m2), (l3, m3)):
        if l < 0 or abs(m) > l:
            raise ValueError("invalid (l, m) index")
    if m1 + m2 + m3 != 0 or (l1 + l2 + l3) % 2 != 0:
        return 0.0
    if not (abs(l1 - l2) <= l3 <= l1 + l2):
        return 0.0
    pref = math.sqrt((2 * l1 + 1) * (2 * l2 + 1) * (2 * l3 + 1))
    return pref * wigner_3j(l1, l2, l3, 0, 0, 0) * wigner_3j(l1, l2, l3, m1, m2, m3)


# ---------------------------------------------------------------------------
# Plane-wave expansion

def plane_wave_tail_bound(r: float, vnorm: float, k: int) -> float:
    """Sup-norm Taylor tail of e(r <xi, v>) beyond harmonic degree k - 1."""
    a = 2.0 * math.pi * r * vnorm
    if a == 0.0:
        return 0.0
    # 2 a^k / k!, computed in log space to dodge overflow
    logt = math.log(2.0) + k * math.log(a) - math.lgamma(k + 1)
    return math.exp(min(logt, 700.0))


def plane_wave_coeffs(r: float, v, lmax: int) -> BandFunction:
    """Expansion of omega_r: xi -> exp(-2 pi i r <xi, v>).

    c_{lm} = (-i)^l j_l(2 pi r |v|) conj(Y_lm(v_hat)) in the normalized
    basis; the (0,0) coefficient is sinc(2 r |v|).
    """
    v = np.asarray(v, dtype=float)
    vnorm = float(np.linalg.norm(v))
    coeffs = np.zeros(band_dim(lmax), dtype=complex)
    if r == 0.0 or vnorm == 0.0:
        coeffs[0] = 1.0
        return BandFunction(lmax, coeffs)
    a = 2.0 * math.pi * r * vnorm
    vhat = v / vnorm
    ls, ms = lm_arrays(lmax)
    ynodes = basis_matrix(vhat[None, :], lmax)[0]
    jl = _sp.spherical_jn(ls, a)
    coeffs = ((-1j) ** ls) * jl * np.conj(ynodes)
    return BandFunction(lmax, coeffs)


def plane_wave_l2_tail(r: float, vnorm: float, k: int, extra: int = 300) -> float:
    """L2 mass of omega_r beyond degree k: sqrt(sum_{l>k} (2l+1) j_l(a)^2).

    A sharp empirical truncation indicator; the Taylor bound above is the
    certified but often vacuous alternative at large r |v|.
    """
    a = 2.0 * math.pi * r * vnorm
    if a == 0.0:
        return 0.0
    lhi = int(max(k + extra, a + 200))
    ls = np.arange(k + 1, lhi + 1)
    jl = _sp.spherical_jn(ls, a)
    return float(math.sqrt(np.sum((2 * ls + 1) * jl**2)))


# ---------------------------------------------------------------------------
# Dimensions and dyadic block bookkeeping

def dim_H(d: int, j: int) -> int:
    """Dimension of the degree-j spherical harmonics on S^{d-1}."""
    if d < 2 or j < 0:
        raise ValueError("need d >= 2 and j >= 0")
    if j == 0:
        return 1
    if j == 1:
        return d
    return math.comb(d + j - 1, d - 1) - math.comb(d + j - 3, d - 1)


def n0(r: float, L: float) -> int:
    """Dyadic anchor: least n with 2^n >= 100 r sqrt(L)."""
    if r <= 0 or L < 1:
        raise ValueError("need r > 0 and L >= 1")
    return int(math.floor(math.log2(100.0 * r * math.sqrt(L)))) + 1


@dataclass
class BlockSpec:
    """Dyadic degree blocks: [0, 2^n0], then (2^(i+n0-1), 2^(i+n0)]."""

    n0: int
    ranges: list  # of (lo, hi) inclusive degree ranges partitioning [0, Lmax]

    @property
    def nblocks(self) -> int:
        return len(self.ranges)


def block_spec(r: float, L: float, lmax: int) -> BlockSpec:
    n = max(n0(r, L), 1)
    ranges = [(0, min(2**n, lmax))]
    i = 1
    while ranges[-1][1] < lmax:
        lo = 2 ** (i + n - 1) + 1
        hi = min(2 ** (i + n), lmax)
        ranges.append((lo, hi))
        i += 1
    return BlockSpec(n0=n, ranges=ranges)


def project_blocks(phi: BandFunction, spec: BlockSpec) -> list[BandFunction]:
    """Split phi into mutually orthogonal dyadic-degree components."""
    if spec.ranges[-1][1] < phi.Lmax:
        raise ValueError("block spec does not cover the band limit")
    out = []
    for lo, hi in spec.ranges:
        c = np.zeros_like(phi.coeffs)
        a = lo * lo
        b = min(hi + 1, phi.Lmax + 1) ** 2
        if a < len(c):
            c[a:b] = phi.coeffs[a:b]
        out.append(BandFunction(phi.Lmax, c))
    return out
