"""Group arithmetic for rotations, rigid motions and contracting similarities of R^d.

Rotations are stored as dense orthonormal matrices so everything is
dimension-generic.  Long products of isometries are re-orthonormalized by
polar projection every REORTHO_EVERY compositions to keep roundoff from
accumulating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-12
REORTHO_EVERY = 64


class DimensionMismatchError(ValueError):
    """Operands live in different ambient dimensions."""


def _polar_project(m: np.ndarray) -> np.ndarray:
    """Nearest special-orthogonal matrix in Frobenius norm."""
    u, _, vt = np.linalg.svd(m)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1.0
        r = u @ vt
    return r


@dataclass(frozen=True)
class Rotation:
    """Element of SO(d), stored as an orthonormal matrix with det +1."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        d = m.shape[0]
        if m.shape != (d, d):
            raise ValueError("rotation matrix must be square")
        if np.max(np.abs(m.T @ m - np.eye(d))) > 1e-9:
            raise ValueError("matrix is not orthonormal")
        if abs(np.linalg.det(m) - 1.0) > 1e-9:
            raise ValueError("matrix is not special orthogonal (det != +1)")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @staticmethod
    def identity(d: int) -> "Rotation":
        return Rotation(np.eye(d))

    @staticmethod
    def from_axis_angle(axis, angle: float) -> "Rotation":
        """d=3 rotation about `axis` by `angle` radians (Rodrigues)."""
        a = np.asarray(axis, dtype=float)
        a = a / np.linalg.norm(a)
        k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
        m = np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)
        return Rotation(_polar_project(m))

    def __matmul__(self, other: "Rotation") -> "Rotation":
        if self.dim != other.dim:
            raise DimensionMismatchError("rotation dimensions differ")
        return Rotation(_polar_project(self.matrix @ other.matrix))

    def transpose(self) -> "Rotation":
        return Rotation(self.matrix.T.copy())


@dataclass(frozen=True)
class Isometry:
    """Rigid motion x -> v + rot(x) of R^d."""

    v: np.ndarray
    rot: Rotation
    # compositions since the rotation part was last projected back to SO(d)
    _age: int = field(default=0, compare=False)

    def __post_init__(self):
        vv = np.asarray(self.v, dtype=float)
        object.__setattr__(self, "v", vv)
        if vv.shape != (self.rot.dim,):
            raise DimensionMismatchError("translation/rotation dimension mismatch")

    @property
    def dim(self) -> int:
        return self.rot.dim

    @staticmethod
    def identity(d: int) -> "Isometry":
        return Isometry(np.zeros(d), Rotation.identity(d))


@dataclass(frozen=True)
class Similarity:
    """Contraction x -> lam * rot(x) + v, with 0 < lam <= 1."""

    lam: float
    rot: Rotation
    v: np.ndarray

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("contraction ratio must be in (0, 1]")
        vv = np.asarray(self.v, dtype=float)
        object.__setattr__(self, "v", vv)
        if vv.shape != (self.rot.dim,):
            raise DimensionMismatchError("translation/rotation dimension mismatch")

    @property
    def dim(self) -> int:
        return self.rot.dim

    def to_isometry(self) -> Isometry:
        """Drop the contraction ratio: x -> rot(x) + v (the lam -> 1 projection)."""
        return Isometry(self.v, self.rot)


def compose(g1: Isometry, g2: Isometry) -> Isometry:
    """(v1, t1)(v2, t2) = (v1 + t1 v2, t1 t2)."""
    if g1.dim != g2.dim:
        raise DimensionMismatchError("isometry dimensions differ")
    m = g1.rot.matrix @ g2.rot.matrix
    age = g1._age + g2._age + 1
    if age >= REORTHO_EVERY:
        m = _polar_project(m)
        age = 0
    return Isometry(g1.v + g1.rot.matrix @ g2.v, Rotation(m), age)


def inverse(g: Isometry) -> Isometry:
    """g^{-1}(x) = -rot^{-1} v + rot^{-1} x."""
    rt = g.rot.matrix.T
    return Isometry(-(rt @ g.v), Rotation(rt.copy()), g._age)


def apply(g: Isometry, x) -> np.ndarray:
    """g(x) = v + rot(x); x may carry leading batch axes."""
    x = np.asarray(x, dtype=float)
    return x @ g.rot.matrix.T + g.v


def compose_similarity(k1: Similarity, k2: Similarity) -> Similarity:
    if k1.dim != k2.dim:
        raise DimensionMismatchError("similarity dimensions differ")
    m = _polar_project(k1.rot.matrix @ k2.rot.matrix)
    return Similarity(k1.lam * k2.lam, Rotation(m), k1.v + k1.lam * (k1.rot.matrix @ k2.v))


def apply_similarity(k: Similarity, x) -> np.ndarray:
    """k(x) = lam * rot(x) + v; scales all distances by exactly lam."""
    x = np.asarray(x, dtype=float)
    return k.lam * (x @ k.rot.matrix.T) + k.v


def similarity_fixed_point(k: Similarity) -> np.ndarray:
    """Unique fixed point of a strict contraction (lam < 1)."""
    if k.lam >= 1.0:
        raise ValueError("fixed point requires lam < 1")
    d = k.dim
    return np.linalg.solve(np.eye(d) - k.lam * k.rot.matrix, k.v)


def axis_rotation(axis, angle: float) -> Rotation:
    """Rotation of R^3 by `angle` about the unit vector along `axis`."""
    k = np.asarray(axis, dtype=float)
    if k.shape != (3,):
        raise ValueError("axis must be a 3-vector")
    n = np.linalg.norm(k)
    if n == 0.0:
        raise ValueError("axis must be nonzero")
    k = k / n
    kx = np.array([[0.0, -k[2], k[1]],
                   [k[2], 0.0, -k[0]],
                   [-k[1], k[0], 0.0]])
    m = np.eye(3) + math.sin(angle) * kx + (1.0 - math.cos(angle)) * (kx @ kx)
    return Rotation(_polar_project(m))


def haar_rotation(rng: np.random.Generator, d: int = 3) -> Rotation:
    """Haar-distributed rotation via QR of a Gaussian matrix."""
    if d < 2:
        raise ValueError("d must be >= 2")
    z = rng.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, [0, 1]] = q[:, [1, 0]]
    return Rotation(q)


def rotation_distance(r1: Rotation, r2: Rotation) -> float:
    """Operator norm of R1 - R2; a bi-invariant metric on SO(d)."""
    return float(np.linalg.norm(r1.matrix - r2.matrix, ord=2))
