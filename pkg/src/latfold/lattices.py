"""Scaled lattices, exact nearest-point quantizers, and the modulo fold.

Supported families (all normalized to inradius ``lam``, i.e. minimum
distance ``2*lam``):

* ``"zn"``  -- cubic lattice ``2*lam * Z^n``, any ``n >= 1``
* ``"a2"``  -- hexagonal lattice in 2D
* ``"dn"``  -- checkerboard lattice (even coordinate sum), ``n >= 2``
* ``"e8"``  -- the 8-dimensional even unimodular lattice

All nearest-point routines are exact and vectorized: they accept a single
vector ``(n,)`` or a batch ``(m, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product

import numpy as np

ZN = "zn"
A2 = "a2"
DN = "dn"
E8 = "e8"

FAMILIES = (ZN, A2, DN, E8)


class ConfigurationError(ValueError):
    """Invalid lattice family / dimension / parameter combination."""


class UnsupportedLatticeError(ValueError):
    """Requested operation is not available for this lattice family."""


@dataclass(frozen=True)
class ScaledLattice:
    """A lattice family instantiated at dimension ``n`` and inradius ``lam``.

    ``basis`` holds the generator matrix (columns are basis vectors),
    ``d_min`` the minimum distance (= ``2*lam``) and ``volume`` the
    fundamental cell volume ``|det basis|``.
    """

    family: str
    n: int
    lam: float
    basis: np.ndarray
    d_min: float
    volume: float

    def __post_init__(self):
        self.basis.setflags(write=False)

    @property
    def inradius(self) -> float:
        return self.lam

    @property
    def unit_scale(self) -> float:
        """Scale factor from unit-lattice coordinates to signal units."""
        if self.family == ZN:
            return 2.0 * self.lam
        if self.family in (DN, E8):
            return self.lam * np.sqrt(2.0)
        raise UnsupportedLatticeError(f"no scalar unit scale for {self.family}")


def _unit_dn_basis(n: int) -> np.ndarray:
    # columns: e1+e2, then e_{i-1} - e_i; |det| = 2
    B = np.zeros((n, n))
    B[0, 0] = B[1, 0] = 1.0
    for i in range(1, n):
        B[i - 1, i] = 1.0
        B[i, i] = -1.0
    return B


def _unit_e8_basis() -> np.ndarray:
    # even-coordinate construction: D8 generators plus the half vector
    B = np.zeros((8, 8))
    B[0, 0] = 2.0
    for i in range(1, 7):
        B[i - 1, i] = -1.0
        B[i, i] = 1.0
    B[:, 7] = 0.5
    return B


def make_lattice(family: str, n: int, lam: float) -> ScaledLattice:
    """Build a ScaledLattice with inradius ``lam`` (so ``d_min = 2*lam``)."""
    if lam <= 0:
        raise ConfigurationError(f"inradius must be positive, got {lam}")
    if family == ZN:
        if n < 1:
            raise ConfigurationError("zn requires n >= 1")
        basis = 2.0 * lam * np.eye(n)
        volume = (2.0 * lam) ** n
    elif family == A2:
        if n != 2:
            raise ConfigurationError("a2 requires n = 2")
        basis = 2.0 * lam * np.array([[1.0, 0.5], [0.0, np.sqrt(3.0) / 2.0]])
        volume = 2.0 * np.sqrt(3.0) * lam * lam
    elif family == DN:
        if n < 2:
            raise ConfigurationError("dn requires n >= 2")
        s = lam * np.sqrt(2.0)
        basis = s * _unit_dn_basis(n)
        volume = 2.0 * s**n
    elif family == E8:
        if n != 8:
            raise ConfigurationError("e8 requires n = 8")
        s = lam * np.sqrt(2.0)
        basis = s * _unit_e8_basis()
        volume = s**8
    else:
        raise ConfigurationError(f"unknown lattice family {family!r}")
    return ScaledLattice(family=family, n=n, lam=float(lam), basis=basis,
                         d_min=2.0 * float(lam), volume=float(volume))


def _round_half_toward_zero(u: np.ndarray) -> np.ndarray:
    # exact .5 ties go to the integer of smaller absolute value
    return np.copysign(np.ceil(np.abs(u) - 0.5), u)


def nearest_point_zn(x, scale: float) -> np.ndarray:
    """Nearest point of ``scale * Z^n``; half ties round toward zero."""
    x = np.asarray(x, dtype=float)
    return scale * _round_half_toward_zero(x / scale)


def _q_dn_unit(u: np.ndarray) -> np.ndarray:
    """Nearest point of unit D_n for batched input (m, n)."""
    f = _round_half_toward_zero(u)
    delta = u - f
    j = np.argmax(np.abs(delta), axis=-1)        # furthest ties -> lowest index
    rows = np.arange(u.shape[0])
    dj = delta[rows, j]
    fj = f[rows, j]
    # flip toward the second-nearest integer; exact integers flip toward zero
    step = np.where(dj > 0, 1.0,
                    np.where(dj < 0, -1.0,
                             np.where(fj > 0, -1.0,
                                      np.where(fj < 0, 1.0, 1.0))))
    g = f.copy()
    g[rows, j] = fj + step
    odd = np.abs(f.sum(axis=-1)) % 2 > 0.5
    return np.where(odd[:, None], g, f)


def nearest_point_dn(x, scale: float) -> np.ndarray:
    """Nearest point of the scaled checkerboard lattice, O(n) per vector.

    Rounds every coordinate, and if the coordinate sum is odd re-rounds the
    coordinate furthest from an integer in the opposite direction.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    u = np.atleast_2d(x) / scale
    out = scale * _q_dn_unit(u)
    return out[0] if single else out


def nearest_point_e8(x, scale: float) -> np.ndarray:
    """Nearest point of scaled E8 via the two-coset D8 decoder.

    Decodes in D8 and in D8 + (1/2, ..., 1/2) and keeps the closer
    candidate; exact distance ties keep the integer-coset candidate.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    u = np.atleast_2d(x) / scale
    if u.shape[-1] != 8:
        raise ConfigurationError("e8 nearest point needs 8-vectors")
    c1 = _q_dn_unit(u)
    c2 = _q_dn_unit(u - 0.5) + 0.5
    d1 = ((u - c1) ** 2).sum(axis=-1)
    d2 = ((u - c2) ** 2).sum(axis=-1)
    out = scale * np.where((d1 <= d2)[:, None], c1, c2)
    return out[0] if single else out


# integer offsets tried around floor(basis coords); covers the four corner
# candidates and their hexagonal neighbors
_A2_OFFSETS = np.array([(i, j) for i in (-1, 0, 1, 2) for j in (-1, 0, 1, 2)],
                       dtype=float)


def nearest_point_a2(x, lattice: ScaledLattice) -> np.ndarray:
    """Exact nearest point of the hexagonal lattice by candidate enumeration.

    Enumerates integer basis coordinates around ``floor(B^{-1} x)`` and
    returns the closest lattice point; distance ties resolve to the
    candidate of smaller norm.
    """
    if lattice.family != A2:
        raise ConfigurationError("nearest_point_a2 requires an a2 lattice")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    B = lattice.basis
    k = xb @ np.linalg.inv(B).T
    cand_k = np.floor(k)[:, None, :] + _A2_OFFSETS[None, :, :]
    cand = cand_k @ B.T                           # (m, 16, 2)
    d2 = ((xb[:, None, :] - cand) ** 2).sum(axis=-1)
    dmin = d2.min(axis=1, keepdims=True)
    tol = 1e-9 * lattice.lam * lattice.lam
    norms = np.where(d2 <= dmin + tol, (cand**2).sum(axis=-1), np.inf)
    pick = np.argmin(norms, axis=1)
    out = cand[np.arange(xb.shape[0]), pick]
    return out[0] if single else out


def nearest_point(x, lattice: ScaledLattice) -> np.ndarray:
    """Nearest lattice point, dispatching on the family."""
    if lattice.family == ZN:
        return nearest_point_zn(x, lattice.unit_scale)
    if lattice.family == DN:
        return nearest_point_dn(x, lattice.unit_scale)
    if lattice.family == E8:
        return nearest_point_e8(x, lattice.unit_scale)
    if lattice.family == A2:
        return nearest_point_a2(x, lattice)
    raise UnsupportedLatticeError(lattice.family)


def fold(x, lattice: ScaledLattice):
    """Lattice modulo: returns ``(residue, offset)`` with ``x = residue + offset``.

    The offset is the nearest lattice point and the residue lies in the
    closed Voronoi cell of the origin.
    """
    x = np.asarray(x, dtype=float)
    offset = nearest_point(x, lattice)
    return x - offset, offset


def lattice_coords(lattice: ScaledLattice, v) -> np.ndarray:
    """Real-valued basis coordinates ``k`` with ``basis @ k = v`` (row-wise)."""
    v = np.asarray(v, dtype=float)
    return np.linalg.solve(lattice.basis, np.atleast_2d(v).T).T.reshape(v.shape)


def is_lattice_point(lattice: ScaledLattice, v, rtol: float = 1e-9) -> bool:
    """Membership test: basis coordinates integral to relative tolerance."""
    k = lattice_coords(lattice, v)
    return bool(np.all(np.abs(k - np.round(k)) <= rtol * np.maximum(1.0, np.abs(k))))


def snap_to_lattice(lattice: ScaledLattice, v) -> np.ndarray:
    """Round basis coordinates to integers and map back (exact cleanup)."""
    v = np.asarray(v, dtype=float)
    k = np.round(np.linalg.solve(lattice.basis, np.atleast_2d(v).T))
    out = (lattice.basis @ k).T
    return out.reshape(v.shape)


def relevant_vectors(lattice: ScaledLattice) -> np.ndarray:
    """Minimal vectors defining the Voronoi facets (comparator directions).

    Counts: 2n for the cubic lattice, 6 for the hexagon, 24 for D4 and 240
    for E8. The set is closed under negation and every vector has norm
    ``2*lam``.
    """
    lam = lattice.lam
    if lattice.family == ZN:
        eye = 2.0 * lam * np.eye(lattice.n)
        return np.vstack([eye, -eye])
    if lattice.family == A2:
        v1 = lattice.basis[:, 0]
        v2 = lattice.basis[:, 1]
        vs = np.array([v1, v2, v1 - v2])
        return np.vstack([vs, -vs])
    if lattice.family == DN:
        if lattice.n != 4:
            raise UnsupportedLatticeError(
                "relevant vectors implemented for dn only at n = 4")
        s = lattice.unit_scale
        vs = []
        for i, j in combinations(range(4), 2):
            for si, sj in product((1.0, -1.0), repeat=2):
                v = np.zeros(4)
                v[i], v[j] = si, sj
                vs.append(s * v)
        return np.array(vs)
    if lattice.family == E8:
        s = lattice.unit_scale
        vs = []
        for i, j in combinations(range(8), 2):
            for si, sj in product((1.0, -1.0), repeat=2):
                v = np.zeros(8)
                v[i], v[j] = si, sj
                vs.append(s * v)
        for signs in product((0.5, -0.5), repeat=8):
            if sum(1 for t in signs if t < 0) % 2 == 0:
                vs.append(s * np.array(signs))
        return np.array(vs)
    raise UnsupportedLatticeError(lattice.family)


def fold_iterative(x, lattice: ScaledLattice, max_steps: int = 100000) -> np.ndarray:
    """Comparator-style fold: subtract a facet vector while one is crossed.

    Repeatedly finds a relevant vector ``p`` with ``<p, r> > |p|^2 / 2`` and
    updates ``r <- r - p``. Each correction strictly decreases ``|r|``, so
    the loop terminates with ``r`` in the closed Voronoi cell and
    ``x - r`` in the lattice.
    """
    pv = relevant_vectors(lattice)
    half = 0.5 * (pv**2).sum(axis=1)
    eps = 1e-12 * lattice.d_min**2
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    r = np.atleast_2d(x).copy()
    active = np.arange(r.shape[0])
    for _ in range(max_steps):
        viol = r[active] @ pv.T - half[None, :]
        worst = np.argmax(viol, axis=1)
        crossed = viol[np.arange(active.size), worst] > eps
        if not crossed.any():
            break
        idx = active[crossed]
        r[idx] -= pv[worst[crossed]]
        active = idx
    else:
        raise RuntimeError("comparator fold failed to settle")
    return r[0] if single else r


def voronoi_cell_polygon(lattice: ScaledLattice) -> np.ndarray:
    """Vertices of the 2D Voronoi cell, ordered by angle (closed polygon).

    Each vertex is the intersection of two adjacent facet bisectors
    ``<p, x> = |p|^2 / 2``.
    """
    if lattice.n != 2:
        raise UnsupportedLatticeError("cell polygon available only in 2D")
    pv = relevant_vectors(lattice)
    order = np.argsort(np.arctan2(pv[:, 1], pv[:, 0]))
    pv = pv[order]
    verts = []
    m = len(pv)
    for i in range(m):
        a, b = pv[i], pv[(i + 1) % m]
        A = np.array([a, b])
        rhs = 0.5 * np.array([a @ a, b @ b])
        verts.append(np.linalg.solve(A, rhs))
    verts.append(verts[0])
    return np.array(verts)


def in_voronoi_cell(lattice: ScaledLattice, r, tol: float = 1e-9) -> bool:
    """Closed-cell test via the facet inequalities."""
    pv = relevant_vectors(lattice)
    half = 0.5 * (pv**2).sum(axis=1)
    r = np.atleast_2d(np.asarray(r, dtype=float))
    return bool(np.all(r @ pv.T <= half[None, :] + tol))
