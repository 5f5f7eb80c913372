"""Grid functions on boxes and the nonlocal seminorm.

A :class:`GridFunction` holds cell-averaged values on ``n^d`` congruent
cells tiling ``[-X, X]^d`` and is read as the piecewise-constant function
equal to those values on the cells and zero outside the box.  For such a
function the double integral

    int int |f(x+h) - f(x)|^p dx nu(dh)

is a lattice sum with weights ``m_k = int nu(h) Lambda(h/h_grid - k) dh``,
where ``Lambda`` is the tensor tent of width one cell.  :class:`KernelCellMasses`
holds these weights, so the seminorm is exact up to the quadrature of the
weights themselves.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.ndimage import maximum_filter1d

from . import quadrature as quad
from .errors import GeometryMismatch, SingularCellBudget
from .kernel import KernelSpec

MIN_POINTS = 8
MIN_ORIGIN_DEPTH = 6
MAX_ORIGIN_DEPTH = 200


@dataclass(frozen=True, eq=False)
class GridFunction:
    d: int
    X: float
    n: int
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if self.d not in (1, 2):
            raise ValueError("grid functions support d in {1, 2}")
        if self.n < MIN_POINTS or self.n % 2:
            raise ValueError(f"need an even n >= {MIN_POINTS} so that the origin is a cell vertex")
        if vals.shape != (self.n,) * self.d:
            raise ValueError(f"values must have shape {(self.n,) * self.d}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid values must be finite")

    @property
    def h(self) -> float:
        return 2.0 * self.X / self.n

    @property
    def centers(self) -> np.ndarray:
        return -self.X + (np.arange(self.n) + 0.5) * self.h

    def mesh(self) -> tuple[np.ndarray, ...]:
        c = self.centers
        if self.d == 1:
            return (c,)
        return tuple(np.meshgrid(c, c, indexing="ij"))

    def radius(self) -> np.ndarray:
        m = self.mesh()
        return np.abs(m[0]) if self.d == 1 else np.hypot(*m)

    def like(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.d, self.X, self.n, values)

    def same_geometry(self, other: "GridFunction") -> bool:
        return self.d == other.d and self.n == other.n and math.isclose(self.X, other.X)

    @classmethod
    def from_function(cls, fn: Callable, d: int, X: float, n: int) -> "GridFunction":
        """Sample ``fn`` at cell centers (``fn(x)`` in 1D, ``fn(x, y)`` in 2D)."""
        g = cls(d, X, n, np.zeros((n,) * d))
        return g.like(np.asarray(fn(*g.mesh()), dtype=float) * np.ones((n,) * d))

    @classmethod
    def zeros(cls, d: int, X: float, n: int) -> "GridFunction":
        return cls(d, X, n, np.zeros((n,) * d))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if self.d == 1:
                w.writerow(["x", "value"])
                for x, v in zip(self.centers, self.values):
                    w.writerow([repr(float(x)), repr(float(v))])
            else:
                w.writerow(["d", "extent", "n"])
                w.writerow([2, repr(float(self.X)), self.n])
                for row in self.values:
                    w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> "GridFunction":
        with open(path, encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if rows[0] == ["x", "value"]:
            data = np.array(rows[1:], dtype=float)
            n = data.shape[0]
            h = data[1, 0] - data[0, 0]
            return cls(1, n * h / 2.0, n, data[:, 1])
        X, n = float(rows[1][1]), int(rows[1][2])
        return cls(2, X, n, np.array(rows[2:], dtype=float))


def indicator(d: int, X: float, n: int, inside: Callable) -> GridFunction:
    """Indicator of the cells whose centers satisfy ``inside``."""
    g = GridFunction.zeros(d, X, n)
    return g.like(np.asarray(inside(*g.mesh()), dtype=bool).astype(float))


# -- kernel cell masses --------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelCellMasses:
    """Tent-weighted kernel masses for one grid geometry.

    ``masses[K + k]`` (1D) or ``masses[K + k1, K + k2]`` (2D) is the weight
    of lattice offset ``k``; the zero offset is stored as 0 because it only
    ever multiplies vanishing differences.  ``tail_mass`` is the total weight
    of offsets with ``|k|_inf > K``; ``origin_moment`` is the tent-weighted
    ``p``-moment of the zero offset, ``int nu(h) Lambda(h/h_grid) |h|^p dh``.
    ``out_mass[j]`` is the weight of offsets with ``|k|_inf <= K`` that leave
    the box from cell ``j``.
    """

    d: int
    X: float
    n: int
    K: int
    p: float
    masses: np.ndarray
    tail_mass: float
    origin_moment: float
    out_mass: np.ndarray
    kernel_digest: str = ""
    one_sided_tail: np.ndarray | None = field(default=None, repr=False)

    @property
    def h(self) -> float:
        return 2.0 * self.X / self.n

    @property
    def covers_box(self) -> bool:
        return self.K >= self.n - 1

    def mass(self, k) -> float:
        idx = tuple(self.K + np.atleast_1d(k))
        return float(self.masses[idx])

    def check_geometry(self, f: GridFunction) -> None:
        if not (f.d == self.d and f.n == self.n and math.isclose(f.X, self.X)):
            raise GeometryMismatch(
                f"masses built for d={self.d}, n={self.n}, X={self.X}; got d={f.d}, n={f.n}, X={f.X}"
            )

    def hp_estimate(self, r: float) -> float:
        """Lattice version of ``h_p(r)``, for cross-checking the kernel module."""
        if self.d == 1:
            k = np.abs(np.arange(-self.K, self.K + 1))
        else:
            a = np.arange(-self.K, self.K + 1)
            k = np.hypot(*np.meshgrid(a, a, indexing="ij"))
        w = np.minimum(1.0, (k * self.h / r) ** self.p)
        return float((self.masses * w).sum() + self.tail_mass + self.origin_moment / r**self.p)

    def save(self, path: str | Path) -> None:
        np.savez(
            path,
            meta=np.array([self.d, self.X, self.n, self.K, self.p, self.tail_mass, self.origin_moment]),
            masses=self.masses,
            out_mass=self.out_mass,
            one_sided_tail=self.one_sided_tail if self.one_sided_tail is not None else np.zeros(0),
            digest=np.array(self.kernel_digest),
        )

    @classmethod
    def load(cls, path: str | Path) -> "KernelCellMasses":
        z = np.load(path)
        d, X, n, K, p, tail, om = z["meta"]
        ost = z["one_sided_tail"]
        return cls(int(d), float(X), int(n), int(K), float(p), z["masses"], float(tail), float(om),
                   z["out_mass"], str(z["digest"]), ost if ost.size else None)


def mass_cache_key(kernel: KernelSpec, X: float, n: int, K: int) -> str:
    text = f"{kernel.digest()}|n={n}|X={float(X)!r}|K={K}"
    return hashlib.sha256(text.encode()).hexdigest()[:24]


def build_cell_masses(
    kernel: KernelSpec, X: float, n: int, K_cut: int | None = None, cache_dir: str | Path | None = None
) -> KernelCellMasses:
    """Tent-weighted masses of ``kernel`` on the ``n^d`` grid over ``[-X, X]^d``.

    ``K_cut`` defaults to ``n - 1`` so that every in-box pair is resolved
    exactly.  With ``cache_dir`` the result is stored in (and reused from)
    a ``.npz`` sidecar keyed by kernel, ``n``, ``X`` and ``K_cut``.
    """
    d = kernel.d
    if d not in (1, 2):
        raise ValueError("cell masses support d in {1, 2}")
    K = n - 1 if K_cut is None else int(K_cut)
    if K < 1:
        raise ValueError("K_cut must be >= 1")
    if cache_dir is not None:
        path = Path(cache_dir) / f"masses_{mass_cache_key(kernel, X, n, K)}.npz"
        if path.exists():
            return KernelCellMasses.load(path)
    h = 2.0 * X / n
    if d == 1:
        m, tail, om, one_sided = _masses_1d(kernel, h, K)
    else:
        m, tail, om = _masses_2d(kernel, h, K)
        one_sided = None
    out = _out_mass(m, n, K)
    res = KernelCellMasses(d, float(X), n, K, kernel.p, m, tail, om, out, kernel.digest(), one_sided)
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        res.save(path)
    return res


def _masses_1d(kernel: KernelSpec, h: float, K: int):
    lh = math.log(h)

    def rising(u):  # nu(x) * x / h with x = e^u, times the Jacobian e^u
        u = np.asarray(u, dtype=float)
        return 0.5 * kernel.shell(u) * np.exp(u - lh)

    first = quad.integrate_log(rising, -math.inf, lh, rtol=1e-12)
    if not first.finite:
        raise SingularCellBudget("tent mass next to the origin diverges: int_0 x nu(x) dx = inf")
    # Cells [(j-1)h, jh] for j = 2 .. K+1 in scaled coordinate t = x/h.
    t, w = quad.gauss_legendre(12)
    j = np.arange(2, K + 2)
    x = (j[:, None] - 1 + t[None, :]) * h
    nu = kernel.profile(x) * h
    P = (nu * t[None, :] * w).sum(axis=1)  # rising weight x/h - (j-1)
    Q = (nu * (1.0 - t[None, :]) * w).sum(axis=1)  # falling weight j - x/h
    Pfull = np.concatenate([[first.value], P])  # P_1 .. P_{K+1}
    Qfull = np.concatenate([[np.nan], Q])  # Q_1 unused, Q_2 .. Q_{K+1}
    k = np.arange(1, K + 1)
    mk = Pfull[k - 1] + Qfull[k]
    far = quad.semi_infinite(lambda u: 0.5 * kernel.shell(u), math.log((K + 1) * h), +1)
    one_side_tail = Pfull[K] + far.value  # sum_{k > K} m_k
    m = np.concatenate([mk[::-1], [0.0], mk])

    def moment(u):
        u = np.asarray(u, dtype=float)
        return kernel.shell(u) * np.exp(kernel.p * u) * (1.0 - np.exp(u - lh))

    om = quad.integrate_log(moment, -math.inf, lh, rtol=1e-12)
    # One-sided suffix sums T(k) = sum_{k' >= k} m_k' for k = 1 .. K+1.
    suffix = np.concatenate([np.cumsum(mk[::-1])[::-1], [0.0]]) + one_side_tail
    return m, 2.0 * one_side_tail, om.value, suffix


def _square_moments(kernel: KernelSpec, h: float, i0: np.ndarray, j0: np.ndarray, size: float,
                    npts: int = 8):
    """Integrals of nu * {1, xi, eta, xi*eta} over squares of side ``size`` (cell units).

    ``(xi, eta)`` are the coordinates relative to the enclosing unit cell
    whose lower-left corner is ``(floor(i0), floor(j0))``; the squares are
    ``[i0, i0+size] x [j0, j0+size]`` in units of ``h``.
    """
    t, w = quad.gauss_legendre(npts)
    xs = i0[:, None] + size * t[None, :]
    ys = j0[:, None] + size * t[None, :]
    X = xs[:, :, None]
    Y = ys[:, None, :]
    W = (w[:, None] * w[None, :])[None] * size * size * h * h
    nu = kernel.profile(h * np.hypot(X, Y)) * W
    xi = X - np.floor(i0)[:, None, None]
    eta = Y - np.floor(j0)[:, None, None]
    return np.stack(
        [nu.sum(axis=(1, 2)), (nu * xi).sum(axis=(1, 2)), (nu * eta).sum(axis=(1, 2)),
         (nu * xi * eta).sum(axis=(1, 2))],
        axis=1,
    )


def _corner_square(kernel: KernelSpec, h: float, weights: list[Callable], rtol: float = 1e-12):
    """Integrals of nu * weight_i over the unit cell [0,1]^2 with nu singular at (0,0).

    The cell is split into quadrants; the three away from the corner use a
    tensor Gauss rule and the corner quadrant recurses.  Each weight must
    vanish at the corner.
    """
    t, w = quad.gauss_legendre(10)
    totals = np.zeros(len(weights))
    last = None
    size = 1.0
    for depth in range(MAX_ORIGIN_DEPTH):
        half = size / 2.0
        for ox, oy in ((half, 0.0), (0.0, half), (half, half)):
            X = (ox + half * t)[:, None]
            Y = (oy + half * t)[None, :]
            W = w[:, None] * w[None, :] * half * half * h * h
            nu = kernel.profile(h * np.hypot(X, Y)) * W
            for i, wf in enumerate(weights):
                totals[i] += float((nu * wf(X, Y)).sum())
        size = half
        # Size of the remaining corner estimated by one Gauss panel.
        X = (size * t)[:, None]
        Y = (size * t)[None, :]
        nu = kernel.profile(h * np.hypot(X, Y)) * (w[:, None] * w[None, :]) * size * size * h * h
        rem = np.array([float((nu * wf(X, Y)).sum()) for wf in weights])
        if depth + 1 >= MIN_ORIGIN_DEPTH and np.all(np.abs(rem) <= rtol * np.maximum(np.abs(totals), 1e-300)):
            return totals + rem
        last = rem
    if last is not None and np.all(np.abs(last) <= 1e-4 * np.abs(totals)):
        return totals + last
    raise SingularCellBudget("origin cell mass did not stabilize")


def _masses_2d(kernel: KernelSpec, h: float, K: int):
    a = np.arange(-K - 1, K + 1)
    I, J = np.meshgrid(a, a, indexing="ij")
    I = I.ravel().astype(float)
    J = J.ravel().astype(float)
    away = ~((np.abs(I + 0.5) < 1) & (np.abs(J + 0.5) < 1))
    mom = np.zeros((I.size, 4))
    sel = np.flatnonzero(away)
    chunk = 20000
    for s in range(0, sel.size, chunk):
        idx = sel[s:s + chunk]
        mom[idx] = _square_moments(kernel, h, I[idx], J[idx], 1.0)
    side = 2 * K + 3  # tent centers -K-1 .. K+1
    m = np.zeros((side, side))

    def deposit(ci, cj, vals):
        np.add.at(m, (ci + K + 1, cj + K + 1), vals)

    Ii, Ji = I[away].astype(int), J[away].astype(int)
    M0, Mx, My, Mxy = (mom[away, c] for c in range(4))
    deposit(Ii, Ji, M0 - Mx - My + Mxy)
    deposit(Ii + 1, Ji, Mx - Mxy)
    deposit(Ii, Ji + 1, My - Mxy)
    deposit(Ii + 1, Ji + 1, Mxy)
    # The four cells touching the origin: integrate on [0,1]^2 and reflect.
    # Local coordinates (s, t) measured from the origin corner.
    wts = [lambda s, t: s * (1 - t), lambda s, t: (1 - s) * t, lambda s, t: s * t]
    side_x, side_y, diag = _corner_square(kernel, h, wts)
    for sx in (1, -1):
        for sy in (1, -1):
            m[K + 1 + sx, K + 1] += side_x
            m[K + 1, K + 1 + sy] += side_y
            m[K + 1 + sx, K + 1 + sy] += diag
    m = m[1:-1, 1:-1].copy()
    m[K, K] = 0.0
    # Tail beyond |k|_inf > K: mass outside the square of half-width (K + 1/2) h.
    R = (K + 0.5) * h
    tail = _square_complement_mass(kernel, R)
    p = kernel.p
    om_parts = _corner_square(
        kernel, h, [lambda s, t: (1 - s) * (1 - t) * (h * np.hypot(s, t)) ** p]
    )
    return m, tail, 4.0 * float(om_parts[0])


def _square_complement_mass(kernel: KernelSpec, R: float) -> float:
    from .kernel import tail_mass_L

    outer = float(tail_mass_L(kernel, [math.sqrt(2) * R, 2 * R]).values[0])
    lr = math.log(R)

    def g(u):
        u = np.asarray(u, dtype=float)
        return np.exp(kernel.log_profile(u) + 2 * u) * 8.0 * np.arccos(np.clip(np.exp(lr - u), 0, 1))

    return outer + quad.quad_interval(g, lr, lr + 0.5 * math.log(2.0))


def _out_mass(m: np.ndarray, n: int, K: int) -> np.ndarray:
    """Weight of resolved offsets that leave the box, per cell."""
    d = m.ndim
    total = m.sum()
    # Offsets k with j + k inside the box: k in [-j, n-1-j] per axis, clipped to [-K, K].
    j = np.arange(n)
    lo = np.clip(-j, -K, K + 1) + K
    hi = np.clip(n - 1 - j, -K - 1, K) + K
    if d == 1:
        c = np.concatenate([[0.0], np.cumsum(m)])
        inside = c[hi + 1] - c[lo]
        return np.maximum(total - inside, 0.0)
    c = np.zeros((m.shape[0] + 1, m.shape[1] + 1))
    c[1:, 1:] = m.cumsum(0).cumsum(1)
    L0, H0 = lo[:, None], hi[:, None]
    L1, H1 = lo[None, :], hi[None, :]
    inside = c[H0 + 1, H1 + 1] - c[L0, H1 + 1] - c[H0 + 1, L1] + c[L0, L1]
    return np.maximum(total - inside, 0.0)


# -- norms ---------------------------------------------------------------


def lp_norm(f: GridFunction, p: float) -> float:
    if p < 1:
        raise ValueError("p must be >= 1")
    return float((np.sum(np.abs(f.values) ** p) * f.h**f.d) ** (1.0 / p))


@dataclass(frozen=True)
class SeminormParts:
    """``p``-th power contributions to ``[f]^p``."""

    interior: float
    exterior: float
    tail: float
    tail_exact: bool

    @property
    def total(self) -> float:
        return self.interior + self.exterior + self.tail

    @property
    def tail_fraction(self) -> float:
        """Share of the far-field term in the total."""
        return self.tail / self.total if self.total > 0 else 0.0

    @property
    def surrogate_fraction(self) -> float:
        """Share of the total that is not computed exactly (0 when the tail is exact)."""
        return 0.0 if self.tail_exact else self.tail_fraction


def _half_offsets(K: int, n: int, d: int):
    kmax = min(K, n - 1)
    if d == 1:
        for k in range(1, kmax + 1):
            yield (k,)
    else:
        for k1 in range(0, kmax + 1):
            for k2 in range(-kmax, kmax + 1):
                if k1 == 0 and k2 <= 0:
                    continue
                yield (k1, k2)


def _shifted_pair(v: np.ndarray, k: tuple[int, ...]):
    """Views ``(a, b)`` with ``a[j] = v[j]`` and ``b[j] = v[j + k]`` over the overlap."""
    sa, sb = [], []
    for ki in k:
        if ki >= 0:
            sa.append(slice(0, v.shape[0] - ki))
            sb.append(slice(ki, None))
        else:
            sa.append(slice(-ki, None))
            sb.append(slice(0, v.shape[0] + ki))
    return v[tuple(sa)], v[tuple(sb)]


def pair_sum(f: GridFunction, masses: KernelCellMasses, p: float, region: np.ndarray | None = None) -> float:
    """``sum_{k != 0} m_k sum_j |f_{j+k} - f_j|^p h^d`` over ordered in-box pairs.

    With ``region`` (a boolean mask) only pairs with both cells in the region
    are counted.
    """
    masses.check_geometry(f)
    v = f.values
    acc = 0.0
    K = masses.K
    for k in _half_offsets(K, f.n, f.d):
        mk = masses.masses[tuple(K + np.array(k))]
        if mk == 0.0:
            continue
        a, b = _shifted_pair(v, k)
        diff = np.abs(b - a) ** p
        if region is not None:
            ra, rb = _shifted_pair(region, k)
            diff = diff[ra & rb]
        acc += mk * float(diff.sum())
    return 2.0 * acc * f.h**f.d


def seminorm_parts(f: GridFunction, masses: KernelCellMasses, p: float) -> SeminormParts:
    masses.check_geometry(f)
    vp = np.abs(f.values) ** p
    hd = f.h**f.d
    interior = pair_sum(f, masses, p)
    exterior = 2.0 * float((vp * masses.out_mass).sum()) * hd
    if masses.covers_box:
        tail = 2.0 * masses.tail_mass * float(vp.sum()) * hd
    else:
        tail = 2.0**p * masses.tail_mass * float(vp.sum()) * hd
    # In 2D the far field beyond K is a square-complement approximation.
    return SeminormParts(interior, exterior, tail, masses.covers_box and masses.d == 1)


def seminorm(f: GridFunction, masses: KernelCellMasses, p: float) -> float:
    """``[f]_{W_p^nu}`` of the zero-extended piecewise-constant function."""
    return seminorm_parts(f, masses, p).total ** (1.0 / p)


def sobolev_norm(f: GridFunction, masses: KernelCellMasses, p: float) -> float:
    return lp_norm(f, p) + seminorm(f, masses, p)


def energy(f: GridFunction, masses: KernelCellMasses, p: float) -> float:
    """``||f||_p^p + [f]^p``, the separable functional used by capacities."""
    return lp_norm(f, p) ** p + seminorm_parts(f, masses, p).total


# -- maximal function ----------------------------------------------------


def _window_max(avg: np.ndarray, length: int, n: int) -> np.ndarray:
    # out[j] = max(avg[s]) over starts s with s <= j <= s + length - 1.
    pad = np.concatenate([np.full(length - 1, -np.inf), avg, np.full(length - 1, -np.inf)])
    # forward window [i, i + length - 1] in padded coordinates starting at i = j
    fw = maximum_filter1d(pad, size=length, origin=-(length // 2), mode="constant", cval=-np.inf)
    return fw[:n]


def maximal_function(f: GridFunction) -> GridFunction:
    """Uncentered maximal function over grid-aligned windows inside the box.

    1D uses every window; 2D uses squares with dyadic side lengths.
    """
    a = np.abs(f.values)
    n = f.n
    out = a.copy()
    if f.d == 1:
        c = np.concatenate([[0.0], np.cumsum(a)])
        for length in range(2, n + 1):
            avg = (c[length:] - c[:-length]) / length
            np.maximum(out, _window_max(avg, length, n), out=out)
        return f.like(out)
    c = np.zeros((n + 1, n + 1))
    c[1:, 1:] = a.cumsum(0).cumsum(1)
    length = 2
    while length <= n:
        s = c[length:, length:] - c[:-length, length:] - c[length:, :-length] + c[:-length, :-length]
        avg = s / length**2
        rows = np.stack([_window_max(avg[:, q], length, n) for q in range(avg.shape[1])], axis=1)
        full = np.stack([_window_max(rows[q], length, n) for q in range(n)], axis=0)
        np.maximum(out, full, out=out)
        length *= 2
    return f.like(out)


# -- min / max -----------------------------------------------------------


@dataclass(frozen=True)
class MinMaxReport:
    norm_max: float
    norm_min: float
    norm_f1: float
    norm_f2: float
    energy_max: float
    energy_min: float
    energy_f1: float
    energy_f2: float

    @property
    def energy_holds(self) -> bool:
        return self.energy_max + self.energy_min <= self.energy_f1 + self.energy_f2

    def norm_power_holds(self, p: float) -> bool:
        return self.norm_max**p + self.norm_min**p <= self.norm_f1**p + self.norm_f2**p


def minmax_pair(f1: GridFunction, f2: GridFunction, masses: KernelCellMasses, p: float) -> MinMaxReport:
    """Norms and energies of ``max(f1, f2)`` and ``min(f1, f2)`` next to those of ``f1, f2``."""
    if not f1.same_geometry(f2):
        raise GeometryMismatch("f1 and f2 live on different grids")
    g = f1.like(np.maximum(f1.values, f2.values))
    hmin = f1.like(np.minimum(f1.values, f2.values))
    return MinMaxReport(
        sobolev_norm(g, masses, p), sobolev_norm(hmin, masses, p),
        sobolev_norm(f1, masses, p), sobolev_norm(f2, masses, p),
        energy(g, masses, p), energy(hmin, masses, p), energy(f1, masses, p), energy(f2, masses, p),
    )
