"""Hardy-type inequalities for nonlocal seminorms.

The half-space inequality weights ``|f|^p`` by the half-space tail ``w`` of
the kernel and needs the doubling bound ``w(s) <= beta w(2s)`` with
``beta < 2``.  Its explicit constant ``C1`` propagates to the full-space
version with weight ``L(|x|)`` and, through the concentration function,
to the embedding ``int |f|^p h_p(|x|) dx <~ ||f||^p``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import quadrature as quad
from .errors import BetaOutOfRange, IndexTooLow, OutOfRange, SupportViolation
from .grid import GridFunction, KernelCellMasses, indicator, lp_norm, pair_sum, seminorm_parts
from .kernel import (
    KernelSpec,
    Location,
    concentration_hp,
    doubling_beta,
    matuszewska_lower_index,
    slab_mass,
    tabulate_L,
    tabulate_w,
)
from .tabulated import TabulatedRadial

QUADRATURE_SLACK = 0.02
INDEX_WARN_MARGIN = 0.1


def hardy_constant(beta: float, p: float) -> float:
    """``C1 = (1 + 1 / (1 - (beta-1)^{1/p})) beta^{1/p}``."""
    if not 1.0 < beta < 2.0:
        raise BetaOutOfRange(f"beta = {beta} is outside (1, 2)")
    if p < 1:
        raise ValueError("p must be >= 1")
    return (1.0 + 1.0 / (1.0 - (beta - 1.0) ** (1.0 / p))) * beta ** (1.0 / p)


def dimension_exponent(d: int) -> int:
    """``N = ceil(log2 sqrt(d))``, the number of doublings from ``s/sqrt(d)`` to ``s``."""
    n = 0
    while 2.0**n < math.sqrt(d) * (1 - 1e-15):
        n += 1
    return n


def fullspace_constant(beta: float, p: float, d: int) -> float:
    """``2^{1+1/p} C1 (d beta^N)^{1/p}``."""
    N = dimension_exponent(d)
    return 2.0 ** (1.0 + 1.0 / p) * hardy_constant(beta, p) * (d * beta**N) ** (1.0 / p)


def generalized_inverse_V(w: TabulatedRadial, t: float) -> float:
    """``V(t) = inf{s >= 0 : w(s) <= t}`` on a nonincreasing tabulation.

    Each segment is a power law, so the crossing is solved in closed form.
    On a plateau the left endpoint is returned.  Beyond the table the
    power-law continuation is inverted, unless ``w.extrapolate`` is off.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    x, v = w.nodes, w.values
    if t < v[-1]:
        if not w.extrapolate:
            raise OutOfRange(f"t = {t} lies below the smallest tabulated value {v[-1]}")
        m = w._end_slope(left=False)
        if m >= 0:
            return math.inf
        return float(x[-1] * (t / v[-1]) ** (1.0 / m))
    if t >= v[0]:
        if t == v[0]:
            return float(x[0]) if not w.extrapolate else _left_plateau(w, t)
        if not w.extrapolate:
            return 0.0
        m = w._end_slope(left=True)
        if m >= 0:
            return 0.0
        return float(x[0] * (t / v[0]) ** (1.0 / m))
    i = int(np.argmax(v <= t))  # first node at or below t; i >= 1
    v0, v1, x0, x1 = v[i - 1], v[i], x[i - 1], x[i]
    if v1 == t:
        return float(x1) if v0 > t else float(x0)
    if v1 > 0:
        m = math.log(v1 / v0) / math.log(x1 / x0)
        return float(x0 * (t / v0) ** (1.0 / m))
    return float(x0 + (x1 - x0) * (v0 - t) / (v0 - v1))


def _left_plateau(w: TabulatedRadial, t: float) -> float:
    m = w._end_slope(left=True)
    return 0.0 if m == 0 else float(w.nodes[0])


@dataclass(frozen=True, eq=False)
class HardyContext:
    kernel: KernelSpec
    p: float
    w: TabulatedRadial
    beta: float

    def __post_init__(self) -> None:
        if not 1.0 < self.beta < 2.0:
            raise BetaOutOfRange(f"doubling constant beta = {self.beta} is outside (1, 2)")

    @property
    def d(self) -> int:
        return self.kernel.d

    @property
    def N(self) -> int:
        return dimension_exponent(self.d)

    @property
    def C1(self) -> float:
        return hardy_constant(self.beta, self.p)

    @property
    def dimension_constant(self) -> float:
        return fullspace_constant(self.beta, self.p, self.d)

    @classmethod
    def build(cls, kernel: KernelSpec, s_range: tuple[float, float] = (1e-6, 1e4),
              samples: int = 64, per_decade: int = 64) -> "HardyContext":
        """Tabulate ``w`` on ``s_range`` and estimate ``beta`` from ``samples`` ratios."""
        w = tabulate_w(kernel, s_range[0], s_range[1], per_decade=per_decade)
        lo, hi = s_range
        beta = doubling_beta(kernel, (lo, hi / 2.0), samples=samples, method="cap")
        return cls(kernel, kernel.p, w, beta)


@dataclass(frozen=True)
class DeltaReport:
    s: float
    delta: float
    annulus_mass: float
    expected_mass: float

    @property
    def within_half(self) -> bool:
        return self.delta <= 0.5 * self.s * (1 + 1e-9)

    @property
    def mass_relerr(self) -> float:
        return abs(self.annulus_mass - self.expected_mass) / self.expected_mass


def delta_step(ctx: HardyContext, s: float) -> DeltaReport:
    """``delta(s) = V(beta w(s))`` with the annulus-mass replay ``nu(delta < y_d < s)``."""
    ws = float(ctx.w(s))
    delta = generalized_inverse_V(ctx.w, ctx.beta * ws)
    mass = slab_mass(ctx.kernel, delta, s) if delta < s else 0.0
    return DeltaReport(s, delta, mass, (ctx.beta - 1.0) * ws)


@dataclass(frozen=True)
class HardyReport:
    """One replay of a Hardy inequality.

    ``lhs`` is the weighted integral ``int |f|^p weight``; ``rhs_tail`` and
    ``rhs_seminorm`` are the two root-form terms on the right, so the
    inequality reads ``lhs^{1/p} <= constant (rhs_tail + rhs_seminorm)``.
    """

    lhs: float
    rhs_tail: float
    rhs_seminorm: float
    constant: float
    p: float
    label: str = ""

    @property
    def ratio(self) -> float:
        rhs = self.constant * (self.rhs_tail + self.rhs_seminorm)
        if rhs == 0.0:
            return 0.0 if self.lhs == 0.0 else math.inf
        return self.lhs ** (1.0 / self.p) / rhs

    @property
    def passed(self) -> bool:
        return self.ratio <= 1.0 + QUADRATURE_SLACK


# -- cell integrals of radial weights ------------------------------------


def _radial_table(fn: Callable[[np.ndarray], np.ndarray] | TabulatedRadial, f: GridFunction) -> TabulatedRadial:
    if isinstance(fn, TabulatedRadial):
        return fn
    r = np.geomspace(f.h * 1e-8, 4.0 * f.X, 1024)
    return TabulatedRadial(r, np.asarray(fn(r), dtype=float))


def cell_integrals_1d(weight: TabulatedRadial, f: GridFunction, coordinate: bool = False) -> np.ndarray:
    """``int_cell W(|x|) dx`` for every 1D cell, exact on the power-law tabulation.

    With ``coordinate=True`` cells on the negative side get weight 0 (the
    weight is then a function of ``x`` on the positive half-line only).
    """
    half = f.n // 2
    edges = np.arange(half + 1) * f.h  # the grid is symmetric and has a node at 0
    right = weight.integrate_power_many(edges, 0.0)
    left = np.zeros(half) if coordinate else right[::-1]
    return np.concatenate([left, right])


def cell_integrals_2d(weight: TabulatedRadial, f: GridFunction, npts: int = 8) -> np.ndarray:
    """``int_cell W(|x|) dx`` for every 2D cell.

    Cells away from the origin use a tensor Gauss rule; the four cells with
    a corner at the origin use the polar form, with the angular measure of
    the quarter square at radius rho.
    """
    h = f.h
    t, wts = quad.gauss_legendre(npts)
    lo = -f.X + np.arange(f.n) * h
    xs = lo[:, None] + h * t[None, :]
    out = np.empty((f.n, f.n))
    for r0 in range(0, f.n, 64):
        R = np.hypot(xs[r0:r0 + 64, None, :, None], xs[None, :, None, :])
        out[r0:r0 + 64] = np.einsum("ijab,a,b->ij", weight(R), wts, wts) * h * h
    lh = math.log(h)

    def polar(u):
        u = np.asarray(u, dtype=float)
        rho = np.exp(u)
        ang = np.where(rho <= h, 0.5 * math.pi,
                       0.5 * math.pi - 2.0 * np.arccos(np.clip(h / rho, 0.0, 1.0)))
        return weight(rho) * rho * rho * ang

    corner = quad.integrate_log(polar, -math.inf, lh + 0.5 * math.log(2.0), breakpoints=(lh,)).value
    c = f.n // 2
    for i in (c - 1, c):
        for j in (c - 1, c):
            out[i, j] = corner
    return out


def weighted_integral(f: GridFunction, weight: TabulatedRadial, p: float) -> float:
    """``int |f|^p W(|x|) dx`` for the piecewise-constant ``f``."""
    cells = cell_integrals_1d(weight, f) if f.d == 1 else cell_integrals_2d(weight, f)
    return float((np.abs(f.values) ** p * cells).sum())


# -- inequality replays --------------------------------------------------


def _slab_mask(f: GridFunction, a: float) -> np.ndarray:
    # Cells of {0 < x_d < a}; x_d is the last coordinate.
    c = f.centers
    inside = (c > 0) & (c < a)
    if f.d == 1:
        return inside
    return np.broadcast_to(inside[None, :], (f.n, f.n)).copy()


def verify_halfspace_hardy(f: GridFunction, ctx: HardyContext, masses: KernelCellMasses, a: float,
                           label: str = "") -> HardyReport:
    """Replay of the half-space inequality on ``{0 < x_d < a}`` with constant ``C1``.

    LHS weights ``|f|^p`` by ``w(x_d)``; the seminorm is restricted to
    pairs with both points in the slab.
    """
    if a > f.X * (1 + 1e-12):
        raise SupportViolation("slab height a exceeds the box")
    slab = _slab_mask(f, a)
    if np.any((f.values != 0) & ~slab):
        raise SupportViolation("f is not supported in {0 < x_d < a}")
    p = ctx.p
    axis_grid = GridFunction.zeros(1, f.X, f.n)
    wcells = cell_integrals_1d(ctx.w, axis_grid, coordinate=True)
    if f.d == 1:
        lhs = float((np.abs(f.values) ** p * wcells).sum())
    else:
        # The weight depends on x_d only, so each cell contributes h * int w(x_d) dx_d.
        lhs = float((np.abs(f.values) ** p * wcells[None, :]).sum() * f.h)
    wa = float(ctx.w(a)) if math.isfinite(a) else 0.0
    tail = wa ** (1.0 / p) * lp_norm(f, p)
    semi = pair_sum(f, masses, p, region=slab) ** (1.0 / p)
    return HardyReport(lhs, tail, semi, ctx.C1, p, label)


def verify_fullspace_hardy(f: GridFunction, ctx: HardyContext, masses: KernelCellMasses,
                           L: TabulatedRadial | None = None, label: str = "") -> HardyReport:
    """Replay of ``(int |f|^p L(|x|))^{1/p} <= 2^{1+1/p} C1 (d beta^N)^{1/p} [f]``."""
    p = ctx.p
    if L is None:
        L = tabulate_L(ctx.kernel, f.h * 1e-8, 8.0 * f.X, per_decade=64)
    lhs = weighted_integral(f, L, p)
    semi = seminorm_parts(f, masses, p).total ** (1.0 / p)
    return HardyReport(lhs, 0.0, semi, ctx.dimension_constant, p, label)


def weight_check(f: GridFunction, ctx: HardyContext, masses: KernelCellMasses,
                 weight: Callable[[np.ndarray], np.ndarray], radii: np.ndarray | None = None,
                 L: TabulatedRadial | None = None, label: str = "") -> HardyReport:
    """Full-space replay with a weight comparable to ``L``.

    The constant is the full-space constant times ``(sup weight / L)^{1/p}``
    over ``radii``, which is how a two-sided comparison ``weight ~ L``
    enters the inequality.
    """
    p = ctx.p
    if L is None:
        L = tabulate_L(ctx.kernel, f.h * 1e-8, 8.0 * f.X, per_decade=64)
    if radii is None:
        radii = np.geomspace(f.h * 1e-6, 4.0 * f.X, 400)
    ratio = float(np.max(np.asarray(weight(radii)) / L(radii)))
    W = _radial_table(weight, f)
    lhs = weighted_integral(f, W, p)
    semi = seminorm_parts(f, masses, p).total ** (1.0 / p)
    return HardyReport(lhs, 0.0, semi, ctx.dimension_constant * ratio ** (1.0 / p), p, label)


def log_zero_order_weight(gamma: float, delta: float) -> Callable[[np.ndarray], np.ndarray]:
    """``log^gamma(1 + r^-delta) (log(1 + r^-delta) + 1)``."""

    def wfn(r):
        lg = np.log1p(np.asarray(r, dtype=float) ** (-delta))
        return lg**gamma * (lg + 1.0)

    return wfn


# -- embedding -----------------------------------------------------------


@dataclass(frozen=True)
class EmbeddingReport:
    lhs: float
    norm: float
    p: float
    label: str = ""

    @property
    def ratio(self) -> float:
        """``lhs / ||f||^p``, the p-homogeneous reading (scale invariant)."""
        return self.lhs / self.norm**self.p if self.norm > 0 else 0.0

    @property
    def ratio_as_printed(self) -> float:
        """``lhs / ||f||``, mixing homogeneity degrees as displayed."""
        return self.lhs / self.norm if self.norm > 0 else 0.0


def check_embedding_index(kernel: KernelSpec, decades: int = 6) -> float:
    """Lower index of the profile at zero; raises below ``-d-1``, warns near it."""
    est = matuszewska_lower_index(kernel.profile, Location.AT_ZERO, decades=decades)
    bound = -kernel.d - 1.0
    if est.index <= bound:
        raise IndexTooLow(f"lower index at zero {est.index:.4f} <= {bound}")
    if est.index <= bound + INDEX_WARN_MARGIN:
        warnings.warn(f"lower index at zero {est.index:.4f} is within {INDEX_WARN_MARGIN} of {bound}")
    return est.index


def hp_table(kernel: KernelSpec, r_min: float, r_max: float, per_decade: int = 16) -> TabulatedRadial:
    n = max(2, int(math.ceil(math.log10(r_max / r_min) * per_decade)) + 1)
    r = np.geomspace(r_min, r_max, n)
    return TabulatedRadial(r, np.array([concentration_hp(kernel, float(x)) for x in r]), monotone=True)


def verify_embedding(f: GridFunction, kernel: KernelSpec, masses: KernelCellMasses,
                     hp: TabulatedRadial | None = None, label: str = "") -> EmbeddingReport:
    """``int |f|^p h_p(|x|) dx`` against ``||f||_{W_p^nu}``."""
    check_embedding_index(kernel)
    p = kernel.p
    if hp is None:
        hp = hp_table(kernel, f.h * 1e-8, 8.0 * f.X)
    lhs = weighted_integral(f, hp, p)
    norm = lp_norm(f, p) + seminorm_parts(f, masses, p).total ** (1.0 / p)
    return EmbeddingReport(lhs, norm, p, label)


# -- regularized kernel --------------------------------------------------


@dataclass(frozen=True, eq=False)
class RegularizedKernel:
    """Monotone-regularized comparison kernel with an explicit doubling constant.

    ``kernel`` is the tabulated ``nu~``; ``comparability`` is
    ``sup(nu/nu~) * sup(nu~/nu)`` over the tabulated range and ``beta`` the
    doubling constant ``2^{max(a, b) - d}`` implied by the construction.
    """

    kernel: KernelSpec
    a: float
    b: float
    beta: float
    comparability: float


def regularize_kernel(kernel: KernelSpec, r_split: float = 1.0, decades: int = 8,
                      points_per_decade: int = 64) -> RegularizedKernel:
    """Build ``nu~`` from running extrema of ``r^b nu`` near zero and ``r^a nu`` near infinity.

    With ``b`` and ``a`` minus the lower indices at zero and at infinity,
    ``r^b nu~`` is nondecreasing below ``r_split / 2`` and ``r^a nu~`` is
    nonincreasing above ``r_split``; the middle is constant.  Both exponents
    must be below ``d + 1``.
    """
    d = kernel.d
    i0 = matuszewska_lower_index(kernel.profile, Location.AT_ZERO, decades=decades).index
    iinf = matuszewska_lower_index(kernel.profile, Location.AT_INFINITY, decades=decades).index
    b, a = -i0, -iinf
    if max(a, b) >= d + 1:
        raise IndexTooLow(f"lower indices ({i0:.3f}, {iinf:.3f}) do not exceed -d-1")
    lo, hi = math.log(r_split) - decades * math.log(10), math.log(r_split) + decades * math.log(10)
    u = np.linspace(lo, hi, int(2 * decades * points_per_decade) + 1)
    lnu = np.asarray(kernel.log_profile(u), dtype=float)
    out = np.empty_like(lnu)
    split2, split1 = math.log(r_split / 2.0), math.log(r_split)
    low = u < split2
    g2 = np.maximum.accumulate(b * u[low] + lnu[low])  # sup over (0, r] of r^b nu
    out[low] = g2 - b * u[low]
    mid = (u >= split2) & (u <= split1)
    top = u > split1
    g1 = np.minimum.accumulate((a * u[top] + lnu[top])[::-1])[::-1]  # inf over [r, inf) of r^a nu
    nu1 = g1 - a * u[top]
    level = out[low][-1] if low.any() else lnu[0]
    out[mid] = level
    if top.any():
        out[top] = nu1 - nu1[0] + level
    lt = out.copy()
    diff = lnu - lt
    comparability = float(math.exp(diff.max() - diff.min()))
    u0, u1 = u[0], u[-1]

    def log_tilde(x):
        x = np.asarray(x, dtype=float)
        inner = np.interp(x, u, lt)
        left = lt[0] - b * (x - u0)
        right = lt[-1] - a * (x - u1)
        return np.where(x < u0, left, np.where(x > u1, right, inner))

    tk = KernelSpec.custom(lambda r: np.exp(log_tilde(np.log(r))), d=d, p=kernel.p,
                           name=f"regularized:{kernel.digest()[:12]}", log_profile=log_tilde)
    return RegularizedKernel(tk, a, b, 2.0 ** (max(a, b) - d), comparability)


def verify_regularized_hardy(f: GridFunction, kernel: KernelSpec, masses: KernelCellMasses,
                             reg: RegularizedKernel | None = None, label: str = "") -> HardyReport:
    """Full-space ``L``-weighted replay through the regularized kernel.

    The constant is the full-space constant of ``nu~`` with its certified
    ``beta``, times ``comparability^{1/p}`` to return from ``nu~`` to ``nu``.
    """
    if reg is None:
        reg = regularize_kernel(kernel)
    p = kernel.p
    if not reg.beta < 2.0:
        raise BetaOutOfRange(f"regularized beta = {reg.beta} is not below 2")
    beta = max(reg.beta, 1.0 + 1e-12)
    L = tabulate_L(kernel, f.h * 1e-8, 8.0 * f.X, per_decade=64)
    lhs = weighted_integral(f, L, p)
    semi = seminorm_parts(f, masses, p).total ** (1.0 / p)
    const = fullspace_constant(beta, p, kernel.d) * reg.comparability ** (1.0 / p)
    return HardyReport(lhs, 0.0, semi, const, p, label)


def double_log_weight(beta: float, gamma: float) -> Callable[[np.ndarray], np.ndarray]:
    """``log^{beta+1}(2 + 1/r) / log^{gamma-1}(2 + r)`` (``log log(2 + 1/r)`` when ``beta = -1``)."""

    def wfn(r):
        r = np.asarray(r, dtype=float)
        near = np.log(2.0 + 1.0 / r)
        head = np.log(near) if beta == -1.0 else near ** (beta + 1.0)
        return head / np.log(2.0 + r) ** (gamma - 1.0)

    return wfn


# -- test-function corpus ------------------------------------------------


def random_piecewise_linear(d: int, X: float, n: int, rng: np.random.Generator, lo: float, hi: float,
                            knots: int = 6) -> GridFunction:
    """Nonnegative piecewise-linear profile on ``(lo, hi)`` in the last coordinate, zero outside.

    In 2D the profile is multiplied by a tent in the first coordinate.
    """
    g = GridFunction.zeros(d, X, n)
    xs = np.linspace(lo, hi, knots)
    ys = rng.uniform(0.0, 1.0, knots)
    ys[0] = ys[-1] = 0.0
    mesh = g.mesh()
    last = mesh[-1]
    vals = np.where((last > lo) & (last < hi), np.interp(last, xs, ys), 0.0)
    if d == 2:
        vals = vals * np.clip(1.0 - np.abs(mesh[0]) / (0.5 * X), 0.0, 1.0)
    return g.like(vals)


def tensor_bump(d: int, X: float, n: int, r: float) -> GridFunction:
    """Product of the ramps ``clip(2 - |x_i|/r, 0, 1)``."""
    g = GridFunction.zeros(d, X, n)
    vals = np.ones(g.values.shape)
    for m in g.mesh():
        vals = vals * np.clip(2.0 - np.abs(m) / r, 0.0, 1.0)
    return g.like(vals)


def hardy_corpus(d: int, X: float, n: int, seed: int = 42, random_count: int = 4,
                 slab: float | None = None) -> list[tuple[str, GridFunction]]:
    """Labelled test functions: zero, indicators, tensor bumps and random piecewise-linear ones.

    With ``slab`` set, every member is supported in ``{0 < x_d < slab}``.
    """
    rng = np.random.default_rng(seed)
    out: list[tuple[str, GridFunction]] = [("zero", GridFunction.zeros(d, X, n))]
    if slab is None:
        if d == 1:
            out.append(("interval(0:1)", indicator(1, X, n, lambda x: (x > 0) & (x < 1))))
            out.append(("interval(-2:-0.5)", indicator(1, X, n, lambda x: (x > -2) & (x < -0.5))))
        else:
            out.append(("disk(r=1)", indicator(2, X, n, lambda x, y: x * x + y * y < 1.0)))
            out.append(("disk(r=0.5)", indicator(2, X, n, lambda x, y: x * x + y * y < 0.25)))
        for r in (0.5, 1.0):
            out.append((f"tensor_bump({r!r})", tensor_bump(d, X, n, r)))
        lo, hi = -0.5 * X, 0.5 * X
    else:
        lo, hi = 0.0, slab
        if d == 1:
            top = min(1.0, slab)
            out.append((f"interval(0:{top!r})", indicator(1, X, n, lambda x: (x > 0) & (x < top))))
    for k in range(random_count):
        out.append((f"random_pl[{k}]", random_piecewise_linear(d, X, n, rng, lo, hi)))
    return out
