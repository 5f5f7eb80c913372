"""Variational capacity on grids.

``Cap(E)`` is the minimum of

    J(f) = ||f||_p^p + [f]^p,    f = 1 on E (plus a one-cell margin), 0 <= f <= 1,

over grid functions vanishing outside the box.  For ``p = 2`` the problem
is a box-constrained quadratic and is solved by projected gradient with an
exact direct-solve cross-check; other ``p`` use L-BFGS-B (``p = 1`` with a
smoothed absolute value and continuation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, signal
from scipy.ndimage import binary_dilation

from .errors import GeometryViolation, MaskTouchesBoundary, NegativeFunction, NoConvergence
from .grid import (
    GridFunction,
    KernelCellMasses,
    build_cell_masses,
    lp_norm,
    maximal_function,
    seminorm_parts,
)
from .kernel import KernelSpec, concentration_hp

BOUNDARY_FRACTION = 0.25
DENSE_LIMIT = 2048


# -- sets ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SetMask:
    d: int
    X: float
    n: int
    mask: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "mask", m)
        if m.shape != (self.n,) * self.d:
            raise ValueError("mask shape does not match the grid")

    @property
    def h(self) -> float:
        return 2.0 * self.X / self.n

    @property
    def grid(self) -> GridFunction:
        return GridFunction(self.d, self.X, self.n, self.mask.astype(float))

    @property
    def empty(self) -> bool:
        return not self.mask.any()

    @property
    def measure(self) -> float:
        return float(self.mask.sum()) * self.h**self.d

    def _same(self, other: "SetMask") -> None:
        if (self.d, self.n) != (other.d, other.n) or not math.isclose(self.X, other.X):
            raise ValueError("masks live on different grids")

    def union(self, other: "SetMask") -> "SetMask":
        self._same(other)
        return SetMask(self.d, self.X, self.n, self.mask | other.mask)

    def intersection(self, other: "SetMask") -> "SetMask":
        self._same(other)
        return SetMask(self.d, self.X, self.n, self.mask & other.mask)

    def issubset(self, other: "SetMask") -> bool:
        self._same(other)
        return bool(np.all(~self.mask | other.mask))

    def dilate(self, cells: int = 1) -> "SetMask":
        if cells <= 0 or self.empty:
            return self
        st = np.ones((3,) * self.d, dtype=bool)
        return SetMask(self.d, self.X, self.n, binary_dilation(self.mask, st, iterations=cells))

    def shift(self, cells: Sequence[int]) -> "SetMask":
        m = self.mask
        for ax, c in enumerate(cells):
            if c:
                m = np.roll(m, c, axis=ax)
                sl = [slice(None)] * self.d
                sl[ax] = slice(0, c) if c > 0 else slice(c, None)
                if m[tuple(sl)].any():
                    raise GeometryViolation("shift wraps the set around the box")
        return SetMask(self.d, self.X, self.n, m)

    def boundary_distance(self) -> float:
        """Distance from the cells of the set to the boundary of the box."""
        if self.empty:
            return math.inf
        idx = np.nonzero(self.mask)
        lo = min(int(i.min()) for i in idx)
        hi = max(int(i.max()) for i in idx)
        return min(lo, self.n - 1 - hi) * self.h

    def check_admissible(self, fraction: float = BOUNDARY_FRACTION) -> None:
        if self.boundary_distance() < fraction * self.X * (1 - 1e-12):
            raise MaskTouchesBoundary(
                f"set comes within {self.boundary_distance():.4g} of the boundary; need {fraction * self.X:.4g}"
            )

    @classmethod
    def empty_set(cls, d: int, X: float, n: int) -> "SetMask":
        return cls(d, X, n, np.zeros((n,) * d, dtype=bool))

    @classmethod
    def ball(cls, d: int, X: float, n: int, r: float, center: Sequence[float] | float = 0.0) -> "SetMask":
        """Cells whose centers lie in the closed ball ``B(center, r)``."""
        g = GridFunction.zeros(d, X, n)
        c = np.broadcast_to(np.asarray(center, dtype=float), (d,))
        mesh = g.mesh()
        dist2 = sum((m - ci) ** 2 for m, ci in zip(mesh, c))
        return cls(d, X, n, dist2 <= r * r * (1 + 1e-12))

    @classmethod
    def box(cls, d: int, X: float, n: int, lo: Sequence[float] | float, hi: Sequence[float] | float) -> "SetMask":
        """Cells whose centers lie in the box ``[lo, hi]``."""
        g = GridFunction.zeros(d, X, n)
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (d,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (d,))
        m = np.ones((n,) * d, dtype=bool)
        for mesh, a, b in zip(g.mesh(), lo, hi):
            m &= (mesh >= a) & (mesh <= b)
        return cls(d, X, n, m)

    @classmethod
    def union_of_boxes(cls, d: int, X: float, n: int, boxes) -> "SetMask":
        out = cls.empty_set(d, X, n)
        for lo, hi in boxes:
            out = out.union(cls.box(d, X, n, lo, hi))
        return out


# -- energy --------------------------------------------------------------


class Energy:
    """``J(f) = h^d [sum a_j f_j^p + sum_{i != j} M_ij |f_i - f_j|^p]`` for ``f >= 0``.

    ``a_j = 1 + 2 O_j + c_tail`` collects the L^p term, the out-of-box mass
    and the far-field tail; ``M`` are the in-box pair weights.
    """

    def __init__(self, masses: KernelCellMasses, p: float):
        self.masses = masses
        self.p = p
        self.d = masses.d
        self.n = masses.n
        self.hd = masses.h**masses.d
        ct = 2.0 * masses.tail_mass if masses.covers_box else 2.0**p * masses.tail_mass
        self.a = 1.0 + ct + 2.0 * masses.out_mass
        # Row sums of the in-box weights: D_j = total resolved mass - O_j.
        self.D = masses.masses.sum() - masses.out_mass
        self._dense = None
        if self.d == 1 and self.n <= DENSE_LIMIT:
            K = masses.K
            i = np.arange(self.n)
            off = i[None, :] - i[:, None]
            M = np.where(np.abs(off) <= K, masses.masses[np.clip(off + K, 0, 2 * K)], 0.0)
            np.fill_diagonal(M, 0.0)
            self._dense = M

    # quadratic case ----------------------------------------------------
    def conv(self, v: np.ndarray) -> np.ndarray:
        """``(W v)_j = sum_{k != 0, j+k in box} m_k v_{j+k}``."""
        m = self.masses.masses
        K = self.masses.K
        full = signal.fftconvolve(v, m, mode="full")
        sl = tuple(slice(K, K + self.n) for _ in range(self.d))
        return full[sl]

    def quad_value(self, f: np.ndarray) -> float:
        return self.hd * float(((self.a + 2.0 * self.D) * f * f).sum() - 2.0 * (f * self.conv(f)).sum())

    def quad_grad(self, f: np.ndarray) -> np.ndarray:
        return self.hd * (2.0 * (self.a + 2.0 * self.D) * f - 4.0 * self.conv(f))

    def quad_matrix(self) -> np.ndarray:
        """Dense ``Q`` with ``J(f) = h^d f^T Q f`` (1D only)."""
        if self._dense is None:
            raise ValueError("dense quadratic form is available for 1D grids up to n = 2048")
        return np.diag(self.a + 2.0 * self.D) - 2.0 * self._dense

    # general p ---------------------------------------------------------
    def value_grad(self, f: np.ndarray, eps: float = 0.0) -> tuple[float, np.ndarray]:
        p = self.p
        fp = np.maximum(f, 0.0)
        val = float((self.a * fp**p).sum())
        grad = self.a * p * fp ** (p - 1.0) if p != 1 else self.a.copy()
        if self._dense is not None:
            diff = f[:, None] - f[None, :]
            phi, dphi = _pow_abs(diff, p, eps)
            val += float((self._dense * phi).sum())
            grad = grad + 2.0 * (self._dense * dphi).sum(axis=1)
        else:
            v, g = _pair_loop(f, self.masses, p, eps)
            val += v
            grad = grad + g
        return self.hd * val, self.hd * grad

    def value(self, f: np.ndarray) -> float:
        """Exact ``J(f)`` through the seminorm routine."""
        g = GridFunction(self.d, self.masses.X, self.n, f)
        return lp_norm(g, self.p) ** self.p + seminorm_parts(g, self.masses, self.p).total


def _pow_abs(x: np.ndarray, p: float, eps: float):
    if p == 1.0:
        if eps > 0:
            s = np.sqrt(x * x + eps * eps)
            return s - eps, x / s
        return np.abs(x), np.sign(x)
    ax = np.abs(x)
    return ax**p, p * ax ** (p - 1.0) * np.sign(x)


def _pair_loop(f: np.ndarray, masses: KernelCellMasses, p: float, eps: float):
    from .grid import _half_offsets, _shifted_pair

    K = masses.K
    val = 0.0
    grad = np.zeros_like(f)
    for k in _half_offsets(K, masses.n, masses.d):
        mk = masses.masses[tuple(K + np.array(k))]
        if mk == 0.0:
            continue
        a, b = _shifted_pair(f, k)
        ga, gb = _shifted_pair(grad, k)
        phi, dphi = _pow_abs(b - a, p, eps)
        val += 2.0 * mk * float(phi.sum())
        gb += 2.0 * mk * dphi
        ga -= 2.0 * mk * dphi
    return val, grad


# -- solver --------------------------------------------------------------


@dataclass
class SolverOptions:
    tol: float = 1e-8
    residual_tol: float = 1e-6
    max_iter: int = 50_000
    power_steps: int = 32
    margin: bool = True
    eps: float = 1e-4
    continuation: int = 2
    check_admissible: bool = True
    record_history: bool = False


@dataclass(frozen=True, eq=False)
class CapacityResult:
    value: float
    norm_value: float
    minimizer: GridFunction
    iterations: int
    final_step_relchange: float
    tail_fraction: float
    residual: float = 0.0
    method: str = ""
    history: tuple[float, ...] = field(default=(), repr=False)
    p: float = 1.0
    surrogate_fraction: float = 0.0

    @property
    def norm_power(self) -> float:
        """``(||f||_p + [f])^p`` at the minimizer of ``J``."""
        return self.norm_value**self.p


def constrained_set(E: SetMask, margin: bool = True) -> SetMask:
    """Cells forced to 1: ``E`` plus one ring of cells when ``margin`` is on."""
    return E.dilate(1) if margin else E


def _result(energy: Energy, f: np.ndarray, iters: int, relchange: float, residual: float, method: str,
            history=()) -> CapacityResult:
    g = GridFunction(energy.d, energy.masses.X, energy.n, f)
    parts = seminorm_parts(g, energy.masses, energy.p)
    lp = lp_norm(g, energy.p)
    value = lp**energy.p + parts.total
    norm = lp + parts.total ** (1.0 / energy.p)
    return CapacityResult(value, norm, g, iters, relchange, parts.tail_fraction, residual, method,
                          tuple(history), energy.p, parts.surrogate_fraction)


def compute_capacity(E: SetMask, masses: KernelCellMasses, p: float, opts: SolverOptions | None = None,
                     init: np.ndarray | None = None, energy: Energy | None = None) -> CapacityResult:
    """Minimize ``J`` over admissible ``f`` for the set ``E``.

    ``init`` (feasibility is enforced by clipping and resetting the
    constrained cells) defaults to the indicator of the constrained set.
    """
    opts = opts or SolverOptions()
    if (E.d, E.n) != (masses.d, masses.n) or not math.isclose(E.X, masses.X):
        raise ValueError("mask and cell masses live on different grids")
    if opts.check_admissible:
        E.check_admissible()
    energy = energy or Energy(masses, p)
    F = constrained_set(E, opts.margin).mask
    if not F.any():
        zero = np.zeros(F.shape)
        return _result(energy, zero, 0, 0.0, 0.0, "empty")
    f0 = F.astype(float) if init is None else np.clip(np.asarray(init, dtype=float), 0.0, 1.0)
    f0 = np.where(F, 1.0, f0)
    if p == 2.0:
        return _projected_gradient(energy, F, f0, opts)
    return _lbfgs(energy, F, f0, opts)


def _projected_gradient(energy: Energy, F: np.ndarray, f: np.ndarray, opts: SolverOptions) -> CapacityResult:
    free = ~F
    rng = np.random.default_rng(0)
    v = np.where(free, rng.random(F.shape), 0.0)
    lam = 0.0
    for _ in range(opts.power_steps):
        nv = np.linalg.norm(v)
        if nv == 0:
            break
        v = v / nv
        Hv = np.where(free, energy.quad_grad(v), 0.0)
        lam = float(np.linalg.norm(Hv))
        v = Hv
    L = 1.1 * max(lam, 1e-300)
    J = energy.quad_value(f)
    history = [J] if opts.record_history else []
    relchange = math.inf
    it = 0
    for it in range(1, opts.max_iter + 1):
        g = energy.quad_grad(f)
        while True:
            fn = np.where(free, np.clip(f - g / L, 0.0, 1.0), 1.0)
            Jn = energy.quad_value(fn)
            if Jn <= J * (1 + 1e-15) + 1e-300:
                break
            L *= 2.0  # power iteration underestimated the curvature
        relchange = abs(J - Jn) / max(abs(Jn), 1e-300)
        residual = float(np.linalg.norm(fn - f) * L / (1.0 + np.linalg.norm(g)))
        f, J = fn, Jn
        if opts.record_history:
            history.append(J)
        if relchange < opts.tol and residual < opts.residual_tol and it >= 10:
            break
    if relchange > 1e-6:
        raise NoConvergence(f"projected gradient stopped after {it} iterations with relchange {relchange:.2e}")
    g = energy.quad_grad(f)
    step = np.where(free, np.clip(f - g / L, 0.0, 1.0), 1.0) - f
    residual = float(np.linalg.norm(step) * L / (1.0 + np.linalg.norm(g)))
    return _result(energy, f, it, relchange, residual, "projected-gradient", history)


def _lbfgs(energy: Energy, F: np.ndarray, f0: np.ndarray, opts: SolverOptions) -> CapacityResult:
    free = ~F
    idx = np.flatnonzero(free.ravel())
    base = f0.ravel().copy()
    eps_schedule = [opts.eps / 10**i for i in range(opts.continuation + 1)] if energy.p == 1.0 else [0.0]
    x = base[idx]
    total_it = 0
    values: list[float] = []
    relchange = math.inf
    for eps in eps_schedule:
        def fun(z):
            full = base.copy()
            full[idx] = z
            val, grad = energy.value_grad(full.reshape(F.shape), eps)
            return val, grad.ravel()[idx]

        res = optimize.minimize(fun, x, jac=True, method="L-BFGS-B", bounds=[(0.0, 1.0)] * idx.size,
                                options={"maxiter": opts.max_iter, "ftol": 1e-13, "gtol": 1e-10,
                                         "maxcor": 20})
        x = np.clip(res.x, 0.0, 1.0)
        total_it += int(res.nit)
        full = base.copy()
        full[idx] = x
        values.append(energy.value(full.reshape(F.shape)))
        if len(values) >= 2:
            relchange = abs(values[-1] - values[-2]) / max(values[-1], 1e-300)
        elif res.success:
            relchange = 0.0
    if relchange > 1e-6 and energy.p != 1.0:
        raise NoConvergence(f"L-BFGS-B did not converge: relchange {relchange:.2e}")
    full = base.copy()
    full[idx] = x
    return _result(energy, full.reshape(F.shape), total_it, relchange, 0.0, "l-bfgs-b", values)


def direct_capacity(E: SetMask, masses: KernelCellMasses, margin: bool = True) -> tuple[float, np.ndarray, bool]:
    """Equality-constrained quadratic minimizer for ``p = 2`` (1D) by a dense solve.

    Returns ``(value, f, inactive)`` where ``inactive`` reports whether the
    solution already satisfies ``0 <= f <= 1``.
    """
    energy = Energy(masses, 2.0)
    Q = energy.quad_matrix()
    F = constrained_set(E, margin).mask
    U = ~F
    f = F.astype(float)
    if U.any() and F.any():
        rhs = -Q[np.ix_(U, F)] @ f[F]
        f[U] = np.linalg.solve(Q[np.ix_(U, U)], rhs)
    inactive = bool(np.all(f >= -1e-12) and np.all(f <= 1 + 1e-12))
    value = energy.hd * float(f @ Q @ f)
    return value, f, inactive


# -- bump and perimeter --------------------------------------------------


def bump_function(d: int, X: float, n: int, r: float, center: Sequence[float] | float = 0.0,
                  force: SetMask | None = None) -> GridFunction:
    """``Phi = 1`` on ``B(center, r)``, radial linear ramp to 0 on ``B(center, 2r)``.

    ``force`` marks cells set to 1 as well (the constrained margin ring),
    which keeps ``Phi`` feasible for the capacity problem.
    """
    g = GridFunction.zeros(d, X, n)
    c = np.broadcast_to(np.asarray(center, dtype=float), (d,))
    dist = np.sqrt(sum((m - ci) ** 2 for m, ci in zip(g.mesh(), c)))
    phi = np.clip(2.0 - dist / r, 0.0, 1.0)
    if force is not None:
        phi = np.where(force.mask, 1.0, phi)
    return g.like(phi)


def bump_upper_bound(r: float, masses: KernelCellMasses, p: float, center: Sequence[float] | float = 0.0,
                     margin: bool = True) -> float:
    """``J(Phi)`` for the bump of the ball ``B(center, r)``."""
    c = np.broadcast_to(np.asarray(center, dtype=float), (masses.d,))
    if np.any(np.abs(c) + 2 * r > masses.X * (1 + 1e-12)):
        raise GeometryViolation("the doubled ball does not fit inside the box")
    E = SetMask.ball(masses.d, masses.X, masses.n, r, center)
    phi = bump_function(masses.d, masses.X, masses.n, r, center, constrained_set(E, margin))
    return lp_norm(phi, p) ** p + seminorm_parts(phi, masses, p).total


def nu_perimeter(E: SetMask, masses: KernelCellMasses) -> float:
    """``Per(E) = sum_{j in E} sum_{k: j+k not in E} m_k h^d``, half of ``[1_E]_1``."""
    if E.empty:
        return 0.0
    return 0.5 * seminorm_parts(E.grid, masses, 1.0).total


@dataclass(frozen=True)
class CoareaReport:
    lhs: float
    rhs: float

    @property
    def relerr(self) -> float:
        if self.lhs == 0:
            return 0.0 if self.rhs == 0 else math.inf
        return abs(self.lhs - self.rhs) / self.lhs


def coarea_check(f: GridFunction, masses: KernelCellMasses, levels: int = 256) -> CoareaReport:
    """``||f||_1 + [f]_1`` against the midpoint sum of ``2 Per({f > t}) + |{f > t}|``."""
    if np.any(f.values < 0):
        raise NegativeFunction("coarea check needs f >= 0")
    lhs = lp_norm(f, 1.0) + seminorm_parts(f, masses, 1.0).total
    top = float(f.values.max())
    if top == 0.0:
        return CoareaReport(lhs, 0.0)
    dt = top / levels
    rhs = 0.0
    for i in range(levels):
        t = (i + 0.5) * dt
        S = SetMask(f.d, f.X, f.n, f.values > t)
        rhs += dt * (2.0 * nu_perimeter(S, masses) + S.measure)
    return CoareaReport(lhs, rhs)


# -- capacitary inequalities ---------------------------------------------


@dataclass(frozen=True)
class CapacitaryReport:
    lhs: float
    lhs_upper: float
    rhs: float
    levels: tuple[float, ...]
    capacities: tuple[float, ...]
    skipped: int

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else 0.0

    @property
    def ratio_upper(self) -> float:
        return self.lhs_upper / self.rhs if self.rhs > 0 else 0.0


def _level_capacity(values: np.ndarray, t: float, geom: GridFunction, masses, p, opts, cache,
                    closed: bool = False):
    S = SetMask(geom.d, geom.X, geom.n, values >= t if closed else values > t)
    key = S.mask.tobytes()
    if key in cache:
        return cache[key]
    if S.empty:
        cap = 0.0
    else:
        try:
            S.check_admissible()
        except MaskTouchesBoundary:
            cache[key] = None
            return None
        cap = compute_capacity(S, masses, p, opts).value
    cache[key] = cap
    return cap


def capacitary_inequality_check(f: GridFunction, masses: KernelCellMasses, p: float, t_levels: int = 16,
                                opts: SolverOptions | None = None, use_maximal: bool = False) -> CapacitaryReport:
    """Dyadic-level sums of ``Cap({|g| > t})`` against ``||f||^p`` (``g = f`` or ``Mf``).

    With ``t_i = max|g| 2^{i - L}`` and ``t_0 = 0``, ``lhs`` is
    ``sum_i Cap({|g| >= t_i}) (t_i^p - t_{i-1}^p)``, a lower sum for the
    integral (the closed set keeps the top band, which ``{|g| > max|g|}``
    would empty), and ``lhs_upper`` uses ``Cap({|g| > t_{i-1}})`` instead.
    Levels whose superlevel set comes too near the box boundary for an
    admissible solve are skipped and counted.
    """
    if t_levels > 16:
        raise ValueError("at most 16 levels (each level is a full capacity solve)")
    g = maximal_function(f) if use_maximal else f
    a = np.abs(g.values)
    rhs = (lp_norm(f, p) + seminorm_parts(f, masses, p).total ** (1.0 / p)) ** p
    top = float(a.max())
    if top == 0.0:
        return CapacitaryReport(0.0, 0.0, rhs, (), (), 0)
    t = [0.0] + [top * 2.0 ** (i - t_levels) for i in range(1, t_levels + 1)]
    cache: dict = {}
    caps = [_level_capacity(a, ti, g, masses, p, opts, cache, closed=True) for ti in t[1:]]
    open_caps = [_level_capacity(a, ti, g, masses, p, opts, cache) for ti in t[:-1]]
    skipped = 0
    lhs = lhs_up = 0.0
    for i in range(1, t_levels + 1):
        w = t[i] ** p - t[i - 1] ** p
        if caps[i - 1] is None:
            skipped += 1
        else:
            lhs += caps[i - 1] * w
        if open_caps[i - 1] is not None:
            lhs_up += open_caps[i - 1] * w
    return CapacitaryReport(lhs, lhs_up, rhs, tuple(t[1:]),
                            tuple(math.nan if c is None else c for c in caps), skipped)


def maximal_capacitary_check(f: GridFunction, masses: KernelCellMasses, p: float, t_levels: int = 16,
                             opts: SolverOptions | None = None) -> CapacitaryReport:
    return capacitary_inequality_check(f, masses, p, t_levels, opts, use_maximal=True)


# -- perimeter characterization ------------------------------------------


@dataclass(frozen=True)
class PerimeterScan:
    radii: tuple[float, ...]
    values: tuple[float, ...]
    unscaled_values: tuple[float, ...]

    @property
    def best(self) -> float:
        return min(self.values) if self.values else math.inf

    @property
    def best_radius(self) -> float:
        return self.radii[int(np.argmin(self.values))] if self.values else math.nan


def perimeter_capacity_upper(K_radius: float, masses: KernelCellMasses, radii_scan: Sequence[float],
                             center: Sequence[float] | float = 0.0, margin: bool = True) -> PerimeterScan:
    """Scan ``2 Per(O) + |O|`` over balls ``O`` containing the constrained set of ``K``.

    Each value is ``J(1_O)`` for ``p = 1``, a feasible competitor, so the
    scan minimum bounds ``Cap_{nu,1}(K)`` from above.  The unscaled
    ``Per(O) + |O|`` is reported alongside.
    """
    d, X, n = masses.d, masses.X, masses.n
    F = constrained_set(SetMask.ball(d, X, n, K_radius, center), margin)
    rs, vals, unscaled = [], [], []
    for R in sorted(radii_scan):
        O = SetMask.ball(d, X, n, R, center)
        if not F.issubset(O):
            continue
        per = nu_perimeter(O, masses)
        rs.append(float(R))
        vals.append(2.0 * per + O.measure)
        unscaled.append(per + O.measure)
    return PerimeterScan(tuple(rs), tuple(vals), tuple(unscaled))


# -- property suite ------------------------------------------------------


@dataclass(frozen=True)
class PropertyCheck:
    name: str
    lhs: float
    rhs: float
    slack: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs * (1 + self.slack) + 1e-14


@dataclass(frozen=True)
class PropertyReport:
    capacities: tuple[float, ...]
    checks: tuple[PropertyCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def property_suite(family: Sequence[SetMask], masses: KernelCellMasses, p: float,
                   opts: SolverOptions | None = None, slack: float = 1e-3) -> PropertyReport:
    """Zero property, monotonicity, strong and finite subadditivity on ``family``."""
    energy = Energy(masses, p)
    cache: dict[bytes, float] = {}

    def cap(S: SetMask) -> float:
        key = S.mask.tobytes()
        if key not in cache:
            cache[key] = compute_capacity(S, masses, p, opts, energy=energy).value
        return cache[key]

    caps = [cap(S) for S in family]
    checks = []
    empty = SetMask.empty_set(masses.d, masses.X, masses.n)
    checks.append(PropertyCheck("zero", cap(empty), 0.0, 0.0))
    for i, A in enumerate(family):
        for j, B in enumerate(family):
            if i != j and A.issubset(B):
                checks.append(PropertyCheck(f"monotone[{i}<={j}]", caps[i], caps[j], slack))
            if i < j:
                U, I = A.union(B), A.intersection(B)
                checks.append(PropertyCheck(f"strong[{i}|{j}]", cap(U) + cap(I), caps[i] + caps[j], slack))
    if family:
        U = family[0]
        for S in family[1:]:
            U = U.union(S)
        checks.append(PropertyCheck("subadditive", cap(U), sum(caps), slack))
    return PropertyReport(tuple(caps), tuple(checks))


# -- ball sweep ----------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    r: float
    n: int
    cap_value: float
    bump_upper: float
    reference: float
    iterations: int
    minimizer: GridFunction | None = field(default=None, compare=False, repr=False)

    @property
    def ratio(self) -> float:
        return self.cap_value / self.reference


def ball_volume(d: int, r: float) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * r**d


def ball_estimate_sweep(kernel: KernelSpec, p: float, radii: Sequence[float], resolutions: Sequence[int],
                        extent_factor: float = 8.0, reference: Callable[[float], float] | None = None,
                        opts: SolverOptions | None = None, check_index: bool = True,
                        extent: float | None = None) -> list[SweepRow]:
    """Capacities of centered balls against ``|B_r| (1 + h_p(r))`` (or ``reference(r)``).

    Each radius uses the box ``[-extent_factor r, extent_factor r]^d``, or
    ``[-extent, extent]^d`` for all radii when ``extent`` is given; the
    solve starts from the bump so that the value never exceeds it.
    """
    if check_index:
        from .hardy import check_embedding_index

        check_embedding_index(kernel)
    k = kernel.with_p(p)
    rows = []
    shared: dict[int, KernelCellMasses] = {}
    for r in radii:
        ref = reference(r) if reference is not None else ball_volume(k.d, r) * (1.0 + concentration_hp(k, r))
        for n in resolutions:
            if extent is None:
                X = extent_factor * r
                masses = build_cell_masses(k, X, n)
            else:
                X = extent
                if n not in shared:
                    shared[n] = build_cell_masses(k, X, n)
                masses = shared[n]
            if 2 * r > X * (1 + 1e-12):
                raise GeometryViolation(f"the doubled ball of radius {r} does not fit inside the box")
            E = SetMask.ball(k.d, X, n, r)
            o = opts or SolverOptions()
            phi = bump_function(k.d, X, n, r, force=constrained_set(E, o.margin))
            res = compute_capacity(E, masses, p, o, init=phi.values)
            bump = lp_norm(phi, p) ** p + seminorm_parts(phi, masses, p).total
            rows.append(SweepRow(float(r), n, res.value, bump, ref, res.iterations, res.minimizer))
    return rows
