"""Radial Levy-type kernels and their scalar analytics.

A kernel is stored through its radial profile ``nu(rho)`` only.  All
analytics work in ``u = log(rho)`` through the *shell density*

    shell(u) = |S^{d-1}| * nu(e^u) * e^{d u},

so that ``int_{R^d} F(|x|) nu(x) dx = int shell(u) F(e^u) du``.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy import special

from . import quadrature as quad
from .errors import (
    ConfigParse,
    DivergentTail,
    ExtrapolationDominated,
    NonPositiveProfile,
    NonPositiveSample,
    TailVanishes,
)
from .tabulated import TabulatedRadial

FAMILIES = ("fractional", "log_zero_order", "double_log", "reg_varying", "custom")
_CUSTOM_U_LIMIT = 700.0
LOG_RANGE = _CUSTOM_U_LIMIT


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d (2 for d=1)."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def _log_softplus(x):
    # log(log(1 + e^x)), accurate for very negative x.
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x < -30.0, x, np.log(np.logaddexp(0.0, x)))


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A radial kernel density with dimension ``d`` and integrability order ``p``.

    Build instances through the family constructors (:meth:`fractional`,
    :meth:`log_zero_order`, :meth:`double_log`, :meth:`reg_varying`,
    :meth:`custom`) rather than directly.
    """

    family: str
    params: Mapping[str, Any]
    d: int
    p: float
    profile_fn: Callable | None = field(default=None, repr=False)
    log_profile_fn: Callable | None = field(default=None, repr=False)
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("dimension must be a positive integer")
        if self.p < 1:
            raise ValueError("integrability order p must be >= 1")

    # -- constructors -----------------------------------------------------
    @classmethod
    def fractional(cls, s: float, order: float, d: int = 1, p: float | None = None) -> "KernelSpec":
        """``nu(x) = |x|^{-d - s*order}``; ``p`` defaults to ``order``."""
        p = float(order if p is None else p)
        sp = s * order
        if not 0.0 < sp < p:
            raise ValueError(f"fractional kernel needs 0 < s*order < p, got s*order={sp}, p={p}")
        return cls("fractional", {"s": float(s), "order": float(order)}, int(d), p)

    @classmethod
    def log_zero_order(cls, gamma: float, delta: float, d: int = 1, p: float = 2.0) -> "KernelSpec":
        """``nu(x) = |x|^{-d} log^gamma(1 + |x|^{-delta})``."""
        if not (gamma > 0 and delta > 0 and gamma * delta < 1):
            raise ValueError("log_zero_order needs gamma, delta > 0 and gamma*delta < 1")
        return cls("log_zero_order", {"gamma": float(gamma), "delta": float(delta)}, int(d), float(p))

    @classmethod
    def double_log(cls, beta: float, gamma: float, d: int = 1, p: float = 2.0) -> "KernelSpec":
        """``nu(x) = |x|^{-d} log^beta(2 + 1/|x|) log^{-gamma}(2 + |x|)``."""
        if not (beta >= -1 and gamma > 1):
            raise ValueError("double_log needs beta >= -1 and gamma > 1")
        return cls("double_log", {"beta": float(beta), "gamma": float(gamma)}, int(d), float(p))

    @classmethod
    def reg_varying(cls, table: TabulatedRadial, d: int = 1, p: float = 2.0) -> "KernelSpec":
        """``nu(x) = |x|^{-d} / phi(|x|)`` with ``phi`` given by a positive tabulation."""
        if np.any(table.values <= 0):
            raise ValueError("reg_varying profile table must be positive")
        params = {"nodes": tuple(map(float, table.nodes)), "values": tuple(map(float, table.values))}
        return cls("reg_varying", params, int(d), float(p))

    @classmethod
    def custom(
        cls,
        profile: Callable | None = None,
        d: int = 1,
        p: float = 2.0,
        name: str = "custom",
        log_profile: Callable | None = None,
        breakpoints: Sequence[float] = (),
    ) -> "KernelSpec":
        """Arbitrary radial profile ``nu(rho)``.

        Evaluation is restricted to ``|log rho| <= 700``; outside that range
        the profile is taken to vanish.  Radii where the profile has kinks
        may be passed as ``breakpoints`` to help the quadrature.
        """
        if profile is None and log_profile is None:
            raise ValueError("custom kernel needs profile or log_profile")
        return cls(
            "custom",
            {"name": name},
            int(d),
            float(p),
            profile_fn=profile,
            log_profile_fn=log_profile,
            breakpoints=tuple(float(b) for b in breakpoints),
        )

    @classmethod
    def from_mapping(cls, cfg: Mapping[str, Any], base_dir: str | Path | None = None) -> "KernelSpec":
        """Build a kernel from a config mapping (``family`` plus parameters)."""
        try:
            fam = cfg["family"]
            d = int(cfg.get("d", 1))
            if fam == "fractional":
                return cls.fractional(cfg["s"], cfg.get("order", cfg.get("p", 2.0)), d, cfg.get("p"))
            if fam == "log_zero_order":
                return cls.log_zero_order(cfg["gamma"], cfg["delta"], d, cfg.get("p", 2.0))
            if fam == "double_log":
                return cls.double_log(cfg["beta"], cfg["gamma"], d, cfg.get("p", 2.0))
            if fam == "reg_varying":
                if "table" in cfg:
                    path = Path(cfg["table"])
                    if base_dir is not None and not path.is_absolute():
                        path = Path(base_dir) / path
                    table = TabulatedRadial.from_csv(path)
                else:
                    table = TabulatedRadial(np.array(cfg["nodes"]), np.array(cfg["values"]))
                return cls.reg_varying(table, d, cfg.get("p", 2.0))
        except (KeyError, TypeError, ValueError, OSError) as exc:
            raise ConfigParse(f"bad kernel config: {exc}") from exc
        raise ConfigParse(f"kernel family {fam!r} cannot be read from a config file")

    # -- evaluation -------------------------------------------------------
    def log_profile(self, u) -> np.ndarray:
        """``log nu(e^u)``, vectorized over ``u``."""
        u = np.asarray(u, dtype=float)
        d = self.d
        fam = self.family
        if fam == "fractional":
            return -(d + self.params["s"] * self.params["order"]) * u
        if fam == "log_zero_order":
            g, dl = self.params["gamma"], self.params["delta"]
            return -d * u + g * _log_softplus(-dl * u)
        if fam == "double_log":
            b, g = self.params["beta"], self.params["gamma"]
            small = np.log(np.logaddexp(math.log(2.0), -u))
            large = np.log(np.logaddexp(math.log(2.0), u))
            return -d * u + b * small - g * large
        if fam == "reg_varying":
            lx = np.log(np.asarray(self.params["nodes"]))
            lv = np.log(np.asarray(self.params["values"]))
            lphi = np.interp(u, lx, lv)
            left = lv[0] + (lv[1] - lv[0]) / (lx[1] - lx[0]) * (u - lx[0])
            right = lv[-1] + (lv[-1] - lv[-2]) / (lx[-1] - lx[-2]) * (u - lx[-1])
            lphi = np.where(u < lx[0], left, np.where(u > lx[-1], right, lphi))
            return -d * u - lphi
        # custom
        inside = np.abs(u) <= _CUSTOM_U_LIMIT
        uc = np.where(inside, u, 0.0)
        if self.log_profile_fn is not None:
            out = np.asarray(self.log_profile_fn(uc), dtype=float)
        else:
            vals = np.asarray(_call_vectorized(self.profile_fn, np.exp(uc)), dtype=float)
            if np.any(vals < 0) or np.any(np.isnan(vals)):
                raise NonPositiveProfile("profile takes negative or nan values")
            with np.errstate(divide="ignore"):
                out = np.log(vals)
        return np.where(inside, np.broadcast_to(out, u.shape), -np.inf)

    def profile(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            lu = np.log(rho)
            return np.exp(self.log_profile(lu))

    def shell(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        with np.errstate(over="ignore", under="ignore"):
            return sphere_area(self.d) * np.exp(self.log_profile(u) + self.d * u)

    @property
    def log_breakpoints(self) -> tuple[float, ...]:
        pts = [b for b in self.breakpoints if b > 0]
        if self.family == "reg_varying":
            # The log-linear table has a kink at every node.
            pts += list(self.params["nodes"])
        return tuple(sorted(math.log(b) for b in set(pts)))

    def key(self) -> str:
        """Stable text identity used for hashing and caching."""
        extra = {}
        if self.family == "custom":
            fn = self.profile_fn or self.log_profile_fn
            extra = {"fn": getattr(fn, "__qualname__", repr(fn)), "bp": self.breakpoints}
        return json.dumps(
            {"family": self.family, "params": dict(self.params), "d": self.d, "p": self.p, **extra},
            sort_keys=True,
        )

    def digest(self) -> str:
        return hashlib.sha256(self.key().encode()).hexdigest()

    def with_p(self, p: float) -> "KernelSpec":
        return KernelSpec(self.family, self.params, self.d, float(p), self.profile_fn,
                          self.log_profile_fn, self.breakpoints)


def _call_vectorized(fn: Callable, x: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(fn(x), dtype=float)
        if out.shape == x.shape:
            return out
        return np.broadcast_to(out, x.shape).astype(float)
    except (TypeError, ValueError):
        return np.vectorize(lambda t: float(fn(t)))(x)


def load_kernel(path: str | Path) -> KernelSpec:
    """Read a kernel from a JSON key-value file."""
    path = Path(path)
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigParse(f"cannot read kernel config {path}: {exc}") from exc
    return KernelSpec.from_mapping(cfg, base_dir=path.parent)


# -- integrability and radial tails --------------------------------------


@dataclass(frozen=True)
class IntegrabilityReport:
    finite: bool
    value: float


def _check_sign(kernel: KernelSpec) -> None:
    if kernel.family != "custom":
        return
    u = np.linspace(-60.0, 60.0, 1201)
    lp = kernel.log_profile(u)
    if np.any(np.isnan(lp)):
        raise NonPositiveProfile("profile is not evaluable on the sample grid")


def check_integrability(kernel: KernelSpec) -> IntegrabilityReport:
    """``int (1 ^ |x|^p) nu(dx)`` with a finite/infinite verdict."""
    _check_sign(kernel)
    p = kernel.p

    def g(u):
        return kernel.shell(u) * np.exp(p * np.minimum(u, 0.0))

    res = quad.integrate_log(g, -math.inf, math.inf, breakpoints=(0.0,) + kernel.log_breakpoints)
    return IntegrabilityReport(res.finite, res.value)


def tail_mass_L(kernel: KernelSpec, radii: Sequence[float]) -> TabulatedRadial:
    """``L(r) = nu({|x| > r})`` at the sorted positive ``radii``."""
    r = np.asarray(radii, dtype=float)
    if r.ndim != 1 or r.size < 2 or np.any(r <= 0) or np.any(np.diff(r) <= 0):
        raise ValueError("radii must be positive, strictly increasing, at least two")
    lr = np.log(r)
    top = quad.semi_infinite(kernel.shell, float(lr[-1]), +1, rtol=1e-12)
    if not top.finite:
        raise DivergentTail("tail mass diverges at infinity")
    edges = np.unique(np.concatenate([lr, [b for b in kernel.log_breakpoints if lr[0] < b < lr[-1]]]))
    pieces = quad.composite_gl(kernel.shell, edges)
    # Fold sub-intervals introduced by breakpoints back onto the radii.
    owner = np.searchsorted(lr, edges[:-1], side="right") - 1
    per_node = np.bincount(owner, weights=pieces, minlength=r.size - 1)
    values = top.value + np.concatenate([np.cumsum(per_node[::-1])[::-1], [0.0]])
    return TabulatedRadial(r, values, monotone=True)


def tabulate_L(kernel: KernelSpec, r_min: float, r_max: float, per_decade: int = 512) -> TabulatedRadial:
    """Dense geometric tabulation of ``L`` on ``[r_min, r_max]``."""
    decades = math.log10(r_max / r_min)
    n = max(2, int(math.ceil(decades * per_decade)) + 1)
    return tail_mass_L(kernel, np.geomspace(r_min, r_max, n))


def concentration_hp(kernel: KernelSpec, r: float) -> float:
    """``h_p(r) = int (1 ^ |x|^p / r^p) nu(dx)`` by direct radial quadrature."""
    if r <= 0:
        raise ValueError("r must be positive")
    p = kernel.p
    lr = math.log(r)

    def g(u):
        return kernel.shell(u) * np.exp(p * np.minimum(np.asarray(u) - lr, 0.0))

    res = quad.integrate_log(g, -math.inf, math.inf, breakpoints=(lr,) + kernel.log_breakpoints)
    if not res.finite:
        raise DivergentTail("concentration function is infinite; kernel violates integrability")
    return res.value


def hp_via_L(L: TabulatedRadial, p: float, r: float) -> float:
    """``(p / r^p) int_0^r s^{p-1} L(s) ds`` evaluated on a tabulation of ``L``."""
    x0, x1 = float(L.nodes[0]), float(L.nodes[-1])
    total = L.integrate_power(0.0, r, p - 1.0)
    extrap = L.integrate_power(0.0, min(x0, r), p - 1.0) + L.integrate_power(max(x1, 0.0), r, p - 1.0)
    if not math.isfinite(total):
        raise DivergentTail("extrapolated L is not integrable against s^{p-1} at 0")
    if total > 0 and extrap > 0.5 * total:
        raise ExtrapolationDominated(
            f"{extrap / total:.1%} of the integral comes from extrapolated radii"
        )
    return p / r**p * total


@dataclass(frozen=True)
class WindowReport:
    radii: np.ndarray
    ratios: np.ndarray
    window: tuple[float, float]
    r0: float | None


def concentration_window(
    kernel: KernelSpec, radii: Sequence[float], window: tuple[float, float]
) -> WindowReport:
    """Ratios ``h_p / L`` on ``radii`` and the largest ``r0`` below which they stay in ``window``."""
    r = np.sort(np.asarray(radii, dtype=float))
    L = tail_mass_L(kernel, r)
    ratios = np.array([concentration_hp(kernel, float(x)) for x in r]) / L.values
    lo, hi = window
    ok = (ratios >= lo) & (ratios <= hi)
    r0 = None
    for i in range(r.size):
        if not ok[i]:
            break
        r0 = float(r[i])
    return WindowReport(r, ratios, (lo, hi), r0)


# -- half-space tail and doubling ----------------------------------------


def _cap_area(d: int, c):
    # Area of {theta in S^{d-1}: theta_d > c} for 0 <= c <= 1.
    c = np.clip(np.asarray(c, dtype=float), 0.0, 1.0)
    return 0.5 * sphere_area(d) * special.betainc((d - 1) / 2.0, 0.5, 1.0 - c * c)


def _w_cap(kernel: KernelSpec, s: float, rtol: float) -> float:
    d = kernel.d
    ls = math.log(s)

    def g(u):
        u = np.asarray(u, dtype=float)
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(kernel.log_profile(u) + d * u) * _cap_area(d, np.exp(ls - u))

    res = quad.integrate_log(g, ls, math.inf, breakpoints=kernel.log_breakpoints, rtol=rtol)
    if not res.finite:
        raise DivergentTail("half-space tail diverges")
    return res.value


def _w_nested(kernel: KernelSpec, s: float, axis: int, rtol: float) -> float:
    # {y_axis > s} in the plane; outer variable t = y_axis = e^a,
    # inner variable z = t sinh(v) along the other axis.
    # The inner integral is normalized by nu(t) so that it stays O(1) even
    # where nu itself is near the underflow range.
    def inner(t: float) -> float:
        lt = math.log(t)
        l0 = float(kernel.log_profile(np.asarray(lt)))

        def gv(v):
            # Point (t, z) with z = t sinh v, in units of t; dz = t cosh v dv.
            v = np.asarray(v, dtype=float)
            with np.errstate(over="ignore", under="ignore"):
                y = (np.ones_like(v), np.sinh(v))
                lr = lt + np.log(np.hypot(*(y if axis == 1 else y[::-1])))
                return np.exp(kernel.log_profile(lr) - l0 + lt) * np.cosh(v)

        if not math.isfinite(l0):
            return 0.0
        res = quad.semi_infinite(gv, 0.0, +1, rtol=max(rtol * 1e-1, 1e-10))
        return 2.0 * res.value * math.exp(l0)

    def outer(a):
        if float(a) > LOG_RANGE:
            return 0.0
        t = math.exp(float(a))
        return inner(t) * t

    res = quad.integrate_log(np.vectorize(outer), math.log(s), math.inf, rtol=rtol)
    if not res.finite:
        raise DivergentTail("half-space tail diverges")
    return res.value


def halfspace_tail_w(kernel: KernelSpec, s: float, method: str = "auto", axis: int = 1,
                     rtol: float = 1e-9) -> float:
    """``w(s) = nu({y_d > s})``.

    d=1 integrates the profile directly; d=2 uses nested quadrature over the
    half-plane (``axis`` selects which coordinate is thresholded); higher
    dimensions use the spherical-cap reduction.  ``method`` may force
    ``"nested"`` (d=2 only) or ``"cap"`` (d>=2).
    """
    if s <= 0:
        raise ValueError("s must be positive")
    d = kernel.d
    if d == 1:
        res = quad.semi_infinite(lambda u: 0.5 * kernel.shell(u), math.log(s), +1, rtol=rtol)
        if not res.finite:
            raise DivergentTail("half-line tail diverges")
        return res.value
    if method == "cap" or (method == "auto" and d > 2):
        return _w_cap(kernel, s, rtol)
    if d != 2:
        raise ValueError("nested half-space quadrature is implemented for d=2 only")
    return _w_nested(kernel, s, axis, rtol)


def tabulate_w(kernel: KernelSpec, s_min: float, s_max: float, per_decade: int = 64,
               method: str = "auto") -> TabulatedRadial:
    """Geometric tabulation of ``w`` (cap reduction for d>=2 unless overridden)."""
    n = max(2, int(math.ceil(math.log10(s_max / s_min) * per_decade)) + 1)
    s = np.geomspace(s_min, s_max, n)
    if kernel.d == 1:
        return TabulatedRadial(s, 0.5 * tail_mass_L(kernel, s).values, monotone=True)
    m = "cap" if method == "auto" else method
    vals = np.array([halfspace_tail_w(kernel, float(x), method=m) for x in s])
    return TabulatedRadial(s, vals, monotone=True)


def slab_mass(kernel: KernelSpec, lo: float, hi: float) -> float:
    """``nu({lo < y_d < hi})`` by direct quadrature over the slab."""
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")
    if kernel.d == 1:
        return quad.quad_interval(lambda u: 0.5 * kernel.shell(u), math.log(lo), math.log(hi))
    d = kernel.d

    def g(u):
        u = np.asarray(u, dtype=float)
        with np.errstate(over="ignore", under="ignore"):
            base = np.exp(kernel.log_profile(u) + d * u)
        return base * (_cap_area(d, np.exp(math.log(lo) - u)) - _cap_area(d, np.exp(math.log(hi) - u)))

    res = quad.integrate_log(g, math.log(lo), math.inf, breakpoints=(math.log(hi),))
    return res.value


def doubling_ratios(kernel: KernelSpec, s_range: tuple[float, float], samples: int = 32,
                    method: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    s = np.geomspace(s_range[0], s_range[1], samples)
    w1 = np.array([halfspace_tail_w(kernel, float(x), method=method) for x in s])
    w2 = np.array([halfspace_tail_w(kernel, float(2 * x), method=method) for x in s])
    if np.any(w2 <= 1e-300):
        raise TailVanishes("w(2s) underflows on the requested range")
    return s, w1 / w2


def doubling_beta(kernel: KernelSpec, s_range: tuple[float, float], samples: int = 32,
                  method: str = "auto") -> float:
    """``beta* = max_s w(s) / w(2s)`` over ``samples`` geometric points."""
    return float(doubling_ratios(kernel, s_range, samples, method)[1].max())


# -- Matuszewska index ---------------------------------------------------


class Location(enum.Enum):
    AT_ZERO = "zero"
    AT_INFINITY = "infinity"


@dataclass(frozen=True)
class IndexEstimate:
    index: float
    A: float
    range: tuple[float, float]
    location: Location


class LogProfile:
    """A positive function of ``r`` represented through ``log phi(e^u)``."""

    def __init__(self, log_fn: Callable[[np.ndarray], np.ndarray]):
        self.log_fn = log_fn

    def log(self, u) -> np.ndarray:
        return np.asarray(self.log_fn(np.asarray(u, dtype=float)), dtype=float)

    def __call__(self, r) -> np.ndarray:
        return np.exp(self.log(np.log(np.asarray(r, dtype=float))))


def as_log_profile(profile) -> LogProfile:
    if isinstance(profile, LogProfile):
        return profile
    if isinstance(profile, KernelSpec):
        return LogProfile(profile.log_profile)

    def lf(u):
        vals = np.asarray(_call_vectorized(profile, np.exp(u)), dtype=float)
        if np.any(~(vals > 0)):
            raise NonPositiveSample("profile must be positive on the sampled range")
        return np.log(vals)

    return LogProfile(lf)


def dual_index_transform(profile) -> LogProfile:
    """``r -> 1 / phi(1/r)``."""
    lp = as_log_profile(profile)
    return LogProfile(lambda u: -lp.log(-np.asarray(u)))


def matuszewska_lower_index(
    profile,
    location: Location = Location.AT_ZERO,
    decades: int = 6,
    points_per_decade: int = 64,
    offset: float | None = None,
    min_ratio: float = 4.0,
) -> IndexEstimate:
    """Estimate the lower Matuszewska index from pair slopes.

    The sampled window spans ``decades`` decades and sits ``offset`` decades
    away from 1 (default ``offset = decades``), i.e. ``[10^-(o+D), 10^-o]``
    at zero and ``[10^o, 10^(o+D)]`` at infinity, so it recedes toward the
    limit as ``decades`` grows.  The index is the smallest log-log slope over
    sample pairs with ``r2/r1 >= min_ratio``; ``A`` is the largest constant
    certifying ``phi(r2)/phi(r1) >= A (r2/r1)^index`` on every pair.
    """
    lp = as_log_profile(profile)
    o = float(decades if offset is None else offset)
    e = np.linspace(o, o + decades, int(decades * points_per_decade) + 1)
    if location is Location.AT_ZERO:
        e = -e[::-1]
    u = e * math.log(10.0)
    lv = lp.log(u)
    if not np.all(np.isfinite(lv)):
        raise NonPositiveSample("profile must be positive and finite on the sampled range")
    du = u[None, :] - u[:, None]
    dv = lv[None, :] - lv[:, None]
    upper = du > 0
    gate = du >= math.log(min_ratio) * (1 - 1e-12)
    with np.errstate(divide="ignore", invalid="ignore"):
        slopes = np.where(gate, dv / du, np.inf)
    index = float(slopes.min())
    logA = np.where(upper, dv - index * du, np.inf).min()
    r = (float(np.exp(u[0])), float(np.exp(u[-1])))
    return IndexEstimate(index, float(math.exp(logA)), r, location)
