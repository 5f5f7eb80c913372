"""Adaptive quadrature in the logarithmic radial variable.

Every radial integral in the package is written as ``int g(u) du`` with
``u = log(rho)``.  Power-law kernels become exponentials in ``u`` and the
slowly varying corrections become polynomial, so finite pieces are handled
by QUADPACK and semi-infinite pieces by blocks of doubling length.  The
blocks double toward the open end until a Cauchy test decides convergence
or divergence.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import QuadratureFailure

ArrayFn = Callable[[np.ndarray], np.ndarray]

CAUCHY_REFINEMENTS = 4
MAX_BLOCKS = 1000


@dataclass(frozen=True)
class TailVerdict:
    value: float
    finite: bool
    blocks: int


def _scalar(g: ArrayFn) -> Callable[[float], float]:
    def f(u: float) -> float:
        return float(np.asarray(g(np.asarray(u, dtype=float))))

    return f


def quad_interval(g: ArrayFn, a: float, b: float, rtol: float = 1e-12, atol: float = 1e-300) -> float:
    """Integrate ``g`` over the finite interval ``[a, b]``.

    Raises :class:`QuadratureFailure` when QUADPACK reports trouble and its
    error estimate exceeds both ``1e3 * rtol * |value|`` and ``1e3 * atol``.
    """
    if a == b:
        return 0.0
    # QUADPACK misjudges roundoff for integrands near the underflow range,
    # so integrate g / |g(midpoint)| and scale back.
    gs = _scalar(g)
    scale = abs(gs(0.5 * (a + b)))
    if not (math.isfinite(scale) and scale > 0.0):
        scale = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(lambda u: gs(u) / scale, a, b, epsabs=atol / scale, epsrel=rtol,
                             limit=400, full_output=1)
    value, abserr = out[0] * scale, out[1] * scale
    if not math.isfinite(value):
        raise QuadratureFailure(f"non-finite integral on [{a}, {b}]")
    if len(out) > 3 and abserr > max(1e3 * rtol * abs(value), 1e3 * atol, 1e-280):
        raise QuadratureFailure(f"quad did not converge on [{a}, {b}]: {out[3]}")
    return value


def semi_infinite(
    g: ArrayFn,
    anchor: float,
    direction: int,
    rtol: float = 1e-12,
    first_width: float = 1.0,
    max_blocks: int = MAX_BLOCKS,
) -> TailVerdict:
    """Integrate ``g`` from ``anchor`` to ``+inf`` (direction=+1) or ``-inf``.

    Blocks have lengths ``first_width * 2**j``.  After each block a geometric
    tail estimate (ratio of the last two increments) is formed; the integral
    is declared finite once this estimate stays below ``rtol`` relative for
    ``CAUCHY_REFINEMENTS`` consecutive blocks, and infinite once the
    increments have been positive and nondecreasing for as many blocks while
    the decay across a block, ``log(g(near) / g(far))``, has not grown.  The
    second condition separates slow exponential decay, whose per-block decay
    doubles with the block length, from genuine divergence, where it stays
    bounded (``1/u``) or negative.
    """
    total = 0.0
    prev = None
    small_run = 0
    grow_run = 0
    lo = anchor
    width = first_width
    decays: list[float] = []
    for j in range(max_blocks):
        hi = lo + direction * width
        a, b = (lo, hi) if direction > 0 else (hi, lo)
        try:
            delta = quad_interval(g, a, b, rtol=max(rtol * 1e-2, 1e-13), atol=1e-2 * rtol * abs(total))
        except QuadratureFailure:
            # Far blocks can sit in the denormal range; drop them only if negligible.
            probe = np.abs(np.asarray(g(np.linspace(a, b, 33)), dtype=float))
            bound = (b - a) * float(probe.max())
            if not (total != 0.0 and bound <= 1e-3 * rtol * abs(total)):
                raise
            delta = 0.0
        total += delta
        if delta == 0.0:
            tail = 0.0
        elif prev is None or prev == 0.0:
            tail = math.inf
        else:
            q = delta / prev
            tail = delta * q / (1.0 - q) if 0.0 <= q < 1.0 else math.inf
        if math.isfinite(tail) and abs(tail) <= rtol * abs(total + tail):
            small_run += 1
        else:
            small_run = 0
        decays.append(_block_decay(g, lo, hi))
        if prev is not None and delta > 0.0 and delta >= prev * (1.0 - 1e-9):
            grow_run += 1
        else:
            grow_run = 0
        if small_run >= CAUCHY_REFINEMENTS:
            return TailVerdict(total + (tail if math.isfinite(tail) else 0.0), True, j + 1)
        if grow_run >= CAUCHY_REFINEMENTS and _decay_flat(decays):
            return TailVerdict(math.inf, False, j + 1)
        prev = delta
        lo = hi
        width *= 2.0
    raise QuadratureFailure(
        f"no convergence or divergence verdict after {max_blocks} blocks from u={anchor}"
    )


def _block_decay(g: ArrayFn, near: float, far: float) -> float:
    vals = np.abs(np.asarray(g(np.array([near, far])), dtype=float))
    if not (vals[0] > 0 and vals[1] > 0 and np.all(np.isfinite(vals))):
        return math.inf if vals[1] == 0 else -math.inf
    return float(math.log(vals[0] / vals[1]))


def _decay_flat(decays: list[float]) -> bool:
    last = decays[-1]
    if last <= 0.0:
        return True
    if len(decays) < 3 or not math.isfinite(last):
        return False
    return last <= 1.5 * max(decays[-3], 0.0)


def integrate_log(
    g: ArrayFn,
    a: float,
    b: float,
    breakpoints: Sequence[float] = (),
    rtol: float = 1e-12,
) -> TailVerdict:
    """Integrate ``g(u)`` over ``[a, b]`` where either end may be infinite.

    Interior ``breakpoints`` (kinks of the integrand) split the finite part.
    """
    if a >= b:
        return TailVerdict(0.0, True, 0)
    lo = a if math.isfinite(a) else None
    hi = b if math.isfinite(b) else None
    inner = sorted(x for x in breakpoints if a < x < b)
    if lo is None:
        lo = inner[0] if inner else (hi if hi is not None else 0.0)
    if hi is None:
        hi = inner[-1] if inner else lo
    cuts = [lo] + [x for x in inner if lo < x < hi] + [hi]
    total = 0.0
    blocks = 0
    for x0, x1 in zip(cuts[:-1], cuts[1:]):
        total += quad_interval(g, x0, x1, rtol=rtol)
    finite = True
    if not math.isfinite(a):
        left = semi_infinite(g, lo, -1, rtol=rtol)
        blocks += left.blocks
        finite &= left.finite
        total += left.value
    if not math.isfinite(b):
        right = semi_infinite(g, hi, +1, rtol=rtol)
        blocks += right.blocks
        finite &= right.finite
        total += right.value
    return TailVerdict(total if finite else math.inf, finite, blocks)


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on ``[0, 1]``."""
    if npts not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(npts)
        _GL_CACHE[npts] = (0.5 * (x + 1.0), 0.5 * w)
    return _GL_CACHE[npts]


def composite_gl(
    g: ArrayFn, edges: np.ndarray, max_width: float = 0.05, npts: int = 8
) -> np.ndarray:
    """Integrals of ``g`` over consecutive intervals ``[edges[i], edges[i+1]]``.

    Each interval is split into equal panels no wider than ``max_width`` and
    integrated with an ``npts``-point Gauss-Legendre rule; one vectorized call.
    """
    edges = np.asarray(edges, dtype=float)
    widths = np.diff(edges)
    panels = np.maximum(1, np.ceil(widths / max_width).astype(int))
    owner = np.repeat(np.arange(widths.size), panels)
    start = np.concatenate([[0], np.cumsum(panels)[:-1]])
    local = np.arange(owner.size) - start[owner]
    pw = widths[owner] / panels[owner]
    p0 = edges[:-1][owner] + local * pw
    x, w = gauss_legendre(npts)
    pts = p0[:, None] + pw[:, None] * x[None, :]
    vals = np.asarray(g(pts.ravel()), dtype=float).reshape(pts.shape)
    panel_int = (vals * w[None, :]).sum(axis=1) * pw
    return np.bincount(owner, weights=panel_int, minlength=widths.size)
