"""Sampled radial functions with log-log interpolation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import OutOfRange

MONOTONE_RTOL = 1e-9


@dataclass(frozen=True)
class TabulatedRadial:
    """A positive radial function known at ``nodes``.

    Between nodes the function is a power law (linear in log-log); beyond
    either end the power law through the two outermost nodes is continued.
    Segments touching a zero value fall back to linear interpolation and
    continue as constants past the ends.
    """

    nodes: np.ndarray
    values: np.ndarray
    monotone: bool = False
    extrapolate: bool = True

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)
        if nodes.ndim != 1 or nodes.size < 2 or nodes.shape != values.shape:
            raise ValueError("need at least two nodes and matching values")
        if np.any(nodes <= 0) or np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be positive and strictly increasing")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("values must be finite and nonnegative")
        if self.monotone:
            rise = np.diff(values)
            if np.any(rise > MONOTONE_RTOL * np.maximum(values[:-1], values[1:])):
                raise ValueError("values of a monotone tabulation must be nonincreasing")

    @property
    def slopes(self) -> np.ndarray:
        """Log-log slope of each segment (nan where a value is zero)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            lv = np.log(self.values)
            out = np.diff(lv) / np.diff(np.log(self.nodes))
        return np.where(np.isfinite(out), out, np.nan)

    def _end_slope(self, left: bool) -> float:
        s = self.slopes[0 if left else -1]
        return 0.0 if math.isnan(s) else float(s)

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        x, v = self.nodes, self.values
        if not self.extrapolate and (np.any(r < x[0]) or np.any(r > x[-1])):
            raise OutOfRange("radius outside the tabulated range")
        idx = np.clip(np.searchsorted(x, r, side="right") - 1, 0, x.size - 2)
        x0, x1 = x[idx], x[idx + 1]
        v0, v1 = v[idx], v[idx + 1]
        pos = (v0 > 0) & (v1 > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            m = np.log(v1 / v0) / np.log(x1 / x0)
            inside = (r >= x[0]) & (r <= x[-1])
            powv = v0 * np.exp(m * (np.log(r) - np.log(x0)))
            t = (r - x0) / (x1 - x0)
            linv = np.where(inside, v0 + t * (v1 - v0), np.where(r < x[0], v[0], v[-1]))
        return np.where(pos, powv, linv)

    def integrate_power(self, a: float, b: float, q: float) -> float:
        """Exact ``int_a^b s**q T(s) ds`` for the piecewise power representation."""
        if b <= a:
            return 0.0
        x, v = self.nodes, self.values
        cuts = [a] + [float(c) for c in x if a < c < b] + [b]
        total = 0.0
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            mid = math.sqrt(lo * hi) if lo > 0 else 0.5 * hi
            i = int(np.clip(np.searchsorted(x, mid, side="right") - 1, 0, x.size - 2))
            v0, v1 = v[i], v[i + 1]
            if v0 > 0 and v1 > 0:
                m = math.log(v1 / v0) / math.log(x[i + 1] / x[i])
                c = v0 * x[i] ** (-m)
                e = q + m + 1.0
                if lo == 0.0:
                    if e <= 0:
                        return math.inf
                    total += c * hi**e / e
                elif abs(e) < 1e-14:
                    total += c * math.log(hi / lo)
                else:
                    total += c * (hi**e - lo**e) / e
            else:
                total += _linear_piece(x[i], x[i + 1], v0, v1, lo, hi, q, clamp_left=lo < x[0],
                                       clamp_right=hi > x[-1])
        return total

    def integrate_power_many(self, edges, q: float) -> np.ndarray:
        """``int s**q T(s) ds`` over each ``[edges[i], edges[i+1]]`` (edges sorted, >= 0).

        Vectorized version of :meth:`integrate_power` for power-law segments;
        falls back to the scalar routine when a zero value is involved.
        """
        edges = np.asarray(edges, dtype=float)
        x, v = self.nodes, self.values
        if np.any(v <= 0):
            return np.array([self.integrate_power(a, b, q) for a, b in zip(edges[:-1], edges[1:])])
        inner = x[(x > edges[0]) & (x < edges[-1])]
        pts = np.union1d(edges, inner)
        lo, hi = pts[:-1], pts[1:]
        mid = np.where(lo > 0, np.sqrt(lo * np.maximum(hi, 0)), 0.5 * hi)
        i = np.clip(np.searchsorted(x, mid, side="right") - 1, 0, x.size - 2)
        m = np.log(v[i + 1] / v[i]) / np.log(x[i + 1] / x[i])
        c = v[i] * x[i] ** (-m)
        e = q + m + 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            safe_e = np.where(np.abs(e) < 1e-14, 1.0, e)
            powpart = c * (hi**safe_e - lo**safe_e) / safe_e
            logpart = c * np.log(hi / lo)
        piece = np.where(np.abs(e) < 1e-14, logpart, powpart)
        if lo[0] == 0.0 and e[0] <= 0:
            piece[0] = math.inf
        owner = np.searchsorted(edges, lo, side="right") - 1
        return np.bincount(owner, weights=piece, minlength=edges.size - 1)[: edges.size - 1]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", "value"])
            for r, val in zip(self.nodes, self.values):
                w.writerow([repr(float(r)), repr(float(val))])

    @classmethod
    def from_csv(cls, path: str | Path, monotone: bool = False) -> "TabulatedRadial":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], monotone=monotone)


def _linear_piece(x0, x1, v0, v1, lo, hi, q, clamp_left, clamp_right):
    # Constant beyond the ends, linear in between.
    if clamp_left and hi <= x0:
        val = v0
        return _mono(val, lo, hi, q)
    if clamp_right and lo >= x1:
        return _mono(v1, lo, hi, q)
    slope = (v1 - v0) / (x1 - x0)
    # v0 + slope (s - x0) = (v0 - slope x0) + slope s
    return _mono(v0 - slope * x0, lo, hi, q) + slope * _mono(1.0, lo, hi, q + 1.0)


def _mono(c, lo, hi, q):
    if c == 0.0:
        return 0.0
    e = q + 1.0
    if abs(e) < 1e-14:
        return c * math.log(hi / lo)
    return c * (hi**e - lo**e) / e
