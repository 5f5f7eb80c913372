"""Command-line front end: batch runs with CSV tables and a JSON manifest.

Usage::

    nlcap kernel-info --kernel frac.json --out runs/ki
    nlcap hardy-check --kernel frac.json --n 1024 --out runs/hardy
    nlcap capacity --kernel frac.json --radii 0.1,0.25,0.5 --extent 4 --n 512 --out runs/cap
    nlcap coarea-check --kernel frac.json --n 2048 --out runs/coarea
    nlcap property-suite --kernel frac.json --n 256 --out runs/props

Every flag can also be given as a key of the same name in a ``--config``
JSON file; flags on the command line win.  Exit status is 0 on success,
2 for configuration errors, 3 for numerical errors raised by the package
and 1 for anything else.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .capacity import (
    SetMask,
    SolverOptions,
    ball_estimate_sweep,
    coarea_check,
    property_suite,
)
from .errors import ConfigParse, NlcapError
from .grid import GridFunction, build_cell_masses, indicator
from .hardy import (
    HardyContext,
    double_log_weight,
    hardy_corpus,
    log_zero_order_weight,
    verify_embedding,
    verify_fullspace_hardy,
    verify_halfspace_hardy,
    weight_check,
)
from .kernel import KernelSpec, concentration_hp, tail_mass_L

COMMANDS = ("kernel-info", "hardy-check", "capacity", "coarea-check", "property-suite")
CONFIG_KEYS = ("kernel", "d", "extent", "n", "p", "radii", "out", "seed", "levels", "snapshots")
DEFAULT_SEED = 42
DEFAULT_INFO_RADII = tuple(10.0**k for k in range(-3, 4))


@dataclass
class RunConfig:
    command: str
    kernel: Path
    out: Path
    d: int | None = None
    extent: float = 8.0
    n: int = 512
    p: float | None = None
    radii: tuple[float, ...] | None = None
    levels: int = 16
    seed: int = DEFAULT_SEED
    snapshots: bool = False

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigParse(f"unknown command {self.command!r}")
        if not self.kernel.is_file():
            raise ConfigParse(f"kernel config {self.kernel} is not a readable file")
        if self.d not in (None, 1, 2):
            raise ConfigParse(f"d must be 1 or 2, got {self.d}")
        if self.n < 2 or self.n & (self.n - 1):
            raise ConfigParse(f"n must be a power of two, got {self.n}")
        if not (self.extent > 0 and math.isfinite(self.extent)):
            raise ConfigParse(f"extent must be positive, got {self.extent}")
        if self.p is not None and not self.p >= 1.0:
            raise ConfigParse(f"p must be >= 1, got {self.p}")
        if self.levels < 1:
            raise ConfigParse("levels must be positive")
        if self.radii is not None and any(not (r > 0 and math.isfinite(r)) for r in self.radii):
            raise ConfigParse("radii must be positive")


def parse_radii(text: str | Sequence[float] | None) -> tuple[float, ...] | None:
    if text is None:
        return None
    if isinstance(text, str):
        parts = [t for t in (s.strip() for s in text.split(",")) if t]
    else:
        parts = list(text)
    try:
        return tuple(float(t) for t in parts)
    except (TypeError, ValueError) as exc:
        raise ConfigParse(f"bad radii list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlcap", description="Nonlocal capacity and Hardy inequality runs")
    ap.add_argument("--version", action="version", version=f"nlcap {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON file with defaults for any of the flags below")
        sp.add_argument("--kernel", help="kernel JSON config")
        sp.add_argument("--d", type=int, help="dimension (1 or 2); overrides the kernel file")
        sp.add_argument("--extent", type=float, help="half-width X of the box [-X, X]^d")
        sp.add_argument("--n", type=int, help="cells per axis (power of two)")
        sp.add_argument("--p", type=float, help="exponent; overrides the kernel file")
        sp.add_argument("--radii", help="comma-separated radii")
        sp.add_argument("--levels", type=int, help="dyadic levels of the capacitary check")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="seed of the random test functions")
        sp.add_argument("--snapshots", action="store_true", default=None,
                        help="also write minimizers as grid CSV files (capacity)")
    return ap


def resolve_config(args: argparse.Namespace) -> RunConfig:
    merged: dict[str, Any] = {}
    base = Path(".")
    if args.config:
        cpath = Path(args.config)
        try:
            data = json.loads(cpath.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigParse(f"cannot read run config {cpath}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigParse("run config must be a JSON object")
        unknown = set(data) - set(CONFIG_KEYS)
        if unknown:
            raise ConfigParse(f"unknown run config keys: {sorted(unknown)}")
        merged.update(data)
        base = cpath.parent
    for key in CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    if "kernel" not in merged:
        raise ConfigParse("no kernel config given (--kernel)")
    if "out" not in merged:
        raise ConfigParse("no output directory given (--out)")
    kpath = Path(merged["kernel"])
    if args.config and getattr(args, "kernel", None) is None and not kpath.is_absolute():
        kpath = base / kpath
    try:
        cfg = RunConfig(
            command=args.command,
            kernel=kpath,
            out=Path(merged["out"]),
            d=None if merged.get("d") is None else int(merged["d"]),
            extent=float(merged.get("extent", 8.0)),
            n=int(merged.get("n", 512)),
            p=None if merged.get("p") is None else float(merged["p"]),
            radii=parse_radii(merged.get("radii")),
            levels=int(merged.get("levels", 16)),
            seed=int(merged.get("seed", DEFAULT_SEED)),
            snapshots=bool(merged.get("snapshots", False)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigParse(f"bad run config value: {exc}") from exc
    cfg.validate()
    return cfg


def load_run_kernel(cfg: RunConfig) -> KernelSpec:
    try:
        mapping = json.loads(cfg.kernel.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigParse(f"cannot read kernel config {cfg.kernel}: {exc}") from exc
    if not isinstance(mapping, dict):
        raise ConfigParse("kernel config must be a JSON object")
    if cfg.d is not None:
        mapping["d"] = cfg.d
    if cfg.p is not None:
        mapping["p"] = cfg.p
    return KernelSpec.from_mapping(mapping, base_dir=cfg.kernel.parent)


# -- output --------------------------------------------------------------


def fmt(value: Any) -> str:
    """Shortest round-trip text for floats, plain text otherwise."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_manifest(cfg: RunConfig, kernel: KernelSpec, tolerances: dict[str, Any], outputs: list[str],
                   wall: float) -> None:
    manifest = {
        "command": cfg.command,
        "nlcap_version": __version__,
        "kernel": {"path": str(cfg.kernel), "key": kernel.key(), "digest": kernel.digest()},
        "geometry": {"d": kernel.d, "extent": cfg.extent, "n": cfg.n},
        "p": kernel.p,
        "radii": None if cfg.radii is None else list(cfg.radii),
        "levels": cfg.levels,
        "seed": cfg.seed,
        "tolerances": tolerances,
        "outputs": outputs,
        "wall_time_s": wall,
    }
    with open(cfg.out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- pipelines -----------------------------------------------------------


def run_kernel_info(cfg: RunConfig, kernel: KernelSpec) -> tuple[list[str], dict[str, Any]]:
    radii = sorted(set(cfg.radii if cfg.radii is not None else DEFAULT_INFO_RADII))
    rows = []
    if radii:
        # A sentinel radius keeps the tabulation valid for a single requested radius.
        nodes = radii if len(radii) > 1 else [radii[0], 2.0 * radii[0]]
        L = tail_mass_L(kernel, nodes)
        for r in radii:
            Lr = float(L(r))
            hp = concentration_hp(kernel, r)
            rows.append((r, Lr, hp, hp / Lr))
    write_csv(cfg.out / "kernel_info.csv", ("r", "L", "h_p", "h_p/L"), rows)
    return ["kernel_info.csv"], {"quadrature_rtol": 1e-12}


def _weight_variant(kernel: KernelSpec):
    prm = dict(kernel.params)
    if kernel.family == "log_zero_order":
        return "weight_example", log_zero_order_weight(prm["gamma"], prm["delta"])
    if kernel.family == "double_log":
        return "weight_example", double_log_weight(prm["beta"], prm["gamma"])
    return None, None


def run_hardy_check(cfg: RunConfig, kernel: KernelSpec) -> tuple[list[str], dict[str, Any]]:
    d, X, n, p = kernel.d, cfg.extent, cfg.n, kernel.p
    masses = build_cell_masses(kernel, X, n)
    ctx = HardyContext.build(kernel)
    label = f"{kernel.family}:{kernel.digest()[:12]}"
    rows = []

    def add(fname, variant, lhs, tail, semi, const, ratio, passed):
        rows.append((label, fname, variant, lhs, tail, semi, const, ratio, passed))

    wname, wfn = _weight_variant(kernel)
    for fname, f in hardy_corpus(d, X, n, seed=cfg.seed):
        rep = verify_fullspace_hardy(f, ctx, masses, label=fname)
        add(fname, "fullspace", rep.lhs, rep.rhs_tail, rep.rhs_seminorm, rep.constant, rep.ratio, rep.passed)
        emb = verify_embedding(f, kernel, masses, label=fname)
        add(fname, "embedding", emb.lhs, 0.0, emb.norm, math.nan, emb.ratio, math.isfinite(emb.ratio))
        if wfn is not None:
            rep = weight_check(f, ctx, masses, wfn, label=fname)
            add(fname, wname, rep.lhs, rep.rhs_tail, rep.rhs_seminorm, rep.constant, rep.ratio, rep.passed)
    for fname, f in hardy_corpus(d, X, n, seed=cfg.seed, slab=X):
        rep = verify_halfspace_hardy(f, ctx, masses, X, label=fname)
        add(fname, "halfspace", rep.lhs, rep.rhs_tail, rep.rhs_seminorm, rep.constant, rep.ratio, rep.passed)
    header = ("kernel", "f", "variant", "lhs", "rhs_tail", "rhs_seminorm", "constant", "ratio", "pass")
    write_csv(cfg.out / "hardy.csv", header, rows)
    tol = {"beta": ctx.beta, "C1": ctx.C1, "quadrature_slack": 0.02}
    return ["hardy.csv"], tol


def run_capacity(cfg: RunConfig, kernel: KernelSpec) -> tuple[list[str], dict[str, Any]]:
    opts = SolverOptions()
    radii = list(cfg.radii) if cfg.radii is not None else []
    rows = ball_estimate_sweep(kernel, kernel.p, radii, [cfg.n], opts=opts, extent=cfg.extent) if radii else []
    outputs = ["capacity.csv"]
    table = []
    for row in rows:
        table.append((row.r, row.cap_value, row.bump_upper, row.reference, row.ratio, row.n, row.iterations))
        if cfg.snapshots and row.minimizer is not None:
            name = f"minimizer_r{row.r!r}_n{row.n}.csv"
            row.minimizer.to_csv(cfg.out / name)
            outputs.append(name)
    write_csv(cfg.out / "capacity.csv", ("r", "cap_value", "bump_upper", "reference", "ratio", "n", "iters"), table)
    return outputs, asdict(opts)


def _coarea_corpus(d: int, X: float, n: int) -> list[tuple[str, GridFunction]]:
    g = GridFunction.zeros(d, X, n)
    if d == 1:
        out = [("interval(0:1)", indicator(1, X, n, lambda x: (x > 0) & (x < 1))),
               ("interval(-1:0.5)", indicator(1, X, n, lambda x: (x > -1) & (x < 0.5)))]
    else:
        out = [("disk(r=1)", indicator(2, X, n, lambda x, y: x * x + y * y < 1.0))]
    out.append(("tent", g.like(np.clip(1.0 - g.radius(), 0.0, None))))
    return out


def run_coarea_check(cfg: RunConfig, kernel: KernelSpec) -> tuple[list[str], dict[str, Any]]:
    masses = build_cell_masses(kernel.with_p(1.0), cfg.extent, cfg.n)
    levels = 256
    rows = []
    for fname, f in _coarea_corpus(kernel.d, cfg.extent, cfg.n):
        rep = coarea_check(f, masses, levels=levels)
        rows.append((fname, rep.lhs, rep.rhs, rep.relerr))
    write_csv(cfg.out / "coarea.csv", ("f", "lhs", "rhs", "relerr"), rows)
    return ["coarea.csv"], {"levels": levels}


def property_family(d: int, X: float, n: int) -> list[SetMask]:
    """Five sets: two overlapping boxes, their union, a small box inside one and a far box."""
    q = X / 8.0

    def box(lo, hi):
        return SetMask.box(d, X, n, [lo] * d, [hi] * d)

    A, B = box(-2 * q, 0.5 * q), box(-0.5 * q, 2 * q)
    return [A, B, A.union(B), box(-1.5 * q, -0.5 * q), box(1.0 * q, 1.5 * q)]


def run_property_suite(cfg: RunConfig, kernel: KernelSpec) -> tuple[list[str], dict[str, Any]]:
    masses = build_cell_masses(kernel, cfg.extent, cfg.n)
    opts = SolverOptions()
    slack = 1e-3
    rep = property_suite(property_family(kernel.d, cfg.extent, cfg.n), masses, kernel.p, opts, slack=slack)
    rows = [(c.name, c.lhs, c.rhs, c.slack, c.passed) for c in rep.checks]
    write_csv(cfg.out / "properties.csv", ("check", "lhs", "rhs", "slack", "pass"), rows)
    tol = asdict(opts)
    tol["slack"] = slack
    return ["properties.csv"], tol


PIPELINES = {
    "kernel-info": run_kernel_info,
    "hardy-check": run_hardy_check,
    "capacity": run_capacity,
    "coarea-check": run_coarea_check,
    "property-suite": run_property_suite,
}


def run(cfg: RunConfig) -> int:
    start = time.perf_counter()
    np.random.seed(cfg.seed)
    kernel = load_run_kernel(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    outputs, tol = PIPELINES[cfg.command](cfg, kernel)
    write_manifest(cfg, kernel, tol, outputs, time.perf_counter() - start)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(resolve_config(args))
    except ConfigParse as exc:
        print(f"nlcap: config error: {exc}", file=sys.stderr)
        return 2
    except NlcapError as exc:
        print(f"nlcap: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - one-line diagnostic for any failure
        print(f"nlcap: unexpected {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
