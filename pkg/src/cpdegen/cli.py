"""Command-line driver: ``cpdegen {sweep,analyze,fit,example}``.

Artifacts go to ``--output-dir``, else ``$CPDEGEN_OUTPUT_DIR``, else the
current directory. Exit codes: 0 success, 1 analysis failure (triangular
form not reached, ALS budget exhausted), 2 usage or I/O error.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__
from .als import DEFAULT_WINDOW, INITS, fit_als, swamp_metrics
from .cp import ComponentGroup, evaluate
from .degeneracy import SERIES_COLUMNS, detect_groups, group_series
from .exceptions import InvalidArgument
from .families import DEFAULT_GRID, make_family
from .io import (
    cp_to_dict,
    load_tensor,
    read_json,
    save_tensor,
    schur_to_dict,
    write_csv,
    write_json,
)
from .sgsd import (
    DEFAULT_COND_CAP,
    eigen_structure,
    find_nonsingular_slicemix,
    normalize_first_slice,
    partition_signature,
    sgsd_jacobi,
    zero_diagonal_positions,
    zero_upper_positions,
)
from .tensor import frobenius_norm

ENV_OUTPUT_DIR = "CPDEGEN_OUTPUT_DIR"
COMMANDS = ("sweep", "analyze", "fit", "example")
NEAR_ZERO = 1e-6


def _default_tolerances() -> dict:
    return {
        "omega_growth": 1e2,
        "bound_ratio": 10.0,
        "congruence_link": 0.99,
        "tol_prop": 1e-2,
        "max_sweeps": 200,
        "sgsd_tol": 1e-12,
        "cond_cap": DEFAULT_COND_CAP,
        "residual_tol": 1e-8,
        "max_iters": 5000,
        "rel_tol": 1e-8,
        "window": DEFAULT_WINDOW,
    }


@dataclass
class RunConfig:
    """Everything a run depends on; its JSON form round-trips exactly."""

    command: str
    family: str | None = None
    params: dict = field(default_factory=dict)
    ns: tuple = tuple(float(n) for n in DEFAULT_GRID)
    seed: int = 0
    rank: int | None = None
    n: float | None = None
    init: str = "random"
    input: str | None = None
    output: str | None = None
    output_dir: str = "."
    tolerances: dict = field(default_factory=_default_tolerances)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise InvalidArgument(f"unknown command {self.command!r}")
        self.ns = tuple(float(n) for n in self.ns)
        self.params = {k: float(v) for k, v in self.params.items()}
        tol = _default_tolerances()
        unknown = set(self.tolerances) - set(tol)
        if unknown:
            raise InvalidArgument(f"unknown tolerance keys {sorted(unknown)}")
        tol.update(self.tolerances)
        for k in ("max_sweeps", "max_iters", "window"):
            tol[k] = int(tol[k])
        for k in set(tol) - {"max_sweeps", "max_iters", "window"}:
            tol[k] = float(tol[k])
        self.tolerances = tol
        if self.init not in INITS:
            raise InvalidArgument(f"init must be one of {INITS}")

    def validate(self) -> None:
        if self.command == "sweep":
            if not self.ns:
                raise InvalidArgument("the n grid is empty")
            if any(not n > 0 for n in self.ns):
                raise InvalidArgument("grid values must be positive")
            if list(self.ns) != sorted(set(self.ns)):
                raise InvalidArgument("grid values must be strictly increasing")
            if len(self.ns) < 3:
                raise InvalidArgument("group detection needs at least 3 grid points")
        if self.command in ("sweep", "example") and not self.family:
            raise InvalidArgument(f"{self.command} needs --family")
        if self.command in ("analyze", "fit"):
            if not self.input:
                raise InvalidArgument(f"{self.command} needs --input")
            if self.rank is None or self.rank < 1:
                raise InvalidArgument(f"{self.command} needs --rank >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ns"] = list(self.ns)
        return d

    @classmethod
    def from_dict(cls, d) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidArgument(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    def save(self, path) -> Path:
        return write_json(path, self.to_dict())

    @classmethod
    def load(cls, path) -> "RunConfig":
        d = read_json(path)
        if not isinstance(d, dict):
            raise InvalidArgument(f"{path}: config must be a JSON object")
        return cls.from_dict(d)


def _family_tag(cfg: RunConfig) -> str:
    fam = make_family(cfg.family, **_family_kwargs(cfg))
    return fam.kind if fam.seed is None else f"{fam.kind}_seed{fam.seed}"


def _family_kwargs(cfg: RunConfig) -> dict:
    return {**cfg.params, "seed": cfg.seed}


def _fmt_partition(p) -> str:
    return "{" + ",".join(str(v) for v in p) + "}"


def _fmt_positions(pos) -> str:
    return ",".join(f"({i + 1},{j + 1})" for i, j in pos) if pos else "none"


def cmd_sweep(cfg: RunConfig, out=None) -> int:
    """Snapshot series of a family; writes ``sweep_<tag>.csv`` and ``report_<tag>.json``.

    Weights, group sums and congruences come from the normalized snapshots;
    the rank-1 metrics use the family's factor matrices as constructed.
    """
    out = out or sys.stdout
    fam = make_family(cfg.family, **_family_kwargs(cfg))
    tag = _family_tag(cfg)
    series = fam.sweep(cfg.ns)
    raw = [fam.factors(n) for n in cfg.ns]
    t = cfg.tolerances
    report = detect_groups(
        series, cfg.ns, omega_growth=t["omega_growth"], bound_ratio=t["bound_ratio"],
        congruence_link=t["congruence_link"], tol_prop=t["tol_prop"], factors=raw,
    )
    everything = ComponentGroup.of(range(fam.rank))
    full = group_series(series, everything, cfg.ns, raw)
    rows = [("all",) + tuple(full[c][i] for c in SERIES_COLUMNS) for i in range(len(cfg.ns))]
    rows += list(report.rows())
    out_dir = Path(cfg.output_dir)
    csv_path = write_csv(out_dir / f"sweep_{tag}.csv", ("group",) + SERIES_COLUMNS, rows)
    doc = {"family": fam.describe(), "config": cfg.to_dict(), "report": report.to_dict()}
    json_path = write_json(out_dir / f"report_{tag}.json", doc)
    print(f"{tag}: {len(report.groups)} diverging group(s)", file=out)
    for g in report.groups:
        flag = "" if g.criteria_agree else " (bounded/congruence criteria disagree)"
        print(f"  group {g.group.label()}: {g.verdict}{flag}", file=out)
    print(f"wrote {csv_path} and {json_path}", file=out)
    return 0


def _analysis_lines(X, cfg: RunConfig):
    t = cfg.tolerances
    schur = sgsd_jacobi(X, cfg.rank, max_sweeps=t["max_sweeps"], tol=t["sgsd_tol"], seed=cfg.seed)
    nX = schur.norm_X if schur.norm_X > 0 else 1.0
    G = schur.G
    lines = [
        f"core {G.shape[0]}x{G.shape[1]}x{G.shape[2]}",
        f"sgsd: {'converged' if schur.converged else 'not converged'} after {schur.sweeps} sweep(s); "
        f"below-diagonal residual {schur.below_diag_residual / nX:.3e} |X|; "
        f"reconstruction error {schur.reconstruction_error / nX:.3e} |X|",
    ]
    diag = {"schur": schur, "slicemix": None, "pattern": None}
    zdiag = zero_diagonal_positions(G, NEAR_ZERO) if frobenius_norm(G) > 0 else []
    mix = find_nonsingular_slicemix(G, cond_cap=t["cond_cap"], seed=cfg.seed) if G.shape[2] >= 1 else None
    if mix is None:
        lines.append(f"slicemix: none (cond_cap {t['cond_cap']:.0e})")
    elif G.shape[2] < 2:
        lines.append("slicemix: single slice, no eigenstructure")
    else:
        diag["slicemix"] = mix
        core = normalize_first_slice(G, mix)
        es = eigen_structure(core)
        zeros = zero_upper_positions(core, NEAR_ZERO)
        lines.append(f"slicemix: found; first slice normalized to identity (error {core.identity_error:.3e})")
        for k, part in enumerate(es.slice_partitions, start=2):
            vals = " ".join(f"{v:.6g}" for v in es.eigenvalues[k - 2])
            lines.append(f"slice {k}: eigenvalues [{vals}] partition {_fmt_partition(part)}")
        lines.append(
            f"joint partition {_fmt_partition(partition_signature(es.joint_clusters))}; "
            f"{es.n_eigenvectors} of {G.shape[0]} eigenvectors"
            + (" (defective)" if es.defective else "")
        )
        lines.append(f"zeros at {_fmt_positions(zeros)}")
        diag["pattern"] = {
            "slice_partitions": [list(p) for p in es.slice_partitions],
            "joint_partition": list(partition_signature(es.joint_clusters)),
            "zeros_upper": [[i + 1, j + 1] for i, j in zeros],
            "defective": es.defective,
            "n_eigenvectors": es.n_eigenvectors,
            "eigenvalues": es.eigenvalues,
        }
    lines.append(
        f"near-zero diagonal entries (< {NEAR_ZERO:.0e} |G|): {_fmt_positions([(i, i) for i in zdiag])}"
    )
    diag["zero_diagonal"] = [i + 1 for i in zdiag]
    return lines, diag


def cmd_analyze(cfg: RunConfig, out=None) -> int:
    """SGSD, slicemix and eigenstructure of a tensor file; writes ``schur.json``, ``eigen.json`` and ``eigen.txt``."""
    out = out or sys.stdout
    X = load_tensor(cfg.input)
    lines, diag = _analysis_lines(X, cfg)
    schur = diag["schur"]
    out_dir = Path(cfg.output_dir)
    write_json(out_dir / "schur.json", schur_to_dict(schur))
    write_json(out_dir / "eigen.json", {
        "slicemix": None if diag["slicemix"] is None else diag["slicemix"],
        "pattern": diag["pattern"],
        "zero_diagonal": diag["zero_diagonal"],
        "config": cfg.to_dict(),
    })
    (out_dir / "eigen.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line, file=out)
    nX = schur.norm_X if schur.norm_X > 0 else 1.0
    if schur.below_diag_residual > cfg.tolerances["residual_tol"] * nX:
        print("triangular form not reached within tolerance", file=sys.stderr)
        return 1
    return 0


def cmd_fit(cfg: RunConfig, out=None) -> int:
    """ALS fit of a tensor file; writes ``fit_trace.csv`` and ``fit.json``."""
    out = out or sys.stdout
    Z = load_tensor(cfg.input)
    t = cfg.tolerances
    trace = fit_als(Z, cfg.rank, max_iters=t["max_iters"], rel_tol=t["rel_tol"], seed=cfg.seed, init=cfg.init)
    metrics = swamp_metrics(trace, t["window"])
    out_dir = Path(cfg.output_dir)
    csv_path = write_csv(out_dir / "fit_trace.csv", trace.csv_header(), trace.csv_rows())
    write_json(out_dir / "fit.json", {
        "reason": trace.reason,
        "iterations": len(trace),
        "final_fit_error": float(trace.fit_errors[-1]),
        "last_rel_change": trace.last_rel_change,
        "final": cp_to_dict(trace.final),
        "swamp_metrics": metrics.to_dict(),
        "n_ridge_warnings": len(trace.warnings),
        "config": cfg.to_dict(),
    })
    print(
        f"{trace.reason} after {len(trace)} sweep(s): fit error {trace.fit_errors[-1]:.6g}, "
        f"max|omega| {trace.max_abs_omega[-1]:.6g}, weight growth rate {metrics.weight_growth_rate:.3e}",
        file=out,
    )
    print(f"wrote {csv_path}", file=out)
    return 1 if trace.reason == "max_iters" else 0


def cmd_example(cfg: RunConfig, out=None) -> int:
    """Write a family's limit tensor (or its snapshot at ``n``) as a tensor file."""
    out = out or sys.stdout
    fam = make_family(cfg.family, **_family_kwargs(cfg))
    if cfg.n is None:
        X, stem = fam.limit, _family_tag(cfg)
    else:
        X, stem = evaluate(fam.snapshot(cfg.n)), f"{_family_tag(cfg)}_n{cfg.n:g}"
    name = cfg.output or f"{stem}.json"
    path = save_tensor(Path(cfg.output_dir) / name, X)
    print(f"wrote {path} (dims {list(X.shape)}, |X| = {frobenius_norm(X):.6g})", file=out)
    return 0


HANDLERS = {"sweep": cmd_sweep, "analyze": cmd_analyze, "fit": cmd_fit, "example": cmd_example}


def _parse_grid(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpdegen", description="CP degeneracy analysis")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration; explicit flags override it")
        p.add_argument("--save-config", help="write the resolved configuration to this file")
        p.add_argument("--output-dir", help=f"artifact directory (default ${ENV_OUTPUT_DIR} or .)")
        p.add_argument("--seed", type=int)

    def family_flags(p):
        p.add_argument("--family", help="r3, r4, r6, generic-r3 or generic-332")
        p.add_argument("--a", type=float)
        p.add_argument("--e", type=float)
        p.add_argument("--f", type=float)

    p = sub.add_parser("sweep", help="snapshot series and divergence report of a family")
    common(p)
    family_flags(p)
    p.add_argument("--ns", type=_parse_grid, help="comma-separated n grid (default 10,100,1000,10000)")
    for name in ("omega-growth", "bound-ratio", "congruence-link", "tol-prop"):
        p.add_argument(f"--{name}", type=float)

    p = sub.add_parser("analyze", help="triangular form and eigenstructure of a tensor file")
    common(p)
    p.add_argument("--input")
    p.add_argument("--rank", type=int)
    p.add_argument("--max-sweeps", type=int)
    p.add_argument("--sgsd-tol", type=float)
    p.add_argument("--cond-cap", type=float)
    p.add_argument("--residual-tol", type=float)

    p = sub.add_parser("fit", help="ALS fit of a tensor file")
    common(p)
    p.add_argument("--input")
    p.add_argument("--rank", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--rel-tol", type=float)
    p.add_argument("--init", choices=INITS)
    p.add_argument("--window", type=int)

    p = sub.add_parser("example", help="write a family's limit tensor to a file")
    common(p)
    family_flags(p)
    p.add_argument("--n", type=float, help="write the snapshot at n instead of the limit")
    p.add_argument("--output", help="file name inside the output directory")
    return parser


TOLERANCE_FLAGS = (
    "omega_growth", "bound_ratio", "congruence_link", "tol_prop", "max_sweeps", "sgsd_tol",
    "cond_cap", "residual_tol", "max_iters", "rel_tol", "window",
)


def config_from_args(args) -> RunConfig:
    if args.config:
        cfg = RunConfig.load(args.config)
        if cfg.command != args.command:
            raise InvalidArgument(f"config is for {cfg.command!r}, not {args.command!r}")
        d = cfg.to_dict()
    else:
        d = {"command": args.command, "output_dir": os.environ.get(ENV_OUTPUT_DIR, ".")}
    a = vars(args)
    for key in ("family", "seed", "rank", "n", "init", "input", "output", "output_dir"):
        if a.get(key) is not None:
            d[key] = a[key]
    if a.get("ns") is not None:
        d["ns"] = a["ns"]
    params = dict(d.get("params", {}))
    for key in ("a", "e", "f"):
        if a.get(key) is not None:
            params[key] = a[key]
    d["params"] = params
    tol = dict(d.get("tolerances", {}))
    for key in TOLERANCE_FLAGS:
        if a.get(key) is not None:
            tol[key] = a[key]
    d["tolerances"] = tol
    return RunConfig.from_dict(d)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        cfg.validate()
        if args.save_config:
            cfg.save(args.save_config)
        return HANDLERS[cfg.command](cfg)
    except (InvalidArgument, OSError) as exc:
        print(f"cpdegen {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
