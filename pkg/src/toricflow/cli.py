"""Command-line front end.

Exit codes: 0 success, 1 domain failure (Delzant check, failed estimate,
flow singularity), 2 usage or parse error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import LEMMAS, detect_singularity, rescale, verify_estimate
from .corpus import bump
from .flow import FlowConfig, initial_state, run
from .geometry import curvature_at
from .mcondition import estimate_M
from .polytope import PolytopeError, build_grid, delzant_check, load_polytope
from .potential import (DomainError, SymplecticPotential, load_checkpoint,
                        potential_from_function, save_checkpoint, zero_potential)
from .spline import GridSpline

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2
DEFAULT_H = 1 / 32


class UsageError(Exception):
    pass


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _lemma_list(text: str) -> list[str]:
    ids = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in ids if s not in LEMMAS]
    if bad or not ids:
        raise argparse.ArgumentTypeError(
            f"unknown lemma id(s) {bad}; choose from {', '.join(LEMMAS)}")
    return ids


def _dump(obj, stream=None) -> None:
    stream = stream or sys.stdout
    stream.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- inputs ----------------------------------------------------------------------

def _polytope(args):
    if args.polytope is None:
        raise UsageError("--polytope is required")
    try:
        return load_polytope(args.polytope)
    except OSError as exc:
        raise UsageError(f"cannot read polytope: {exc}") from None


def _require_delzant(P) -> None:
    rep = delzant_check(P)
    if not rep.passed:
        raise DomainError(f"polytope is not Delzant (witness {rep.witness})")


def _potential(args, P, h_default: float = DEFAULT_H) -> SymplecticPotential:
    """Guillemin ``u0`` plus ``f`` from ``--checkpoint`` (default ``f = 0``).

    ``--flat`` drops ``u0``; without a checkpoint ``f = |x|^2 / 2``.
    """
    h = args.grid_h or h_default
    margin = args.margin or 0.0
    if args.checkpoint:
        try:
            f = load_checkpoint(args.checkpoint)
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read checkpoint: {exc}") from None
        lo, hi = P.bbox
        if np.any(f.lo > lo + 1e-9) or np.any(f.hi < hi - 1e-9):
            raise UsageError("checkpoint grid does not cover the polytope")
        return SymplecticPotential(P, f, singular=not args.flat, margin=margin)
    if args.flat:
        return potential_from_function(P, lambda X: 0.5 * np.sum(X ** 2, axis=1), h=h,
                                       singular=False, margin=margin)
    return zero_potential(P, h=h, margin=margin)


def _read_points(path, n: int) -> np.ndarray:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = [[float(v) for v in line.replace(",", " ").split()]
                for line in text.splitlines() if line.strip() and not line.startswith("#")]
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, n)
    if X.ndim != 2 or X.shape[1] != n:
        raise UsageError(f"points must have {n} coordinates")
    return X


# -- subcommands -------------------------------------------------------------------

def cmd_check(args) -> int:
    P = _polytope(args)
    rep = delzant_check(P)
    out = {"polytope": P.to_dict(), **rep.to_dict()}
    _dump(out)
    return EXIT_OK if rep.passed else EXIT_DOMAIN


def cmd_curvature(args) -> int:
    P = _polytope(args)
    _require_delzant(P)
    u = _potential(args, P)
    if args.points:
        X = _read_points(args.points, P.dimension)
    else:
        h = args.grid_h or DEFAULT_H
        X = build_grid(P, h, args.margin or 0.5 * h).points
    rows = curvature_at(u, X).records()
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: repr(v) for k, v in r.items()})
    out = _out_dir(args)
    if out is None:
        sys.stdout.write(buf.getvalue())
    else:
        (out / "curvature.csv").write_text(buf.getvalue())
    return EXIT_OK


def _flow_config(args) -> tuple[FlowConfig, float]:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
    eps = float(data.pop("perturbation", 0.0))
    if args.grid_h:
        data["grid_h"] = args.grid_h
    if args.margin:
        data["margin_delta"] = args.margin
    if args.seed is not None:
        data["seed"] = args.seed
    try:
        return FlowConfig.from_dict(data), eps
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad flow config: {exc}") from None


def cmd_flow(args) -> int:
    P = _polytope(args)
    _require_delzant(P)
    cfg, eps = _flow_config(args)
    if args.checkpoint:
        u = _potential(args, P, cfg.grid_h)
    else:
        u = potential_from_function(P, bump(P, eps), h=cfg.grid_h)
    out = _out_dir(args) or Path(".")
    state = initial_state(u, cfg)
    with open(out / "diagnostics.jsonl", "w") as fh:
        result = run(state, cfg, out_dir=out, jsonl=fh)
    events = []
    if result.reason == "singularity":
        traj = result.records or [result.initial]
        threshold = min(cfg.sup_F_threshold, traj[-1].sup_F * (1 - 1e-12))
        events = [e.to_dict() for e in detect_singularity(traj[-1:], P, threshold)]
    status = {"status": result.reason, "detail": result.detail, "seed": cfg.seed,
              "t": result.state.t, "steps": len(result.records), "rejected": result.rejected,
              "final": json.loads(result.final.to_json()),
              "config": {f.name: getattr(cfg, f.name) for f in fields(cfg)},
              "perturbation": eps, "checkpoints": [Path(c).name for c in result.checkpoints],
              "events": events, "version": __version__}
    (out / "status.json").write_text(json.dumps(status, indent=2, sort_keys=True) + "\n")
    _dump({"status": result.reason, "steps": len(result.records), "events": len(events)})
    return EXIT_DOMAIN if result.reason == "singularity" else EXIT_OK


def cmd_verify(args) -> int:
    P = _polytope(args)
    _require_delzant(P)
    u = _potential(args, P)
    lemmas = args.lemmas or list(LEMMAS)
    params = {"seed": args.seed or 0}
    if args.samples:
        params["n_samples"] = args.samples
    reports = [verify_estimate(u, lem, params=params).to_dict() for lem in lemmas]
    doc = {"seed": params["seed"], "reports": reports,
           "passed": all(r["passed"] for r in reports)}
    out = _out_dir(args)
    if out is not None:
        (out / "verify.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _dump(doc)
    return EXIT_OK if doc["passed"] else EXIT_DOMAIN


def cmd_mcond(args) -> int:
    P = _polytope(args)
    _require_delzant(P)
    u = _potential(args, P)
    est = estimate_M(u, levels=args.density, seed=args.seed or 0)
    doc = est.to_dict()
    out = _out_dir(args)
    if out is not None:
        (out / "mcond.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _dump(doc)
    return EXIT_OK


def cmd_rescale(args) -> int:
    if args.lam is None:
        raise UsageError("--lambda is required")
    P = _polytope(args)
    _require_delzant(P)
    u = _potential(args, P)
    if not isinstance(u.smooth, GridSpline):
        raise UsageError("rescale needs a grid potential")
    prob = rescale(u, args.lam)
    out = _out_dir(args) or Path(".")
    (out / "polytope.json").write_text(json.dumps(prob.polytope.to_dict(), indent=2) + "\n")
    save_checkpoint(prob.potential.smooth, out / "potential.ckpt")
    _dump({"lambda": prob.lam, "polytope": prob.polytope.to_dict(),
           "checkpoint": str(out / "potential.ckpt"), "singular": prob.potential.singular})
    return EXIT_OK


COMMANDS = {"check": cmd_check, "curvature": cmd_curvature, "flow": cmd_flow,
            "verify": cmd_verify, "mcond": cmd_mcond, "rescale": cmd_rescale}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--polytope", metavar="PATH", help="polytope spec (JSON)")
    common.add_argument("--config", metavar="PATH", help="flow config (JSON)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=_u64, default=None, help="sampling seed (default 0)")
    common.add_argument("--grid-h", type=_positive, default=None, help="spline spacing")
    common.add_argument("--margin", type=_positive, default=None, help="boundary margin")
    common.add_argument("--checkpoint", metavar="PATH", help="smooth part f (checkpoint)")
    common.add_argument("--flat", action="store_true", help="drop the Guillemin term")
    parser = argparse.ArgumentParser(prog="toricflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="Delzant validation")
    p = sub.add_parser("curvature", parents=[common], help="curvature table (CSV)")
    p.add_argument("--points", metavar="PATH", help="points (JSON or whitespace text)")
    sub.add_parser("flow", parents=[common], help="run the Calabi flow")
    p = sub.add_parser("verify", parents=[common], help="geometric estimate suite")
    p.add_argument("--lemmas", type=_lemma_list, default=None, help="comma-separated ids")
    p.add_argument("--samples", type=int, default=None, help="interior samples per lemma")
    p = sub.add_parser("mcond", parents=[common], help="M-condition estimate")
    p.add_argument("--density", type=int, default=3, help="refinement levels")
    p = sub.add_parser("rescale", parents=[common], help="blow-up rescaling")
    p.add_argument("--lambda", dest="lam", type=_positive, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PolytopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
