"""Command-line front end.

Subcommands: simulate, fuse, group, match, eval, report. Exit status is 0
on success, 2 when inputs fail validation and 3 on I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io
from .errors import PartFusionError
from .evaluation import DEFAULT_CORNER_THRESHOLDS, evaluate
from .fusion import KpfConfig, Overlap, kpf
from .grouping import clique_flags, group_parts, instance_category
from .losses import part_loss, tau_z
from .matching import MatchCostWeights, cost_matrix, hungarian_match
from .scenegen import GenConfig, generate_scene, perturb_to_runs

log = logging.getLogger("partfusion")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 2, 3


def load_config(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def cmd_simulate(args) -> None:
    values = load_config(args.config)
    if args.seed is not None:
        values["seed"] = args.seed
    cfg = GenConfig.from_mapping(values)
    out = io.ensure_dir(args.out_dir)
    scene = generate_scene(cfg)
    runs = perturb_to_runs(scene, cfg)
    io.write_jsonl(out / "truth.jsonl", (io.encode_truth(p, cfg.seed) for p in scene.parts))
    io.write_jsonl(out / "runs.jsonl",
                   (io.encode_proposal(p, cfg.seed, r) for r, run in enumerate(runs) for p in run))
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(asdict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("scene %d: %d parts, %d proposals", cfg.seed, len(scene.parts), sum(map(len, runs)))


def cmd_fuse(args) -> None:
    values = load_config(args.config)
    scenes = io.read_proposals(args.runs)
    records = []
    for scene in sorted(scenes):
        runs = [scenes[scene][r] for r in sorted(scenes[scene])]
        cfg = KpfConfig.from_mapping({**values, "n_q": values.get("n_q", len(runs))})
        fused = kpf(runs, cfg, Overlap(args.overlap))
        records.extend(io.encode_proposal(p, scene) for p in fused)
        log.info("scene %d: %d runs -> %d parts", scene, len(runs), len(fused))
    io.write_jsonl(args.out, records)


def _flatten(scene_runs: dict) -> list:
    return [p for r in sorted(scene_runs) for p in scene_runs[r]]


def cmd_group(args) -> None:
    threshold = args.tau_z if args.tau_z is not None else tau_z(args.tau_z_prime)
    scenes = io.read_proposals(args.input)
    records = []
    for scene in sorted(scenes):
        parts = _flatten(scenes[scene])
        groups = group_parts(parts, threshold)
        flags = clique_flags([p.embedding for p in parts], groups, threshold)
        for k, (members, clique) in enumerate(zip(groups, flags)):
            category, confidence = instance_category([parts[i] for i in members])
            records.append({"scene": scene, "instance": k, "members": members, "category": category,
                            "confidence": confidence, "clique": clique})
    io.write_jsonl(args.out, records)


def cmd_match(args) -> None:
    preds = io.read_proposals(args.pred)
    truths = io.read_truth(args.truth)
    weights = MatchCostWeights()
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = None
        for scene in sorted(truths):
            parts = list(truths[scene].parts)
            cand = _flatten(preds.get(scene, {}))
            costs = cost_matrix(cand, parts, weights)
            assignment = hungarian_match(costs)
            for g, p in enumerate(assignment):
                breakdown = part_loss(cand[p], parts[g]).as_dict()
                row = {"scene": scene, "truth": g, "pred": int(p), "cost": float(costs[p, g]), **breakdown}
                if writer is None:
                    writer = csv.DictWriter(fh, fieldnames=list(row), lineterminator="\n")
                    writer.writeheader()
                writer.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})


def cmd_eval(args) -> None:
    preds = io.read_proposals(args.pred)
    truths = io.read_truth(args.truth)
    scenes = sorted(truths)
    report = evaluate(
        [_flatten(preds.get(s, {})) for s in scenes],
        [list(truths[s].parts) for s in scenes],
        corner_thresholds=args.corner_thresholds,
        shape_thresholds={} if args.no_shape else None,
        kinematic_threshold=args.kinematic_threshold,
        fold_axis=args.fold_axis,
        grid=args.grid,
    )
    out = io.ensure_dir(args.out_dir)
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out / "detection.csv").write_text(report.detection_csv(), encoding="utf-8")
    (out / "kinematics.csv").write_text(report.kinematics_csv(), encoding="utf-8")


def cmd_report(args) -> None:
    """Aggregate report.json files: one row per file plus a mean row."""
    rows = []
    for path in args.reports:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        row = {"source": str(path)}
        row.update({f"ap:{k}": v for k, v in sorted(data["ap"].items())})
        row.update({f"precision:{k}": v for k, v in sorted(data["precision"].items())})
        rows.append(row)
    if not rows:
        raise PartFusionError("no reports given")
    keys = sorted({k for r in rows for k in r if k != "source"})
    mean = {"source": "mean"}
    for k in keys:
        mean[k] = float(np.mean([r[k] for r in rows if k in r]))
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["source"] + keys, lineterminator="\n")
        writer.writeheader()
        for r in rows + [mean]:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="partfusion", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scene and simulated detector runs")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="GenConfig overrides (.json or .toml)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fuse", help="kinematics-aware part fusion over runs")
    p.add_argument("--runs", required=True)
    p.add_argument("--config", help="KpfConfig overrides (.json or .toml)")
    p.add_argument("--overlap", choices=[o.value for o in Overlap], default=Overlap.KIOU.value)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("group", help="group fused parts into instances")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--tau-z-prime", type=float, default=1.0)
    p.add_argument("--tau-z", type=float, help="grouping threshold; overrides --tau-z-prime")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_group)

    p = sub.add_parser("match", help="bipartite matching with per-pair loss breakdown")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", help="detection mAP, shape metrics and joint errors")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--corner-thresholds", type=float, nargs="+", default=list(DEFAULT_CORNER_THRESHOLDS))
    p.add_argument("--kinematic-threshold", type=float, default=0.7)
    p.add_argument("--no-shape", action="store_true", help="skip shape metrics")
    p.add_argument("--fold-axis", action="store_true", help="treat antipodal joint axes as equal")
    p.add_argument("--grid", type=int, default=64)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="aggregate report.json files into one CSV")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (PartFusionError, ValueError, KeyError, TypeError) as exc:
        print(f"partfusion: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"partfusion: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
