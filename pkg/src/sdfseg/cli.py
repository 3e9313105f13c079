"""Command-line pipeline: synth -> fit -> extract -> eval.

Every command is deterministic given its config and seed, and every output
embeds the resolved configuration plus a content hash of its inputs
(PLY comment lines, checkpoint sidecar JSON, report fields). Exit codes:
0 success, 1 usage or configuration error, 2 runtime or numeric error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import field_net, metrics, trainer
from .config import ConfigError, RunConfig
from .extractor import extract_mesh
from .shape_data import (
    SyntheticShapeSpec,
    generate_synthetic,
    load_labeled_mesh,
    normalize,
    Normalization,
    read_ply_comments,
    sample_surface,
    save_labeled_mesh,
)

_CONFIG_COMMENT = "sdfseg-config "
_HASH_COMMENT = "sdfseg-input-sha256 "


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.exit(1, f"{self.prog}: error: {message}\n")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _compact(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    return cfg.override(
        seed=getattr(args, "seed", None),
        iterations=getattr(args, "iterations", None),
        resolution=getattr(args, "resolution", None),
        chunk_size=getattr(args, "chunk_size", None),
        tau=getattr(args, "tau", None),
        head=getattr(args, "head", None),
    )


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    spec_doc = json.loads(Path(args.spec).read_text())
    shape_spec = SyntheticShapeSpec.from_dict(spec_doc)
    resolution = args.resolution if args.resolution is not None else cfg.synth_resolution
    mesh = generate_synthetic(shape_spec, resolution=resolution, seed=cfg.seed)
    comments = [
        _CONFIG_COMMENT + _compact({"resolution": resolution, "seed": cfg.seed,
                                    "spec": spec_doc}),
        _HASH_COMMENT + _sha256(args.spec),
    ]
    save_labeled_mesh(mesh, args.out, comments=comments)
    print(f"wrote {args.out}: {len(mesh.vertices)} vertices, {len(mesh.faces)} faces, "
          f"{mesh.num_parts} parts")
    return 0


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    mesh = load_labeled_mesh(args.mesh)
    if len(mesh.faces) == 0:
        raise ValueError(f"{args.mesh}: empty mesh")
    num_parts = cfg.num_parts if cfg.num_parts is not None else mesh.num_parts
    ss = np.random.SeedSequence(cfg.seed)
    sample_seed = int(ss.spawn(1)[0].generate_state(1)[0])
    cloud = sample_surface(mesh, cfg.surface_samples, seed=sample_seed)
    cloud, norm = normalize(cloud)

    train_cfg = trainer.TrainConfig(
        learning_rate=cfg.train.learning_rate,
        iterations=cfg.train.iterations,
        epochs=cfg.train.epochs,
        seed=cfg.seed,
        weights=cfg.weights,
        sampler=cfg.sampler,
        head_variant=cfg.head_variant,
        num_parts=num_parts,
        dtype=cfg.dtype,
        checkpoint_every=cfg.train.checkpoint_every,
        checkpoint_path=str(args.out),
    )
    sidecar = {
        "config": cfg.resolved(),
        "num_parts": num_parts,
        "normalization": norm.to_dict(),
        "input_sha256": _sha256(args.mesh),
    }
    log_path = Path(str(args.out) + ".log.jsonl")
    with log_path.open("w") as fh:
        fh.write(_compact({"header": sidecar}) + "\n")
        net, log = trainer.fit(cloud, train_cfg)
        for entry in log:
            fh.write(_compact(entry) + "\n")
    field_net.save_checkpoint(net, args.out)
    Path(str(args.out) + ".json").write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n")
    final = log[-1]["total"] if log else float("nan")
    print(f"wrote {args.out} ({cfg.head_variant} head, K={num_parts}, "
          f"{train_cfg.iterations} iterations, final loss {final:.6g})")
    return 0


def cmd_extract(args) -> int:
    sidecar_path = Path(str(args.checkpoint) + ".json")
    if not sidecar_path.exists():
        raise ValueError(f"missing checkpoint sidecar {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text())
    if getattr(args, "config", None):
        cfg = _load_config(args)
    else:
        cfg = RunConfig.from_dict(sidecar["config"]).override(
            seed=args.seed, resolution=args.resolution, chunk_size=args.chunk_size
        )
    net = field_net.load_checkpoint(args.checkpoint)
    norm = Normalization.from_dict(sidecar["normalization"])
    mesh = extract_mesh(net, cfg.grid, norm)
    # chunk_size is a memory knob with no effect on results; leaving it out
    # keeps output bytes identical across chunk-size choices
    resolved = cfg.resolved()
    del resolved["grid"]["chunk_size"]
    comments = [
        _CONFIG_COMMENT + _compact({"config": resolved, "head_variant": net.head_variant}),
        _HASH_COMMENT + _sha256(args.checkpoint),
    ]
    save_labeled_mesh(mesh, args.out, comments=comments)
    print(f"wrote {args.out}: {len(mesh.vertices)} vertices, {len(mesh.faces)} faces, "
          f"grid {cfg.grid.resolution}^3")
    return 0


def _pred_variant(path) -> str:
    for comment in read_ply_comments(path):
        if comment.startswith(_CONFIG_COMMENT):
            try:
                return json.loads(comment[len(_CONFIG_COMMENT):]).get("head_variant", "unknown")
            except json.JSONDecodeError:
                return "unknown"
    return "unknown"


def cmd_eval(args) -> int:
    if args.aggregate:
        return _aggregate_reports(args)
    if not (args.gt and args.pred):
        raise ConfigError("eval needs --gt and --pred (or --aggregate DIR)")
    cfg = _load_config(args)
    gt = load_labeled_mesh(args.gt)
    pred = load_labeled_mesh(args.pred)
    record = metrics.evaluate_shape(
        gt, pred,
        n_samples=cfg.metrics.eval_samples,
        tau=cfg.metrics.tau,
        seed=cfg.seed,
        k=cfg.metrics.consistency_k,
        anchor_cap=cfg.metrics.consistency_anchors,
    )
    report = {
        "config": cfg.resolved(),
        "inputs": {"gt_sha256": _sha256(args.gt), "pred_sha256": _sha256(args.pred)},
        "variant": _pred_variant(args.pred),
        "metrics": record.as_dict(),
    }
    Path(args.out).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    print(f"wrote {args.out}: cd_l1 {record.cd_l1:.6g}, nc {record.nc:.4f}, "
          f"miou {record.miou:.4f}, acc {record.accuracy:.4f}, "
          f"consistency {record.consistency:.4f}, parts {record.parts_pred}/{record.parts_gt}")
    return 0


def _record_from_report(doc: dict) -> metrics.ShapeMetrics:
    m = doc["metrics"]
    return metrics.ShapeMetrics(
        cd_l1=m["cd_l1"], cd_l2=m["cd_l2"], nc=m["nc"], f1=m["f1"], miou=m["miou"],
        accuracy=m["accuracy"], consistency=m["consistency"], parts_gt=m["parts_gt"],
        parts_pred=m["parts_pred"],
        per_part_iou={int(k): v for k, v in m["per_part_iou"].items()},
    )


def _aggregate_reports(args) -> int:
    paths = sorted(Path(args.aggregate).glob("*.json"))
    if not paths:
        raise ValueError(f"no report files in {args.aggregate}")
    groups: dict = {}
    for path in paths:
        doc = json.loads(path.read_text())
        groups.setdefault(doc.get("variant", "unknown"), []).append(_record_from_report(doc))

    out = Path(args.out)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "n", "metric", "mean", "std"])
        for variant in sorted(groups):
            records = groups[variant]
            for name, (mean, std) in metrics.aggregate(records).items():
                writer.writerow([variant, len(records), name, repr(mean), repr(std)])

    corr_path = out.with_suffix(".correlations.csv")
    with corr_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "reconstruction", "segmentation", "pearson_r"])
        for variant in sorted(groups):
            if len(groups[variant]) < 2:
                continue
            for (rname, sname), r in metrics.correlations(groups[variant]).items():
                writer.writerow([variant, rname, sname, repr(r)])
    print(f"wrote {out} and {corr_path} ({sum(len(v) for v in groups.values())} reports, "
          f"{len(groups)} variants)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sdfseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="run configuration JSON")
        p.add_argument("--seed", type=int, help="override config seed")

    p = sub.add_parser("synth", help="generate a labeled synthetic mesh")
    common(p)
    p.add_argument("--spec", required=True, help="primitive-list shape spec JSON")
    p.add_argument("--out", required=True, help="output PLY path")
    p.add_argument("--resolution", type=int, help="synthesis grid resolution")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit a field network to a labeled mesh")
    common(p)
    p.add_argument("--mesh", required=True, help="labeled input mesh (PLY or OBJ)")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--iterations", type=int, help="override training iterations")
    p.add_argument("--head", choices=field_net.HEAD_VARIANTS, help="segmentation head variant")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("extract", help="extract the labeled isosurface of a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="output PLY path")
    p.add_argument("--resolution", type=int, help="marching-cubes grid resolution")
    p.add_argument("--chunk-size", dest="chunk_size", type=int, help="SDF query chunk size")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", help="evaluate a predicted mesh against ground truth")
    common(p)
    p.add_argument("--gt", help="ground-truth labeled mesh")
    p.add_argument("--pred", help="predicted labeled mesh")
    p.add_argument("--out", required=True, help="output report JSON (or aggregate CSV)")
    p.add_argument("--tau", type=float, help="F1 distance threshold")
    p.add_argument("--aggregate", help="directory of per-shape reports to aggregate")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"sdfseg: config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime/numeric errors
        print(f"sdfseg: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
