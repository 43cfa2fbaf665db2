"""``tod3cap`` command line: eval, stats, qagen, bev and crop."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import yaml

from . import __version__
from .bev import GridSpec, load_points, rasterize, save_grid
from .evaluation import ALL_METRICS, EvalConfig, evaluate
from .geom import object_contexts, project_box
from .relgen import FAMILIES, generate_qa
from .scene import load_predictions, load_scenes
from .stats import dataset_stats

log = logging.getLogger("tod3cap")

DEFAULTS: Dict[str, Any] = {
    "iou": "0.25,0.5",
    "metrics": ",".join(ALL_METRICS),
    "match": "hungarian",
    "match_lambda": 1.0,
    "nms": 0.5,
    "workers": 1,
    "seed": 0,
    "parts": True,
    "families": ",".join(FAMILIES),
    "max_per_family": 20,
    "x_range": "-51.2,51.2",
    "y_range": "-51.2,51.2",
    "z_range": "-5.0,3.0",
    "resolution": "200,200",
    "top": 200,
}


class CLIError(Exception):
    pass


def _write_atomic(path, text: str) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def _floats(text, name: str) -> List[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise CLIError(f"--{name.replace('_', '-')}: expected comma-separated numbers, got {text!r}")


def _names(text) -> List[str]:
    if isinstance(text, (list, tuple)):
        return [str(v) for v in text]
    return [v.strip() for v in str(text).split(",") if v.strip()]


class Settings:
    """Flag > config file > built-in default lookup."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file: Dict[str, Any] = {}
        if getattr(args, "config", None):
            try:
                with open(args.config, encoding="utf-8") as fh:
                    loaded = yaml.safe_load(fh) or {}
            except OSError as exc:
                raise CLIError(f"cannot read config file {args.config}: {exc.strerror}")
            if not isinstance(loaded, dict):
                raise CLIError(f"config file {args.config} must hold a mapping")
            self.file = {k.replace("-", "_"): v for k, v in loaded.items()}

    def __getitem__(self, name: str):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        if name in self.file:
            return self.file[name]
        return DEFAULTS.get(name)

    def require(self, name: str):
        value = self[name]
        if value is None:
            raise CLIError(f"missing required option --{name.replace('_', '-')}")
        return value


def _load_scenes(path):
    if not Path(path).is_file():
        raise CLIError(f"ground-truth file not found: {path}")
    return load_scenes(path)


def cmd_eval(s: Settings) -> int:
    gt_path, pred_path, out = s.require("gt"), s.require("pred"), s.require("out")
    scenes = _load_scenes(gt_path)
    if not Path(pred_path).is_file():
        raise CLIError(f"prediction file not found: {pred_path}")
    preds = load_predictions(pred_path)
    nms = s["nms"]
    if isinstance(nms, str):
        nms = None if nms.lower() in ("none", "off", "") else float(nms)
    parts = s["parts"]
    config = EvalConfig(
        iou_thresholds=tuple(_floats(s["iou"], "iou")),
        metrics=tuple(_names(s["metrics"])),
        match_mode=s["match"],
        match_lambda=float(s["match_lambda"]),
        nms_threshold=None if nms is None else float(nms),
        parts=bool(parts),
        workers=int(s["workers"]),
    )
    report = evaluate(scenes, preds, config)
    payload = report.to_dict()
    payload["config"]["gt"] = Path(gt_path).name
    payload["config"]["pred"] = Path(pred_path).name
    _write_atomic(out, _dump(payload))

    table = report.table()
    tsv = "\t".join(table) + "\n" + "\t".join(f"{v:.6f}" for v in table.values()) + "\n"
    if s["table"]:
        _write_atomic(s["table"], tsv)
    sys.stdout.write(tsv)
    if s["figures"]:
        from .plotting import plot_iou_histogram, plot_metric_grid
        fig_dir = Path(s["figures"])
        plot_metric_grid(report, fig_dir / "metric_grid.png")
        plot_iou_histogram(report, fig_dir / "match_iou.png")
    return 0


def cmd_stats(s: Settings) -> int:
    gt_path, out = s.require("gt"), Path(s.require("out"))
    stats = dataset_stats(_load_scenes(gt_path))
    payload = stats.to_dict()
    payload["config"] = {"gt": Path(gt_path).name, "top": int(s["top"])}
    _write_atomic(out, _dump(payload))
    top = int(s["top"])
    words = stats.word_frequency if top <= 0 else stats.word_frequency[:top]
    _write_atomic(out.with_suffix(".words.tsv"),
                  "word\tcount\n" + "".join(f"{w}\t{c}\n" for w, c in words))
    _write_atomic(out.with_suffix(".lengths.tsv"),
                  "length\tcount\n" + "".join(
                      f"{n}\t{c}\n" for n, c in sorted(stats.sentence_length_histogram.items())))
    print(f"captions\t{stats.n_captions}\nper_frame\t{stats.captions_per_frame:.4f}\n"
          f"per_scene\t{stats.captions_per_scene:.4f}\nvocabulary\t{stats.vocabulary_size}")
    if s["figures"]:
        from .plotting import plot_sentence_lengths, plot_word_frequency
        fig_dir = Path(s["figures"])
        plot_word_frequency(stats, fig_dir / "word_frequency.png", top=top if top > 0 else 200)
        plot_sentence_lengths(stats, fig_dir / "sentence_length.png")
    return 0


def _qa_job(args):
    frame, families, seed, max_per_family = args
    return [qa.to_dict(frame.frame_id) for qa in generate_qa(frame, families, seed, max_per_family)]


def _map(fn, jobs: Sequence, workers: int) -> List:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [fn(j) for j in jobs]


def cmd_qagen(s: Settings) -> int:
    gt_path, out = s.require("gt"), Path(s.require("out"))
    scenes = _load_scenes(gt_path)
    families = _names(s["families"])
    bad = set(families) - set(FAMILIES)
    if bad:
        raise CLIError(f"--families: unknown {sorted(bad)}; choose from {list(FAMILIES)}")
    seed = int(s["seed"])
    mpf = int(s["max_per_family"])
    frames = sorted((f for sc in scenes for f in sc.frames), key=lambda f: f.frame_id)
    jobs = [(f, families, seed, mpf if mpf > 0 else None) for f in frames]
    records = [r for chunk in _map(_qa_job, jobs, int(s["workers"])) for r in chunk]
    _write_atomic(out, "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records))
    counts = {fam: sum(1 for r in records if r["family"] == fam) for fam in FAMILIES}
    meta = {"gt": Path(gt_path).name, "families": families, "seed": seed,
            "max_per_family": mpf, "n_frames": len(frames), "n_pairs": len(records),
            "per_family": counts}
    _write_atomic(out.with_name(out.name + ".meta.json"), _dump(meta))
    for fam, n in counts.items():
        print(f"{fam}\t{n}")
    return 0


def cmd_bev(s: Settings) -> int:
    pts_path, out = s.require("points"), s.require("out")
    if not Path(pts_path).is_file():
        raise CLIError(f"point file not found: {pts_path}")
    res = [int(v) for v in _floats(s["resolution"], "resolution")]
    spec = GridSpec(tuple(_floats(s["x_range"], "x_range")), tuple(_floats(s["y_range"], "y_range")),
                    tuple(res), tuple(_floats(s["z_range"], "z_range")))
    grid = rasterize(load_points(pts_path), spec)
    meta_path, bin_path = save_grid(grid, out)
    print(f"points\t{grid.n_points}\nbinned\t{int(grid.point_count.sum())}\n"
          f"out_of_range\t{grid.out_of_range}")
    if s["figures"]:
        from .plotting import plot_bev
        plot_bev(grid, Path(s["figures"]) / (Path(out).name + "_bev.png"))
    return 0


def cmd_crop(s: Settings) -> int:
    gt_path, out = s.require("gt"), Path(s.require("out"))
    scenes = _load_scenes(gt_path)
    lines = []
    for scene in scenes:
        ctx = object_contexts(scene)
        for frame in scene.frames:
            for obj in frame.objects:
                c = ctx[(frame.frame_id, obj.object_id)]
                base = {"scene_id": scene.scene_id, "frame_id": frame.frame_id,
                        "object_id": obj.object_id, "category": obj.category,
                        "viewing_direction_deg": c.viewing_direction_deg,
                        "distance_m": c.distance_m, "speed_mps": c.speed_mps}
                cams = frame.camera_calibrations or (None,)
                for cam in cams:
                    rect = project_box(obj.box, frame.ego_pose, cam) if cam else None
                    rec = dict(base, camera=cam.name if cam else None,
                               rect=rect.to_list() if rect else None)
                    lines.append(json.dumps(rec, ensure_ascii=False) + "\n")
    _write_atomic(out, "".join(lines))
    meta = {"gt": Path(gt_path).name, "n_records": len(lines)}
    _write_atomic(out.with_name(out.name + ".meta.json"), _dump(meta))
    print(f"records\t{len(lines)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tod3cap", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, gt=True):
        sp.add_argument("--config", help="YAML/JSON file with option defaults")
        if gt:
            sp.add_argument("--gt", help="scene JSONL file")
        sp.add_argument("--out", help="output path")
        sp.add_argument("-v", "--verbose", action="store_true")

    e = sub.add_parser("eval", help="m@kIoU evaluation of predictions")
    common(e)
    e.add_argument("--pred", help="prediction JSONL file")
    e.add_argument("--iou", help="comma-separated IoU thresholds (default 0.25,0.5)")
    e.add_argument("--metrics", help="comma-separated subset of cider,bleu4,meteor,rouge")
    e.add_argument("--match", choices=("hungarian", "greedy"))
    e.add_argument("--match-lambda", type=float, help="IoU weight in the reported match cost")
    e.add_argument("--nms", help="NMS IoU threshold, or 'none'")
    e.add_argument("--no-parts", dest="parts", action="store_const", const=False,
                   help="skip the per-part supplementary scores")
    e.add_argument("--workers", type=int)
    e.add_argument("--table", help="also write the summary table as TSV here")
    e.add_argument("--figures", help="directory for PNG figures")
    e.set_defaults(func=cmd_eval)

    st = sub.add_parser("stats", help="caption corpus statistics")
    common(st)
    st.add_argument("--top", type=int, help="rows in the word table (<= 0 for all)")
    st.add_argument("--figures", help="directory for PNG figures")
    st.set_defaults(func=cmd_stats)

    q = sub.add_parser("qagen", help="template driving-QA generation")
    common(q)
    q.add_argument("--families", help=f"comma-separated subset of {','.join(FAMILIES)}")
    q.add_argument("--seed", type=int)
    q.add_argument("--max-per-family", type=int, help="per frame; 0 keeps every candidate")
    q.add_argument("--workers", type=int)
    q.set_defaults(func=cmd_qagen)

    b = sub.add_parser("bev", help="rasterize a point cloud into a BEV grid")
    common(b, gt=False)
    b.add_argument("--points", help="x,y,z,intensity CSV or float32 .bin file")
    b.add_argument("--x-range")
    b.add_argument("--y-range")
    b.add_argument("--z-range")
    b.add_argument("--resolution", help="cells along x,y")
    b.add_argument("--figures", help="directory for PNG figures")
    b.set_defaults(func=cmd_bev)

    c = sub.add_parser("crop", help="project boxes to camera crops with object context")
    common(c)
    c.set_defaults(func=cmd_crop)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(levelname)s: %(message)s")
    try:
        return args.func(Settings(args))
    except (CLIError, ValueError, OSError) as exc:
        print(f"tod3cap {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
