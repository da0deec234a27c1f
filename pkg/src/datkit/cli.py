"""dat-kit: batch experiment harness.

Subcommands: run (one engine mode over a sequence), synth (materialize a
synthetic sequence), sweep (R/C/K grid), score (evaluate a prediction CSV
against ground truth), split (UEMS-balanced participant grouping).

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 external
detector protocol failure.  All output files are deterministic given
--seed; wall-clock throughput goes to stdout only.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from .dataio import (
    AnnotationError,
    FormatError,
    SequenceError,
    open_sequence,
    parse_annotations,
    write_sequence,
)
from .detectors import (
    ChannelClosedError,
    DetectorUnavailableError,
    ExternalDetector,
    ProtocolError,
    ReplayDetector,
    ReplayNoise,
)
from .engine import (
    DatParams,
    EngineError,
    FrameOutcome,
    RunMode,
    Source,
    UnusableBaselineError,
    dat_run,
)
from .evaluation import (
    CostModel,
    ParticipantRecord,
    RunCounts,
    SweepConfig,
    UndefinedRateError,
    score_predictions,
    score_trace,
    split_participants,
    sweep_parameters,
)
from .geometry import BoundingBox, Category, Detection, MatchThresholds
from .synth import SynthSpec, SynthSpecError, generate_sequence
from .trackers import make_tracker

USAGE_EXIT = 1
DATA_EXIT = 2
PROTOCOL_EXIT = 3

TRACE_HEADER = "frame,source,x,y,w,h,detector_called,tracker_updated"
SWEEP_HEADER = "R,C,K,f1_mean,f1_sd,f1_strict_mean,modeled_fps,detector_fraction"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def _dump_json(doc, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_trace_csv(trace: Sequence[FrameOutcome], path: Path) -> None:
    lines = [TRACE_HEADER]
    for o in trace:
        if o.box is None:
            coords = ",,,"
        else:
            coords = f"{o.box.x!r},{o.box.y!r},{o.box.w!r},{o.box.h!r}"
        lines.append(
            f"{o.frame_index},{o.source.value},{coords},"
            f"{int(o.detector_called)},{int(o.tracker_updated)}"
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_trace_csv(path: Path, category: Category):
    """Trace CSV -> (predictions, counts)."""
    text = path.read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines or lines[0] != TRACE_HEADER:
        raise AnnotationError(f"line 1: expected header {TRACE_HEADER!r}")
    predictions: List[Tuple[int, Optional[Detection]]] = []
    detector_calls = tracker_updates = idle = 0
    for number, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 8:
            raise AnnotationError(f"line {number}: expected 8 fields, got {len(parts)}")
        frame_index = int(parts[0])
        source = parts[1]
        det = None
        if source != Source.NONE.value:
            try:
                x, y, w, h = (float(v) for v in parts[2:6])
            except ValueError:
                raise AnnotationError(f"line {number}: bad box in {line!r}") from None
            det = Detection(box=BoundingBox(x, y, w, h), category=category, confidence=1.0)
        called, updated = int(parts[6]), int(parts[7])
        detector_calls += called
        tracker_updates += updated
        idle += int(not called and not updated)
        predictions.append((frame_index, det))
    counts = RunCounts(len(predictions), detector_calls, tracker_updates, idle)
    return predictions, counts


def _report_doc(report, config: dict) -> dict:
    doc = report.to_dict()
    doc["wall_fps"] = None  # machine-dependent; printed, never persisted
    doc["config"] = config
    return doc


def _merge_config(args: argparse.Namespace, defaults: dict) -> dict:
    """Flags override --config file values, which override defaults."""
    effective = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        unknown = sorted(set(loaded) - set(defaults))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        effective.update(loaded)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            effective[key] = value
    return effective


def _add_noise_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--miss-prob", dest="miss_prob", type=float)
    sub.add_argument("--fp-prob", dest="fp_prob", type=float)
    sub.add_argument("--jitter-sigma", dest="jitter_sigma", type=float)
    sub.add_argument("--confidence-floor", dest="confidence_floor", type=float)


def _add_cost_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--c-detect", dest="c_detect", type=float)
    sub.add_argument("--c-track", dest="c_track", type=float)
    sub.add_argument("--c-idle", dest="c_idle", type=float)


_RUN_DEFAULTS = {
    "mode": "dat",
    "tracker": "mf",
    "detector": "replay",
    "detector_cmd": "",
    "params": "100/3/60",
    "category": "L",
    "overlap": 0.1,
    "seed": 0,
    "miss_prob": 0.0,
    "fp_prob": 0.0,
    "jitter_sigma": 0.0,
    "confidence_floor": 0.1,
    "c_detect": CostModel().c_detect,
    "c_track": CostModel().c_track,
    "c_idle": CostModel().c_idle,
}


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _merge_config(args, _RUN_DEFAULTS)
    seq = open_sequence(args.seq)
    category = Category(cfg["category"])
    params = DatParams.parse(
        cfg["params"], overlap_threshold=cfg["overlap"], category=category
    )
    cost = CostModel(cfg["c_detect"], cfg["c_track"], cfg["c_idle"])
    noise = ReplayNoise(
        miss_prob=cfg["miss_prob"],
        fp_prob=cfg["fp_prob"],
        jitter_sigma=cfg["jitter_sigma"],
        confidence_floor=cfg["confidence_floor"],
        seed=cfg["seed"],
    )
    mode = RunMode(cfg["mode"])

    external: Optional[ExternalDetector] = None
    if cfg["detector"] == "external":
        if not cfg["detector_cmd"]:
            raise ValueError("external detector requires --detector-cmd")
        external = ExternalDetector(cfg["detector_cmd"].split(), sequence_dir=args.seq)
        detector = external
    elif cfg["detector"] == "replay":
        detector = ReplayDetector(seq, noise)
    else:
        raise ValueError(f"unknown detector {cfg['detector']!r}")

    try:
        started = time.perf_counter()
        trace = dat_run(seq, detector, lambda: make_tracker(cfg["tracker"]), params, mode)
        elapsed = time.perf_counter() - started
    finally:
        if external is not None:
            external.close()

    report = score_trace(trace, seq, category, MatchThresholds(), cost=cost)
    out = Path(args.out)
    trace_path = Path(args.trace) if args.trace else out.with_suffix(".trace.csv")
    _write_trace_csv(trace, trace_path)
    _dump_json(_report_doc(report, cfg), out)

    wall = len(trace) / elapsed if elapsed > 0 else float("inf")
    print(
        f"{params.name} {mode.value}: f1={report.f1:.4f} "
        f"modeled_fps={report.modeled_fps:.2f} wall_fps={wall:.1f}"
    )
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    spec = SynthSpec.from_json(Path(args.spec).read_text(encoding="utf-8"))
    seq = generate_sequence(spec, args.seed, sequence_id=Path(args.out).name)
    write_sequence(seq, args.out)
    print(f"wrote {len(seq)} frames to {args.out}")
    return 0


_SWEEP_DEFAULTS = {
    "grid_r": "50,100,200",
    "grid_c": "1,3,8,9",
    "grid_k": "30,60",
    "tracker": "mf",
    "category": "L",
    "overlap": 0.1,
    "seed": 0,
    "miss_prob": 0.0,
    "fp_prob": 0.0,
    "jitter_sigma": 0.0,
    "confidence_floor": 0.1,
    "c_detect": CostModel().c_detect,
    "c_track": CostModel().c_track,
    "c_idle": CostModel().c_idle,
}


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _merge_config(args, _SWEEP_DEFAULTS)
    for seq_dir in args.seq:
        if not Path(seq_dir).is_dir():
            raise SequenceError(f"not a directory: {seq_dir}")
    grids = {}
    for axis in ("grid_r", "grid_c", "grid_k"):
        raw = cfg[axis]
        grids[axis] = tuple(
            int(v) for v in (raw.split(",") if isinstance(raw, str) else raw)
        )
    config = SweepConfig(
        grid_r=grids["grid_r"],
        grid_c=grids["grid_c"],
        grid_k=grids["grid_k"],
        tracker=cfg["tracker"],
        noise=ReplayNoise(
            miss_prob=cfg["miss_prob"],
            fp_prob=cfg["fp_prob"],
            jitter_sigma=cfg["jitter_sigma"],
            confidence_floor=cfg["confidence_floor"],
            seed=cfg["seed"],
        ),
        category=Category(cfg["category"]),
        overlap_threshold=cfg["overlap"],
        cost=CostModel(cfg["c_detect"], cfg["c_track"], cfg["c_idle"]),
    )
    jobs = args.jobs or int(os.environ.get("DAT_KIT_JOBS", "1"))
    rows = sweep_parameters(args.seq, config, jobs=jobs)
    lines = [SWEEP_HEADER]
    for row in rows:
        lines.append(
            f"{row.reset_iterations},{row.consecutive_iou},{row.check_iterations},"
            f"{row.f1_mean!r},{row.f1_sd!r},{row.f1_strict_mean!r},"
            f"{row.modeled_fps!r},{row.detector_fraction!r}"
        )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    category = Category(args.category)
    gt = parse_annotations(Path(args.gt).read_text(encoding="utf-8"))
    predictions, counts = _read_trace_csv(Path(args.pred), category)
    cost = CostModel(
        args.c_detect if args.c_detect is not None else CostModel().c_detect,
        args.c_track if args.c_track is not None else CostModel().c_track,
        args.c_idle if args.c_idle is not None else CostModel().c_idle,
    )
    if not predictions:
        # Empty prediction file: every ground-truth frame is a miss.
        gt_frames = [r.frame_index for r in gt if r.category is category]
        horizon = (max(gt_frames) + 1) if gt_frames else 1
        predictions = [(i, None) for i in range(horizon)]
        counts = RunCounts(horizon, 0, 0, horizon)
    try:
        report = score_predictions(
            predictions, gt, category, MatchThresholds(), counts=counts, cost=cost
        )
    except UndefinedRateError:
        report = score_predictions(predictions, gt, category, MatchThresholds(), counts=counts)
    if args.out:
        _dump_json(_report_doc(report, {"pred": str(args.pred), "gt": str(args.gt)}), Path(args.out))
    print(
        f"precision={report.precision:.4f} recall={report.recall:.4f} f1={report.f1:.4f}"
    )
    return 0


def _cmd_split(args: argparse.Namespace) -> int:
    text = Path(args.participants).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines or lines[0].strip() != "id,uems,frames":
        raise AnnotationError("line 1: expected header 'id,uems,frames'")
    records = []
    for number, line in enumerate(lines[1:], start=2):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise AnnotationError(f"line {number}: expected 3 fields")
        try:
            records.append(ParticipantRecord(parts[0], int(parts[1]), int(parts[2])))
        except ValueError as exc:
            raise AnnotationError(f"line {number}: {exc}") from None
    result = split_participants(records, groups=args.groups)
    doc = {
        "groups": [[m.id for m in group] for group in result.groups],
        "group_stats": [
            {
                "n": len(group),
                "mean_uems": sum(m.uems for m in group) / len(group),
                "total_frames": sum(m.frames for m in group),
            }
            for group in result.groups
        ],
        "anova": None
        if result.anova is None
        else {
            "f_statistic": result.anova.f_statistic,
            "df_between": result.anova.df_between,
            "df_within": result.anova.df_within,
            "p_value": result.anova.p_value,
        },
    }
    _dump_json(doc, Path(args.out))
    if result.anova:
        print(
            f"F({result.anova.df_between},{result.anova.df_within}) = "
            f"{result.anova.f_statistic:.2f}, p = {result.anova.p_value:.2f}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dat-kit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one engine mode over a sequence")
    run.add_argument("--mode", choices=["dat", "detector_only", "tracker_only"])
    run.add_argument("--tracker", choices=["mf", "kcf"])
    run.add_argument("--detector", choices=["replay", "external"])
    run.add_argument("--detector-cmd", dest="detector_cmd")
    run.add_argument("--params", help="R/C/K, e.g. 100/3/60")
    run.add_argument("--category", choices=["L", "R"])
    run.add_argument("--overlap", type=float)
    run.add_argument("--seed", type=int)
    run.add_argument("--seq", required=True, help="sequence directory")
    run.add_argument("--out", required=True, help="report JSON path")
    run.add_argument("--trace", help="trace CSV path (default: <out>.trace.csv)")
    run.add_argument("--config", help="JSON config file (flags take precedence)")
    _add_noise_flags(run)
    _add_cost_flags(run)
    run.set_defaults(func=_cmd_run)

    synth = sub.add_parser("synth", help="materialize a synthetic sequence")
    synth.add_argument("--spec", required=True, help="SynthSpec JSON file")
    synth.add_argument("--out", required=True, help="output directory")
    synth.add_argument("--seed", type=int, default=0)
    synth.set_defaults(func=_cmd_synth)

    sweep = sub.add_parser("sweep", help="evaluate an R/C/K grid")
    sweep.add_argument("--seq", action="append", required=True)
    sweep.add_argument("--out", required=True, help="sweep CSV path")
    sweep.add_argument("--grid-r", dest="grid_r")
    sweep.add_argument("--grid-c", dest="grid_c")
    sweep.add_argument("--grid-k", dest="grid_k")
    sweep.add_argument("--tracker", choices=["mf", "kcf"])
    sweep.add_argument("--category", choices=["L", "R"])
    sweep.add_argument("--overlap", type=float)
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--jobs", type=int, help="parallel grid cells (env DAT_KIT_JOBS)")
    sweep.add_argument("--config", help="JSON config file (flags take precedence)")
    _add_noise_flags(sweep)
    _add_cost_flags(sweep)
    sweep.set_defaults(func=_cmd_sweep)

    score = sub.add_parser("score", help="score a prediction CSV against ground truth")
    score.add_argument("--pred", required=True, help="prediction/trace CSV")
    score.add_argument("--gt", required=True, help="annotations CSV")
    score.add_argument("--category", choices=["L", "R"], default="L")
    score.add_argument("--out", help="report JSON path")
    _add_cost_flags(score)
    score.set_defaults(func=_cmd_score)

    split = sub.add_parser("split", help="UEMS-balanced participant grouping")
    split.add_argument("--participants", required=True, help="CSV: id,uems,frames")
    split.add_argument("--out", required=True, help="grouping + ANOVA JSON path")
    split.add_argument("--groups", type=int, default=3)
    split.set_defaults(func=_cmd_split)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit:
        raise
    except (DetectorUnavailableError, ProtocolError, ChannelClosedError) as exc:
        print(f"dat-kit: external detector failure: {exc}", file=sys.stderr)
        return PROTOCOL_EXIT
    except (
        FormatError,
        AnnotationError,
        SequenceError,
        SynthSpecError,
        EngineError,
        UnusableBaselineError,
        ValueError,
        OSError,
        json.JSONDecodeError,
    ) as exc:
        print(f"dat-kit: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
