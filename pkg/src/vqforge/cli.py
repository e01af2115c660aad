"""Command-line front end: ``vqforge <subcommand> [options]``.

Exit status: 0 on success, 1 on a domain error (one ``CODE: message`` line on
standard error), 2 on a usage error. Progress logging goes to standard error;
the level comes from the ``VQFORGE_LOG`` environment variable.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .analysis import (
    compute_mos, export_histogram, inter_subject_consistency, intra_subject_golden,
    patch_video_correlation, write_histogram_csv, write_mos_csv,
)
from .cleaning import clean, read_ratings_csv
from .config import format_config, format_defaults, load_config
from .errors import FormatError, NoGoldenData, NoPairs, TooFewSubjects, VQForgeError
from .features import FEATURE_NAMES, FaceSidecar, FeatureExtractor
from .media_io import FORMATS, VideoMeta, load_frames
from .patchgen import gen_patch_triplet, write_patch_csv
from .sampler import SelectionProblem, solve
from .screening import (
    read_golden_csv, read_session_logs, read_verdicts_csv, screen_sessions, write_verdicts_csv,
)
from .simulate import simulate_study

log = logging.getLogger("vqforge")


@contextlib.contextmanager
def _open_out(path):
    if path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _jobs(args):
    return args.jobs if args.jobs else (os.cpu_count() or 1)


def cmd_defaults(args, cfg):
    with _open_out(args.out) as fh:
        fh.write(format_defaults())


def cmd_extract_features(args, cfg):
    fc = cfg.features
    items = []
    for p in args.inputs:
        seq = load_frames(p, args.format)
        faces = None
        if args.faces:
            side = Path(args.faces) / f"{seq.meta.id}.json"
            if side.exists():
                faces = FaceSidecar.load(side)
        items.append((seq, faces))
        log.info("loaded %s (%dx%dx%d)", seq.meta.id, seq.meta.width, seq.meta.height,
                 seq.meta.frame_count)
    ext = FeatureExtractor(fc.lm_scales, fc.lm_elongation, fc.temporal_scales, _jobs(args))
    X = ext.fit_transform(items)
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["video_id", *FEATURE_NAMES])
        for (seq, _), row in zip(items, X):
            w.writerow([seq.meta.id, *(repr(float(v)) for v in row)])


def _feature_frame(path):
    df = pd.read_csv(path, dtype={"video_id": str, "group": str})
    if "video_id" not in df.columns:
        raise FormatError(f"{path}: missing video_id column")
    return df


def cmd_sample(args, cfg):
    sc = cfg.sampler
    cand = _feature_frame(args.candidates)
    ref = _feature_frame(args.reference)
    cols = [c for c in cand.columns if c not in ("video_id", "group")]
    missing = [c for c in cols if c not in ref.columns]
    if missing:
        raise FormatError(f"reference lacks feature columns {missing[:3]}")
    groups = cand["group"].tolist() if "group" in cand.columns else None
    n = args.target_size or sc.target_size
    problem = SelectionProblem(cand[cols].to_numpy(), cand["video_id"].tolist(),
                               ref[cols].to_numpy(), n, sc.bins, groups, sc.quota_map())
    mode = args.mode or sc.mode
    result = solve(problem, mode, args.seed, max_swaps=sc.max_swaps or None,
                   restarts=sc.restarts)
    log.info("selected %d of %d, objective %.6f", len(result.selected), len(cand), result.objective)
    with _open_out(args.out) as fh:
        for vid in result.selected:
            fh.write(f"{vid}\n")
    report = result.report()
    report["per_feature_deviation"] = dict(zip(cols, report["per_feature_deviation"]))
    report_path = args.report or (None if args.out == "-" else args.out + ".report.json")
    if report_path:
        Path(report_path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def _read_meta_csv(path):
    df = pd.read_csv(path, dtype={"id": str, "video_id": str, "source_tag": str})
    id_col = "id" if "id" in df.columns else "video_id"
    metas = []
    for row in df.to_dict("records"):
        try:
            metas.append(VideoMeta(str(row[id_col]), int(row["width"]), int(row["height"]),
                                   int(row["frame_count"]), float(row.get("fps", 30.0)),
                                   str(row.get("source_tag", "") or "")))
        except KeyError as exc:
            raise FormatError(f"{path}: missing column {exc}") from exc
    return metas


def cmd_gen_patches(args, cfg):
    pc = cfg.patches
    metas = _read_meta_csv(args.meta)
    trips = [gen_patch_triplet(m, args.seed, pc.scale, pc.max_overlap, pc.max_attempts)
             for m in metas]
    with _open_out(args.out) as fh:
        write_patch_csv(trips, fh)


def cmd_screen(args, cfg):
    sessions = read_session_logs(args.logs)
    golden = read_golden_csv(args.golden) if args.golden else {}
    verdicts = screen_sessions(sessions, cfg.screening, golden, _jobs(args))
    log.info("%d of %d sessions accepted", sum(v.accepted for v in verdicts), len(verdicts))
    with _open_out(args.out) as fh:
        write_verdicts_csv(verdicts, fh)


def cmd_clean(args, cfg):
    table = read_ratings_csv(args.ratings, args.flags)
    verdicts = read_verdicts_csv(args.verdicts) if args.verdicts else None
    cleaned, report = clean(table, verdicts, cfg.cleaning)
    with _open_out(args.out) as fh:
        cleaned.to_csv(fh)
    report_path = args.report or (None if args.out == "-" else args.out + ".report.json")
    if report_path:
        Path(report_path).write_text(report.to_json() + "\n")


def cmd_analyze(args, cfg):
    ac = cfg.analysis
    table = read_ratings_csv(args.ratings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mos = compute_mos(table)
    with open(out / "mos.csv", "w", newline="") as fh:
        write_mos_csv(mos, fh)
    kind = args.kind or ac.kind
    with open(out / "histogram.csv", "w", newline="") as fh:
        write_histogram_csv(export_histogram(mos[mos["content_kind"] == kind], ac.histogram_bins), fh)
    summary = {"kind": kind}
    try:
        res = inter_subject_consistency(table, kind, ac.n_splits, args.seed)
        summary["inter_subject"] = json.loads(res.to_json())
    except TooFewSubjects as exc:
        summary["inter_subject"] = {"error": str(exc)}
    if args.golden:
        golden = read_golden_csv(args.golden)
        try:
            summary["intra_subject_golden_median_lcc"] = intra_subject_golden(
                table, golden, kind, ac.min_golden_ratings)
        except NoGoldenData as exc:
            summary["intra_subject_golden_median_lcc"] = None
            summary["intra_subject_error"] = str(exc)
    patch = {}
    for pk in ("sv", "tv", "stv"):
        if (mos["content_kind"] == pk).any():
            try:
                patch[pk] = patch_video_correlation(mos, mos, pk)
            except NoPairs:
                patch[pk] = None
    if patch:
        summary["patch_video_srcc"] = patch
    (out / "consistency.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def cmd_simulate(args, cfg):
    pop = cfg.population
    if args.subjects:
        from dataclasses import replace

        pop = replace(pop, n_subjects=args.subjects)
    res = simulate_study(cfg.world, pop, args.seed)
    res.write(args.out)
    log.info("simulated %d subjects, %d ratings", len(res.sessions), len(res.table))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config file (INI sections per stage)")
    common.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    seeded = argparse.ArgumentParser(add_help=False)
    seeded.add_argument("--seed", type=int, default=0)

    p = argparse.ArgumentParser(prog="vqforge", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("defaults", parents=[common], help="print the default config")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_defaults)

    s = sub.add_parser("extract-features", parents=[common], help="26 features per video")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--format", choices=FORMATS, default="y4m")
    s.add_argument("--faces", help="directory of <video_id>.json face sidecars")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extract_features)

    s = sub.add_parser("sample", parents=[common, seeded], help="histogram-matched subset")
    s.add_argument("--candidates", required=True)
    s.add_argument("--reference", required=True)
    s.add_argument("--mode", choices=("exact", "heuristic"))
    s.add_argument("--target-size", type=int)
    s.add_argument("--report")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("gen-patches", parents=[common, seeded], help="sv/tv/stv coordinates")
    s.add_argument("--meta", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_patches)

    s = sub.add_parser("screen", parents=[common], help="replay session logs")
    s.add_argument("--logs", required=True)
    s.add_argument("--golden")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_screen)

    s = sub.add_parser("clean", parents=[common], help="four-stage rating cleaning")
    s.add_argument("--ratings", required=True)
    s.add_argument("--flags")
    s.add_argument("--verdicts")
    s.add_argument("--report")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_clean)

    s = sub.add_parser("analyze", parents=[common, seeded], help="MOS and consistency")
    s.add_argument("--ratings", required=True)
    s.add_argument("--golden")
    s.add_argument("--kind", choices=("video", "sv", "tv", "stv"))
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", parents=[common, seeded], help="synthetic study")
    s.add_argument("--subjects", type=int)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)
    return p


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = os.environ.get("VQFORGE_LOG", "WARNING").upper()
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        args.func(args, cfg)
    except VQForgeError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"IO_ERROR: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
