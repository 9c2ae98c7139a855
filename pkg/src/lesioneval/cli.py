"""Command-line front end.

Subcommands: eval, froc, threshold, stats, volume-curve, phantom,
standardize. Configuration comes from a JSON file plus a few overriding
flags; results are written as CSV/JSON (and self-contained SVG for plots).

Exit codes: 0 success, 1 input or validation error, 2 internal error.
Outputs are sorted by patient id, so the thread count never changes file
bytes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from itertools import combinations

import numpy as np

from . import __version__
from .analysis import (
    DEFAULT_THRESHOLDS,
    EvalOptions,
    aggregate,
    froc as froc_curve,
    threshold_f2_table,
    volume_stratified,
)
from .intensity import LandmarkProfile, extract_landmarks, standardize
from .lesions import connected_components, extract_lesions, filter_by_volume
from .matching import match_lesions
from .metrics import detection_metrics, dice, nsd
from .phantom import PhantomSpec, generate
from .plots import FrocSeries, froc_svg, volume_curve_svg
from .stats import (
    StatTestResult,
    adjust,
    mann_whitney_u,
    shapiro_wilk,
    significance_stars,
    wilcoxon_signed_rank,
)
from .volumes import BINARY_MASK, PROBABILITY, Volume, VolumePair, binarize, read_volume, write_volume


class UsageError(ValueError):
    pass


DETECTION_METRICS = ("sensitivity", "fppi", "f2")
SEGMENTATION_METRICS = ("dice", "nsd")


@dataclass(frozen=True)
class EvalConfig:
    """Run configuration; defaults follow the evaluation protocol."""

    manifest: str = ""
    threshold: float = 0.5
    thresholds: tuple[float, ...] = tuple(DEFAULT_THRESHOLDS)
    connectivity: int = 26
    criterion: str = "any-overlap"
    min_iou: float = 0.5
    min_gt_voxels: int = 50
    min_pred_ml: float = 0.0
    nsd_tolerance: float = 2.0
    nsd_unit: str = "voxels"
    fppi_limit: float = 15.0
    fppi_limit_large: float = 4.0
    large_lesion_ml: float = 1.0
    volume_grid: tuple[float, ...] = (0.0, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
    bonferroni_m: int | None = None
    seed: int = 0

    @classmethod
    def load(cls, path: str | None, overrides: dict) -> "EvalConfig":
        payload: dict = {}
        if path is not None:
            if not os.path.exists(path):
                raise UsageError(f"config file {path}: no such file")
            with open(path, "r", encoding="utf-8") as fh:
                try:
                    payload = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise UsageError(f"config file {path}: invalid JSON ({exc})") from exc
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise UsageError(f"config file {path}: unknown fields {sorted(unknown)}")
        payload.update({k: v for k, v in overrides.items() if v is not None})
        for key in ("thresholds", "volume_grid"):
            if key in payload and payload[key] is not None:
                payload[key] = tuple(float(v) for v in payload[key])
        config = cls(**payload)
        if config.criterion not in ("any-overlap", "iou"):
            raise UsageError(f"config field criterion: must be 'any-overlap' or 'iou', got {config.criterion!r}")
        if config.nsd_unit not in ("voxels", "mm"):
            raise UsageError(f"config field nsd_unit: must be 'voxels' or 'mm', got {config.nsd_unit!r}")
        return config

    def options(self) -> EvalOptions:
        return EvalOptions(connectivity=self.connectivity, criterion=self.criterion,
                           min_iou=self.min_iou, min_gt_voxels=self.min_gt_voxels,
                           min_pred_ml=self.min_pred_ml)


# ---------------------------------------------------------------------------
# Manifest handling
# ---------------------------------------------------------------------------

def load_manifest(path: str) -> list[dict]:
    if not os.path.exists(path):
        raise UsageError(f"manifest {path}: no such file")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            entries = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"manifest {path}: invalid JSON ({exc})") from exc
    if not isinstance(entries, list) or not entries:
        raise UsageError(f"manifest {path}: expected a nonempty JSON array")
    base = os.path.dirname(os.path.abspath(path))
    seen = set()
    for i, entry in enumerate(entries):
        for key in ("patient_id", "prediction_path", "ground_truth_path"):
            if key not in entry:
                raise UsageError(f"manifest {path}: entry {i} missing field {key!r}")
        if entry["patient_id"] in seen:
            raise UsageError(f"manifest {path}: duplicate patient_id {entry['patient_id']!r}")
        seen.add(entry["patient_id"])
        for key in ("prediction_path", "ground_truth_path"):
            resolved = os.path.join(base, entry[key]) if not os.path.isabs(entry[key]) else entry[key]
            if not os.path.exists(resolved):
                raise UsageError(f"manifest {path}: entry {i} ({entry['patient_id']}): "
                                 f"{key} {entry[key]!r} does not exist")
            entry[key] = resolved
    return sorted(entries, key=lambda e: e["patient_id"])


def load_pair(entry: dict) -> VolumePair:
    prediction = read_volume(entry["prediction_path"], kind=PROBABILITY)
    ground_truth = read_volume(entry["ground_truth_path"], kind=BINARY_MASK)
    return VolumePair(prediction=prediction, ground_truth=ground_truth,
                      patient_id=entry["patient_id"])


def load_cohort(config: EvalConfig, threads: int) -> list[VolumePair]:
    entries = load_manifest(config.manifest)
    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        return list(pool.map(load_pair, entries))


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def write_json(path: str, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def _summary_block(values: list[float], metric: str) -> dict | None:
    if not values:
        return None
    summary = aggregate(values, metric)
    return {
        "median": summary.median,
        "q25": summary.q25,
        "q75": summary.q75,
        "n": summary.n,
        "formatted": summary.formatted(),
    }


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _evaluate_patient(pair: VolumePair, config: EvalConfig) -> dict:
    options = config.options()
    gt_labels = connected_components(pair.ground_truth, options.connectivity)
    gt_inst = extract_lesions(gt_labels, options.min_gt_voxels)
    pred_mask = binarize(pair.prediction, config.threshold)
    pred_labels = connected_components(pred_mask, options.connectivity)
    pred_inst = extract_lesions(pred_labels, 1)
    if options.min_pred_ml > 0:
        pred_inst = filter_by_volume(pred_inst, options.min_pred_ml)

    result: dict = {"patient_id": pair.patient_id}
    lesion_rows = []
    for stratum, min_ml in (("all", None), ("large", config.large_lesion_ml)):
        preds = pred_inst if min_ml is None else filter_by_volume(pred_inst, min_ml)
        gts = gt_inst if min_ml is None else filter_by_volume(gt_inst, min_ml)
        match = match_lesions(preds, gts, criterion=options.criterion,
                              min_iou=options.min_iou, patient_id=pair.patient_id)
        det = detection_metrics(match)
        result[stratum] = det
        for pred_id, gt_id, overlap in match.tp_pairs:
            pred_one = Volume(dims=pred_labels.dims, spacing=pred_labels.spacing,
                              data=(pred_labels.data == pred_id).astype(np.uint8), kind=BINARY_MASK)
            gt_one = Volume(dims=gt_labels.dims, spacing=gt_labels.spacing,
                            data=(gt_labels.data == gt_id).astype(np.uint8), kind=BINARY_MASK)
            lesion_rows.append({
                "patient_id": pair.patient_id,
                "stratum": stratum,
                "pred_id": pred_id,
                "gt_id": gt_id,
                "overlap_voxels": overlap,
                "dice": dice(pred_one, gt_one),
                "nsd": nsd(pred_one, gt_one, tolerance=config.nsd_tolerance, unit=config.nsd_unit),
            })
    result["lesions"] = lesion_rows
    return result


def cmd_eval(config: EvalConfig, output: str, threads: int) -> None:
    entries = load_manifest(config.manifest)

    def run(entry: dict) -> dict:
        try:
            return _evaluate_patient(load_pair(entry), config)
        except ValueError as exc:
            raise UsageError(f"patient {entry['patient_id']}: {exc}") from exc

    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        results = list(pool.map(run, entries))
    results.sort(key=lambda r: r["patient_id"])

    patient_header = ["patient_id"]
    for stratum in ("", "_large"):
        patient_header += [f"tp{stratum}", f"fp{stratum}", f"fn{stratum}",
                           f"sensitivity{stratum}", f"fppi{stratum}", f"f2{stratum}"]
    patient_rows = []
    for r in results:
        row = [r["patient_id"]]
        for key in ("all", "large"):
            det = r[key]
            row += [det.tp, det.fp, det.fn, det.sensitivity, det.fppi, det.f2]
        patient_rows.append(row)
    write_csv(os.path.join(output, "patients.csv"), patient_header, patient_rows)

    lesion_header = ["patient_id", "stratum", "pred_id", "gt_id", "overlap_voxels", "dice", "nsd"]
    lesion_rows = [[row[k] for k in lesion_header]
                   for r in results for row in r["lesions"]]
    write_csv(os.path.join(output, "lesions.csv"), lesion_header, lesion_rows)

    summary: dict = {}
    for key, label in (("all", "all_lesions"), ("large", "lesions_gt_1ml")):
        block: dict = {}
        block["sensitivity"] = _summary_block(
            [r[key].sensitivity for r in results if r[key].sensitivity is not None], "sensitivity")
        block["fppi"] = _summary_block([r[key].fppi for r in results], "fppi")
        block["f2"] = _summary_block([r[key].f2 for r in results], "f2")
        stratum = "all" if key == "all" else "large"
        block["dice"] = _summary_block(
            [row["dice"] for r in results for row in r["lesions"] if row["stratum"] == stratum], "dice")
        block["nsd"] = _summary_block(
            [row["nsd"] for r in results for row in r["lesions"] if row["stratum"] == stratum], "nsd")
        summary[label] = block
    write_json(os.path.join(output, "summary.json"), summary)


# ---------------------------------------------------------------------------
# froc
# ---------------------------------------------------------------------------

def cmd_froc(config: EvalConfig, output: str, threads: int) -> None:
    pairs = load_cohort(config, threads)
    thresholds = sorted(set(config.thresholds), reverse=True)
    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        all_curve = froc_curve(pairs, thresholds, config.fppi_limit,
                               options=config.options(), mapper=pool.map)
        series = [FrocSeries(label="all lesions", curve=all_curve, dashed=False)]
        rows = [["all", t, p[0], p[1]] for t, p in zip(all_curve.thresholds, all_curve.points)]
        try:
            large_curve = froc_curve(pairs, thresholds, config.fppi_limit_large,
                                     min_ml=config.large_lesion_ml,
                                     options=config.options(), mapper=pool.map)
            series.append(FrocSeries(label=f"lesions > {config.large_lesion_ml:g} ml",
                                     curve=large_curve, dashed=True))
            rows += [["large", t, p[0], p[1]]
                     for t, p in zip(large_curve.thresholds, large_curve.points)]
        except ValueError as exc:
            print(f"warning: skipping large-lesion series: {exc}", file=sys.stderr)
    write_csv(os.path.join(output, "froc.csv"),
              ["series", "threshold", "fppi", "sensitivity"], rows)
    with open(os.path.join(output, "froc.svg"), "w", encoding="utf-8") as fh:
        fh.write(froc_svg(series))
    write_json(os.path.join(output, "froc.json"),
               {s.label: {"auc": s.curve.auc, "fppi_limit": s.curve.fppi_limit} for s in series})


# ---------------------------------------------------------------------------
# threshold
# ---------------------------------------------------------------------------

def cmd_threshold(config: EvalConfig, output: str, threads: int) -> None:
    pairs = load_cohort(config, threads)
    candidates = sorted(set(config.thresholds), reverse=True)
    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        table = threshold_f2_table(pairs, candidates, options=config.options(), mapper=pool.map)
    best_f2 = max(f2 for _, f2 in table)
    best_t = min(t for t, f2 in table if f2 == best_f2)
    write_json(os.path.join(output, "threshold.json"), {
        "threshold": best_t,
        "f2": best_f2,
        "table": [{"threshold": t, "f2": f2} for t, f2 in sorted(table)],
    })


# ---------------------------------------------------------------------------
# volume-curve
# ---------------------------------------------------------------------------

def cmd_volume_curve(config: EvalConfig, output: str, threads: int) -> None:
    pairs = load_cohort(config, threads)
    rows = volume_stratified(pairs, list(config.volume_grid), threshold=config.threshold,
                             options=config.options())
    write_csv(os.path.join(output, "volume_curve.csv"),
              ["min_ml", "sensitivity", "fppi", "gt_lesion_count"],
              [[r.min_ml, r.sensitivity, r.fppi, r.gt_lesion_count] for r in rows])
    with open(os.path.join(output, "volume_curve.svg"), "w", encoding="utf-8") as fh:
        fh.write(volume_curve_svg(rows))


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------

def _read_metric_table(path: str) -> list[dict]:
    if not os.path.exists(path):
        raise UsageError(f"metric file {path}: no such file")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _load_method(name: str, directory: str) -> dict:
    patients = _read_metric_table(os.path.join(directory, "patients.csv"))
    lesions = _read_metric_table(os.path.join(directory, "lesions.csv"))
    detection = {
        metric: {row["patient_id"]: float(row[metric]) for row in patients if row[metric] != ""}
        for metric in DETECTION_METRICS
    }
    segmentation = {
        metric: [float(row[metric]) for row in lesions if row["stratum"] == "all"]
        for metric in SEGMENTATION_METRICS
    }
    return {"name": name, "detection": detection, "segmentation": segmentation}


def _paired_test(a: dict, b: dict, metric: str) -> StatTestResult:
    shared = sorted(set(a["detection"][metric]) & set(b["detection"][metric]))
    if not shared:
        raise UsageError(f"no common patients with metric {metric!r}")
    diffs = [a["detection"][metric][pid] - b["detection"][metric][pid] for pid in shared]
    if all(d == 0 for d in diffs):
        # identical samples carry no evidence of a difference
        return StatTestResult("wilcoxon-signed-rank", statistic=0.0, p_value=1.0,
                              p_adjusted=1.0, n=0, method="exact")
    return wilcoxon_signed_rank(diffs)


def _normality_screen(methods: list[dict]) -> list[dict]:
    rows = []
    for method in methods:
        samples = {metric: list(method["detection"][metric].values()) for metric in DETECTION_METRICS}
        samples.update({metric: method["segmentation"][metric] for metric in SEGMENTATION_METRICS})
        for metric, values in samples.items():
            entry = {"method": method["name"], "metric": metric, "n": len(values)}
            try:
                result = shapiro_wilk(values)
                entry.update({"w": result.statistic, "p": result.p_value,
                              "normal_at_0.05": bool(result.p_value >= 0.05)})
            except ValueError as exc:
                entry.update({"w": None, "p": None, "skipped": str(exc)})
            rows.append(entry)
    return rows


def cmd_stats(method_args: list[str], m: int | None, output: str) -> None:
    if len(method_args) < 2:
        raise UsageError("stats needs at least two NAME=EVAL_DIR method arguments")
    methods = []
    for arg in method_args:
        if "=" not in arg:
            raise UsageError(f"method argument {arg!r} must look like NAME=EVAL_DIR")
        name, directory = arg.split("=", 1)
        methods.append(_load_method(name, directory))
    names = [m_["name"] for m_ in methods]
    if len(set(names)) != len(names):
        raise UsageError(f"duplicate method names in {names}")
    pair_count = len(names) * (len(names) - 1) // 2
    if m is None:
        raise UsageError("stats requires --m, the Bonferroni family size per metric")
    if m < pair_count:
        raise UsageError(f"--m {m} is smaller than the number of method pairs per metric ({pair_count})")

    comparisons = []
    for metric in DETECTION_METRICS + SEGMENTATION_METRICS:
        per_metric: list[tuple[tuple[str, str], StatTestResult]] = []
        for a, b in combinations(methods, 2):
            if metric in DETECTION_METRICS:
                result = _paired_test(a, b, metric)
            else:
                result = mann_whitney_u(a["segmentation"][metric], b["segmentation"][metric])
            per_metric.append(((a["name"], b["name"]), result))
        adjusted = adjust([r for _, r in per_metric], m)
        for (pair, _), result in zip(per_metric, adjusted):
            row = result.to_dict()
            row.update({"metric": metric, "method_a": pair[0], "method_b": pair[1],
                        "stars": significance_stars(result.p_adjusted)})
            comparisons.append(row)

    write_json(os.path.join(output, "stats.json"), {
        "bonferroni_m": m,
        "normality": _normality_screen(methods),
        "comparisons": comparisons,
    })


# ---------------------------------------------------------------------------
# phantom
# ---------------------------------------------------------------------------

def cmd_phantom(spec_path: str, output: str, patient_id: str | None) -> None:
    if not os.path.exists(spec_path):
        raise UsageError(f"phantom spec {spec_path}: no such file")
    with open(spec_path, "r", encoding="utf-8") as fh:
        spec = PhantomSpec.from_json(fh.read())
    if patient_id:
        spec = replace(spec, patient_id=patient_id)
    name = spec.patient_id or "phantom"
    pair = generate(spec)
    write_volume(pair.prediction, os.path.join(output, f"{name}_pred.nii.gz"))
    write_volume(pair.ground_truth, os.path.join(output, f"{name}_gt.nii.gz"))
    tp, fp, fn = spec.designed_counts()
    write_json(os.path.join(output, f"{name}_counts.json"), {
        "patient_id": name,
        "threshold": 0.5,
        "tp": tp,
        "fp": fp,
        "fn": fn,
    })


# ---------------------------------------------------------------------------
# standardize
# ---------------------------------------------------------------------------

def cmd_standardize(input_path: str, reference_path: str, output_path: str,
                    write_profile: str | None) -> None:
    volume = read_volume(input_path)
    if reference_path.endswith(".json"):
        with open(reference_path, "r", encoding="utf-8") as fh:
            reference = LandmarkProfile.from_json(fh.read())
    else:
        reference = extract_landmarks(read_volume(reference_path))
    source = extract_landmarks(volume, percentiles=reference.percentiles)
    if write_profile:
        with open(write_profile, "w", encoding="utf-8") as fh:
            fh.write(source.to_json() + "\n")
    mapped = standardize(volume, source, reference)
    if not output_path.endswith((".raw", ".json")):
        # the NIfTI subset stores float32; quantize at write time
        mapped = Volume(dims=mapped.dims, spacing=mapped.spacing,
                        data=np.asarray(mapped.data, dtype=np.float32), kind=mapped.kind)
    write_volume(mapped, output_path)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are input errors, exit code 1
        raise UsageError(message)


def _add_common(parser: argparse.ArgumentParser, with_config: bool = True) -> None:
    if with_config:
        parser.add_argument("--config", help="JSON config file")
        parser.add_argument("--manifest", help="dataset manifest (overrides config)")
        parser.add_argument("--threshold", type=float, help="binarization threshold (overrides config)")
    parser.add_argument("--output", required=True, help="output directory")
    parser.add_argument("--threads", type=int, default=min(8, os.cpu_count() or 1),
                        help="worker threads for per-patient evaluation")
    parser.add_argument("--seed", type=int, help="seed override")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lesioneval",
                     description="Lesion-level detection and segmentation evaluation.")
    parser.add_argument("--version", action="version", version=f"lesioneval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, help_text in (
        ("eval", "per-patient and per-lesion metrics plus a median (q25-q75) summary"),
        ("froc", "FROC curves (all lesions and the large-lesion series) with AUC"),
        ("threshold", "pick the pooled-F2-optimal threshold on a validation split"),
        ("volume-curve", "sensitivity and FPPI against minimum lesion volume"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)

    p_stats = sub.add_parser("stats", help="rank tests between methods with Bonferroni correction")
    p_stats.add_argument("methods", nargs="+", metavar="NAME=EVAL_DIR",
                         help="eval output directories, one per method")
    p_stats.add_argument("--m", type=int, help="Bonferroni family size per metric (required)")
    _add_common(p_stats, with_config=False)

    p_phantom = sub.add_parser("phantom", help="generate a synthetic volume pair with known counts")
    p_phantom.add_argument("--spec", required=True, help="phantom spec JSON")
    p_phantom.add_argument("--id", dest="patient_id", help="patient id override")
    _add_common(p_phantom, with_config=False)

    p_std = sub.add_parser("standardize", help="piecewise-linear intensity standardization")
    p_std.add_argument("--input", required=True, help="volume to standardize")
    p_std.add_argument("--reference", required=True,
                       help="landmark profile JSON, or a volume to take landmarks from")
    p_std.add_argument("--out-volume", required=True, help="output volume path")
    p_std.add_argument("--write-profile", help="also save the input's landmark profile JSON here")
    _add_common(p_std, with_config=False)
    return parser


def run(argv: list[str]) -> None:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "output", None):
        os.makedirs(args.output, exist_ok=True)

    if args.command in ("eval", "froc", "threshold", "volume-curve"):
        overrides = {"manifest": args.manifest, "threshold": args.threshold, "seed": args.seed}
        config = EvalConfig.load(args.config, overrides)
        if not config.manifest:
            raise UsageError("a manifest is required (config field 'manifest' or --manifest)")
        command = {
            "eval": cmd_eval,
            "froc": cmd_froc,
            "threshold": cmd_threshold,
            "volume-curve": cmd_volume_curve,
        }[args.command]
        command(config, args.output, args.threads)
    elif args.command == "stats":
        cmd_stats(args.methods, args.m, args.output)
    elif args.command == "phantom":
        cmd_phantom(args.spec, args.output, args.patient_id)
    elif args.command == "standardize":
        cmd_standardize(args.input, args.reference, args.out_volume, args.write_profile)


def main(argv: list[str] | None = None) -> int:
    try:
        run(sys.argv[1:] if argv is None else argv)
    except (UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal invariant violation
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
