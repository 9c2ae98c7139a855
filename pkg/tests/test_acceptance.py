"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as the
criteria execute.
"""

import csv
import json
import os
import time
from contextlib import contextmanager

import numpy as np
import pytest

from lesioneval import (
    BINARY_MASK,
    PROBABILITY,
    Blob,
    EvalOptions,
    LandmarkProfile,
    PhantomSpec,
    Volume,
    VolumePair,
    connected_components,
    extract_landmarks,
    generate,
    froc,
    mann_whitney_u,
    nsd,
    pooled_detection,
    random_phantom_spec,
    shapiro_wilk,
    standardize,
    volume_stratified,
    wilcoxon_signed_rank,
    write_volume,
)
from lesioneval.analysis import gt_instances, pred_instances, _match
from lesioneval.cli import main

from oracles import (
    flood_fill_labels,
    mann_whitney_enumeration_p,
    nsd_all_pairs,
    partition_of,
    wilcoxon_enumeration_p,
)
from test_stats import (  # frozen reference vectors
    EXP50, EXP50_W, NORM20, NORM20_W, V12, V12_P, V12_W,
)


@contextmanager
def criterion(number: int, name: str):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number} ({name}): FAIL")
        raise
    print(f"ACCEPTANCE {number} ({name}): PASS")


def designed_spec(patient_id: str, seed: int) -> PhantomSpec:
    """tp=2, fp=2, fn=1 at threshold 0.5; lesions above the 50-voxel floor."""
    return PhantomSpec(
        dims=(40, 40, 40), spacing=(1.0, 1.0, 1.0), seed=seed, patient_id=patient_id,
        gt_lesions=[Blob((10, 10, 10), 3.0), Blob((30, 10, 10), 3.0),
                    Blob((10, 30, 30), 3.0)],
        detected_ids=(1, 2),
        fp_blobs=[Blob((30, 30, 10), 3.0, peak_prob=0.8),
                  Blob((10, 30, 10), 2.5, peak_prob=0.7)],
    )


def write_cohort(root: str, specs, identity: bool = False) -> str:
    os.makedirs(root, exist_ok=True)
    entries = []
    for spec in specs:
        pair = generate(spec)
        prediction = pair.prediction
        if identity:
            prediction = Volume(pair.ground_truth.dims, pair.ground_truth.spacing,
                                pair.ground_truth.data.astype(np.float32), PROBABILITY)
        write_volume(prediction, os.path.join(root, f"{spec.patient_id}_pred.nii.gz"))
        write_volume(pair.ground_truth, os.path.join(root, f"{spec.patient_id}_gt.nii.gz"))
        entries.append({"patient_id": spec.patient_id,
                        "prediction_path": f"{spec.patient_id}_pred.nii.gz",
                        "ground_truth_path": f"{spec.patient_id}_gt.nii.gz"})
    manifest = os.path.join(root, "manifest.json")
    with open(manifest, "w") as fh:
        json.dump(entries, fh)
    return manifest


def test_criterion_1_oracle_cohort_end_to_end(tmp_path):
    with criterion(1, "oracle cohort end-to-end"):
        start = time.monotonic()
        manifest = write_cohort(str(tmp_path / "cohort"),
                                [designed_spec(f"p{i:02d}", seed=i) for i in range(10)])
        config = str(tmp_path / "cfg.json")
        with open(config, "w") as fh:
            json.dump({"manifest": manifest}, fh)
        out = str(tmp_path / "out")
        assert main(["eval", "--config", config, "--output", out]) == 0
        with open(os.path.join(out, "patients.csv"), newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 10
        for row in rows:
            assert (int(row["tp"]), int(row["fp"]), int(row["fn"])) == (2, 2, 1)
            assert float(row["sensitivity"]) == 2 / 3  # exact: same division
            assert float(row["fppi"]) == 2.0
            # F2 = 5*TP / (5*TP + 4*FN + FP) = 10/16 for these counts
            assert float(row["f2"]) == 10 / 16
        summary = json.load(open(os.path.join(out, "summary.json")))
        assert summary["all_lesions"]["sensitivity"]["formatted"] == "0.67 (0.67–0.67)"
        elapsed = time.monotonic() - start
        assert elapsed < 10.0, f"runtime {elapsed:.2f}s exceeds 10s"


def test_criterion_2_nsd_brute_force_equivalence():
    with criterion(2, "NSD brute-force equivalence"):
        rng = np.random.default_rng(2024)
        for trial in range(100):
            side = int(rng.integers(6, 15)) if trial % 4 else int(rng.integers(24, 33))
            density = float(rng.uniform(0.03, 0.12))
            a = (rng.uniform(size=(side, side, side)) < density).astype(np.uint8)
            b = (rng.uniform(size=(side, side, side)) < density).astype(np.uint8)
            va = Volume.from_grid(a, (1, 1, 1), kind=BINARY_MASK)
            vb = Volume.from_grid(b, (1, 1, 1), kind=BINARY_MASK)
            fast = nsd(va, vb, tolerance=2.0)
            brute = nsd_all_pairs(a, b, (1, 1, 1), 2.0, "voxels")
            assert abs(fast - brute) <= 1e-9, f"trial {trial}: {fast} vs {brute}"
        cube = np.zeros((16, 16, 16), dtype=np.uint8)
        cube[5:10, 5:10, 5:10] = 1
        shifted = np.roll(cube, 1, axis=0)
        value = nsd(Volume.from_grid(cube, (1, 1, 1), kind=BINARY_MASK),
                    Volume.from_grid(shifted, (1, 1, 1), kind=BINARY_MASK),
                    tolerance=2.0)
        assert value == 1.0


def test_criterion_3_connected_components_equivalence():
    with criterion(3, "connected-components equivalence"):
        rng = np.random.default_rng(777)
        for trial in range(200):
            density = float(rng.uniform(0.05, 0.45))
            grid = (rng.uniform(size=(16, 16, 16)) < density).astype(np.uint8)
            volume = Volume.from_grid(grid, (1, 1, 1), kind=BINARY_MASK)
            for connectivity in (6, 26):
                labels = connected_components(volume, connectivity)
                assert partition_of(labels.grid) == \
                    partition_of(flood_fill_labels(grid, connectivity)), \
                    f"trial {trial} connectivity {connectivity}"


def test_criterion_4_froc_correctness():
    with criterion(4, "FROC correctness"):
        # perfect detector: one small and one large (> 1 ml) lesion per patient
        specs = [PhantomSpec(
            dims=(64, 64, 64), spacing=(1, 1, 1), seed=s, patient_id=f"p{s}",
            gt_lesions=[Blob((14, 14, 14), 3.0), Blob((44, 44, 44), 8.0)],
            detected_ids=(1, 2)) for s in range(3)]
        perfect = []
        for spec in specs:
            pair = generate(spec)
            perfect.append(VolumePair(
                prediction=Volume(pair.ground_truth.dims, pair.ground_truth.spacing,
                                  pair.ground_truth.data.astype(np.float32), PROBABILITY),
                ground_truth=pair.ground_truth, patient_id=spec.patient_id))
        solid = froc(perfect, [0.9, 0.5, 0.1], fppi_limit=15.0)
        dashed = froc(perfect, [0.9, 0.5, 0.1], fppi_limit=4.0, min_ml=1.0)
        assert solid.auc == 15.0 and f"{solid.auc:.2f}" == "15.00"
        assert dashed.auc == 4.0 and f"{dashed.auc:.2f}" == "4.00"

        # monotone sensitivity and FPPI over descending thresholds
        thresholds = [0.97, 0.9, 0.75, 0.6, 0.45, 0.3, 0.15]
        options = EvalOptions()
        for seed in range(50):
            pair = generate(random_phantom_spec(seed + 4000, patient_id=f"r{seed}"))
            gts = gt_instances(pair, options)
            sens_series, fppi_series = [], []
            for t in thresholds:
                match = _match(pred_instances(pair, t, options), gts, options, "r")
                sens, fppi, _ = pooled_detection([match])
                sens_series.append(sens if sens is not None else 0.0)
                fppi_series.append(fppi)
            assert sens_series == sorted(sens_series), f"seed {seed}"
            assert fppi_series == sorted(fppi_series), f"seed {seed}"


def test_criterion_5_exact_statistics():
    with criterion(5, "exact statistics"):
        # Wilcoxon signed-rank: every tie-free fixture n <= 12
        rng = np.random.default_rng(55)
        fixtures = [np.array([1.0, 2.0, 3.0, 4.0, 5.0])]
        for n in range(3, 13):
            for _ in range(3):
                d = rng.normal(size=n)
                while np.unique(np.abs(d)).size < n or (d == 0).any():
                    d = rng.normal(size=n)
                fixtures.append(d)
        for d in fixtures:
            result = wilcoxon_signed_rank(d)
            assert result.method == "exact"
            assert result.p_value == pytest.approx(wilcoxon_enumeration_p(d), abs=1e-12)
        all_positive = wilcoxon_signed_rank([1.0, 2.0, 3.0, 4.0, 5.0])
        assert all_positive.p_value == 0.0625

        # Mann-Whitney: group-assignment enumeration for n1+n2 <= 12
        for _ in range(30):
            n1 = int(rng.integers(1, 7))
            n2 = int(rng.integers(1, min(12 - n1, 6) + 1))
            a, b = rng.normal(size=n1), rng.normal(size=n2)
            while np.unique(np.concatenate([a, b])).size < n1 + n2:
                a, b = rng.normal(size=n1), rng.normal(size=n2)
            result = mann_whitney_u(a, b)
            assert result.method == "exact"
            assert result.p_value == pytest.approx(
                mann_whitney_enumeration_p(a, b), abs=1e-12)
        u_zero = mann_whitney_u([1.0, 2.0], [3.0, 4.0])
        assert u_zero.statistic == 0.0
        assert u_zero.p_value == pytest.approx(1 / 3)

        # Shapiro-Wilk against frozen reference vectors
        for vector, ref_w, reject in ((V12, V12_W, False), (EXP50, EXP50_W, True),
                                      (NORM20, NORM20_W, False)):
            result = shapiro_wilk(vector)
            assert abs(result.statistic - ref_w) <= 1e-3
            assert (result.p_value < 0.05) == reject
        assert shapiro_wilk(V12).p_value == pytest.approx(V12_P, abs=1e-3)


def test_criterion_6_intensity_fixed_point():
    with criterion(6, "intensity standardization fixed point"):
        rng = np.random.default_rng(66)
        values = np.sort(rng.gamma(3.0, 25.0, size=4001)) + 1.0
        assert np.unique(values).size == values.size
        volume = Volume(dims=(4001, 1, 1), spacing=(1, 1, 1), data=values)
        source = extract_landmarks(volume)
        reference = LandmarkProfile(percentiles=source.percentiles,
                                    landmarks=(8.0, 25.0, 60.0, 90.0, 140.0, 300.0))
        mapped = standardize(volume, source, reference)
        recovered = extract_landmarks(mapped, percentiles=source.percentiles)
        assert np.allclose(recovered.landmarks, reference.landmarks, atol=1e-6)

        affine_ref = LandmarkProfile(
            percentiles=source.percentiles,
            landmarks=tuple(1.7 * np.array(source.landmarks) + 11.0))
        mapped = standardize(volume, source, affine_ref)
        assert np.allclose(mapped.data, 1.7 * values + 11.0, atol=1e-9)


def big_lesion_spec(patient_id: str, seed: int) -> PhantomSpec:
    """Mixed small and > 1 ml lesions so both FROC series materialize."""
    return PhantomSpec(
        dims=(64, 64, 64), spacing=(1.0, 1.0, 1.0), seed=seed, patient_id=patient_id,
        gt_lesions=[Blob((14, 14, 14), 3.0), Blob((44, 44, 44), 8.0)],
        detected_ids=(2,),
        fp_blobs=[Blob((44, 14, 14), 7.0, peak_prob=0.8)],
    )


def test_criterion_7_determinism_across_threads(tmp_path):
    with criterion(7, "determinism across thread counts"):
        manifest = write_cohort(
            str(tmp_path / "cohort"),
            [designed_spec(f"p{i}", seed=100 + i) for i in range(3)]
            + [big_lesion_spec(f"q{i}", seed=200 + i) for i in range(2)])
        config = str(tmp_path / "cfg.json")
        with open(config, "w") as fh:
            json.dump({"manifest": manifest,
                       "thresholds": [0.9, 0.75, 0.6, 0.45, 0.3]}, fh)
        captured: dict[str, dict[str, bytes]] = {}
        for threads in ("1", "8"):
            eval_out = str(tmp_path / f"eval{threads}")
            froc_out = str(tmp_path / f"froc{threads}")
            assert main(["eval", "--config", config, "--output", eval_out,
                         "--threads", threads]) == 0
            assert main(["froc", "--config", config, "--output", froc_out,
                         "--threads", threads]) == 0
            captured[threads] = {}
            for directory, names in ((eval_out, ("patients.csv", "lesions.csv", "summary.json")),
                                     (froc_out, ("froc.csv", "froc.json"))):
                for name in names:
                    with open(os.path.join(directory, name), "rb") as fh:
                        captured[threads][name] = fh.read()
        assert captured["1"] == captured["8"]


def test_criterion_8_volume_stratification():
    with criterion(8, "volume stratification"):
        # lesion volumes ~0.5, ~2, ~8 ml; detections on the first two;
        # false positives ~1.5 and ~0.3 ml
        spec = PhantomSpec(
            dims=(64, 64, 64), spacing=(1, 1, 1), seed=88, patient_id="p1",
            gt_lesions=[Blob((12, 12, 12), 4.92), Blob((44, 14, 14), 7.82),
                        Blob((32, 44, 44), 12.40)],
            detected_ids=(1, 2),
            fp_blobs=[Blob((12, 44, 12), 7.1, peak_prob=0.8),
                      Blob((44, 44, 12), 4.15, peak_prob=0.8)])
        pairs = [generate(spec)]
        options = EvalOptions()

        gts = [gt_instances(p, options) for p in pairs]
        volumes = sorted(i.volume_ml for i in gts[0])
        assert volumes[0] < 1.0 < volumes[1] < 4.0 < volumes[2]

        rows = volume_stratified(pairs, [0.0, 1.0], threshold=0.5, options=options)
        large = rows[1]
        # hand enumeration: kept lesions {~2, ~8 ml}, kept predictions
        # {detected ~2 ml, fp ~1.5 ml} -> tp=1, fn=1, fp=1
        assert large.sensitivity == 0.5
        assert large.fppi == 1.0
        assert large.gt_lesion_count == 2

        matches = [_match(pred_instances(p, 0.5, options), g, options, p.patient_id)
                   for p, g in zip(pairs, gts)]
        sens, fppi, _ = pooled_detection(matches)
        assert rows[0].sensitivity == sens
        assert rows[0].fppi == fppi
        assert rows[0].gt_lesion_count == sum(len(g) for g in gts)
