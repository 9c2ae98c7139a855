import csv
import json
import os

import numpy as np
import pytest

from lesioneval import (
    PROBABILITY,
    Blob,
    PhantomSpec,
    Volume,
    generate,
    read_volume,
    write_volume,
)
from lesioneval.cli import main


def write_cohort(root, specs, identity=False):
    """Render phantom specs to NIfTI pairs plus a manifest; returns paths."""
    os.makedirs(root, exist_ok=True)
    entries = []
    for spec in specs:
        pair = generate(spec)
        pred_path = os.path.join(root, f"{spec.patient_id}_pred.nii.gz")
        gt_path = os.path.join(root, f"{spec.patient_id}_gt.nii.gz")
        if identity:
            prediction = Volume(pair.ground_truth.dims, pair.ground_truth.spacing,
                                pair.ground_truth.data.astype(np.float32), PROBABILITY)
        else:
            prediction = pair.prediction
        write_volume(prediction, pred_path)
        write_volume(pair.ground_truth, gt_path)
        entries.append({"patient_id": spec.patient_id,
                        "prediction_path": os.path.basename(pred_path),
                        "ground_truth_path": os.path.basename(gt_path)})
    manifest = os.path.join(root, "manifest.json")
    with open(manifest, "w") as fh:
        json.dump(entries, fh)
    return manifest


def designed_spec(patient_id, seed=0):
    # radius 3 -> 123 voxels, above the 50-voxel reference floor
    return PhantomSpec(
        dims=(40, 40, 40), spacing=(1.0, 1.0, 1.0), seed=seed, patient_id=patient_id,
        gt_lesions=[Blob((10, 10, 10), 3.0), Blob((30, 10, 10), 3.0),
                    Blob((10, 30, 30), 3.0)],
        detected_ids=(1, 2),
        fp_blobs=[Blob((30, 30, 10), 3.0, peak_prob=0.8),
                  Blob((10, 30, 10), 2.5, peak_prob=0.7)],
    )


def write_config(path, manifest, **fields):
    payload = {"manifest": manifest}
    payload.update(fields)
    with open(path, "w") as fh:
        json.dump(payload, fh)
    return str(path)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestEval:
    def test_designed_cohort_counts_and_summary(self, tmp_path):
        manifest = write_cohort(str(tmp_path / "cohort"),
                                [designed_spec(f"p{i}", seed=i) for i in range(3)])
        config = write_config(tmp_path / "cfg.json", manifest)
        out = str(tmp_path / "out")
        assert main(["eval", "--config", config, "--output", out]) == 0
        rows = read_rows(os.path.join(out, "patients.csv"))
        assert [r["patient_id"] for r in rows] == ["p0", "p1", "p2"]
        for r in rows:
            assert (int(r["tp"]), int(r["fp"]), int(r["fn"])) == (2, 2, 1)
            assert float(r["sensitivity"]) == pytest.approx(2 / 3)
            assert float(r["fppi"]) == 2.0
            assert float(r["f2"]) == pytest.approx(10 / 16)
        summary = json.load(open(os.path.join(out, "summary.json")))
        assert summary["all_lesions"]["sensitivity"]["formatted"] == "0.67 (0.67–0.67)"
        assert summary["all_lesions"]["fppi"]["median"] == 2.0

    def test_identity_predictions_are_perfect(self, tmp_path):
        manifest = write_cohort(str(tmp_path / "cohort"),
                                [designed_spec(f"p{i}", seed=i) for i in range(2)],
                                identity=True)
        config = write_config(tmp_path / "cfg.json", manifest)
        out = str(tmp_path / "out")
        assert main(["eval", "--config", config, "--output", out]) == 0
        summary = json.load(open(os.path.join(out, "summary.json")))
        assert summary["all_lesions"]["dice"]["median"] == 1.0
        assert summary["all_lesions"]["nsd"]["median"] == 1.0
        assert summary["all_lesions"]["fppi"]["median"] == 0.0
        assert summary["all_lesions"]["sensitivity"]["median"] == 1.0

    def test_lesion_rows_per_tp_pair(self, tmp_path):
        manifest = write_cohort(str(tmp_path / "cohort"), [designed_spec("p0")])
        config = write_config(tmp_path / "cfg.json", manifest)
        out = str(tmp_path / "out")
        main(["eval", "--config", config, "--output", out])
        rows = read_rows(os.path.join(out, "lesions.csv"))
        assert sum(1 for r in rows if r["stratum"] == "all") == 2
        for r in rows:
            assert 0.0 <= float(r["dice"]) <= 1.0
            assert 0.0 <= float(r["nsd"]) <= 1.0

    def test_threads_do_not_change_bytes(self, tmp_path):
        manifest = write_cohort(str(tmp_path / "cohort"),
                                [designed_spec(f"p{i}", seed=i) for i in range(4)])
        config = write_config(tmp_path / "cfg.json", manifest)
        outputs = {}
        for threads in ("1", "8"):
            out = str(tmp_path / f"out{threads}")
            assert main(["eval", "--config", config, "--output", out,
                         "--threads", threads]) == 0
            outputs[threads] = {
                name: open(os.path.join(out, name), "rb").read()
                for name in ("patients.csv", "lesions.csv", "summary.json")
            }
        assert outputs["1"] == outputs["8"]

    def test_missing_manifest_is_exit_1(self, tmp_path):
        config = write_config(tmp_path / "cfg.json", str(tmp_path / "none.json"))
        assert main(["eval", "--config", config, "--output", str(tmp_path / "o")]) == 1

    def test_grid_mismatch_names_patient(self, tmp_path, capsys):
        root = tmp_path / "cohort"
        manifest = write_cohort(str(root), [designed_spec("p0")])
        bad = Volume((8, 8, 8), (1, 1, 1), np.zeros(512, dtype=np.float32), PROBABILITY)
        write_volume(bad, str(root / "p0_pred.nii.gz"))
        config = write_config(tmp_path / "cfg.json", manifest)
        assert main(["eval", "--config", config, "--output", str(tmp_path / "o")]) == 1
        err = capsys.readouterr().err
        assert "p0" in err and "mismatch" in err

    def test_unknown_config_field_rejected(self, tmp_path):
        manifest = write_cohort(str(tmp_path / "cohort"), [designed_spec("p0")])
        config = write_config(tmp_path / "cfg.json", manifest, bogus_field=1)
        assert main(["eval", "--config", config, "--output", str(tmp_path / "o")]) == 1


def mixed_size_spec(patient_id, seed=0):
    """One small and one > 1 ml lesion so the dashed curve has support."""
    return PhantomSpec(
        dims=(64, 64, 64), spacing=(1.0, 1.0, 1.0), seed=seed, patient_id=patient_id,
        gt_lesions=[Blob((14, 14, 14), 3.0), Blob((44, 44, 44), 8.0)],
        detected_ids=(1, 2))


class TestFroc:
    def test_perfect_cohort_auc_equals_limits(self, tmp_path):
        manifest = write_cohort(str(tmp_path / "cohort"),
                                [mixed_size_spec(f"p{i}", seed=i) for i in range(2)],
                                identity=True)
        config = write_config(tmp_path / "cfg.json", manifest,
                              thresholds=[0.8, 0.5, 0.2])
        out = str(tmp_path / "out")
        assert main(["froc", "--config", config, "--output", out]) == 0
        aucs = json.load(open(os.path.join(out, "froc.json")))
        assert aucs["all lesions"]["auc"] == 15.0
        assert aucs["lesions > 1 ml"]["auc"] == 4.0
        svg = open(os.path.join(out, "froc.svg")).read()
        assert "AUC=15.00" in svg and "AUC=4.00" in svg and svg.startswith("<?xml")

    def test_csv_matches_module_output(self, tmp_path):
        from lesioneval import froc as froc_module
        from lesioneval.cli import EvalConfig, load_cohort
        manifest = write_cohort(str(tmp_path / "cohort"),
                                [designed_spec(f"p{i}", seed=i) for i in range(3)])
        thresholds = [0.9, 0.75, 0.65, 0.45, 0.2]
        config_path = write_config(tmp_path / "cfg.json", manifest, thresholds=thresholds)
        out = str(tmp_path / "out")
        assert main(["froc", "--config", config_path, "--output", out]) == 0
        config = EvalConfig.load(config_path, {})
        pairs = load_cohort(config, threads=1)
        curve = froc_module(pairs, thresholds, config.fppi_limit, options=config.options())
        rows = [r for r in read_rows(os.path.join(out, "froc.csv")) if r["series"] == "all"]
        assert len(rows) == len(curve.points)
        for row, (fppi, sens), t in zip(rows, curve.points, curve.thresholds):
            assert float(row["threshold"]) == t
            assert float(row["fppi"]) == fppi
            assert float(row["sensitivity"]) == sens

    def test_empty_predictions_flat_zero(self, tmp_path):
        root = tmp_path / "cohort"
        manifest = write_cohort(str(root), [designed_spec("p0", seed=5)])
        silent = Volume((40, 40, 40), (1, 1, 1),
                        np.zeros(64000, dtype=np.float32), PROBABILITY)
        write_volume(silent, str(root / "p0_pred.nii.gz"))
        config = write_config(tmp_path / "cfg.json", manifest, thresholds=[0.5])
        out = str(tmp_path / "out")
        assert main(["froc", "--config", config, "--output", out]) == 0
        aucs = json.load(open(os.path.join(out, "froc.json")))
        assert aucs["all lesions"]["auc"] == 0.0

    def test_threads_do_not_change_bytes(self, tmp_path):
        manifest = write_cohort(str(tmp_path / "cohort"),
                                [designed_spec(f"p{i}", seed=i) for i in range(3)])
        config = write_config(tmp_path / "cfg.json", manifest,
                              thresholds=[0.9, 0.7, 0.5, 0.3])
        blobs = {}
        for threads in ("1", "8"):
            out = str(tmp_path / f"out{threads}")
            assert main(["froc", "--config", config, "--output", out,
                         "--threads", threads]) == 0
            blobs[threads] = {
                name: open(os.path.join(out, name), "rb").read()
                for name in ("froc.csv", "froc.json", "froc.svg")
            }
        assert blobs["1"] == blobs["8"]


class TestThreshold:
    def test_two_operating_points(self, tmp_path):
        # tp=4 fp=1 fn=0 at 0.5 versus tp=2 fp=0 fn=2 at 0.9
        root = tmp_path / "cohort"
        os.makedirs(root)
        gt = np.zeros((40, 8, 8), dtype=np.uint8)
        prob = np.zeros((40, 8, 8), dtype=np.float32)
        for x0, value in ((0, 0.92), (6, 0.92), (12, 0.6), (18, 0.6)):
            gt[x0:x0 + 3, 2:6, 2:6] = 1
            prob[x0:x0 + 3, 2:6, 2:6] = value
        prob[30:33, 2:6, 2:6] = 0.55
        write_volume(Volume.from_grid(gt, (1, 1, 1), kind="binary-mask"),
                     str(root / "p0_gt.nii.gz"))
        write_volume(Volume.from_grid(prob, (1, 1, 1), kind="probability"),
                     str(root / "p0_pred.nii.gz"))
        manifest = str(root / "manifest.json")
        with open(manifest, "w") as fh:
            json.dump([{"patient_id": "p0", "prediction_path": "p0_pred.nii.gz",
                        "ground_truth_path": "p0_gt.nii.gz"}], fh)
        config = write_config(tmp_path / "cfg.json", manifest,
                              thresholds=[0.9, 0.5], min_gt_voxels=1)
        out = str(tmp_path / "out")
        assert main(["threshold", "--config", config, "--output", out]) == 0
        payload = json.load(open(os.path.join(out, "threshold.json")))
        assert payload["threshold"] == 0.5
        assert payload["f2"] == pytest.approx(20 / 21)
        assert {row["threshold"]: row["f2"] for row in payload["table"]}[0.9] \
            == pytest.approx(10 / 18)

    def test_single_candidate(self, tmp_path):
        manifest = write_cohort(str(tmp_path / "cohort"), [designed_spec("p0")])
        config = write_config(tmp_path / "cfg.json", manifest, thresholds=[0.42])
        out = str(tmp_path / "out")
        assert main(["threshold", "--config", config, "--output", out]) == 0
        assert json.load(open(os.path.join(out, "threshold.json")))["threshold"] == 0.42


class TestVolumeCurve:
    def test_matches_module_rows(self, tmp_path):
        from lesioneval import volume_stratified
        from lesioneval.cli import EvalConfig, load_cohort
        manifest = write_cohort(str(tmp_path / "cohort"),
                                [designed_spec(f"p{i}", seed=i) for i in range(2)])
        grid = [0.0, 0.05, 0.2]
        config_path = write_config(tmp_path / "cfg.json", manifest, volume_grid=grid)
        out = str(tmp_path / "out")
        assert main(["volume-curve", "--config", config_path, "--output", out]) == 0
        config = EvalConfig.load(config_path, {})
        pairs = load_cohort(config, threads=1)
        expected = volume_stratified(pairs, grid, threshold=config.threshold,
                                     options=config.options())
        rows = read_rows(os.path.join(out, "volume_curve.csv"))
        assert len(rows) == len(expected)
        for row, exp in zip(rows, expected):
            assert float(row["min_ml"]) == exp.min_ml
            assert float(row["fppi"]) == exp.fppi
            assert int(row["gt_lesion_count"]) == exp.gt_lesion_count
            if exp.sensitivity is None:
                assert row["sensitivity"] == ""
            else:
                assert float(row["sensitivity"]) == exp.sensitivity
        assert os.path.exists(os.path.join(out, "volume_curve.svg"))


def write_method_dir(root, patients, lesions):
    os.makedirs(root, exist_ok=True)
    with open(os.path.join(root, "patients.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["patient_id", "tp", "fp", "fn", "sensitivity", "fppi", "f2"])
        writer.writerows(patients)
    with open(os.path.join(root, "lesions.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["patient_id", "stratum", "pred_id", "gt_id",
                         "overlap_voxels", "dice", "nsd"])
        writer.writerows(lesions)
    return str(root)


class TestStats:
    def patients_a(self):
        return [[f"p{i}", 2, 1, 1, 0.4 + 0.05 * i, 1.0 + i, 0.5 + 0.02 * i]
                for i in range(8)]

    def lesions_a(self):
        return [[f"p{i}", "all", 1, 1, 10, 0.6 + 0.01 * i, 0.7 + 0.01 * i]
                for i in range(8)]

    def test_identical_methods_all_ns(self, tmp_path):
        a = write_method_dir(tmp_path / "a", self.patients_a(), self.lesions_a())
        b = write_method_dir(tmp_path / "b", self.patients_a(), self.lesions_a())
        out = str(tmp_path / "out")
        assert main(["stats", f"m1={a}", f"m2={b}", "--m", "1", "--output", out]) == 0
        payload = json.load(open(os.path.join(out, "stats.json")))
        for row in payload["comparisons"]:
            assert row["p"] == 1.0
            assert row["stars"] == "n.s."

    def test_routing_paired_vs_unpaired(self, tmp_path):
        patients_b = [[f"p{i}", 3, 1, 0, 0.8 + 0.01 * i, 0.5 + i, 0.7 + 0.01 * i]
                      for i in range(8)]
        lesions_b = [[f"p{i}", "all", 1, 1, 12, 0.8 + 0.005 * i, 0.85 + 0.005 * i]
                     for i in range(10)]
        a = write_method_dir(tmp_path / "a", self.patients_a(), self.lesions_a())
        b = write_method_dir(tmp_path / "b", patients_b, lesions_b)
        out = str(tmp_path / "out")
        assert main(["stats", f"m1={a}", f"m2={b}", "--m", "2", "--output", out]) == 0
        payload = json.load(open(os.path.join(out, "stats.json")))
        by_metric = {row["metric"]: row for row in payload["comparisons"]}
        assert by_metric["sensitivity"]["test"] == "wilcoxon-signed-rank"
        assert by_metric["f2"]["test"] == "wilcoxon-signed-rank"
        assert by_metric["dice"]["test"] == "mann-whitney-u"
        assert by_metric["nsd"]["test"] == "mann-whitney-u"
        assert by_metric["dice"]["n"] == [8, 10]
        for row in payload["comparisons"]:
            assert row["p_adj"] == pytest.approx(min(1.0, 2 * row["p"]))
        assert any(r.get("w") is not None for r in payload["normality"])

    def test_m_required_and_validated(self, tmp_path):
        a = write_method_dir(tmp_path / "a", self.patients_a(), self.lesions_a())
        b = write_method_dir(tmp_path / "b", self.patients_a(), self.lesions_a())
        assert main(["stats", f"m1={a}", f"m2={b}",
                     "--output", str(tmp_path / "o")]) == 1
        c = write_method_dir(tmp_path / "c", self.patients_a(), self.lesions_a())
        assert main(["stats", f"m1={a}", f"m2={b}", f"m3={c}", "--m", "2",
                     "--output", str(tmp_path / "o")]) == 1


class TestPhantomCommand:
    def test_files_and_counts(self, tmp_path):
        spec = designed_spec("ph1", seed=3)
        spec_path = str(tmp_path / "spec.json")
        with open(spec_path, "w") as fh:
            fh.write(spec.to_json())
        out = str(tmp_path / "out")
        assert main(["phantom", "--spec", spec_path, "--output", out]) == 0
        counts = json.load(open(os.path.join(out, "ph1_counts.json")))
        assert (counts["tp"], counts["fp"], counts["fn"]) == (2, 2, 1)
        pred = read_volume(os.path.join(out, "ph1_pred.nii.gz"), kind="probability")
        gt = read_volume(os.path.join(out, "ph1_gt.nii.gz"), kind="binary-mask")
        pair = generate(spec)
        assert np.array_equal(pred.data, pair.prediction.data)
        assert np.array_equal(gt.data, pair.ground_truth.data)


class TestStandardizeCommand:
    def test_maps_to_reference_profile(self, tmp_path):
        rng = np.random.default_rng(12)
        values = np.sort(rng.gamma(3.0, 30.0, size=2001)).astype(np.float32) + 1.0
        vol = Volume(dims=(2001, 1, 1), spacing=(1, 1, 1), data=values)
        in_path = str(tmp_path / "in.nii.gz")
        write_volume(vol, in_path)
        reference = {"percentiles": [0.0, 20.0, 40.0, 60.0, 80.0, 95.0],
                     "landmarks": [10.0, 20.0, 45.0, 60.0, 82.0, 95.0]}
        ref_path = str(tmp_path / "ref.json")
        with open(ref_path, "w") as fh:
            json.dump(reference, fh)
        out_path = str(tmp_path / "out.nii.gz")
        profile_path = str(tmp_path / "profile.json")
        assert main(["standardize", "--input", in_path, "--reference", ref_path,
                     "--out-volume", out_path, "--write-profile", profile_path,
                     "--output", str(tmp_path / "logs")]) == 0
        from lesioneval import extract_landmarks
        mapped = read_volume(out_path)
        recovered = extract_landmarks(mapped, percentiles=tuple(reference["percentiles"]))
        assert np.allclose(recovered.landmarks, reference["landmarks"], atol=1e-3)
        saved = json.load(open(profile_path))
        assert saved["percentiles"] == reference["percentiles"]

    def test_volume_as_reference(self, tmp_path):
        rng = np.random.default_rng(13)
        a = Volume(dims=(500, 1, 1), spacing=(1, 1, 1),
                   data=(rng.gamma(3, 20, 500) + 1).astype(np.float32))
        b = Volume(dims=(500, 1, 1), spacing=(1, 1, 1),
                   data=(rng.gamma(3, 40, 500) + 5).astype(np.float32))
        pa, pb = str(tmp_path / "a.nii"), str(tmp_path / "b.nii")
        write_volume(a, pa)
        write_volume(b, pb)
        out_path = str(tmp_path / "std.nii")
        assert main(["standardize", "--input", pa, "--reference", pb,
                     "--out-volume", out_path,
                     "--output", str(tmp_path / "logs")]) == 0
        assert os.path.exists(out_path)


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_unknown_command_is_input_error():
    assert main(["frobnicate", "--output", "x"]) == 1
