"""The full command-line workflow, end to end.

Generates a phantom cohort with the `phantom` subcommand, evaluates two
"methods" (the phantom predictions and a perfect oracle) with `eval`,
sweeps `froc`, picks an operating point with `threshold`, runs
`volume-curve`, and compares the methods with `stats`. Everything lands in
demos/demo_output/cli/.
"""

import json
import os

import numpy as np

from lesioneval import PROBABILITY, Blob, PhantomSpec, Volume, generate, write_volume
from lesioneval.cli import main

root = os.path.join(os.path.dirname(__file__), "demo_output", "cli")
os.makedirs(root, exist_ok=True)


def run(argv):
    print("$ lesioneval " + " ".join(argv))
    code = main(argv)
    assert code == 0, f"exit code {code}"


# --- build a cohort: phantom subcommand for one patient, API for the rest
spec = PhantomSpec(
    dims=(56, 56, 56), spacing=(1, 1, 1), seed=0, patient_id="p00",
    gt_lesions=[Blob((14, 14, 14), 3.5), Blob((42, 42, 42), 8.0)],
    detected_ids=(1, 2),
    fp_blobs=[Blob((42, 14, 14), 3.0, peak_prob=0.75)])
spec_path = os.path.join(root, "p00_spec.json")
with open(spec_path, "w") as fh:
    fh.write(spec.to_json())
run(["phantom", "--spec", spec_path, "--output", root])

entries = [{"patient_id": "p00", "prediction_path": "p00_pred.nii.gz",
            "ground_truth_path": "p00_gt.nii.gz"}]
oracle_entries = []
for i in range(1, 4):
    sibling = PhantomSpec(
        dims=(56, 56, 56), spacing=(1, 1, 1), seed=i, patient_id=f"p{i:02d}",
        gt_lesions=spec.gt_lesions, detected_ids=(2,),
        fp_blobs=[Blob((42, 14, 14), 3.0, peak_prob=0.6 + 0.1 * i)])
    pair = generate(sibling)
    write_volume(pair.prediction, os.path.join(root, f"p{i:02d}_pred.nii.gz"))
    write_volume(pair.ground_truth, os.path.join(root, f"p{i:02d}_gt.nii.gz"))
    entries.append({"patient_id": f"p{i:02d}", "prediction_path": f"p{i:02d}_pred.nii.gz",
                    "ground_truth_path": f"p{i:02d}_gt.nii.gz"})
for entry in entries:
    gt_name = entry["ground_truth_path"]
    pred_name = gt_name.replace("_gt", "_oracle")
    pair_gt = os.path.join(root, gt_name)
    from lesioneval import read_volume
    gt = read_volume(pair_gt, kind="binary-mask")
    write_volume(Volume(gt.dims, gt.spacing, gt.data.astype(np.float32), PROBABILITY),
                 os.path.join(root, pred_name))
    oracle_entries.append({"patient_id": entry["patient_id"],
                           "prediction_path": pred_name, "ground_truth_path": gt_name})

for name, content in (("manifest.json", entries), ("manifest_oracle.json", oracle_entries)):
    with open(os.path.join(root, name), "w") as fh:
        json.dump(content, fh, indent=2)

config = os.path.join(root, "config.json")
with open(config, "w") as fh:
    json.dump({"manifest": os.path.join(root, "manifest.json"),
               "thresholds": [0.9, 0.7, 0.5, 0.3, 0.1]}, fh)

# --- evaluate both methods
run(["eval", "--config", config, "--output", os.path.join(root, "eval_model")])
run(["eval", "--config", config, "--manifest", os.path.join(root, "manifest_oracle.json"),
     "--output", os.path.join(root, "eval_oracle")])

summary = json.load(open(os.path.join(root, "eval_model", "summary.json")))
print("\nmodel summary (all lesions):")
for metric, block in summary["all_lesions"].items():
    if block:
        print(f"  {metric}: {block['formatted']} (n={block['n']})")

# --- curves and operating point
run(["froc", "--config", config, "--output", os.path.join(root, "froc")])
run(["threshold", "--config", config, "--output", os.path.join(root, "threshold")])
run(["volume-curve", "--config", config, "--output", os.path.join(root, "volume_curve")])
print("\nselected:", json.load(open(os.path.join(root, "threshold", "threshold.json")))["threshold"])

# --- compare the two methods
run(["stats", f"model={os.path.join(root, 'eval_model')}",
     f"oracle={os.path.join(root, 'eval_oracle')}", "--m", "1",
     "--output", os.path.join(root, "stats")])
payload = json.load(open(os.path.join(root, "stats", "stats.json")))
print("\ncomparisons:")
for row in payload["comparisons"]:
    print(f"  {row['metric']}: {row['test']} p={row['p']:.4f} "
          f"p_adj={row['p_adj']:.4f} {row['stars']}")
print("\nartifacts in", root)
