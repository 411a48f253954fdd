"""Regenerates expected_report.txt for the eval fixture.

Masks come from `ban infer`; every metric is then recomputed here with numpy
from raw pixel tallies, independent of the C++ metric code.

usage: python make_golden.py path/to/ban
"""
import pathlib
import subprocess
import sys
import tempfile

import numpy as np
from PIL import Image

here = pathlib.Path(__file__).resolve().parent
ban = sys.argv[1]
val = here / "data" / "val"

tp = fp = fn = tn = images = empty = 0
with tempfile.TemporaryDirectory() as tmp:
    for label_path in sorted((val / "label").glob("*.png")):
        out = pathlib.Path(tmp) / label_path.name
        subprocess.run([ban, "infer", str(here / "config.json"), "--pair", str(val / "t1" / label_path.name),
                        str(val / "t2" / label_path.name), "--out", str(out), "--checkpoint",
                        str(here / "weights.safetensors")], check=True, stdout=subprocess.DEVNULL)
        pred = np.asarray(Image.open(out)).astype(np.int64)
        label = np.asarray(Image.open(label_path)).astype(np.int64)
        keep = label != 255
        p, l = pred[keep] == 1, label[keep] == 1
        tp += int(np.sum(p & l))
        fp += int(np.sum(p & ~l))
        fn += int(np.sum(~p & l))
        tn += int(np.sum(~p & ~l))
        images += 1
        empty += int(not p.any() and not l.any())

precision = tp / (tp + fp) if tp + fp else (1.0 if tp + fn == 0 else 0.0)
recall = tp / (tp + fn) if tp + fn else 1.0
f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
iou_c = tp / (tp + fp + fn) if tp + fp + fn else 1.0
iou_u = tn / (tn + fp + fn) if tn + fp + fn else 1.0
report = {
    "f1_c": f1,
    "iou_c": iou_c,
    "iou_u": iou_u,
    "miou": (iou_c + iou_u) / 2,
    "oa": (tp + tn) / (tp + fp + fn + tn),
    "precision_c": precision,
    "recall_c": recall,
}
lines = [f"{k}={v:.10f}" for k, v in sorted(report.items())]
lines += [f"images={images}", f"images_without_change={empty}"]
(here / "expected_report.txt").write_text("\n".join(lines) + "\n")
print("\n".join(lines))
