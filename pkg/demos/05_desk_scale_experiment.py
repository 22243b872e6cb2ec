"""
The desk-scale benchmark, stage by stage through the CLI
========================================================

The same experiment the acceptance suite runs: 20 training and 10 test
interferograms at 256x256, 100 patches per image, the 50/100-epoch
schedule with learning-rate halving every 10 epochs. Expect roughly an
hour on a small CPU. Every stage reads and writes files, so a crashed or
interrupted run resumes at the failed stage.

Equivalent shell session:

    cohclass simulate --n 20 --size 256 --seed 1000 --out desk/train
    cohclass simulate --n 10 --size 256 --seed 2000 --out desk/test
    cohclass train-denoiser --config desk/config.json --train desk/train --out desk/den.cnnw
    cohclass prepare-labels --config desk/config.json --train desk/train --weights desk/den.cnnw
    cohclass train-classifier --config desk/config.json --train desk/train --out desk/clf.cnnw
    cohclass evaluate --test desk/test --weights desk/clf.cnnw \
        --denoiser desk/den.cnnw --out desk/report
"""

import json
import pathlib
import sys

from cohclass import cli

root = pathlib.Path("desk")
root.mkdir(exist_ok=True)
config = root / "config.json"
config.write_text(json.dumps({
    "seed": 42,
    "training": {"patches_per_image": 100},
}, indent=2))

stages = [
    ["simulate", "--n", "20", "--size", "256", "--seed", "1000", "--out", str(root / "train")],
    ["simulate", "--n", "10", "--size", "256", "--seed", "2000", "--out", str(root / "test")],
    ["train-denoiser", "--config", str(config), "--train", str(root / "train"),
     "--out", str(root / "den.cnnw")],
    ["prepare-labels", "--config", str(config), "--train", str(root / "train"),
     "--weights", str(root / "den.cnnw")],
    ["train-classifier", "--config", str(config), "--train", str(root / "train"),
     "--out", str(root / "clf.cnnw")],
    ["evaluate", "--config", str(config), "--test", str(root / "test"),
     "--weights", str(root / "clf.cnnw"), "--denoiser", str(root / "den.cnnw"),
     "--out", str(root / "report")],
]

for argv in stages:
    print(f"$ cohclass {' '.join(argv)}", flush=True)
    code = cli.run_command(argv)
    if code != 0:
        sys.exit(code)

print((root / "report" / "table.txt").read_text())
print("reference scores on the original 100-image benchmark:")
print("  boxcar 0.8008 / proposed 0.8425 accuracy")
