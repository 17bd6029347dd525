#!/usr/bin/env python3
"""Writes randomized ground-truth / prediction track pairs and the metrics the
py-motmetrics reference implementation reports for them.

Usage: python3 tools/make_golden.py tests/golden
"""

import json
import sys
from pathlib import Path

import motmetrics as mm
import numpy as np

if not hasattr(np, "asfarray"):  # removed in NumPy 2, still used by motmetrics 1.4
    np.asfarray = lambda a, dtype=float: np.asarray(a, dtype=dtype)

BOX_SIDE = 1.0
IOU_THRESHOLD = 0.5
SEQUENCES = 20


def make_sequence(rng):
    frames = int(rng.integers(30, 80))
    n_obj = int(rng.integers(2, 9))
    gt = {}  # frame -> list of (id, x, y)
    for oid in range(1, n_obj + 1):
        start = int(rng.integers(0, frames // 2))
        end = int(rng.integers(start + 5, frames + 1))
        pos = rng.uniform(0.0, 8.0, size=2)
        vel = rng.normal(0.0, 0.08, size=2)
        for f in range(start, end):
            vel = 0.9 * vel + rng.normal(0.0, 0.03, size=2)
            pos = pos + vel
            gt.setdefault(f, []).append((oid, float(pos[0]), float(pos[1])))

    pred = {}
    hyp_of = {oid: 100 + oid for oid in range(1, n_obj + 1)}
    next_hyp = 200
    jitter = rng.uniform(0.02, 0.25)
    drop = rng.uniform(0.0, 0.25)
    for f in range(frames):
        rows = []
        for oid, x, y in gt.get(f, []):
            if rng.random() < 0.02:  # identity change
                hyp_of[oid] = next_hyp
                next_hyp += 1
            if rng.random() < drop:
                continue
            dx, dy = rng.normal(0.0, jitter, size=2)
            rows.append((hyp_of[oid], x + dx, y + dy))
        if len(rows) >= 2 and rng.random() < 0.05:  # two hypotheses trade ids
            (a, xa, ya), (b, xb, yb) = rows[0], rows[1]
            rows[0], rows[1] = (b, xa, ya), (a, xb, yb)
        for _ in range(int(rng.poisson(0.4))):
            rows.append((int(rng.integers(500, 520)), float(rng.uniform(0, 8)), float(rng.uniform(0, 8))))
        # hypothesis ids must be unique within a frame
        seen = set()
        pred[f] = [r for r in rows if not (r[0] in seen or seen.add(r[0]))]
    return frames, gt, pred


def boxes(rows):
    return np.array([[x - BOX_SIDE / 2, y - BOX_SIDE / 2, BOX_SIDE, BOX_SIDE] for _, x, y in rows]).reshape(-1, 4)


def evaluate(frames, gt, pred):
    acc = mm.MOTAccumulator(auto_id=False)
    for f in range(frames):
        g, p = gt.get(f, []), pred.get(f, [])
        d = mm.distances.iou_matrix(boxes(g), boxes(p), max_iou=1.0 - IOU_THRESHOLD)
        d = np.asarray(d, dtype=float).reshape(len(g), len(p))
        acc.update([r[0] for r in g], [r[0] for r in p], d, frameid=f)
    names = ["idf1", "idp", "idr", "mostly_tracked", "mostly_lost", "num_false_positives", "num_misses",
             "num_switches", "num_fragmentations", "mota", "motp", "num_unique_objects", "num_objects"]
    s = mm.metrics.create().compute(acc, metrics=names, name="seq")
    v = {k: float(s[k].iloc[0]) for k in names}
    n = v["num_unique_objects"]
    return {
        "IDF1": 100 * v["idf1"], "IDP": 100 * v["idp"], "IDR": 100 * v["idr"],
        "MT": 100 * v["mostly_tracked"] / n, "ML": 100 * v["mostly_lost"] / n,
        "FP": v["num_false_positives"], "FN": v["num_misses"], "IDs": v["num_switches"],
        "FM": v["num_fragmentations"], "MOTA": 100 * v["mota"], "MOTP": 100 * (1 - v["motp"]),
    }


def write_csv(path, table, frames):
    with open(path, "w") as out:
        out.write("frame,id,x_m,y_m,matched\n")
        for f in range(frames):
            for oid, x, y in table.get(f, []):
                out.write(f"{f},{oid},{x:.4f},{y:.4f},1\n")


def reread(path):
    table = {}
    for line in open(path).read().splitlines()[1:]:
        f, i, x, y, _ = line.split(",")
        table.setdefault(int(f), []).append((int(i), float(x), float(y)))
    return table


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "tests/golden")
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20240917)
    golden = {"box_side": BOX_SIDE, "iou_threshold": IOU_THRESHOLD, "motmetrics": mm.__version__, "sequences": []}
    for k in range(SEQUENCES):
        frames, gt, pred = make_sequence(rng)
        gt_path, pred_path = out / f"seq{k:02d}_gt.csv", out / f"seq{k:02d}_pred.csv"
        write_csv(gt_path, gt, frames)
        write_csv(pred_path, pred, frames)
        # score the rounded CSV contents, which is what the C++ side reads
        metrics = evaluate(frames, reread(gt_path), reread(pred_path))
        golden["sequences"].append({"gt": gt_path.name, "pred": pred_path.name, "metrics": metrics})
    (out / "golden.json").write_text(json.dumps(golden, indent=2) + "\n")


if __name__ == "__main__":
    main()
