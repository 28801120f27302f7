"""Regenerates the bundled evaluation fixture.

    python3 make_fixture.py

Writes dataset.jsonl and oracle_predictions.jsonl next to this file.
"""
import json
import math
import os

W, H = 32, 24
TASKS = ["bbox", "seg", "grasp", "contact"]
SPLITS = ["seen", "similar", "novel"]
INSTRUCTIONS = [
    "pick up the red mug by its handle",
    "grab the screwdriver near the blue box",
    "hand me the small green cup",
    "lift the banana from the plate",
    "take the scissors without touching the blades",
    "move the wooden spoon to the left",
    "grasp the tall bottle on the right",
    "carry the white bowl carefully",
    "pass me the pen lying next to the notebook",
    "pick the orange toy car",
]


def rle(bits):
    runs, cur, n = [], False, 0
    for b in bits:
        if b == cur:
            n += 1
        else:
            runs.append(n)
            cur, n = b, 1
    runs.append(n)
    return f"{W} {H}; " + ",".join(map(str, runs))


def rect_mask(x0, y0, x1, y1):
    return [x0 <= x <= x1 and y0 <= y <= y1 for y in range(H) for x in range(W)]


def tight(bits):
    xs = [i % W for i, b in enumerate(bits) if b]
    ys = [i // W for i, b in enumerate(bits) if b]
    return [min(xs), min(ys), max(xs), max(ys)]


def num(v):
    s = f"{v:.2f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def think_answer(ans):
    return f"<think>restating the annotation</think>\n<answer>{ans}</answer>"


records, preds = [], []
for i in range(20):
    task = TASKS[i % 4]
    split = SPLITS[i % 3]
    x0, y0 = 4 + i % 5, 3 + i % 4
    x1, y1 = x0 + 14 + i % 3, y0 + 8 + i % 4
    bits = rect_mask(x0, y0, x1, y1)
    box = tight(bits)
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    rec = {
        "record_id": f"r{i:02d}",
        "image_id": f"img{i // 2:02d}",
        "image_w": W,
        "image_h": H,
        "task": task,
        "instruction": INSTRUCTIONS[i % len(INSTRUCTIONS)],
        "split": split,
        "gt_bbox": box,
        "gt_mask": rle(bits),
    }
    pred = {"record_id": rec["record_id"]}
    if task in ("bbox", "seg"):
        pred["raw_text"] = think_answer("({},{}),({},{})".format(*map(num, box)))
        if task == "seg":
            pred["external_mask"] = rec["gt_mask"]
    elif task == "grasp":
        angles = [0, 45, 90, 135, 30][i % 5 :: 2] or [60]
        rec["gt_grasps"] = [[cx, cy, a, 10, 4] for a in angles]
        g = rec["gt_grasps"][0]
        pred["raw_text"] = think_answer(f"({num(g[0])}, {num(g[1])}, {num(g[2])}, {num(g[3])})")
    else:
        half = (x1 - x0) / 2 - 1
        p1, p2 = [cx - half, cy], [cx + half, cy]
        rec["gt_contacts"] = [p1, p2]
        pred["raw_text"] = think_answer("({},{}),({},{})".format(*map(num, p1 + p2)))
    records.append(rec)
    preds.append(pred)

here = os.path.dirname(os.path.abspath(__file__))
for name, rows in [("dataset.jsonl", records), ("oracle_predictions.jsonl", preds)]:
    with open(os.path.join(here, name), "w") as f:
        for r in rows:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")
