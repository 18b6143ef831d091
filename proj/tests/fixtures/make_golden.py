"""Brute-force evaluator that writes the expected report for the micro fixture.

Usage: python make_golden.py micro/manifest.json micro/predictions.jsonl > micro/report.json
"""
import json
import sys

THRESHOLDS = [(50 + 5 * i) / 100.0 for i in range(10)]
BREAKDOWN_THRESHOLD = 0.5


def tiou(a, b):
    inter = min(a[1] + 1, b[1] + 1) - max(a[0], b[0])
    if inter <= 0:
        return 0.0
    return inter / ((a[1] + 1 - a[0]) + (b[1] + 1 - b[0]) - inter)


def rank(preds):
    return sorted(preds, key=lambda p: (-p["score"], p["video_id"], p["start"]))


def greedy(preds, gts, thr, used):
    """Returns the TP flag of each prediction in order; `used` is updated in place."""
    flags = []
    for p in preds:
        best, pick = -1.0, None
        for k, g in enumerate(gts):
            if used[k] or g["video_id"] != p["video_id"]:
                continue
            iou = tiou((p["start"], p["end"]), (g["start"], g["end"]))
            if iou >= thr and iou > best:
                best, pick = iou, k
        if pick is not None:
            used[pick] = True
        flags.append(pick is not None)
    return flags


def average_precision(preds, gts, thr):
    if not gts:
        return 0.0
    flags = greedy(rank(preds), gts, thr, [False] * len(gts))
    tp = 0
    points = []
    for k, f in enumerate(flags):
        tp += f
        points.append((tp / len(gts), tp / (k + 1), f))
    ap = 0.0
    for k, (_, _, f) in enumerate(points):
        if f:
            ap += (1.0 / len(gts)) * max(pr for _, pr, _ in points[k:])
    return ap


def breakdown(preds, gts_by_class, n):
    out = dict(true_positive=0, double_detection=0, localization=0, confusion=0, background=0, other=0)
    used = {c: [False] * len(gts_by_class[c]) for c in range(n)}
    for p in rank(preds):
        c = p["class_id"]
        same = gts_by_class[c]
        if greedy([p], same, BREAKDOWN_THRESHOLD, used[c])[0]:
            out["true_positive"] += 1
            continue
        seg = (p["start"], p["end"])
        ious = [(tiou(seg, (g["start"], g["end"])), used[c][k]) for k, g in enumerate(same) if g["video_id"] == p["video_id"]]
        if any(u and iou >= BREAKDOWN_THRESHOLD for iou, u in ious):
            out["double_detection"] += 1
        elif any(iou > 0 for iou, _ in ious):
            out["localization"] += 1
        else:
            other = max([tiou(seg, (g["start"], g["end"])) for o in range(n) if o != c
                         for g in gts_by_class[o] if g["video_id"] == p["video_id"]] + [0.0])
            if other >= BREAKDOWN_THRESHOLD:
                out["confusion"] += 1
            elif other == 0.0:
                out["background"] += 1
            else:
                out["other"] += 1
    return out


def main():
    manifest = json.load(open(sys.argv[1]))
    preds = [json.loads(line) for line in open(sys.argv[2]) if line.strip()]
    n = manifest["N"]
    gts = {c: [] for c in range(n)}
    for v in manifest["videos"]:
        for g in v["gt_segments"]:
            gts[g["class_id"]].append(dict(g, video_id=v["id"]))
    classes = [c for c in range(n) if gts[c]]
    key = lambda t: "%.2f" % t
    per_class = {}
    maps = [0.0] * len(THRESHOLDS)
    for c in classes:
        mine = [p for p in preds if p["class_id"] == c]
        aps = [average_precision(mine, gts[c], t) for t in THRESHOLDS]
        per_class[str(c)] = {key(t): a for t, a in zip(THRESHOLDS, aps)}
        maps = [m + a for m, a in zip(maps, aps)]
    maps = [m / len(classes) for m in maps]
    total = 0.0
    for m in maps:
        total += m
    report = {
        "thresholds": THRESHOLDS,
        "average_map": total / len(THRESHOLDS),
        "map_per_threshold": {key(t): m for t, m in zip(THRESHOLDS, maps)},
        "per_class_ap": per_class,
        "error_breakdown": breakdown(preds, gts, n),
    }
    sys.stdout.write(json.dumps(report, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
