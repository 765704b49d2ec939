"""Brute-force precision/recall oracle for the three-image AP fixture.

Boxes are xyxy in unit coordinates. Matching is greedy by score within an
image; interpolated precision at recall r is the maximum precision over every
cutoff whose recall reaches r. Exact rational arithmetic throughout.
"""
from fractions import Fraction as F

CLASS_MODALITY = {0: 0, 1: 0, 2: 1}
IMAGES = {
    "img_a": (0, [((0.10, 0.10, 0.30, 0.30), 0), ((0.50, 0.50, 0.90, 0.80), 1)]),
    "img_b": (0, [((0.20, 0.20, 0.40, 0.50), 0), ((0.60, 0.10, 0.80, 0.30), 0)]),
    "img_c": (1, [((0.30, 0.30, 0.70, 0.70), 2)]),
}
# (image, box, class, score)
DETS = [
    ("img_a", (0.11, 0.10, 0.30, 0.31), 0, 0.95),
    ("img_a", (0.50, 0.55, 0.90, 0.80), 1, 0.90),
    ("img_a", (0.60, 0.60, 0.70, 0.70), 0, 0.40),
    ("img_b", (0.20, 0.25, 0.40, 0.50), 0, 0.85),
    ("img_b", (0.62, 0.12, 0.85, 0.33), 0, 0.60),
    ("img_b", (0.21, 0.20, 0.40, 0.52), 0, 0.30),
    ("img_b", (0.10, 0.60, 0.30, 0.90), 1, 0.50),
    ("img_c", (0.35, 0.30, 0.70, 0.75), 2, 0.80),
    ("img_c", (0.00, 0.00, 0.20, 0.20), 2, 0.70),
]
THRESHOLDS = [F(50 + 5 * i, 100) for i in range(10)]


def iou(a, b):
    a = [F(str(v)) for v in a]
    b = [F(str(v)) for v in b]
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    inter = iw * ih if iw > 0 and ih > 0 else F(0)
    area = lambda r: (r[2] - r[0]) * (r[3] - r[1])
    return inter / (area(a) + area(b) - inter)


def class_ap(cls, thr, images):
    ranked = []
    n_gt = 0
    for img in sorted(images):
        gts = [g for g, c in IMAGES[img][1] if c == cls]
        n_gt += len(gts)
        dets = sorted([d for d in DETS if d[0] == img and d[2] == cls], key=lambda d: -d[3])
        used = set()
        for d in dets:
            cands = [(iou(d[1], g), k) for k, g in enumerate(gts) if k not in used and iou(d[1], g) >= thr]
            if cands:
                best = max(cands, key=lambda t: (t[0], -t[1]))
                used.add(best[1])
                ranked.append((d[3], True))
            else:
                ranked.append((d[3], False))
    if n_gt == 0:
        return None
    ranked.sort(key=lambda t: -t[0])
    cut = []
    tp = 0
    for k, (_, hit) in enumerate(ranked, start=1):
        tp += hit
        cut.append((F(tp, n_gt), F(tp, k)))
    total = F(0)
    for r in range(101):
        ps = [p for rec, p in cut if rec >= F(r, 100)]
        total += max(ps) if ps else F(0)
    return total / 101


def subset(images):
    per = {}
    for c in CLASS_MODALITY:
        aps = [class_ap(c, t, images) for t in THRESHOLDS]
        if aps[0] is not None:
            per[c] = aps
    mean = lambda v: sum(v) / len(v)
    return (mean([mean(a) for a in per.values()]), mean([a[0] for a in per.values()]),
            mean([a[5] for a in per.values()]))


if __name__ == "__main__":
    for name, imgs in [("total", list(IMAGES)), ("modality0", ["img_a", "img_b"]), ("modality1", ["img_c"])]:
        ap, ap50, ap75 = subset(imgs)
        print(f"{name}: AP={float(ap)!r} AP50={float(ap50)!r} AP75={float(ap75)!r}")
    for c in CLASS_MODALITY:
        aps = [class_ap(c, t, list(IMAGES)) for t in THRESHOLDS]
        print(f"class {c}: " + " ".join(repr(float(a)) for a in aps))
    # IoUs, to keep the fixture away from threshold boundaries
    for d in DETS:
        gts = [g for g, c in IMAGES[d[0]][1] if c == d[2]]
        print(d[0], d[3], [round(float(iou(d[1], g)), 4) for g in gts])
