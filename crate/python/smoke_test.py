"""Smoke test for the pulseox extension module.

Build and install first:  pip install --no-build-isolation -e crates/python
"""

import math
import os
import statistics
import tempfile

import pulseox


def check(name, cond, detail=""):
    print(f"{'ok  ' if cond else 'FAIL'} {name} {detail}".rstrip())
    if not cond:
        raise SystemExit(1)


def main():
    # 2x2 squares overlapping in a unit square
    check("iou", math.isclose(pulseox.iou([0, 0, 2, 2], [1, 1, 3, 3]), 1 / 7))

    box = [10.0, 20.0, 30.0, 60.0]
    b, dims = box, (640, 480)
    for _ in range(4):
        b = pulseox.rotate_box(b, 90, *dims)
        dims = dims[::-1]
    check("four quarter turns", b == box, str(b))
    check("rotate 90", pulseox.rotate_box(box, 90, 640, 480) == [20.0, 610.0, 60.0, 630.0])

    # TP, FP, TP against two ground truths: 0.5 * 1 + 0.5 * 2/3
    check("average precision", math.isclose(pulseox.average_precision([(0.9, True), (0.8, False), (0.7, True)], 2), 5 / 6))
    check("ap without ground truth", pulseox.average_precision([], 0) is None)

    folds = [60.0, 70.0, 65.0, 80.0, 75.0]
    mean, sd = pulseox.aggregate_folds(folds)
    check("aggregate folds", math.isclose(mean, statistics.mean(folds)) and math.isclose(sd, statistics.stdev(folds)))
    check("digit sets", pulseox.digit_set_correct([72, 98], [98, 72]) and not pulseox.digit_set_correct([98], [98, 72]))

    scene = pulseox.generate_scene("equal_with_symbol", "dmd", 91, 123, orientation=270, seed=5, id="demo")
    check("scene", (scene.id, scene.spo2, scene.pr, scene.orientation, scene.group) == ("demo", 91, 123, 270, "DMD-L"), repr(scene))
    check("scene dict round trip", pulseox.Scene.from_dict(scene.to_dict()).to_dict() == scene.to_dict())

    clean = pulseox.MockDetector(seed=0, noiseless=True)
    out = clean.read(scene)
    check("noiseless read", out["status"] == "ok" and (out["reading"]["spo2"], out["reading"]["pr"]) == (91, 123), str(out))
    check("rank", clean.rank(scene)[0][0] == 270)

    digits = [
        {"class": "9", "confidence": 0.9, "box": [200, 100, 240, 180]},
        {"class": "7", "confidence": 0.9, "box": [245, 100, 285, 180]},
        {"class": "6", "confidence": 0.9, "box": [210, 300, 235, 350]},
        {"class": "4", "confidence": 0.9, "box": [240, 300, 265, 350]},
    ]
    out = pulseox.read_detections(640, 640, [(0, digits)], auto_orient=False)
    check("read detections", (out["reading"]["spo2"], out["reading"]["pr"]) == (97, 64), str(out))
    out = pulseox.read_detections(640, 640, [(0, digits[:2])])
    check("too few digits", out["status"] == "failed" and out["failure"]["reason"] == "TOO_FEW_DIGITS")

    corpus = pulseox.generate_corpus(per_group=10, seed=3)
    check("corpus size", len(corpus) == 40)
    plan = dict(pulseox.kfold(corpus, 5, 1))
    sizes = [list(plan.values()).count(f) for f in range(5)]
    check("folds", sizes == [8] * 5, str(sizes))
    report = pulseox.evaluate(corpus, clean)
    # experiment I reads the image as captured, so rotated scenes miss
    check("noiseless eval", report["experiment_ii"]["mean"] == report["experiment_iii"]["mean"] == 100.0
          and report["experiment_i"]["mean"] < 100.0, str({k: report[k] for k in ("experiment_i", "experiment_ii", "experiment_iii")}))

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "corpus.jsonl")
        pulseox.save_corpus(path, corpus)
        back = pulseox.load_corpus(path)
        check("corpus file round trip", [s.to_dict() for s in back] == [s.to_dict() for s in corpus])

    try:
        pulseox.MockDetector(seed=1, dropout=1.5)
        check("bad noise rejected", False)
    except ValueError:
        check("bad noise rejected", True)
    print("all checks passed")


if __name__ == "__main__":
    main()
