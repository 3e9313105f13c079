"""Tour of the evaluation suite on controlled inputs.

Each metric is exercised on small synthetic fixtures where its value is
known: Chamfer distances, normal consistency, thresholded F1, nearest-
neighbor label transfer, mIoU and accuracy, the k-NN label-consistency
score, Pearson correlations, and the paired t-test.

Run from the repository root:

    python demos/04_evaluation_metrics.py
"""

import numpy as np

from sdfseg.metrics import (
    aggregate,
    chamfer,
    consistency,
    correlations,
    evaluate_shape,
    f1_micro,
    miou_accuracy,
    paired_t_test,
    pearson,
    transfer_labels,
)
from sdfseg.shape_data import LabeledPointCloud, generate_synthetic
from sdfseg.shape_data import Sphere, SyntheticShapeSpec


def cloud(points, labels):
    points = np.asarray(points, dtype=float)
    return LabeledPointCloud(
        points=points,
        normals=np.tile([0.0, 0.0, 1.0], (len(points), 1)),
        labels=np.asarray(labels),
        num_parts=int(np.max(labels)) + 1,
    )


def main():
    rng = np.random.default_rng(0)

    # Chamfer on a known two-point configuration, then perturbation behavior.
    print("chamfer singleton pair:", chamfer([[0, 0, 0]], [[0.1, 0, 0]]))
    a = rng.uniform(-1, 1, (2000, 3))
    for sigma in (0.0, 0.001, 0.01):
        cd1, _ = chamfer(a, a + rng.normal(0, sigma, a.shape))
        print(f"  noise sigma={sigma}: cd_l1={cd1:.5f}")

    # F1 with half the prediction off in the weeds: precision 1/2, recall 1.
    gt = np.array([[float(i), 0, 0] for i in range(10)])
    pred = np.concatenate([gt, gt + [0.0, 100.0, 0.0]])
    print("f1 with half-far predictions:", f1_micro(gt, pred, tau=0.5))

    # Label transfer + IoU: the hand-enumerable confusion case.
    ref = np.array([0, 0, 1, 1])
    hyp = np.array([0, 1, 1, 1])
    miou, acc, per = miou_accuracy(ref, hyp, 2)
    print(f"mIoU {miou:.4f} (=7/12), accuracy {acc:.2f}, per-part {per}")

    # Transfer: predictions near cluster 1 adopt its label.
    g = cloud(np.concatenate([np.zeros((5, 3)), np.ones((5, 3))]), [0] * 5 + [1] * 5)
    print("transferred labels:", transfer_labels(g, np.ones((3, 3)) * 0.9))

    # Consistency is 1 on cleanly separated clusters and is palette-invariant.
    pts = np.concatenate([rng.normal(0, 0.05, (50, 3)), rng.normal(5, 0.05, (50, 3))])
    labels = np.array([0] * 50 + [1] * 50)
    c0 = consistency(cloud(pts, labels), k=10, seed=1)
    c1 = consistency(cloud(pts, 1 - labels), k=10, seed=1)
    print(f"consistency: {c0} (clusters), {c1} (palette swapped)")

    # Correlations across a batch of shapes and the paired test.
    xs = np.linspace(0.001, 0.02, 12)
    ys = 1.0 - 8.0 * xs + rng.normal(0, 0.01, 12)
    print(f"pearson(cd, miou-like): {pearson(xs, ys):+.3f}")
    res = paired_t_test(rng.normal(0.0, 1.0, 20))
    print(f"paired t-test: t={res.t:+.3f}, p={res.p:.3f}")

    # Shape-level: a mesh against itself is perfect by construction.
    mesh = generate_synthetic(
        SyntheticShapeSpec(primitives=(Sphere(center=(0, 0, 0), radius=1.0),)),
        resolution=48,
    )
    rec = evaluate_shape(mesh, mesh, n_samples=5000, tau=0.005, seed=0)
    print(f"self-eval: cd {rec.cd_l1}, nc {rec.nc:.1f}, miou {rec.miou:.1f}")
    print("aggregate of 3 identical records:", aggregate([rec, rec, rec])["cd_l1"])
    print("correlation table keys:", len(correlations([rec] * 2 + [rec])))


if __name__ == "__main__":
    main()
