"""Exercises the Python bindings end to end on small inputs."""

import json
import math
import random
import sys
import tempfile

import ovaib_py as ov


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    j = ov.DiscreteJoint.random([2, 3, 2], seed=7)
    terms = j.ova_mi_terms()
    lower, dtc, upper, holds = j.check_sandwich()
    assert holds and lower <= dtc <= upper
    assert close(sum(terms), j.total_correlation() + j.dual_total_correlation(), 1e-9)
    assert close(j.mutual_information([0], [1, 2]), terms[0], 1e-12)

    copies = ov.DiscreteJoint([2, 2], [0.5, 0.0, 0.0, 0.5])
    assert close(copies.entropy([0]), math.log(2), 1e-12)

    mean, var = ov.gaussian_product([[0.0, 1.0], [2.0, 3.0]], 1.0)
    assert close(var, 0.5, 1e-12) and close(mean[0], 1.0, 1e-12)
    assert close(ov.gaussian_kl([0.0], 1.0, [0.0], 1.0), 0.0, 1e-15)

    rng = random.Random(0)
    cols = [[rng.gauss(0, 1) for _ in range(6)] for _ in range(2)]
    z = [rng.gauss(0, 1) for _ in range(6)]
    zbar = ov.ridge_project(cols, z)
    assert math.sqrt(sum(x * x for x in zbar)) <= math.sqrt(sum(x * x for x in z))
    s = ov.projection_score(z, cols)
    assert close(s, ov.projection_score([3 * x for x in z], [[3 * x for x in c] for c in cols]), 1e-6)

    data = ov.generate(16, num_modalities=3, d_essence=2, d_nuisance=1, d_obs=4, seed=3)
    batches = data["observations"]
    losses = ov.ova_ib_loss(batches, tau=0.5)
    assert close(losses["total"], losses["sufficiency"] + losses["minimality"], 1e-9)
    assert math.isfinite(ov.pairwise_clip_loss(batches, tau=0.5))

    report = ov.verify(scope="oracle", m=3)
    assert report["passed"], report

    cfg = {
        "generator": {"num_modalities": 3, "d_essence": 2, "d_nuisance": [1, 1, 1], "d_obs": [4, 4, 4],
                      "noise": [0.1, 0.1, 0.1], "num_classes": 3, "seed": 5, "mixing": "random"},
        "num_samples": 64,
        "encoder": {"hidden": [6], "embed_dim": 4, "projector_hidden": [5]},
        "loss": {"tau": 0.5},
        "train": {"steps": 5, "batch_size": 8},
        "null_trials": 50,
    }
    text = json.dumps(cfg)
    with tempfile.TemporaryDirectory() as out:
        run = ov.train(out, config=text, seed=42)
        assert math.isfinite(run["final"]["total"])
        ev = ov.evaluate(run["checkpoint"], out, config=text)
        assert 0.0 < ev["retrieval"]["map"] <= 1.0
    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
