"""Smoke test for the pmb_nll extension module.

Build and install first:  pip install --no-build-isolation ./crates/python
"""

import math

import pmb_nll as m


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    gt = [m.GroundTruth(0, (10, 10, 50, 60)), m.GroundTruth(1, (100, 100, 140, 180))]
    preds = [
        m.Bernoulli(0.9, [0.8, 0.2], (11, 9, 52, 61), [2, 2, 3, 3]),
        m.Bernoulli(0.7, [0.3, 0.7], (98, 103, 141, 177), [4, 3, 2, 5]),
        m.Bernoulli(0.05, [0.5, 0.5], (95, 95, 150, 190), [8, 8, 8, 8]),
    ]

    # a lone Bernoulli with nothing to explain costs -log(1 - r)
    assert close(m.mb_nll([preds[0]], []).nll, -math.log(0.1))

    pmb = m.build_pmb(preds, 0.1)
    assert len(pmb.bernoullis) == 2 and close(pmb.expected_cardinality, 0.05)

    rep = m.pmb_nll(pmb, gt)
    assert math.isfinite(rep.nll) and rep.q_used >= 1
    assert rep.best_assignment == [0, 1]
    assert m.pmb_nll(pmb, gt, q=100).nll <= rep.nll <= m.pmb_nll(pmb, gt, q=1).nll

    d = m.decompose(pmb, gt)
    single = m.pmb_nll(pmb, gt, q=1).nll
    total = sum(d[k] for k in ("regression", "classification", "false_detection", "missed_match", "ppp_rate"))
    assert close(total, single)

    assert close(m.evaluate_image(preds, gt, nms="off").nll, rep.nll)

    # more objects than Bernoullis and no intensity: infeasible
    inf = m.mb_nll([preds[0]], gt)
    assert inf.nll == math.inf and inf.best_assignment is None and inf.decomposition is None

    loss, assignment, grads = m.training_loss(preds[:2], gt)
    assert math.isfinite(loss) and assignment == [0, 1] and len(grads) == 2
    assert set(grads[0]) == {"d_existence", "d_mean", "d_scale"}

    perm, cost = m.optimal_permutation(preds, gt, cost="mb_full")
    assert perm[:2] == [0, 1] and perm[2] is None and math.isfinite(cost)

    try:
        m.Bernoulli(1.5, [1.0], (0, 0, 1, 1), [1, 1, 1, 1])
    except ValueError:
        pass
    else:
        raise AssertionError("r > 1 accepted")

    passed, outcomes = m.selftest(iterations=10)
    assert passed, outcomes

    print("pmb_nll smoke test passed:", rep)


if __name__ == "__main__":
    main()
