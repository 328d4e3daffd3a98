"""Smoke test for the msntf Python extension.

Build and install first:  pip install maturin && maturin develop -m crates/py/Cargo.toml
"""

import math

import msntf


def main():
    tensor, truth, labels = msntf.synthetic(60, 8, seed=1)
    assert tensor.shape == (60, 7, 8)
    assert truth.rank == 3 and len(labels) == 60

    res = msntf.fit(tensor, 3, n_runs=4, seed=0)
    trace = res.objective_trace
    assert all(b <= a * (1 + 1e-9) for a, b in zip(trace, trace[1:]))
    assert res.relative_error < 1e-6, res.relative_error
    assert min(res.model.congruence(truth)) > 0.99
    assert abs(msntf.core_consistency(tensor, res.model) - 100.0) < 1e-3
    assert len(res.runs) == 4

    scan = msntf.cc_scan(tensor, [1, 2, 3], n_runs=3, seed=0)
    assert scan["selected_rank"] == 3, scan

    x = msntf.nnls([[2.0, 0.0], [0.0, 1.0]], [[2.0], [-1.0]])
    assert abs(x[0][0] - 1.0) < 1e-12 and x[1][0] == 0.0

    cl = msntf.kmedoids(res.model.a, 5, seed=0, membership=True)
    assert len(cl.labels) == 60 and sum(cl.sizes) == 60 and cl.method == "k-medoids"
    coeffs, mean = msntf.silhouette([[0.0], [1.0], [10.0], [11.0]], [0, 0, 1, 1])
    assert abs(coeffs[0] - 0.904762) < 1e-6

    chi = msntf.chi_squared([[10, 20], [30, 40]])
    assert abs(chi["statistic"] - 0.7937) < 1e-4 and chi["dof"] == 1
    assert abs(msntf.chi2_sf(3.841, 1) - 0.05) < 1e-3

    groups = msntf.representative_groups(res.model.a, 0.10)
    assert all(len(g) >= math.ceil(0.1 * 60) for g in groups)
    assert msntf.jaccard([1, 2, 3], [3, 4]) == 0.25

    back = msntf.Model(res.model.a, res.model.b, res.model.c).reconstruct()
    assert back.shape == tensor.shape
    print("smoke test passed:", res)


if __name__ == "__main__":
    main()
