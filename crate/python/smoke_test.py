"""Smoke test for the sabrlab Python module.

Build and install first:
    pip install --no-build-isolation -e crates/python
"""

import math

import sabrlab


def main():
    p = sabrlab.ModelParams(0.5, 0.3, 1.0)
    assert abs(p.rho_bar - math.sqrt(1 - 0.09)) < 1e-15

    path = sabrlab.simulate_sabr(p, 1.0, 0.5, 1.0, 0.01, seed=7)
    assert len(path["t"]) == 101 and path["t"][-1] == 1.0
    assert all(y > 0 for y in path["y"])
    again = sabrlab.simulate_sabr(p, 1.0, 0.5, 1.0, 0.01, seed=7)
    assert path == again

    dec = sabrlab.simulate_decoupled(p, 1.0, 1.0, 0.5, 0.01, seed=1, drifted=True)
    assert len(dec["x"]) == 51

    assert sabrlab.adhoc_weight(0.5, 1.0, 1.0) == 4.0
    audit = sabrlab.adhoc_audit(p, n=30)
    assert audit["violations"] == [] and audit["min_gap"] >= -1e-12

    r = sabrlab.cosh_radius(p, 1.0, 1.3, 0.8)
    u, v = sabrlab.sabr_isometry(p, 1.3, 0.8)
    ref = (1.0 / p.rho_bar, 1.0)
    assert abs(r - sabrlab.hyperbolic_cosh_distance((u, v), ref)) < 1e-12
    assert sabrlab.eigen_residual(sabrlab.ModelParams(0.5, 0.0, 1.0), 2.0, 2, 1.1, 0.9) < 1e-5
    assert sabrlab.legendre(2, 2.0) == 5.5
    assert sabrlab.regime_verdict(p, 1.5, 1)["admissible"]

    assert sabrlab.classify_symmetrizable(sabrlab.ModelParams(0.0, 0.5, 1.0))["case"] == "Beta0"
    assert sabrlab.classify_symmetrizable(p)["case"] == "NotSymmetrizable"
    beta1 = sabrlab.classify_symmetrizable(sabrlab.ModelParams(1.0, -0.5, 1.0))
    assert beta1["case"] == "Beta1Special" and beta1["speed_density"] is not None
    cell = sabrlab.symmetry_audit(sabrlab.ModelParams(0.5, 0.0, 1.0), n_pairs=3, resolution=64)
    assert cell["consistent"]

    assert sabrlab.hamza_closability("m1_slice", 0.25)["closable"]
    assert not sabrlab.hamza_closability("m1_slice", 0.5)["closable"]
    assert sabrlab.feller_boundary_class(2.0)["integral"] == 0.5
    assert sabrlab.feller_boundary_class(0.5)["class"] == "NotEntrance"

    est = sabrlab.absorption_probability(sabrlab.ModelParams(0.5, 0.0, 1.0), 1.0, 1.0, n_paths=500)
    lo, hi = est["wilson_ci"]
    assert 0.0 < lo <= est["p_hat"] <= hi < 1.0
    assert sum(est["case_counts"].values()) == 500
    mass = sabrlab.mass_at_zero(sabrlab.ModelParams(0.5, 0.9, 1.0), 1.0, 1.0, 0.0, n_paths=50)
    assert mass["p_hat"] == 0.0

    ks = sabrlab.ks_two_sample([float(i) for i in range(20)], [float(i) + 100 for i in range(20)])
    assert ks["statistic"] == 1.0

    try:
        sabrlab.ModelParams(0.5, 1.0, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("rho = 1 must be rejected")

    print("sabrlab smoke test passed")


if __name__ == "__main__":
    main()
