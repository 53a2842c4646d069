import math

import numpy as np
import pytest

from greendyn.errors import InsufficientData
from greendyn.indeterminacy import indeterminacy_points
from greendyn.projmap import ProjectiveMap, ProjectivePoint
from greendyn.regularity import (PairSampleSet, Region, beta_estimate, calibrate_log_bound, chi_top,
                                 fit_modulus, julia_samples, sample_pairs)
from greendyn.scenarios import build

D = np.geomspace(1e-8, 1e-1, 300)


# ---------------------------------------------------------------- fits on planted models

def test_holder_exact_model():
    fit = fit_modulus(PairSampleSet.from_arrays(D, D ** 0.5), "HOLDER")
    assert fit.alpha_hat == pytest.approx(0.5, abs=1e-9)
    assert fit.residual_rms <= 1e-9


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.9])
def test_h_alpha_planted(alpha):
    g = np.exp(-alpha * np.sqrt(np.abs(np.log(D))))
    assert fit_modulus(PairSampleSet.from_arrays(D, g), "H_ALPHA").alpha_hat == pytest.approx(alpha, abs=1e-6)


@pytest.mark.parametrize("alpha", [0.3, 1.0, 2.5])
def test_phi_alpha_planted(alpha):
    g = 1.0 / (1.0 + np.abs(np.log(D)) ** alpha)
    fit = fit_modulus(PairSampleSet.from_arrays(D, g), "PHI_ALPHA")
    assert fit.alpha_hat == pytest.approx(alpha, abs=1e-6)


def test_planted_with_scatter_below_envelope():
    rng = np.random.default_rng(0)
    d = np.repeat(D, 5)
    g = 0.8 * d ** 0.4 * np.where(np.arange(len(d)) % 5 == 0, 1.0, rng.uniform(0.01, 1.0, len(d)))
    assert fit_modulus(PairSampleSet.from_arrays(d, g), "HOLDER").alpha_hat == pytest.approx(0.4, abs=1e-6)


def test_fit_errors():
    with pytest.raises(InsufficientData):
        fit_modulus(PairSampleSet.from_arrays(D[:20], D[:20]), "HOLDER")
    narrow = np.geomspace(1e-3, 1e-1, 100)
    with pytest.raises(InsufficientData):
        fit_modulus(PairSampleSet.from_arrays(narrow, narrow), "HOLDER")


def test_fit_report_line():
    fit = fit_modulus(PairSampleSet.from_arrays(D, D ** 0.5), "holder")
    parts = fit.report().split(",")
    assert parts[0] == "HOLDER" and len(parts) == 7
    assert float(parts[5]) < float(parts[6]) <= 1


# ---------------------------------------------------------------- chi_top

def test_chi_top_julia_values():
    e0 = chi_top(build("quadratic", c=0).map, 12, "julia", 2000)
    e2 = chi_top(build("quadratic", c=-2).map, 12, "julia", 2000)
    assert e0.value == pytest.approx(math.log(2), rel=0.02)
    assert e2.value == pytest.approx(2 * math.log(2), rel=0.05)
    assert e0.samples == 2000 and e0.skipped == 0


def test_chi_top_unitary_zero():
    u = ProjectiveMap.from_terms(1, [{(1, 0): 0.6, (0, 1): 0.8}, {(1, 0): -0.8, (0, 1): 0.6}])
    assert chi_top(u, 5, "grid", grid_resolution=9).value == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("name,params", [("quadratic", {"c": -1}), ("weakly-regular", {})])
def test_chi_top_refinement_monotone(name, params):
    f = build(name, **params).map
    # linspace(-1, 1, 2k - 1) contains linspace(-1, 1, k), so the samples are nested
    vals = [chi_top(f, 4, "grid", grid_resolution=m).value for m in (5, 9, 17)]
    assert vals[0] <= vals[1] + 1e-12 and vals[1] <= vals[2] + 1e-12


@pytest.mark.parametrize("c", [-1, 0.3j])
def test_chi_top_submultiplicative_grid(c):
    f = build("quadratic", c=c).map
    for m in (2, 4, 8):
        assert chi_top(f, 2 * m, "grid", grid_resolution=33).value <= chi_top(f, m, "grid", grid_resolution=33).value + 1e-9


def test_julia_samples_deterministic_and_bounded():
    a = julia_samples(-1, 600, seed=3)
    assert np.array_equal(a, julia_samples(-1, 600, seed=3))
    assert np.all(np.abs(a) <= 2.0)


def test_chi_top_errors():
    with pytest.raises(ValueError):
        chi_top(build("quadratic", c=0).map, 0)


# ---------------------------------------------------------------- pair sampling

def test_sample_pairs_empty():
    assert len(sample_pairs(build("quadratic", c=0).map, Region(), 10, 0, [1e-2])) == 0


def test_escaping_region_lipschitz():
    f = build("quadratic", c=0).map
    s = sample_pairs(f, Region("annulus", radii=(1.5, 3.0)), 30, 300, [10.0 ** -k for k in range(2, 7)], seed=1)
    d, g = s.arrays()
    assert len(s) == 1500
    assert np.all(g <= d)


def test_basilica_half_exponent():
    f = build("quadratic", c=-2).map
    scales = [10.0 ** -k for k in range(1, 6)]
    s = sample_pairs(f, Region("julia"), 40, 2000, scales, seed=0)
    d, g = s.arrays()
    small, large = d < 1e-4, d > 1e-2
    r5, r6 = g / np.sqrt(d), g / d ** 0.6
    assert r5[small].max() <= 3 * r5[large].max()
    assert r6[small].max() >= 2 * r6[large].max()


def test_sample_pairs_deterministic_threads():
    f = build("weakly-regular").map
    region = Region("window", chart=2, window=(-0.5, 0.5, -0.5, 0.5), slice_values=(0.3,))
    a = sample_pairs(f, region, 10, 200, [1e-2, 1e-4], seed=5, threads=1)
    b = sample_pairs(f, region, 10, 200, [1e-2, 1e-4], seed=5, threads=4)
    assert [(e.d, e.delta_g) for e in a.entries] == [(e.d, e.delta_g) for e in b.entries]


def test_sample_pairs_rejects_region_near_indeterminacy():
    f = build("weakly-regular").map
    I = indeterminacy_points(f)
    region = Region("window", chart=1, window=(-0.01, 0.01, -0.01, 0.01), slice_values=(0.0,))
    with pytest.raises(InsufficientData):
        sample_pairs(f, region, 5, 100, [1e-3], avoid=I, avoid_radius=0.1)


def test_pair_csv(tmp_path):
    s = sample_pairs(build("quadratic", c=0).map, Region(), 5, 10, [1e-2])
    s.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "x_re,x_im,y_re,y_im,d,delta_g" and len(lines) == 11


# ---------------------------------------------------------------- beta and calibration

def test_beta_bilipschitz_fixed_point():
    # unitary, so chordal distance to the fixed point is preserved exactly
    f = ProjectiveMap.from_terms(2, [{(1, 0, 0): 1}, {(0, 1, 0): 0.6 + 0.8j}, {(0, 0, 1): 1j}])
    p = ProjectivePoint.of(1, 0, 0)
    rng = np.random.default_rng(2)
    seeds = [ProjectivePoint.of(1, *(0.05 * (rng.normal(size=2) + 1j * rng.normal(size=2)))) for _ in range(20)]
    b = beta_estimate(f, [p], seeds, 8)
    assert b.beta == pytest.approx(1.0, abs=1e-9)
    assert b.raw_slope == pytest.approx(1.0, abs=1e-9)


def test_beta_weakly_regular():
    f = build("weakly-regular").map
    I = indeterminacy_points(f)
    rng = np.random.default_rng(0)
    base = np.array(I[0].coords)
    seeds = [ProjectivePoint(tuple(base + 0.05 * (rng.normal(size=3) + 1j * rng.normal(size=3))))
             for _ in range(50)]
    b = beta_estimate(f, I, seeds, 10)
    assert 1.0 <= b.beta < 4.0
    assert math.isfinite(b.log_offset)


def test_beta_errors():
    f = build("weakly-regular").map
    with pytest.raises(InsufficientData):
        beta_estimate(f, indeterminacy_points(f), [], 5)
    with pytest.raises(ValueError):
        beta_estimate(f, [], [ProjectivePoint.of(1, 0, 0)], 5)


def test_calibrated_log_bound_holds():
    f = build("fabc", a=2, b=3, c=5).map
    I = indeterminacy_points(f)
    C, Cp = calibrate_log_bound(f, I, count=200)
    assert C > 0
    from greendyn.greens import gammas
    from greendyn.projmap import dist_to_set
    rng = np.random.default_rng(9)
    Z = np.array(I[1].coords) + 1e-3 * (rng.normal(size=(50, 3)) + 1j * rng.normal(size=(50, 3)))
    assert np.all(gammas(f, Z) >= C * np.log(dist_to_set(Z, I)) + Cp - 1e-9)
