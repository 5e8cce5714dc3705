import json
import math

import numpy as np
import pytest

from pathloc.bounds import (
    BoundReport,
    ThetaTable,
    bound_all,
    bound_destination_fine,
    bound_destination_super,
    bound_hamming_fine,
    bound_hamming_super,
    destination_distances,
    first_k_sum,
    gaussian_quantile,
    gaussian_tail,
    hamming_partial_sums,
    max_gaussian_mgf_bound,
    pairwise_path_bound,
    rgg_closed_form,
    snr_threshold_closed_form,
    theta,
    theta_ceiling,
)
from pathloc.errors import ValidationError
from pathloc.graph import (
    Partition,
    build_supergraph,
    cluster_max_distances,
    generate_rgg,
    random_walk_path,
    square_partition,
)
from pathloc.oracle import brute_force_bound, first_k_by_subsets, theta_by_grid, upper_tail
from pathloc.signal import NoiseModel

from conftest import random_graph


def random_coarse_instance(rng, max_m=5, max_T=5):
    """Small graph, random partition and a projected random walk."""
    while True:
        n = int(rng.integers(2, 10))
        g = random_graph(rng, n, 0.4, connected=True)
        m = int(rng.integers(1, min(max_m, n) + 1))
        assign = rng.integers(0, m, n)
        assign[:m] = np.arange(m)
        part = Partition(assign)
        sg = build_supergraph(g, part)
        T = int(rng.integers(1, max_T + 1))
        nodes = [int(rng.integers(n))]
        for _ in range(T - 1):
            nodes.append(int(rng.choice(g.neighbors(nodes[-1]))))
        truth = part.assign[nodes]
        return g, part, sg, truth


# --- Gaussian helpers


def test_gaussian_tail_examples():
    assert gaussian_tail(0.0) == 0.5
    assert gaussian_tail(gaussian_quantile(0.3)) == pytest.approx(0.3, abs=1e-10)
    assert gaussian_tail(1.96) == pytest.approx(upper_tail(1.96), abs=1e-10)
    assert gaussian_tail(1.96) == pytest.approx(0.0249979, abs=1e-6)
    assert gaussian_quantile(0.0) == math.inf and gaussian_quantile(1.0) == -math.inf
    with pytest.raises(ValidationError):
        gaussian_quantile(1.5)


# --- theta


@pytest.mark.parametrize("mu", [0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 10.0])
@pytest.mark.parametrize("l", [1, 2, 4, 16, 100])
def test_theta_positive_and_below_ceiling(mu, l):
    noise = NoiseModel(mu)
    v = theta(noise, l)
    assert 0 < v <= l * math.exp(-mu * mu / 4)
    assert v <= theta_ceiling(noise, l)


def test_theta_scale_invariance():
    a = theta(NoiseModel(3.0, 1.0), 5)
    b = theta(NoiseModel(6.0, 2.0), 5)
    assert a == pytest.approx(b, rel=1e-9)


def test_theta_non_decreasing_in_l():
    for mu in (1.0, 2.5, 4.0):
        vals = [theta(NoiseModel(mu), l) for l in range(1, 40)]
        assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("mu, l", [(1.0, 1), (1.0, 5), (2.0, 3), (2.0, 16), (0.5, 8)])
def test_theta_matches_independent_grid(mu, l):
    ours = theta(NoiseModel(mu), l)
    ref = min(theta_by_grid(mu, 1.0, l, points=4001), l * math.exp(-mu * mu / 4))
    assert ours <= ref * (1 + 1e-9)
    assert ours == pytest.approx(ref, rel=2e-3)


def test_theta_table_is_memoised_exactly():
    tab = ThetaTable(NoiseModel(2.0))
    first = tab(7)
    assert tab(7) is first or tab(7) == first
    assert np.array_equal(tab.values([7, 3, 7]), [first, tab(3), first])


def test_mgf_bound_l1_reduces_to_gaussian_mgf():
    v, _ = max_gaussian_mgf_bound(0.7, 1.0, 1)
    assert v >= math.exp(0.5 * 0.49) * (1 - 1e-12)


# --- pairwise and first-k


def test_pairwise_examples():
    noise = NoiseModel(3.0)
    assert pairwise_path_bound(noise, []) == 1.0
    assert pairwise_path_bound(noise, [4]) == pytest.approx(theta(noise, 4))
    assert pairwise_path_bound(noise, [4, 2]) == pytest.approx(theta(noise, 4) * theta(noise, 2))


def test_first_k_sum(rng):
    noise = NoiseModel(2.0)
    sizes = rng.integers(1, 20, 8)
    tab = ThetaTable(noise)
    vals = [tab(s) for s in sizes]
    assert first_k_sum(noise, sizes, 0) == 0
    assert first_k_sum(noise, sizes, 8) == pytest.approx(sum(vals))
    for k in range(9):
        assert first_k_sum(noise, sizes, k) == pytest.approx(first_k_by_subsets(vals, k), rel=1e-12)
    with pytest.raises(ValidationError):
        first_k_sum(noise, sizes, 9)


# --- DP bounds against enumeration


@pytest.mark.parametrize("mu", [0.8, 2.0, 4.0])
def test_dp_bounds_match_enumeration(mu):
    rng = np.random.default_rng(int(mu * 10))
    tab = ThetaTable(NoiseModel(mu))
    for _ in range(40):
        g, part, sg, truth = random_coarse_instance(rng)
        hop = destination_distances(sg, int(truth[-1]), "hop") if _all_reachable(sg, truth) else None
        cases = [
            ("hammingSuper", bound_hamming_super(sg, truth, tab).value, None),
            ("hammingFine", bound_hamming_fine(sg, truth, tab).value, None),
        ]
        if hop is not None:
            cases.append(("destinationSuper", bound_destination_super(sg, truth, tab).value, hop))
            dmax = cluster_max_distances(g, part, int(truth[-1]), "hop")
            cases.append(("destinationFine", bound_destination_fine(sg, truth, tab, d_max=dmax).value, dmax))
        for kind, value, dist in cases:
            ref = brute_force_bound(sg, truth, tab, kind, distances=dist)
            assert value == pytest.approx(ref, rel=1e-9, abs=1e-300), kind


def _all_reachable(sg, truth):
    from pathloc.graph import hop_distances_from

    return np.isfinite(hop_distances_from(sg, int(truth[-1]))).all()


def test_hamming_mass_matches_enumeration_for_every_delta():
    rng = np.random.default_rng(4)
    tab = ThetaTable(NoiseModel(1.5))
    for _ in range(30):
        _, _, sg, truth = random_coarse_instance(rng, max_m=4, max_T=4)
        T = len(truth)
        mass = np.exp(hamming_partial_sums(sg, truth, tab))
        for j in range(T + 1):
            ours = j + sum(w * mass[w] for w in range(j + 1, T + 1))
            ref = brute_force_bound(sg, truth, tab, "hammingSuper", delta=j / T)
            assert ours == pytest.approx(ref, rel=1e-9)


def test_destination_single_cluster_is_zero():
    g = random_graph(np.random.default_rng(0), 5, 0.6, connected=True)
    part = Partition(np.zeros(5, dtype=np.int64))
    sg = build_supergraph(g, part)
    rep = bound_destination_super(sg, np.zeros(4, dtype=np.int64), NoiseModel(2.0))
    assert rep.value == 0.0


def test_super_hamming_saturates_at_T_for_huge_noise():
    g = generate_rgg(radius=0.2, seed=1, n=100)
    part, sg = square_partition(g, 4)
    p = random_walk_path(g, 20, seed=0).project(part)
    rep = bound_hamming_super(sg, p, NoiseModel(1e-6))
    assert rep.value == pytest.approx(20.0)
    assert rep.delta_star == 1.0


def test_fine_dominates_super():
    rng = np.random.default_rng(7)
    tab = ThetaTable(NoiseModel(2.0))
    for _ in range(40):
        g, part, sg, truth = random_coarse_instance(rng)
        hs, hf = bound_hamming_super(sg, truth, tab).value, bound_hamming_fine(sg, truth, tab).value
        assert hf >= hs * (1 - 1e-12)
        if _all_reachable(sg, truth):
            ds = bound_destination_super(sg, truth, tab).value
            df = bound_destination_fine(sg, truth, tab, g, part, metric="hop").value
            assert df >= ds * (1 - 1e-12)


def test_singletons_destination_fine_equals_super():
    rng = np.random.default_rng(8)
    g = random_graph(rng, 9, 0.4, connected=True)
    part = Partition(np.arange(9))
    sg = build_supergraph(g, part)
    truth = random_walk_path(g, 5, seed=1).project(part)
    tab = ThetaTable(NoiseModel(1.5))
    ds = bound_destination_super(sg, truth, tab).value
    df = bound_destination_fine(sg, truth, tab, g, part, metric="hop").value
    assert df == pytest.approx(ds, rel=1e-12)


def test_bounds_non_increasing_in_snr():
    g = generate_rgg(radius=0.08, seed=2, n=500)
    part, sg = square_partition(g, 6)
    p = random_walk_path(g, 40, seed=3).project(part)
    prev = None
    for mu in range(2, 9):
        cur = {k: r.value for k, r in bound_all(sg, p, NoiseModel(float(mu)), g, part).items()}
        if prev:
            for k in cur:
                assert cur[k] <= prev[k] * (1 + 1e-12), k
        prev = cur


def test_long_horizon_never_reports_zero():
    g = generate_rgg(radius=0.08, seed=2, n=500)
    part, sg = square_partition(g, 6)
    p = random_walk_path(g, 1000, seed=3).project(part)
    for mu in (1.0, 8.0, 30.0):
        for rep in bound_all(sg, p, NoiseModel(mu), g, part).values():
            # the fine Hamming bound can exceed the float range at low SNR and reports inf
            assert rep.value > 0 and not math.isnan(rep.value)
            if mu > 1.0:
                assert math.isfinite(rep.value)


def test_truth_must_be_projected_walk():
    g = generate_rgg(radius=0.08, seed=2, n=200)
    part, sg = square_partition(g, 4)
    p = random_walk_path(g, 5, seed=1)
    with pytest.raises(ValidationError):
        bound_hamming_super(sg, p, NoiseModel(2.0))
    with pytest.raises(ValidationError):
        bound_hamming_super(sg, np.array([0, sg.m]), NoiseModel(2.0))


# --- closed form


def test_closed_form_at_threshold_equals_T():
    s_m, T = 35, 100
    noise = NoiseModel(snr_threshold_closed_form(s_m))
    rep = rgg_closed_form(noise, s_m, T)
    assert rep.value == pytest.approx(T, rel=1e-12)
    assert not rep.condition_met


def test_closed_form_arithmetic():
    rep = rgg_closed_form(NoiseModel(4.0), 1, 1)
    assert rep.value == pytest.approx(9 * math.exp(-4.0), rel=1e-15)
    assert rep.value == pytest.approx(0.1648, abs=5e-5)
    assert rep.condition_met


def test_closed_form_against_super_bound_at_high_snr():
    # the closed form drops a (1 + x)^(T - 1) walk-counting factor, x = 9 s_m exp(-mu^2/4),
    # so at finite T it dominates the super bound on average but not on every path
    g = generate_rgg(radius=0.06, seed=1, n=2000)
    part, sg = square_partition(g, 10)
    s_m = int(part.sizes.max())
    paths = [random_walk_path(g, 100, seed=seed).project(part) for seed in range(20)]
    for extra in (1.0, 2.0):
        noise = NoiseModel(snr_threshold_closed_form(s_m) + extra)
        closed = rgg_closed_form(noise, s_m, 100).value
        values = [bound_hamming_super(sg, p, noise).value for p in paths]
        assert np.mean(values) <= closed
        if extra == 2.0:
            assert max(values) <= closed


def test_report_json_keys():
    rep = BoundReport(kind="hammingSuper", value=1.0, normalized_value=0.1, delta_star=0.2)
    doc = json.loads(rep.to_json())
    assert set(doc) == {
        "kind",
        "value",
        "normalizedValue",
        "deltaStar",
        "thetaParams",
        "runtimeMs",
        "configDigest",
        "conditionMet",
    }
