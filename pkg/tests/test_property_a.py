"""Witness families, overlap kernels, the ratio and variation checks,
and the two-route positivity test."""

import json
import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coarselab.errors import ConfigurationError
from coarselab.metric import discrete_window, integer_window
from coarselab.property_a import (
    ExplicitKernel,
    GaussianKernel,
    TriangularKernel,
    WitnessFamily,
    build_ball_witness,
    check_psd,
    check_support,
    check_variation,
    check_witness,
    kernel_from_descriptor,
    kernel_from_file,
    kernel_values_csv,
    load_witness,
    property_a_report,
    psd_int_bareiss,
    random_witness,
    singleton_witness,
    witness_from_json,
    witness_to_json,
    witness_to_kernel,
)


@pytest.fixture(scope="module")
def z50():
    return integer_window(50)


@pytest.fixture(scope="module")
def z400():
    return integer_window(400)


# ---------------------------------------------------------------------------
# witness ratio check


def test_singleton_passes_at_radius_zero(z50):
    w = singleton_witness(z50)
    assert check_witness(w, 0, Fraction(1)).ok


def test_singleton_fails_at_radius_two_with_infinite_ratio(z50):
    w = singleton_witness(z50)
    verdict = check_witness(w, 2, Fraction(1))
    assert not verdict.ok
    assert verdict.worst_ratio == math.inf


def test_ball_family_passes_eighth(z400):
    w = build_ball_witness(z400, 50)
    verdict = check_witness(w, 5, Fraction(1, 8))
    assert verdict.ok
    # closed-form route: at distance d the sets share 101 - d points,
    # differ in 2d, so the ratio is 2d / (101 - d), worst at d = 5
    assert verdict.worst_ratio == Fraction(10, 96)


def test_ball_family_fails_tenth_by_exact_comparison(z400):
    w = build_ball_witness(z400, 50)
    verdict = check_witness(w, 5, Fraction(1, 10))
    assert not verdict.ok
    assert verdict.worst_ratio == Fraction(10, 96)
    assert Fraction(10, 96) > Fraction(1, 10)


def test_ball_family_ratio_matches_set_enumeration(z400):
    # second route for the same number: explicit symmetric-difference
    # and intersection counting on raw sets
    w = build_ball_witness(z400, 50)
    x, y = 0, 5
    a, b = w.sets[x], w.sets[y]
    ratio = Fraction(len(a ^ b), len(a & b))
    assert ratio == Fraction(10, 96)


def test_witness_validates_tags(z50):
    with pytest.raises(ConfigurationError):
        WitnessFamily(z50, {x: frozenset([(x, 0)]) for x in z50.points})


def test_witness_needs_every_point(z50):
    sets = {x: frozenset([(x, 1)]) for x in z50.points if x != 0}
    with pytest.raises(ConfigurationError):
        WitnessFamily(z50, sets)


def test_witness_support_bound_is_exact(z50):
    w = build_ball_witness(z50, 7)
    assert w.support_bound == 7


# ---------------------------------------------------------------------------
# witness -> kernel


def test_singleton_kernel_is_identity(z50):
    u = witness_to_kernel(singleton_witness(z50))
    assert u.value(3, 3) == 1
    assert u.value(3, 4) == 0


def test_ball_kernel_is_triangular(z50):
    u = witness_to_kernel(build_ball_witness(z50, 10))
    tri = TriangularKernel(z50, 10)
    interior = [x for x in z50.points if abs(x) <= 39]
    for x in interior[::3]:
        for y in interior[::3]:
            assert u.value(x, y) == tri.value(x, y)


def test_constant_family_gives_constant_kernel():
    w5 = integer_window(5)
    common = frozenset((y, 1) for y in w5.points)
    w = WitnessFamily(w5, {x: common for x in w5.points})
    u = witness_to_kernel(w)
    assert all(u.value(x, y) == 1 for x in w5.points for y in w5.points)


def test_kernel_diagonal_is_one_and_symmetric(z50):
    rng = random.Random(4)
    w = random_witness(z50, rng)
    u = witness_to_kernel(w)
    for x in z50.points[::5]:
        assert u.value(x, x) == 1
        for y in z50.points[::7]:
            assert u.value(x, y) == u.value(y, x)


def test_witness_kernel_exact_when_sizes_square(z50):
    u = witness_to_kernel(build_ball_witness(z50, 10))
    v = u.value(0, 4)
    assert isinstance(v, Fraction) and v == Fraction(17, 21)


# ---------------------------------------------------------------------------
# variation


def test_variation_of_constant_kernel():
    w5 = integer_window(5)
    common = frozenset((y, 1) for y in w5.points)
    u = witness_to_kernel(WitnessFamily(w5, {x: common for x in w5.points}))
    verdict = check_variation(u, 3, Fraction(1, 100))
    assert verdict.ok and verdict.worst == 0


def test_variation_of_triangular_kernel():
    tri = TriangularKernel(integer_window(120), 50)
    verdict = check_variation(tri, 10, Fraction(1, 8))
    assert verdict.ok
    assert verdict.worst == Fraction(10, 101)
    assert not check_variation(tri, 10, Fraction(10, 101)).ok   # strict


def test_variation_of_identity_kernel_fails(z50):
    u = witness_to_kernel(singleton_witness(z50))
    verdict = check_variation(u, 1, Fraction(1, 2))
    assert not verdict.ok
    assert verdict.worst == 1


# ---------------------------------------------------------------------------
# positivity, two routes


def test_psd_identity_kernel(z50):
    u = witness_to_kernel(singleton_witness(z50))
    rep = check_psd(u, z50.points[::5])
    assert rep.ok and rep.exact_psd is True
    assert rep.lambda_min == pytest.approx(1.0)


def test_psd_triangular_kernel():
    w = integer_window(50)
    tri = TriangularKernel(w, 25)
    rep = check_psd(tri, w.points)          # 101 consecutive integers
    assert rep.ok
    assert rep.lambda_min >= -1e-9
    assert rep.exact_psd is True and rep.routes_agree is True


def test_psd_rejects_two_minus_three_ones():
    w = discrete_window(["p", "q", "r"])
    u = ExplicitKernel(
        w,
        {(a, b): (Fraction(1) if a == b else Fraction(-1))
         for a in w.points for b in w.points},
    )
    rep = check_psd(u, w.points)
    assert not rep.ok
    assert rep.exact_psd is False
    assert rep.lambda_min == pytest.approx(-1.0, abs=1e-9)


def test_psd_routes_agree_on_rational_gram():
    rng = random.Random(31)
    w = discrete_window(list(range(12)))
    b = [[rng.randint(-3, 3) for _ in range(4)] for _ in range(12)]
    vals = {}
    for i in range(12):
        for j in range(12):
            vals[(i, j)] = Fraction(sum(b[i][k] * b[j][k] for k in range(4)))
    u = ExplicitKernel(w, vals)
    rep = check_psd(u, w.points)
    assert rep.ok and rep.exact_psd and rep.routes_agree


def test_bareiss_units():
    assert psd_int_bareiss([[0, 0], [0, 1]])
    assert psd_int_bareiss([[2, 1], [1, 2]])
    assert not psd_int_bareiss([[0, 1], [1, 0]])     # zero pivot, live row
    assert not psd_int_bareiss([[1, 2], [2, 1]])
    assert not psd_int_bareiss([[-1]])
    assert psd_int_bareiss([[4]])
    assert psd_int_bareiss([])


def test_bareiss_handles_rank_deficiency():
    # Gram of three collinear vectors: rank 1, PSD
    m = [[1, 2, 3], [2, 4, 6], [3, 6, 9]]
    assert psd_int_bareiss(m)
    m[2][2] = 8                                      # now indefinite
    assert not psd_int_bareiss(m)


@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_random_witness_kernels_are_psd_with_bounded_support(seed):
    space = integer_window(30)
    w = random_witness(space, random.Random(seed))
    u = witness_to_kernel(w)
    rep = check_psd(u, space.points[::3])
    assert rep.ok
    assert rep.exact_psd is None or rep.exact_psd is True
    assert check_support(u, 2 * w.support_bound).ok


# ---------------------------------------------------------------------------
# support


def test_support_identity_at_zero(z50):
    u = witness_to_kernel(singleton_witness(z50))
    assert check_support(u, 0).ok


def test_support_triangular_sharp():
    w = integer_window(120)
    tri = TriangularKernel(w, 50)
    assert check_support(tri, 100).ok
    verdict = check_support(tri, 99)
    assert not verdict.ok
    assert w.dist(*verdict.worst_pair) == 100


def test_support_constant_kernel_vacuous():
    w5 = integer_window(5)
    common = frozenset((y, 1) for y in w5.points)
    u = witness_to_kernel(WitnessFamily(w5, {x: common for x in w5.points}))
    assert check_support(u, 10).ok                   # diameter bound


def test_gaussian_kernel_fails_finite_support_above_tolerance():
    w = integer_window(20)
    assert not check_support(GaussianKernel(w, 10.0), 30).ok
    # a steep tail sinks under the floating zero tolerance and passes
    assert check_support(GaussianKernel(w, 3.0), 39).ok


# ---------------------------------------------------------------------------
# report battery


def test_report_ladder_finds_expected_sizes(z400):
    rep = property_a_report(
        z400,
        [(5, Fraction(1, 4)), (10, Fraction(1, 4)), (10, Fraction(1, 10))],
    )
    assert rep.mode == "ladder" and rep.ok
    assert [e.parameter for e in rep.entries] == [11, 21, 51]
    assert rep.psd.ok and rep.support.ok
    assert "window scale" in rep.note


def test_report_one_point_space():
    rep = property_a_report(
        discrete_window(["only"]),
        [(1, Fraction(1, 2)), (7, Fraction(1, 9))],
        witness=singleton_witness(discrete_window(["only"])),
    )
    assert rep.ok and all(e.satisfied for e in rep.entries)


def test_report_slack_threshold_passes_identity_kernel(z50):
    u = witness_to_kernel(singleton_witness(z50))
    rep = property_a_report(z50, [(1, Fraction(2))], kernel=u)
    assert rep.ok


def test_report_needs_schedule(z50):
    with pytest.raises(ConfigurationError):
        property_a_report(z50, [])


def test_witness_implies_kernel_variation_on_corpus(z50):
    # observed implication between the two checks, not asserted as a
    # sharp constant: families that pass the ratio test also pass the
    # variation test of their own kernel at the same thresholds
    rng = random.Random(77)
    corpus = [build_ball_witness(z50, n) for n in (5, 10, 20)]
    corpus += [random_witness(z50, rng) for _ in range(10)]
    for w in corpus:
        for radius in (2, 4):
            for eps in (Fraction(1, 4), Fraction(1, 2)):
                if check_witness(w, radius, eps).ok:
                    u = witness_to_kernel(w)
                    assert check_variation(u, radius, eps).ok


# ---------------------------------------------------------------------------
# serialization


def test_witness_json_round_trip(z50):
    w = build_ball_witness(z50, 4)
    back = witness_from_json(witness_to_json(w), z50)
    assert back.sets == w.sets


def test_witness_file_fixture_loads(fixtures_dir):
    space = integer_window(3)
    w = load_witness(fixtures_dir / "witness_small.json", space)
    assert w.sets[0] == frozenset([(-1, 1), (0, 1), (1, 1)])
    assert w.support_bound == 1


def test_kernel_descriptor_parsing(z50):
    assert kernel_from_descriptor(z50, "triangular:10").value(0, 5) == Fraction(16, 21)
    g = kernel_from_descriptor(z50, "gaussian:2.5")
    assert 0 < g.value(0, 1) < 1
    with pytest.raises(ConfigurationError):
        kernel_from_descriptor(z50, "box:3")


def test_kernel_file_round_trip(tmp_path):
    w = integer_window(2)
    doc = {
        "points": list(w.points),
        "values": [
            ["1" if i == j else "1/3" for j in range(5)] for i in range(5)
        ],
        "support_width": 4,
    }
    path = tmp_path / "k.json"
    path.write_text(json.dumps(doc))
    u = kernel_from_file(path, w)
    assert u.value(-2, 2) == Fraction(1, 3)
    assert u.value(0, 0) == 1


def test_explicit_kernel_rejects_asymmetry():
    w = integer_window(2)
    vals = {(x, y): Fraction(1) for x in w.points for y in w.points}
    vals[(0, 1)] = Fraction(1, 2)                    # conflicts with (1, 0)
    with pytest.raises(ConfigurationError):
        ExplicitKernel(w, vals)


def test_kernel_csv_shape(z50):
    u = TriangularKernel(z50, 10)
    lines = kernel_values_csv(u, [-1, 0, 1]).strip().splitlines()
    assert lines[0] == "x,y,distance,value"
    assert len(lines) == 1 + 9
    assert "1" in lines[1]


def test_psd_report_on_float_kernel_has_no_exact_route(z50):
    g = GaussianKernel(z50, 4.0)
    rep = check_psd(g, z50.points[::5])
    assert rep.exact_psd is None
    assert rep.ok                                    # gaussian is psd
