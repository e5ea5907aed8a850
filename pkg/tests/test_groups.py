"""Group models: arithmetic axioms, word lengths, ball enumeration.

The enumeration tests run three routes side by side: the closed-form
ball_size, the model's own enumerate_ball, and a generator-closure BFS
written here that only uses mul/inv/format.
"""

import random

import pytest

from coarselab.errors import ConfigurationError, ResourceError
from coarselab.groups import group_from_string, group_window

FAMILIES = ["Zd:1", "Zd:2", "Free:2", "DInfinity", "Cyclic:7", "Symmetric:4"]


def bfs_levels(group, radius):
    """Formatted element -> word length, by plain generator closure."""
    gens = [g for _, g in group.generators]
    gens += [group.inv(g) for g in gens]
    levels = {group.format(group.identity()): 0}
    frontier = [group.identity()]
    for step in range(1, radius + 1):
        nxt = []
        for g in frontier:
            for s in gens:
                h = group.mul(g, s)
                key = group.format(h)
                if key not in levels:
                    levels[key] = step
                    nxt.append(h)
        frontier = nxt
    return levels


@pytest.mark.parametrize("name", FAMILIES)
def test_ball_enumeration_agrees_with_bfs_and_formula(name):
    group = group_from_string(name)
    for radius in range(7):
        elems = group.enumerate_ball(radius)
        keys = {group.format(g) for g in elems}
        assert len(keys) == len(elems), "duplicate normal forms"
        oracle = bfs_levels(group, radius)
        assert keys == set(oracle)
        assert group.ball_size(radius) == len(elems)


@pytest.mark.parametrize("name", FAMILIES)
def test_word_length_matches_bfs_level(name):
    group = group_from_string(name)
    oracle = bfs_levels(group, 8 if name != "Free:2" else 6)
    for g in group.enumerate_ball(6):
        assert group.word_length(g) == oracle[group.format(g)]


def test_z_window_five_points():
    gw = group_window(group_from_string("Zd:1"), 2)
    assert len(gw) == 5
    assert gw.dist((-2,), (2,)) == 4


def test_z2_ball_thirteen():
    assert group_from_string("Zd:2").ball_size(2) == 13
    assert len(group_from_string("Zd:2").enumerate_ball(2)) == 13


def test_dihedral_ball_two_lists_normal_forms():
    d = group_from_string("DInfinity")
    got = {d.format(g) for g in d.enumerate_ball(2)}
    assert got == {"e", "t", "t^-1", "t^2", "t^-2", "r", "t r", "t^-1 r"}


def test_free_group_ball_counts():
    f = group_from_string("Free:2")
    assert len(f.enumerate_ball(0)) == 1
    assert len(f.enumerate_ball(1)) == 5
    assert len(f.enumerate_ball(2)) == 17        # 1 + 4 + 12


def test_z_ball_radius_seven():
    assert len(group_from_string("Zd:1").enumerate_ball(7)) == 15


def test_word_length_z2():
    assert group_from_string("Zd:2").word_length((3, -4)) == 7


def test_word_length_free_reduced_word():
    f = group_from_string("Free:2")
    assert f.word_length(f.parse("a b a^-1")) == 3


def test_word_length_dihedral_reflection():
    d = group_from_string("DInfinity")
    assert d.word_length(d.parse("t^3 r")) == 4


@pytest.mark.parametrize("name", FAMILIES)
def test_group_axioms_on_sampled_triples(name):
    group = group_from_string(name)
    rng = random.Random(11)
    pool = list(group.enumerate_ball(3))
    e = group.identity()
    for _ in range(60):
        g, h, k = (rng.choice(pool) for _ in range(3))
        assert group.mul(group.mul(g, h), k) == group.mul(g, group.mul(h, k))
        assert group.mul(g, e) == g == group.mul(e, g)
        assert group.mul(group.inv(g), g) == e
        assert group.word_length(g) == group.word_length(group.inv(g))
        assert group.word_length(group.mul(g, h)) <= (
            group.word_length(g) + group.word_length(h)
        )
    assert group.word_length(e) == 0


@pytest.mark.parametrize("name", FAMILIES)
def test_format_parse_round_trip(name):
    group = group_from_string(name)
    for g in group.enumerate_ball(3):
        assert group.parse(group.format(g)) == g


def test_enumeration_cap_is_a_resource_error():
    with pytest.raises(ResourceError):
        group_from_string("Free:2").enumerate_ball(12, cap=1000)


def test_unknown_family_rejected():
    with pytest.raises(ConfigurationError):
        group_from_string("Borel:3")


def test_group_window_metric_is_left_invariant():
    d = group_from_string("DInfinity")
    gw = group_window(d, 4)
    rng = random.Random(3)
    pts = list(gw.points)
    for _ in range(40):
        g, h = rng.choice(pts), rng.choice(pts)
        assert gw.dist(g, h) == d.word_length(d.mul(d.inv(g), h))
