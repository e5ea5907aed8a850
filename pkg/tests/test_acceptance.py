"""The acceptance gate.

Eight criteria, one test each, every assertion exact unless a float
eigensolver is the stated route. The conftest hook prints a one-line
pass/fail verdict per criterion at the end of the run.
"""

import json
import random
from fractions import Fraction

import numpy as np
import pytest

from coarselab.actions import (
    build_section,
    check_cocompactness,
    check_properness,
    make_scenario,
)
from coarselab.cli import main
from coarselab.groups import group_from_string, group_window
from coarselab.metric import (
    check_closeness,
    discrete_window,
    fit_control_function,
    integer_window,
    restrict_window,
)
from coarselab.operators import (
    BandedOperator,
    add,
    adjoint,
    apply,
    compose,
)
from coarselab.pipeline import run_pipeline
from coarselab.property_a import (
    ExplicitKernel,
    build_ball_witness,
    check_psd,
    check_support,
    check_variation,
    check_witness,
    psd_int_bareiss,
    random_witness,
    singleton_witness,
    witness_from_json,
    witness_to_kernel,
)

FOLNER_SPEC = {"kind": "folner", "L": 100, "window": [-150, 150]}


def _scenario(kind, radius):
    if kind == "dihedral":
        g = group_from_string("DInfinity")
        return make_scenario("dihedral-on-Z", g, integer_window(radius), 0)
    g = group_from_string("Zd:1")
    return make_scenario("translation", g, integer_window(radius), 0)


@pytest.fixture(scope="module")
def folner_runs():
    """Both interval-overlap pipeline runs from criterion 4, shared with 5."""
    out = {}
    for kind in ("free", "dihedral"):
        section = build_section(_scenario(kind, 160))
        out[kind] = (section, run_pipeline(section, 10, Fraction(1, 8), FOLNER_SPEC))
    return out


@pytest.mark.acceptance(1, "proper cocompact certificate with exact control data")
def test_criterion_1_dihedral_action_certificate():
    scenario = _scenario("dihedral", 200)
    group = scenario.group

    prop = check_properness(scenario, radius=3)
    assert prop.certified
    assert not prop.free
    assert tuple(prop.stabilizer) == ("e", "r")

    coco = check_cocompactness(scenario)
    assert coco.ok
    assert coco.radius == 0

    section = build_section(scenario)
    gw = group_window(group, 20)
    reachable = [g for g in gw.points if scenario.psi(g) is not None]
    assert len(reachable) == len(gw.points)      # window 200 swallows B_20
    gw_r = restrict_window(gw, reachable, "B20")

    psi_fit = fit_control_function(scenario.psi, gw_r, scenario.space, r_max=20)
    for r in range(21):
        assert psi_fit.control_up[r] <= r

    phi_rad = max(
        max(group.word_length(section.phi[scenario.psi(g)]) for g in reachable),
        20,
    )
    gw_big = group_window(group, phi_rad)
    closeness = check_closeness(
        lambda g: section.phi[scenario.psi(g)], lambda g: g, gw_r, gw_big
    )
    assert closeness.bound == 1                  # sharp: phi(psi(r)) = e, d(e, r) = 1


@pytest.mark.acceptance(2, "s-identity sweep, both scenarios and both policies")
def test_criterion_2_s_identity_sweep(configs_dir, tmp_path, capsys):
    for name in ("verify_operators_free.toml", "verify_operators_dihedral.toml"):
        out = tmp_path / name.replace(".toml", "")
        code = main(["verify-operators", "--config", str(configs_dir / name),
                     "--out", str(out)])
        capsys.readouterr()
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["ok"] is True
        assert report["range"] == [-50, 50]
        assert {s["policy"] for s in report["sweeps"]} == {
            "min-length-then-lex", "max-length",
        }
        for sweep in report["sweeps"]:
            assert sweep["points"] == 101
            assert sweep["pairs_checked"] == 101 * 101
            assert sweep["failure_count"] == 0
            assert sweep["failures"] == []


@pytest.mark.acceptance(3, "identity approximant gives the constant kernel")
def test_criterion_3_identity_pipeline():
    section = build_section(_scenario("dihedral", 100))
    rep = run_pipeline(section, 5, Fraction(1, 10), {"kind": "identity"})
    assert rep.certified
    u = rep.build.kernel
    for x in rep.build.domain:
        for y in rep.build.domain:
            assert u.value(x, y) == 1
    assert rep.psd.ok
    assert rep.psd.psd.lambda_min >= -1e-9
    for radius in range(1, 21):
        v = check_variation(u, radius, Fraction(1, 10), margin=rep.build.margin)
        assert v.worst == 0


@pytest.mark.acceptance(4, "interval-overlap runs match the triangular kernel")
def test_criterion_4_folner_pipeline(folner_runs):
    for kind in ("free", "dihedral"):
        _, rep = folner_runs[kind]
        assert rep.certified
        u = rep.build.kernel
        dom = rep.build.domain
        assert dom == tuple(range(-150, 151))
        for x in dom:
            for y in dom:
                assert u.value(x, y) == Fraction(max(0, 101 - abs(x - y)), 101)
        assert rep.psd.psd.sample_size == 101
        assert rep.psd.psd.lambda_min >= -1e-9
        assert rep.variation.worst == Fraction(10, 101)
        assert rep.variation.ok                                   # 10/101 < 1/8
        tight = check_variation(u, 10, Fraction(1, 11), margin=rep.build.margin)
        assert not tight.ok                                       # 10/101 > 1/11
        assert rep.support.ok
        assert rep.support_bound.s_reported == 100
        # the support verdict above scans d > 100; pin the edge too
        assert u.value(0, 100) == Fraction(1, 101)
        assert u.value(-150, 150) == 0
    free_u = folner_runs["free"][1].build.kernel
    dihedral_u = folner_runs["dihedral"][1].build.kernel
    for x in folner_runs["free"][1].build.domain:
        for y in folner_runs["free"][1].build.domain:
            assert free_u.value(x, y) == dihedral_u.value(x, y)


@pytest.mark.acceptance(5, "variation bounded by approximation norms")
def test_criterion_5_variation_vs_approximation(folner_runs):
    for kind in ("free", "dihedral"):
        section, rep = folner_runs[kind]
        group = section.scenario.group
        norms = {row.element: Fraction(row.norm) for row in rep.approximation.rows}
        dom = rep.build.domain
        u = rep.build.kernel
        violations = 0
        checked = 0
        for x in dom:
            for y in dom:
                if u.space.dist(x, y) > 10:
                    continue
                checked += 1
                g = group.mul(group.inv(section.phi[x]), section.phi[y])
                if abs(1 - u.value(x, y)) > norms[group.format(g)]:
                    violations += 1
        assert checked > 6000
        assert violations == 0


@pytest.mark.acceptance(6, "ball witness battery and PSD of witness kernels")
def test_criterion_6_witness_battery(fixtures_dir):
    w400 = integer_window(400)
    ball = build_ball_witness(w400, 50)
    loose = check_witness(ball, 5, Fraction(1, 8))
    assert loose.ok
    assert loose.worst_ratio == Fraction(10, 96)
    tight = check_witness(ball, 5, Fraction(1, 10))
    assert not tight.ok
    assert tight.worst_ratio == Fraction(10, 96)      # 10/96 > 1/10

    corpus = [
        ball,
        build_ball_witness(w400, 5),
        build_ball_witness(w400, 20),
        singleton_witness(w400),
        witness_from_json(
            json.loads((fixtures_dir / "witness_small.json").read_text()),
            integer_window(3),
        ),
    ]
    rng = random.Random(2026)
    corpus.extend(random_witness(w400, rng) for _ in range(100))
    for w in corpus:
        u = witness_to_kernel(w)
        sample = u.domain[:: max(1, len(u.domain) // 60)]
        psd = check_psd(u, sample)
        assert psd.exact_psd is True          # the integer route ran and passed
        assert psd.routes_agree
        assert psd.ok
        sup = check_support(u, 2 * w.support_bound)
        assert sup.ok
    assert 2 * ball.support_bound == 100      # the advertised S = 100 case


def _dense(op, pts):
    idx = {p: i for i, p in enumerate(pts)}
    m = np.zeros((len(pts), len(pts)), dtype=np.int64)
    for (r, c), v in op.items():
        m[idx[r], idx[c]] = int(v)
    return m


def _bfs_levels(group, radius):
    gens = [e for _, e in group.generators]
    seen = {group.format(group.identity()): 0}
    frontier = [group.identity()]
    for level in range(1, radius + 1):
        nxt = []
        for g in frontier:
            for s in gens:
                h = group.mul(g, s)
                k = group.format(h)
                if k not in seen:
                    seen[k] = level
                    nxt.append(h)
        frontier = nxt
    return seen


@pytest.mark.acceptance(7, "oracle equivalence: operators, balls, PSD routes")
def test_criterion_7_oracle_equivalence():
    # sparse arithmetic vs a dense integer oracle, window under 300 points
    w = integer_window(149)
    pts = w.points
    on_window = set(pts)
    rng = random.Random(17)
    for _ in range(12):
        ent_a = {(r, r + rng.randint(-3, 3)): rng.randint(-4, 4)
                 for r in pts if rng.random() < 0.4}
        ent_b = {(r, r + rng.randint(-3, 3)): rng.randint(-4, 4)
                 for r in pts if rng.random() < 0.4}
        a = BandedOperator(w, {k: v for k, v in ent_a.items()
                               if v and k[1] in on_window})
        b = BandedOperator(w, {k: v for k, v in ent_b.items()
                               if v and k[1] in on_window})
        da, db = _dense(a, pts), _dense(b, pts)
        assert np.array_equal(_dense(compose(a, b), pts), da @ db)
        assert np.array_equal(_dense(add(a, b), pts), da + db)
        assert np.array_equal(_dense(adjoint(a), pts), da.T)
        vec = {p: rng.randint(-3, 3) for p in pts}
        dv = np.array([vec[p] for p in pts], dtype=np.int64)
        out = apply(a, vec)
        assert np.array_equal(
            np.array([out.get(p, 0) for p in pts], dtype=np.int64), da @ dv
        )

    # closed-form ball sizes vs a BFS oracle on every family
    expected_b2 = {"Zd:2": 13, "Free:2": 17}
    for name in ("Zd:1", "Zd:2", "Free:2", "DInfinity", "Cyclic:7", "Symmetric:4"):
        group = group_from_string(name)
        levels = _bfs_levels(group, 6)
        for radius in range(7):
            ball = group.enumerate_ball(radius, cap=100_000)
            oracle = {k for k, lv in levels.items() if lv <= radius}
            assert {group.format(g) for g in ball} == oracle
            assert group.ball_size(radius) == len(oracle)
        if name in expected_b2:
            assert group.ball_size(2) == expected_b2[name]

    # exact integer elimination vs the eigensolver on 200 random Grams
    rng = random.Random(4)
    agreements = 0
    psd_seen = indef_seen = 0
    for case in range(200):
        n = rng.randint(5, 200)
        k = rng.randint(1, 8)
        f = [[rng.randint(-3, 3) for _ in range(k)] for _ in range(n)]
        g = [[sum(f[i][t] * f[j][t] for t in range(k)) for j in range(n)]
             for i in range(n)]
        if case % 2:
            i = rng.randrange(n)
            g[i][i] -= g[i][i] + 1            # a -1 diagonal entry, never PSD
        exact = psd_int_bareiss(g)
        lam = float(np.linalg.eigvalsh(np.array(g, dtype=float))[0])
        assert exact == (lam >= -1e-8)
        agreements += 1
        psd_seen += exact
        indef_seen += not exact
    assert agreements == 200
    assert psd_seen and indef_seen

    # and the packaged kernel check keeps the two routes glued together
    rng = random.Random(9)
    for _ in range(8):
        n = rng.randint(4, 40)
        k = rng.randint(1, 4)
        f = [[rng.randint(-2, 2) for _ in range(k)] for _ in range(n)]
        space = discrete_window(list(range(n)), label=f"gram-{n}")
        vals = {}
        for i in range(n):
            for j in range(i, n):
                vals[(i, j)] = Fraction(sum(f[i][t] * f[j][t] for t in range(k)))
        kern = ExplicitKernel(space, vals)
        rep = check_psd(kern, space.points)
        assert rep.exact_psd is True
        assert rep.routes_agree is True


@pytest.mark.acceptance(8, "negative controls exit 1 naming the violated hypothesis")
def test_criterion_8_negative_controls(configs_dir, tmp_path, capsys):
    out = tmp_path / "adversarial"
    code = main(["run-pipeline",
                 "--config", str(configs_dir / "pipeline_adversarial.toml"),
                 "--out", str(out)])
    cap = capsys.readouterr()
    assert code == 1
    assert "complete positivity of the approximant" in cap.out
    report = json.loads((out / "report.json").read_text())
    assert report["certified"] is False
    assert report["psd"]["ok"] is False
    assert report["psd"]["lambda_min"] <= -0.5
    assert report["psd"]["structural_lambda_min"] <= -0.5
    assert report["psd"]["violated_hypothesis"] == (
        "complete positivity of the approximant"
    )

    code = main(["property-a",
                 "--config", str(configs_dir / "singleton_witness.toml")])
    cap = capsys.readouterr()
    assert code == 1
    assert "slow variation of the witness family" in cap.out

    code = main(["property-a",
                 "--config", str(configs_dir / "metric_violation.toml")])
    cap = capsys.readouterr()
    assert code == 1
    assert "the triangle inequality" in cap.out
