"""Command line front end.

Subcommands: check-action (isometry, properness, cocompactness, section,
control tables, closeness), property-a (witness/kernel battery),
run-pipeline (approximant to kernel), verify-operators (the s-identity
sweep), export-kernel (CSV dump).

Exit codes: 0 all verdicts pass; 1 a check completed and failed, with
the violated hypothesis named in the output; 2 configuration, resource,
or internal-consistency errors. Reports are byte-reproducible for a
fixed config: anything time-dependent goes to run_meta.json, never into
report.json.
"""

from __future__ import annotations

import argparse
import datetime
import random
import sys
from fractions import Fraction
from pathlib import Path

from coarselab import __version__
from coarselab.actions import (
    build_section,
    check_cocompactness,
    check_isometry,
    check_properness,
    make_scenario,
)
from coarselab.config import (
    ChecksConfig,
    build_group,
    build_space,
    load_config,
    output_dir,
    parse_checks,
    parse_export,
    parse_pipeline,
    parse_property_a,
    parse_scenario,
    parse_space_spec,
    parse_tolerances,
    parse_verify_operators,
    want_kernel_csv,
)
from coarselab.errors import (
    ConfigurationError,
    DomainError,
    InvariantViolation,
    ResourceError,
)
from coarselab.groups import group_window
from coarselab.metric import (
    check_closeness,
    fit_control_function,
    restrict_window,
    verify_metric,
)
from coarselab.operators import verify_s_identity
from coarselab.pipeline import kernel_to_csv, report_to_json, report_to_text, run_pipeline
from coarselab.property_a import (
    build_ball_witness,
    check_psd,
    check_support,
    kernel_from_descriptor,
    kernel_from_file,
    kernel_values_csv,
    load_witness,
    property_a_report,
    random_witness,
    singleton_witness,
    witness_to_kernel,
)
from coarselab.util import jsonable, stable_json

_METRIC_AXIOMS = {
    "nonnegativity": "nonnegativity of the metric",
    "separation": "separation of points by the metric",
    "symmetry": "symmetry of the metric",
    "triangle": "the triangle inequality",
}


# ---------------------------------------------------------------------------
# plumbing


def _scenario_from(doc: dict, args, base_dir: Path):
    cfg = parse_scenario(doc)
    space = build_space(cfg.space, args.window, base_dir=base_dir)
    metric = verify_metric(space)
    group = build_group(cfg.group)
    if cfg.action == "custom":
        raise ConfigurationError(
            "custom actions need a generator table and are library-only"
        )
    scenario = make_scenario(cfg.action, group, space, cfg.basepoint)
    return cfg, scenario, metric


def _provenance(cfg, scenario, args) -> dict:
    group = scenario.group
    return {
        "version": __version__,
        "group": group.name,
        "generators": [label for label, _ in group.generators],
        "space": scenario.space.label,
        "points": len(scenario.space.points),
        "action": cfg.action,
        "basepoint": cfg.basepoint,
        "section_policy": cfg.section_policy,
        "window_override": args.window,
    }


def _metric_block(metric) -> dict:
    return {
        "ok": metric.ok,
        "violated": None if metric.ok else _METRIC_AXIOMS.get(metric.kind, metric.kind),
        "witness_points": list(metric.points),
        "message": metric.message,
    }


def _emit(args, doc, name: str, report: dict, text: str, extra_files=None) -> None:
    sys.stdout.write(text)
    out = output_dir(doc, args.out)
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(stable_json(jsonable(report)))
    (out / "report.txt").write_text(text)
    for fname, content in (extra_files or {}).items():
        (out / fname).write_text(content)
    meta = {
        "command": name,
        "config": str(args.config),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "argv": sys.argv[1:],
    }
    (out / "run_meta.json").write_text(stable_json(meta))


def _fmt(v) -> str:
    from coarselab.pipeline import _fmt as fmt

    return fmt(v)


# ---------------------------------------------------------------------------
# check-action


def cmd_check_action(args) -> int:
    doc = load_config(args.config)
    base = Path(args.config).parent
    checks = parse_checks(doc)
    if args.max_ball is not None:
        checks = ChecksConfig(
            checks.isometry_radius, checks.properness_radius,
            checks.control_radius, args.max_ball,
        )
    cfg, scenario, metric = _scenario_from(doc, args, base)
    group, space = scenario.group, scenario.space
    verdicts = []

    def verdict(name, ok, detail, violated=None):
        verdicts.append({
            "name": name, "ok": bool(ok), "detail": detail,
            "violated": None if ok else violated,
        })

    verdict("metric axioms", metric.ok, metric.message or "all axioms hold",
            None if metric.ok else _METRIC_AXIOMS.get(metric.kind, metric.kind))
    iso = check_isometry(scenario, radius=checks.isometry_radius)
    verdict("isometric action", iso.ok,
            iso.message or f"{iso.checked_elements} elements checked",
            "the action preserves distances")
    prop = check_properness(scenario, radius=checks.properness_radius,
                            ball_cap=checks.max_ball)
    verdict("proper action", prop.certified,
            f"counts {prop.counts}, stabilizer size {len(prop.stabilizer)}, "
            f"free={prop.free}; {prop.note}",
            "properness of the action")
    coco = check_cocompactness(scenario, ball_cap=checks.max_ball)
    verdict("cocompact action", coco.ok,
            f"orbit is {coco.radius}-dense" if coco.ok
            else f"{coco.note or 'orbit not dense at any tried radius'}; "
                 f"first uncovered {coco.uncovered[:3]!r}",
            "cocompactness of the action")
    section = build_section(scenario, cfg.section_policy, ball_cap=checks.max_ball)
    verdict("orbit section", True,
            f"policy {cfg.section_policy}, {len(section.orbit)} orbit points", None)

    # control data for the orbit map g -> g.x0 and for the section phi,
    # restricted to group elements whose images stay on the window
    r_ctl = checks.control_radius
    gw = group_window(group, r_ctl, cap=checks.max_ball)
    reachable = [g for g in gw.points if scenario.psi(g) is not None]
    gw_r = restrict_window(gw, reachable, f"{gw.label}|on-window")
    psi_fit = fit_control_function(scenario.psi, gw_r, space, r_max=r_ctl)
    sub_orbit = [y for y in section.orbit
                 if space.dist(scenario.basepoint, y) <= r_ctl]
    # target ball must hold phi of everything psi reaches, plus gw_r itself
    phi_rad = max(
        max(group.word_length(section.phi[scenario.psi(g)]) for g in reachable),
        max(group.word_length(section.phi[y]) for y in sub_orbit),
        r_ctl,
    )
    gw_big = group_window(group, phi_rad, cap=checks.max_ball)
    phi_fit = fit_control_function(
        lambda y: section.phi[y],
        restrict_window(space, sub_orbit, f"{space.label}|orbit-core"),
        gw_big, r_max=r_ctl,
    )
    verdict("control tables", True,
            f"orbit map control_up({r_ctl}) = {psi_fit.control_up[r_ctl]}, "
            f"section control_up({r_ctl}) = {phi_fit.control_up[r_ctl]}", None)
    closeness = check_closeness(
        lambda g: section.phi[scenario.psi(g)], lambda g: g, gw_r, gw_big,
    )
    verdict("section inverts the orbit map up to bounded distance", True,
            f"sup d(phi(psi(g)), g) = {closeness.bound} "
            f"at {group.format(closeness.worst_point)}", None)

    ok = all(v["ok"] for v in verdicts)
    report = {
        "command": "check-action",
        "provenance": _provenance(cfg, scenario, args),
        "metric": _metric_block(metric),
        "properness": {
            "certified": prop.certified,
            "counts": {str(k): v for k, v in prop.counts.items()},
            "stabilizer": list(prop.stabilizer),
            "free": prop.free,
            "ball_radius_used": prop.ball_radius_used,
            "note": prop.note,
        },
        "cocompactness": {
            "ok": coco.ok,
            "radius": coco.radius,
            "orbit_size": coco.orbit_size,
            "uncovered": list(coco.uncovered[:5]),
            "note": coco.note,
        },
        "section": {
            "policy": section.policy,
            "orbit_size": len(section.orbit),
            "sample": [
                [p, group.format(section.phi[p])] for p in section.orbit[:5]
            ],
        },
        "orbit_map_control": {
            "control_up": {str(k): v for k, v in psi_fit.control_up.items()},
            "properness_table": {str(k): v for k, v in psi_fit.properness_table.items()},
        },
        "section_control": {
            "control_up": {str(k): v for k, v in phi_fit.control_up.items()},
        },
        "closeness": {"bound": closeness.bound,
                      "worst": group.format(closeness.worst_point)},
        "verdicts": verdicts,
        "ok": ok,
    }
    lines = [f"check-action: {scenario.name} on {space.label}"]
    for v in verdicts:
        lines.append(f"  [{'pass' if v['ok'] else 'FAIL'}] {v['name']}: {v['detail']}")
        if not v["ok"] and v["violated"]:
            lines.append(f"         violated: {v['violated']}")
    lines.append(f"overall: {'certified at window scale' if ok else 'NOT certified'}")
    _emit(args, doc, "check-action", report, "\n".join(lines) + "\n")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# property-a


def _resolve_witness(spec: str, space, base: Path):
    name, _, arg = spec.partition(":")
    if name == "ball":
        return build_ball_witness(space, int(arg))
    if spec == "singleton":
        return singleton_witness(space)
    return load_witness(base / spec if not Path(spec).is_absolute() else spec, space)


def _resolve_kernel(spec: str, space, base: Path):
    name = spec.partition(":")[0]
    if name in ("triangular", "gaussian"):
        return kernel_from_descriptor(space, spec)
    return kernel_from_file(base / spec if not Path(spec).is_absolute() else spec, space)


def cmd_property_a(args) -> int:
    doc = load_config(args.config)
    base = Path(args.config).parent
    pa = parse_property_a(doc)
    tol = parse_tolerances(doc, args.tol)
    space = build_space(parse_space_spec(doc), args.window, base_dir=base)
    metric = verify_metric(space)
    report = {
        "command": "property-a",
        "space": space.label,
        "points": len(space.points),
        "metric": _metric_block(metric),
    }
    lines = [f"property-a battery on {space.label} ({len(space.points)} points)"]
    if not metric.ok:
        violated = _METRIC_AXIOMS.get(metric.kind, metric.kind)
        report.update({"ok": False, "violated": violated})
        lines.append(f"  [FAIL] metric axioms: {metric.message}")
        lines.append(f"         violated: {violated}")
        lines.append("overall: NOT certified")
        _emit(args, doc, "property-a", report, "\n".join(lines) + "\n")
        return 1
    lines.append("  [pass] metric axioms")

    witness = kernel = None
    if pa.witness is not None:
        witness = _resolve_witness(pa.witness, space, base)
    elif pa.kernel is not None:
        kernel = _resolve_kernel(pa.kernel, space, base)
    rep = property_a_report(
        space, list(pa.schedule), witness=witness, kernel=kernel,
        ladder=pa.ladder, psd_sample_cap=pa.psd_sample_cap, tol=tol.psd,
    )
    hypothesis = {
        "ladder": "slow variation of the witness family",
        "witness": "slow variation of the witness family",
        "kernel": "variation of the kernel within eps at distance R",
    }[rep.mode]
    entries = []
    for e in rep.entries:
        entries.append({
            "R": e.radius, "eps": _fmt(e.eps), "satisfied": e.satisfied,
            "parameter": e.parameter, "worst": _fmt(e.worst), "detail": e.detail,
        })
        mark = "pass" if e.satisfied else "FAIL"
        lines.append(f"  [{mark}] (R={e.radius}, eps={_fmt(e.eps)}): {e.detail}"
                     f" (worst {_fmt(e.worst)})")
        if not e.satisfied:
            lines.append(f"         violated: {hypothesis}")
    if rep.psd is not None:
        lines.append(
            f"  [{'pass' if rep.psd.ok else 'FAIL'}] kernel positivity: "
            f"lambda_min {rep.psd.lambda_min:.3e}, exact route {rep.psd.exact_psd}"
        )
        if not rep.psd.ok:
            lines.append("         violated: positive semidefiniteness of the kernel")
    if rep.support is not None:
        lines.append(
            f"  [{'pass' if rep.support.ok else 'FAIL'}] kernel support within "
            f"{rep.support.bound}: {rep.support.checked_pairs} far pairs scanned"
        )
        if not rep.support.ok:
            lines.append("         violated: finite support of the kernel")

    battery = None
    if pa.random_witnesses > 0:
        seed = args.seed if args.seed is not None else pa.seed
        rng = random.Random(seed)
        bad = 0
        for _ in range(pa.random_witnesses):
            w = random_witness(space, rng)
            u = witness_to_kernel(w)
            psd = check_psd(u, u.domain[:: max(1, len(u.domain) // 60)], tol=tol.psd)
            sup = check_support(u, 2 * w.support_bound)
            if not (psd.ok and (psd.routes_agree is not False) and sup.ok):
                bad += 1
        battery = {"count": pa.random_witnesses, "seed": seed, "failures": bad}
        lines.append(
            f"  [{'pass' if bad == 0 else 'FAIL'}] random witness battery: "
            f"{pa.random_witnesses} seeded families, {bad} failures"
        )
    ok = rep.ok and (battery is None or battery["failures"] == 0)
    report.update({
        "mode": rep.mode,
        "entries": entries,
        "psd": None if rep.psd is None else {
            "ok": rep.psd.ok, "lambda_min": rep.psd.lambda_min,
            "exact_route": rep.psd.exact_psd, "routes_agree": rep.psd.routes_agree,
            "method": rep.psd.method, "sample_size": rep.psd.sample_size,
        },
        "support": None if rep.support is None else {
            "ok": rep.support.ok, "bound": rep.support.bound,
            "checked_pairs": rep.support.checked_pairs,
        },
        "random_battery": battery,
        "note": rep.note,
        "ok": ok,
    })
    lines.append(f"note: {rep.note}")
    lines.append(f"overall: {'certified at window scale' if ok else 'NOT certified'}")
    _emit(args, doc, "property-a", report, "\n".join(lines) + "\n")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# run-pipeline


def cmd_run_pipeline(args) -> int:
    doc = load_config(args.config)
    base = Path(args.config).parent
    pl = parse_pipeline(doc)
    tol = parse_tolerances(doc, args.tol)
    checks = parse_checks(doc)
    cfg, scenario, metric = _scenario_from(doc, args, base)
    if not metric.ok:
        raise ConfigurationError(
            f"space fails the {metric.kind} axiom: {metric.message}"
        )
    theta = dict(pl.theta)
    if theta.get("kind") == "file" and "path" in theta:
        p = Path(theta["path"])
        theta["path"] = str(base / p if not p.is_absolute() else p)
    section = build_section(scenario, cfg.section_policy, ball_cap=checks.max_ball)
    rep = run_pipeline(section, pl.radius, pl.eps, theta,
                       psd_sample_size=pl.psd_sample, tol=tol.psd)
    body = report_to_json(rep)
    body["provenance"] = _provenance(cfg, scenario, args)
    text = report_to_text(rep)
    extra = {}
    if want_kernel_csv(doc):
        extra["kernel.csv"] = kernel_to_csv(rep)
    _emit(args, doc, "run-pipeline", body, text, extra)
    return 0 if rep.certified else 1


# ---------------------------------------------------------------------------
# verify-operators


def cmd_verify_operators(args) -> int:
    doc = load_config(args.config)
    base = Path(args.config).parent
    vo = parse_verify_operators(doc)
    checks = parse_checks(doc)
    cfg, scenario, metric = _scenario_from(doc, args, base)
    if not metric.ok:
        raise ConfigurationError(
            f"space fails the {metric.kind} axiom: {metric.message}"
        )
    group = scenario.group
    results = []
    lines = [f"verify-operators: {scenario.name} on {scenario.space.label}"]
    total_fail = 0
    for policy in vo.policies:
        section = build_section(scenario, policy, ball_cap=checks.max_ball)
        pts = [p for p in section.orbit
               if isinstance(p, int) and vo.lo <= p <= vo.hi]
        if not pts:
            raise ConfigurationError(
                f"sweep range [{vo.lo}, {vo.hi}] contains no orbit points"
            )
        s_cache: dict = {}
        failures = []
        checked = 0
        for x in pts:                       # ordered pairs: (x, y) and (y, x) differ
            for y in pts:
                checked += 1
                v = verify_s_identity(section, x, y, margin=vo.margin, s_cache=s_cache)
                if not v.ok:
                    failures.append((x, y, v.mismatch))
        total_fail += len(failures)
        results.append({
            "policy": policy,
            "pairs_checked": checked,
            "points": len(pts),
            "failures": [[x, y, list(m)] for x, y, m in failures[:5]],
            "failure_count": len(failures),
        })
        lines.append(
            f"  [{'pass' if not failures else 'FAIL'}] policy {policy}: "
            f"{checked} pairs over [{vo.lo}, {vo.hi}], {len(failures)} failures"
        )
        if failures:
            lines.append(
                "         violated: the composition identity "
                "s_x* s_y = partial translation of phi(x)^-1 phi(y)"
            )
    ok = total_fail == 0
    report = {
        "command": "verify-operators",
        "provenance": _provenance(cfg, scenario, args),
        "range": [vo.lo, vo.hi],
        "margin": vo.margin,
        "sweeps": results,
        "ok": ok,
    }
    lines.append(f"overall: {'all identities hold' if ok else 'FAILURES found'}")
    _emit(args, doc, "verify-operators", report, "\n".join(lines) + "\n")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# export-kernel


def cmd_export_kernel(args) -> int:
    doc = load_config(args.config)
    base = Path(args.config).parent
    ex = parse_export(doc)
    space = build_space(parse_space_spec(doc), args.window, base_dir=base)
    metric = verify_metric(space)
    if not metric.ok:
        raise ConfigurationError(
            f"space fails the {metric.kind} axiom: {metric.message}"
        )
    if ex.kernel is not None:
        kernel = _resolve_kernel(ex.kernel, space, base)
        what = ex.kernel
    else:
        kernel = witness_to_kernel(_resolve_witness(ex.witness, space, base))
        what = f"witness {ex.witness}"
    csv = kernel_values_csv(kernel)
    out = output_dir(doc, args.out)
    if out is None:
        sys.stdout.write(csv)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / "kernel.csv").write_text(csv)
        sys.stdout.write(
            f"exported {what} over {len(kernel.domain)} points to {out / 'kernel.csv'}\n"
        )
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML or JSON config file")
    common.add_argument("--out", default=None, help="directory for report files")
    common.add_argument("--window", type=int, default=None,
                        help="override the space window radius")
    common.add_argument("--seed", type=int, default=None,
                        help="seed for randomized batteries")
    common.add_argument("--max-ball", type=int, default=None,
                        help="cap on group ball enumeration")
    common.add_argument("--tol", type=float, default=None,
                        help="override the PSD tolerance")
    parser = argparse.ArgumentParser(
        prog="coarselab",
        description="window-scale certificates for group actions and "
                    "regularity kernels",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check-action", parents=[common],
                   help="properness / cocompactness / section certificate")
    sub.add_parser("property-a", parents=[common],
                   help="witness and kernel battery over an (R, eps) schedule")
    sub.add_parser("run-pipeline", parents=[common],
                   help="approximant to kernel, staged, with verdicts")
    sub.add_parser("verify-operators", parents=[common],
                   help="sweep the s-identity over a point range")
    sub.add_parser("export-kernel", parents=[common],
                   help="dump kernel values as CSV")
    return parser


_HANDLERS = {
    "check-action": cmd_check_action,
    "property-a": cmd_property_a,
    "run-pipeline": cmd_run_pipeline,
    "verify-operators": cmd_verify_operators,
    "export-kernel": cmd_export_kernel,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (ConfigurationError, DomainError, ResourceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"internal consistency error (implementation fault): {exc}",
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
