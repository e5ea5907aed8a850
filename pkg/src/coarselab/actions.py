"""Group actions on metric windows: properness, cocompactness, orbits,
sections, the induced partial action on the orbit, and the displacement
sets E_R.

Window semantics. The action is given by an evaluator act(g, x) that
returns the image point, or None when the image falls outside the
window. Counting statements (properness, density) quantify over the
window and say so in their reports; density additionally restricts to
an interior so that points coverable only from outside the window are
never reported as uncovered. Certificates distinguish "fails" from
"not certified at this window" (the search hit its resource cap before
stabilizing).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from coarselab.errors import ConfigurationError, DomainError, ResourceError
from coarselab.groups import GroupModel
from coarselab.metric import MetricWindow, restrict_window

Point = object


class ActionScenario:
    """A group acting on a window, with a chosen basepoint."""

    def __init__(
        self,
        name: str,
        group: GroupModel,
        space: MetricWindow,
        basepoint,
        act: Callable,
    ):
        if basepoint not in space:
            raise ConfigurationError(
                f"basepoint {basepoint!r} is not in window {space.label!r}"
            )
        self.name = name
        self.group = group
        self.space = space
        self.basepoint = basepoint
        self._act = act

    def act(self, g, x):
        """g . x, or None when the image leaves the window."""
        if x not in self.space:
            return None
        y = self._act(g, x)
        return y if y is not None and y in self.space else None

    def psi(self, g):
        """The orbit map g -> g . basepoint (None outside the window)."""
        return self.act(g, self.basepoint)

    def __repr__(self):
        return f"ActionScenario({self.name!r}, {self.group.name}, {self.space.label!r})"


# ---------------------------------------------------------------------------
# registry


def _dihedral_on_z(g, x):
    n, e = g
    return n + (-x if e else x)


def _make_translation(stride):
    def act(g, x):
        return x + stride * g[0]

    return act


def _translation_union(g, x):
    copy, n = x
    return (0, n + g[0]) if copy == 0 else x


def _permutation_action(g, x):
    return g[x] if isinstance(x, int) and 0 <= x < len(g) else None


def _custom_action(group: GroupModel, table: dict):
    """Action from per-generator lookup tables {label: {point: point}}.

    An arbitrary g is evaluated by factoring it into generators;
    missing table entries make the image undefined.
    """
    by_element = {}
    for label, elem in group.generators:
        if label in table:
            by_element[elem] = table[label]
    missing = [label for label, elem in group.generators if elem not in by_element]
    if missing:
        raise ConfigurationError(f"custom action table missing generators: {missing}")

    def act(g, x):
        for step in reversed(group.generator_word(g)):
            x = by_element[step].get(x)
            if x is None:
                return None
        return x

    return act


def make_scenario(
    action_name: str,
    group: GroupModel,
    space: MetricWindow,
    basepoint,
    table: dict | None = None,
) -> ActionScenario:
    if action_name == "dihedral-on-Z":
        if group.name != "DInfinity":
            raise ConfigurationError("dihedral-on-Z needs the DInfinity group")
        act = _dihedral_on_z
    elif action_name == "translation":
        if group.name != "Zd:1":
            raise ConfigurationError("translation needs the Zd:1 group")
        act = _make_translation(1)
    elif action_name == "translation-by-2":
        if group.name != "Zd:1":
            raise ConfigurationError("translation-by-2 needs the Zd:1 group")
        act = _make_translation(2)
    elif action_name == "translation-union":
        if group.name != "Zd:1":
            raise ConfigurationError("translation-union needs the Zd:1 group")
        act = _translation_union
    elif action_name == "permutation":
        if not group.name.startswith("Symmetric:"):
            raise ConfigurationError("permutation needs a Symmetric:n group")
        act = _permutation_action
    elif action_name == "custom":
        if table is None:
            raise ConfigurationError("custom action needs a generator table")
        act = _custom_action(group, table)
    else:
        raise ConfigurationError(f"unknown action {action_name!r}")
    return ActionScenario(action_name, group, space, basepoint, act)


# ---------------------------------------------------------------------------
# verdicts


@dataclass(frozen=True)
class IsometryVerdict:
    ok: bool
    checked_elements: int
    message: str = ""


@dataclass(frozen=True)
class PropernessReport:
    certified: bool
    counts: dict                   # r -> N(r), quantified over the group ball used
    stabilizer: tuple              # formatted group elements
    free: bool
    ball_radius_used: int
    note: str = ""


@dataclass(frozen=True)
class CocompactnessReport:
    ok: bool
    radius: int | None             # smallest R with the orbit R-dense on the interior
    interior_margin: int           # points closer than this to the edge were excluded
    uncovered: tuple               # interior points left uncovered at the cap
    orbit_size: int
    ball_radius_used: int
    note: str = ""


@dataclass(frozen=True)
class OrbitSection:
    scenario: ActionScenario
    policy: str
    orbit: tuple                   # Y, in window point order
    phi: dict                      # y -> group element, phi(y) . x0 == y
    ball_radius_used: int

    @property
    def phi_image(self) -> dict:
        """Inverse lookup {phi(y): y}; phi is injective."""
        if not hasattr(self, "_phi_image"):
            object.__setattr__(self, "_phi_image", {g: y for y, g in self.phi.items()})
        return self._phi_image

    def orbit_window(self) -> MetricWindow:
        if not hasattr(self, "_orbit_window"):
            object.__setattr__(
                self,
                "_orbit_window",
                restrict_window(
                    self.scenario.space,
                    self.orbit,
                    f"{self.scenario.space.label}|orbit",
                ),
            )
        return self._orbit_window


@dataclass(frozen=True)
class PartialActionElement:
    g: object
    pairs: tuple                   # (y, g . y) for y where defined
    displacement: int              # d_G(e, g^-1)


@dataclass(frozen=True)
class ERSet:
    radius: int
    elements: tuple                # deduplicated, sorted by (word length, normal form)
    witnesses: dict                # g -> one pair (x, y) with phi(x)^-1 phi(y) = g
    max_word_length: int


# ---------------------------------------------------------------------------
# checks


def check_isometry(scenario: ActionScenario, radius: int = 2) -> IsometryVerdict:
    """Spot-check the action axioms over the generator ball of given radius.

    Isometry is checked on all point pairs whose images are both
    defined; identity and compatibility (gh) . x = g . (h . x) on the
    sampled elements wherever the intermediate point stays in-window.
    """
    g_ball = scenario.group.enumerate_ball(radius)
    space = scenario.space
    n = len(space.points)
    e = scenario.group.identity()
    for p in space.points:
        if scenario.act(e, p) != p:
            return IsometryVerdict(False, len(g_ball), f"identity moves {p!r}")
    images = {}
    for g in g_ball:
        idx = np.full(n, -1, dtype=np.int64)
        for i, p in enumerate(space.points):
            q = scenario.act(g, p)
            if q is not None:
                idx[i] = space.index(q)
        images[g] = idx
        defined = np.nonzero(idx >= 0)[0]
        if defined.size >= 2:
            sub = space.dmat[np.ix_(defined, defined)]
            img = space.dmat[np.ix_(idx[defined], idx[defined])]
            if not np.array_equal(sub, img):
                return IsometryVerdict(
                    False, len(g_ball), f"{scenario.group.format(g)} is not isometric"
                )
    small = scenario.group.enumerate_ball(1)
    for g in small:
        for h in small:
            gh = scenario.group.mul(g, h)
            if gh not in images:
                continue
            for i, p in enumerate(space.points):
                hx = scenario.act(h, p)
                if hx is None:
                    continue
                ghx = scenario.act(g, hx)
                direct = images[gh][i]
                if ghx is not None and direct >= 0 and space.index(ghx) != direct:
                    return IsometryVerdict(
                        False, len(g_ball), "composition mismatch at "
                        f"({scenario.group.format(g)}, {scenario.group.format(h)}, {p!r})"
                    )
    return IsometryVerdict(True, len(g_ball))


def check_properness(
    scenario: ActionScenario,
    radius: int,
    ball_cap: int = 20_000,
) -> PropernessReport:
    """Count {g : d(x0, g . x0) <= r} for r <= radius, growing the group
    ball until the counts and the stabilizer stop changing.

    Orbit points that leave the window are treated as farther than any
    r <= radius; the report says which group ball certified the counts.
    A cap hit before stabilization yields certified=False with a note
    (not a negative verdict).
    """
    if radius < 0:
        raise DomainError(f"radius must be >= 0, got {radius}")
    group, x0 = scenario.group, scenario.basepoint
    prev = None
    m = radius + 2
    while True:
        try:
            elems = group.enumerate_ball(m, cap=ball_cap)
        except ResourceError:
            return PropernessReport(
                False,
                prev[0] if prev else {},
                prev[1] if prev else (),
                False,
                m,
                note=f"properness not certified at this window: ball cap {ball_cap} "
                f"reached before the counts stabilized",
            )
        dists = {}
        for g in elems:
            y = scenario.act(g, x0)
            if y is not None:
                dists[g] = scenario.space.dist(x0, y)
        counts = {
            r: sum(1 for d in dists.values() if d <= r) for r in range(radius + 1)
        }
        stab = tuple(
            group.format(g)
            for g in sorted(
                (g for g, d in dists.items() if d == 0), key=group.sort_key
            )
        )
        if prev is not None and prev == (counts, stab):
            return PropernessReport(
                True, counts, stab, len(stab) == 1, m, note=f"counts quantified over "
                f"the group ball of radius {m} and the space window"
            )
        if len(elems) == group.ball_size(m + 2):
            # finite group exhausted: nothing further can change
            return PropernessReport(True, counts, stab, len(stab) == 1, m)
        prev = (counts, stab)
        m += 2


def _stable_orbit_preimages(scenario: ActionScenario, ball_cap: int):
    """Grow the group ball until orbit and preimage sets stop changing.

    Returns (orbit point list in window order, {y: candidate list}, radius).
    """
    group, x0 = scenario.group, scenario.basepoint
    m = 4
    prev_sig = None
    while True:
        try:
            elems = group.enumerate_ball(m, cap=ball_cap)
        except ResourceError:
            raise ResourceError(
                f"orbit search: group ball cap {ball_cap} hit before the orbit "
                f"stabilized (radius {m}); enlarge the cap or shrink the window"
            ) from None
        pre = {}
        for g in elems:
            y = scenario.act(g, x0)
            if y is not None:
                pre.setdefault(y, []).append(g)
        sig = (len(elems), {y: len(c) for y, c in pre.items()})
        if prev_sig is not None and sig[1] == prev_sig[1]:
            orbit = [p for p in scenario.space.points if p in pre]
            return orbit, pre, m
        if len(elems) == group.ball_size(m + 2):
            orbit = [p for p in scenario.space.points if p in pre]
            return orbit, pre, m
        prev_sig = sig
        m = m * 2 if m < 64 else m + 64


def check_cocompactness(
    scenario: ActionScenario,
    r_cap: int | None = None,
    ball_cap: int = 20_000,
) -> CocompactnessReport:
    """Smallest R <= r_cap such that the orbit is R-dense on the interior.

    Points within r_cap of the window edge are excluded from the
    quantifier (they may be covered by orbit points outside the
    window); r_cap defaults to half the deepest interior margin. A
    point of the interior farther than r_cap from the orbit is a
    genuine uncovered witness at window scale.
    """
    space = scenario.space
    orbit, _, m_used = _stable_orbit_preimages(scenario, ball_cap)
    margins = [space.edge_margin(p) for p in space.points]
    if any(x is None for x in margins):
        # complete space: no truncation, quantify over everything
        cap = int(space.dmat.max())
        eligible = space.points
    else:
        cap = r_cap if r_cap is not None else max(margins) // 2
        eligible = space.interior(cap)
    if not eligible:
        raise DomainError(
            f"cocompactness: interior at margin {cap} is empty; window too small"
        )
    orbit_idx = [space.index(p) for p in orbit]
    elig_idx = [space.index(p) for p in eligible]
    if not orbit_idx:
        return CocompactnessReport(
            False, None, cap, tuple(eligible[:10]), 0, m_used, note="empty orbit"
        )
    nearest = space.dmat[np.ix_(elig_idx, orbit_idx)].min(axis=1)
    worst = int(nearest.max())
    if worst <= cap:
        return CocompactnessReport(
            True, worst, cap, (), len(orbit), m_used,
            note=f"orbit is {worst}-dense on the margin-{cap} interior "
            f"({len(eligible)} points)",
        )
    uncovered = tuple(
        p for p, d in zip(eligible, nearest) if d > cap
    )
    return CocompactnessReport(
        False, None, cap, uncovered, len(orbit), m_used,
        note=f"no R <= {cap} makes the orbit R-dense on the interior; "
        f"{len(uncovered)} interior points uncovered",
    )


_SECTION_POLICIES = ("min-length-then-lex", "max-length")


def build_section(
    scenario: ActionScenario,
    policy: str = "min-length-then-lex",
    ball_cap: int = 20_000,
) -> OrbitSection:
    """Choose phi(y) with phi(y) . x0 = y for every orbit point y.

    min-length-then-lex (default): smallest word length, ties by normal
    form order. max-length: the adversarial opposite, largest word
    length in the stabilized candidate set, ties by reversed normal
    form order. Both are deterministic.
    """
    if policy not in _SECTION_POLICIES:
        raise ConfigurationError(
            f"unknown section policy {policy!r}; expected one of {_SECTION_POLICIES}"
        )
    group = scenario.group
    orbit, pre, m_used = _stable_orbit_preimages(scenario, ball_cap)
    if not orbit:
        raise ResourceError("orbit search found no in-window orbit points")
    phi = {}
    for y in orbit:
        cands = pre[y]
        if policy == "min-length-then-lex":
            phi[y] = min(cands, key=group.sort_key)
        else:
            phi[y] = max(cands, key=group.sort_key)
    return OrbitSection(scenario, policy, tuple(orbit), phi, m_used)


def partial_action(section: OrbitSection, g) -> PartialActionElement:
    """The partial map g . y = x defined by phi(y) g^-1 = phi(x)."""
    group = section.scenario.group
    g_inv = group.inv(g)
    img = section.phi_image
    pairs = []
    for y in section.orbit:
        x = img.get(group.mul(section.phi[y], g_inv))
        if x is not None:
            pairs.append((y, x))
    return PartialActionElement(g, tuple(pairs), group.word_length(g_inv))


def compute_E_R(section: OrbitSection, radius: int) -> ERSet:
    """All elements phi(x)^-1 phi(y) over orbit pairs at distance <= radius.

    Each element carries one witness pair (first in window scan order);
    the maximal word length doubles as the empirical control bound S
    with d_G(phi(x), phi(y)) <= S whenever d_X(x, y) <= radius.
    """
    if radius < 0:
        raise DomainError(f"radius must be >= 0, got {radius}")
    group = section.scenario.group
    space = section.scenario.space
    orbit = section.orbit
    idx = [space.index(y) for y in orbit]
    dmat = space.dmat[np.ix_(idx, idx)]
    witnesses = {}
    for i, x in enumerate(orbit):
        phi_x_inv = group.inv(section.phi[x])
        for j in np.nonzero(dmat[i] <= radius)[0]:
            y = orbit[int(j)]
            g = group.mul(phi_x_inv, section.phi[y])
            if g not in witnesses:
                witnesses[g] = (x, y)
    elements = tuple(sorted(witnesses, key=group.sort_key))
    max_wl = max(group.word_length(g) for g in elements)
    return ERSet(radius, elements, witnesses, max_wl)
