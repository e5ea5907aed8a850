"""Finite windows of discrete metric spaces, and certificates about maps between them.

A window is a finite list of points with an exact integer distance matrix.
It usually stands for a truncation of an infinite space, so it carries
optional truncation data used to form interiors:

* radial: a basepoint plus a window radius. A point is m-interior when
  its distance to the basepoint is at most radius - m.
* edge set: an explicit set of boundary points. A point is m-interior
  when every edge point is at distance >= m.
* complete: no truncation data. The window is the whole space and every
  point is interior at every margin.

Quantified statements downstream ("for all x, y ...") are evaluated on
interiors so that truncation artifacts never masquerade as mathematical
failures; each report records the margin it used.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from coarselab.errors import ConfigurationError, DomainError

Point = Hashable


def _freeze_point(p):
    """JSON gives lists; points must be hashable, so lists become tuples."""
    if isinstance(p, list):
        return tuple(_freeze_point(q) for q in p)
    return p


class MetricWindow:
    """Immutable finite metric window with int64 distance matrix."""

    def __init__(
        self,
        label: str,
        points: Sequence[Point],
        dmat,
        basepoint: Point | None = None,
        window_radius: int | None = None,
        edge: Iterable[Point] | None = None,
    ):
        pts = tuple(points)
        if not pts:
            raise ConfigurationError("a metric window needs at least one point")
        index = {p: i for i, p in enumerate(pts)}
        if len(index) != len(pts):
            raise ConfigurationError(f"duplicate points in window {label!r}")
        mat = np.array(dmat, dtype=np.int64)
        if mat.shape != (len(pts), len(pts)):
            raise ConfigurationError(
                f"distance matrix shape {mat.shape} does not match {len(pts)} points"
            )
        mat.setflags(write=False)
        if basepoint is not None and basepoint not in index:
            raise ConfigurationError(f"basepoint {basepoint!r} not among the points")
        if window_radius is not None and basepoint is None:
            raise ConfigurationError("window_radius requires a basepoint")
        edge_set = None
        if edge is not None:
            edge_set = frozenset(edge)
            missing = [p for p in edge_set if p not in index]
            if missing:
                raise ConfigurationError(f"edge points not in window: {missing[:3]}")
        self.label = label
        self.points = pts
        self.dmat = mat
        self.basepoint = basepoint
        self.window_radius = window_radius
        self.edge = edge_set
        self._index = index

    def __len__(self) -> int:
        return len(self.points)

    def __contains__(self, p) -> bool:
        return p in self._index

    def __repr__(self) -> str:
        return f"MetricWindow({self.label!r}, {len(self.points)} points)"

    def index(self, p: Point) -> int:
        try:
            return self._index[p]
        except KeyError:
            raise DomainError(f"point {p!r} is not in window {self.label!r}") from None

    def dist(self, p: Point, q: Point) -> int:
        return int(self.dmat[self.index(p), self.index(q)])

    @property
    def is_complete(self) -> bool:
        """True when the window represents the whole space (no truncation)."""
        if self.window_radius is not None:
            return False
        return self.edge is None or len(self.edge) == 0

    def edge_margin(self, p: Point) -> int | None:
        """Largest m for which the ambient m-ball around p is certainly in-window.

        None means unbounded (complete space).
        """
        i = self.index(p)
        if self.window_radius is not None:
            return self.window_radius - int(self.dmat[self.index(self.basepoint), i])
        if self.edge:
            return min(int(self.dmat[i, self.index(e)]) for e in self.edge)
        return None

    def interior(self, margin: int) -> tuple:
        """Points whose ambient margin-ball is certainly inside the window."""
        if margin < 0:
            raise DomainError(f"margin must be >= 0, got {margin}")
        if margin == 0 or self.is_complete:
            return self.points
        if self.window_radius is not None:
            row = self.dmat[self.index(self.basepoint)]
            keep = row <= self.window_radius - margin
            return tuple(p for p, k in zip(self.points, keep) if k)
        edge_idx = [self.index(e) for e in self.edge]
        keep = self.dmat[:, edge_idx].min(axis=1) >= margin
        return tuple(p for p, k in zip(self.points, keep) if k)


# ---------------------------------------------------------------------------
# verdicts and certificates


@dataclass(frozen=True)
class MetricVerdict:
    ok: bool
    kind: str | None = None          # "nonnegativity" | "separation" | "symmetry" | "triangle"
    points: tuple = ()
    message: str = ""


@dataclass(frozen=True)
class BoundedGeometryCertificate:
    radius: int
    max_ball_size: int
    witnessed_on: str                # window label; the window itself is the context


@dataclass(frozen=True)
class CoarseMapCheck:
    source_label: str
    target_label: str
    control_up: dict                 # R -> S table, nondecreasing by construction
    properness_table: dict           # S -> max preimage diameter


@dataclass(frozen=True)
class ClosenessCertificate:
    ok: bool
    bound: int
    worst_point: Point


@dataclass(frozen=True)
class DensityVerdict:
    ok: bool
    radius: int
    uncovered: Point | None = None


def verify_metric(window: MetricWindow) -> MetricVerdict:
    """Check all metric axioms, returning the first violation in scan order.

    Scan order: diagonal, then pairs (i < j), then triples ordered by
    (i, j, k) where k is the intermediate point. Deterministic, so the
    reported witness is reproducible.
    """
    d = window.dmat
    n = len(window.points)
    diag = np.diagonal(d)
    bad = np.nonzero(diag != 0)[0]
    if bad.size:
        p = window.points[int(bad[0])]
        return MetricVerdict(False, "separation", (p,), f"dist({p!r},{p!r}) != 0")
    iu = np.triu_indices(n, k=1)
    vals = d[iu]
    neg = np.nonzero(vals < 0)[0]
    if neg.size:
        i, j = int(iu[0][neg[0]]), int(iu[1][neg[0]])
        p, q = window.points[i], window.points[j]
        return MetricVerdict(False, "nonnegativity", (p, q), f"dist({p!r},{q!r}) < 0")
    asym = np.nonzero(d != d.T)
    if asym[0].size:
        i, j = int(asym[0][0]), int(asym[1][0])
        p, q = window.points[i], window.points[j]
        return MetricVerdict(False, "symmetry", (p, q), "dist(p,q) != dist(q,p)")
    zero = np.nonzero(vals == 0)[0]
    if zero.size:
        i, j = int(iu[0][zero[0]]), int(iu[1][zero[0]])
        p, q = window.points[i], window.points[j]
        return MetricVerdict(
            False, "separation", (p, q), f"distinct points at distance 0"
        )
    # triangle: first violating (i, j, k) in lexicographic order; for each
    # intermediate k the row-major argwhere already gives minimal (i, j)
    best = None
    for k in range(n):
        viol = d > d[:, k : k + 1] + d[k : k + 1, :]
        if viol.any():
            ij = np.argwhere(viol)[0]
            cand = (int(ij[0]), int(ij[1]), k)
            if best is None or cand < best:
                best = cand
    if best is not None:
        i, j, k = best
        p, q, r = window.points[i], window.points[j], window.points[k]
        return MetricVerdict(
            False,
            "triangle",
            (p, q, r),
            f"dist({p!r},{q!r}) > dist({p!r},{r!r}) + dist({r!r},{q!r})",
        )
    return MetricVerdict(True)


def ball(window: MetricWindow, center: Point, radius: int) -> tuple:
    """Closed ball, as a tuple in window point order."""
    if radius < 0:
        raise DomainError(f"ball radius must be >= 0, got {radius}")
    row = window.dmat[window.index(center)]
    return tuple(p for p, d in zip(window.points, row) if d <= radius)


def check_bounded_geometry(window: MetricWindow, radius: int) -> BoundedGeometryCertificate:
    if radius < 0:
        raise DomainError(f"radius must be >= 0, got {radius}")
    counts = (window.dmat <= radius).sum(axis=1)
    return BoundedGeometryCertificate(radius, int(counts.max()), window.label)


def _as_mapping(f, source: MetricWindow) -> dict:
    if callable(f):
        return {p: f(p) for p in source.points}
    return {p: f[p] for p in source.points}


def fit_control_function(
    f,
    source: MetricWindow,
    target: MetricWindow,
    r_max: int,
    s_max: int | None = None,
) -> CoarseMapCheck:
    """Empirical coarse-map data for f: source -> target.

    control_up(R) = max target distance over source pairs at distance <= R,
    for R = 0..r_max; nondecreasing by construction. properness_table(S) =
    max diameter of the preimage of any S-ball, for S = 0..s_max (default:
    control_up(r_max)). Both tables quantify over the windows only.
    """
    fmap = _as_mapping(f, source)
    tgt_idx = np.array([target.index(fmap[p]) for p in source.points])
    ds = source.dmat
    dt = target.dmat[np.ix_(tgt_idx, tgt_idx)]
    control = {}
    for r in range(r_max + 1):
        mask = ds <= r
        control[r] = int(dt[mask].max()) if mask.any() else 0
    if s_max is None:
        s_max = control[r_max]
    prop = {}
    # preimage of the S-ball about each target point, diameter in the source
    dist_to_centers = target.dmat[tgt_idx]          # rows: source pts, cols: targets
    for s in range(s_max + 1):
        worst = 0
        for t in range(len(target.points)):
            sel = np.nonzero(dist_to_centers[:, t] <= s)[0]
            if sel.size >= 2:
                worst = max(worst, int(ds[np.ix_(sel, sel)].max()))
        prop[s] = worst
    return CoarseMapCheck(source.label, target.label, control, prop)


def check_closeness(
    f,
    g,
    source: MetricWindow,
    target: MetricWindow,
    cap: int | None = None,
) -> ClosenessCertificate:
    """Sup of dist(f(p), g(p)) over the source window, with its worst point."""
    fmap = _as_mapping(f, source)
    gmap = _as_mapping(g, source)
    bound = -1
    worst = source.points[0]
    for p in source.points:
        d = target.dist(fmap[p], gmap[p])
        if d > bound:
            bound, worst = d, p
    ok = cap is None or bound <= cap
    return ClosenessCertificate(ok, bound, worst)


def check_r_density(subset, window: MetricWindow, radius: int) -> DensityVerdict:
    """Is every window point within `radius` of the subset?"""
    if radius < 0:
        raise DomainError(f"radius must be >= 0, got {radius}")
    sub = [p for p in window.points if p in set(subset)]
    if not sub:
        return DensityVerdict(False, radius, window.points[0])
    idx = [window.index(p) for p in sub]
    nearest = window.dmat[:, idx].min(axis=1)
    bad = np.nonzero(nearest > radius)[0]
    if bad.size:
        return DensityVerdict(False, radius, window.points[int(bad[0])])
    return DensityVerdict(True, radius)


# ---------------------------------------------------------------------------
# constructors


def integer_window(radius: int, label: str | None = None) -> MetricWindow:
    """The integers in [-radius, radius] with |x - y|, basepoint 0."""
    if radius < 0:
        raise ConfigurationError("radius must be >= 0")
    pts = list(range(-radius, radius + 1))
    arr = np.array(pts, dtype=np.int64)
    dmat = np.abs(arr[:, None] - arr[None, :])
    return MetricWindow(
        label or f"Z-window:{radius}",
        pts,
        dmat,
        basepoint=0,
        window_radius=radius,
    )


def l1_ball_window(radius: int, label: str | None = None) -> MetricWindow:
    """The l1 ball of Z^2 around the origin, with the l1 metric."""
    if radius < 0:
        raise ConfigurationError("radius must be >= 0")
    pts = [
        (x, y)
        for x in range(-radius, radius + 1)
        for y in range(-radius + abs(x), radius - abs(x) + 1)
    ]
    arr = np.array(pts, dtype=np.int64)
    dmat = np.abs(arr[:, None, :] - arr[None, :, :]).sum(axis=2)
    return MetricWindow(
        label or f"Z2-window:{radius}",
        pts,
        dmat,
        basepoint=(0, 0),
        window_radius=radius,
    )


def discrete_window(points: Sequence[Point], label: str = "discrete") -> MetricWindow:
    """Finite set with the discrete metric (complete space, no truncation)."""
    n = len(points)
    dmat = np.ones((n, n), dtype=np.int64) - np.eye(n, dtype=np.int64)
    return MetricWindow(label, points, dmat)


def union_of_lines_window(radius: int, label: str | None = None) -> MetricWindow:
    """Two integer segments [-radius, radius], constant distance gap across.

    Points are (0, n) and (1, n). The cross distance is radius + 1, the
    smallest constant making the triangle inequality hold; the four
    segment endpoints are declared as the truncation edge. Models a
    window of two disjoint lines.
    """
    if radius < 0:
        raise ConfigurationError("radius must be >= 0")
    gap = radius + 1
    pts = [(c, n) for c in (0, 1) for n in range(-radius, radius + 1)]
    m = 2 * radius + 1
    n_pts = 2 * m
    dmat = np.full((n_pts, n_pts), gap, dtype=np.int64)
    line = np.abs(
        np.arange(-radius, radius + 1)[:, None] - np.arange(-radius, radius + 1)[None, :]
    )
    dmat[:m, :m] = line
    dmat[m:, m:] = line
    edge = [(0, -radius), (0, radius), (1, -radius), (1, radius)]
    return MetricWindow(
        label or f"Z-union-window:{radius}",
        pts,
        dmat,
        basepoint=(0, 0),
        edge=edge,
    )


def restrict_window(window: MetricWindow, points: Sequence[Point], label: str | None = None) -> MetricWindow:
    """Induced sub-window on a subset of points.

    Truncation data survives only when it still makes sense on the
    subset (basepoint present, or all edge points present); interiors of
    a restriction are otherwise the caller's business, computed in the
    parent.
    """
    pts = tuple(points)
    idx = [window.index(p) for p in pts]
    sub = window.dmat[np.ix_(idx, idx)]
    base = window.basepoint if window.basepoint in set(pts) else None
    radius = window.window_radius if base is not None else None
    edge = None
    if window.edge is not None and all(e in set(pts) for e in window.edge):
        edge = window.edge
    return MetricWindow(
        label or f"{window.label}|{len(pts)}pts",
        pts,
        sub,
        basepoint=base,
        window_radius=radius,
        edge=edge,
    )


# ---------------------------------------------------------------------------
# JSON serialization: { "label", "points", "dist" } plus optional truncation keys


def window_to_json(window: MetricWindow) -> dict:
    doc = {
        "label": window.label,
        "points": [list(p) if isinstance(p, tuple) else p for p in window.points],
        "dist": window.dmat.tolist(),
    }
    if window.basepoint is not None:
        bp = window.basepoint
        doc["basepoint"] = list(bp) if isinstance(bp, tuple) else bp
    if window.window_radius is not None:
        doc["window_radius"] = window.window_radius
    if window.edge is not None:
        doc["edge"] = sorted(
            (list(p) if isinstance(p, tuple) else p for p in window.edge),
            key=repr,
        )
    return doc


def window_from_json(doc: dict, verify: bool = False) -> MetricWindow:
    """Build a window from its JSON document.

    Structural problems (shape, typing) raise ConfigurationError. With
    verify=True the metric axioms are checked too and a violation also
    raises; commands that want a reported verdict instead call
    verify_metric themselves.
    """
    if not isinstance(doc, dict):
        raise ConfigurationError("window document must be a JSON object")
    unknown = set(doc) - {"label", "points", "dist", "basepoint", "window_radius", "edge"}
    if unknown:
        raise ConfigurationError(f"unknown window keys: {sorted(unknown)}")
    for key in ("label", "points", "dist"):
        if key not in doc:
            raise ConfigurationError(f"window document missing {key!r}")
    points = [_freeze_point(p) for p in doc["points"]]
    dist = doc["dist"]
    if not isinstance(dist, list) or any(
        not isinstance(row, list) or len(row) != len(points) for row in dist
    ) or len(dist) != len(points):
        raise ConfigurationError("dist must be a full square matrix")
    for row in dist:
        for v in row:
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigurationError("distances must be integers")
    window = MetricWindow(
        doc["label"],
        points,
        dist,
        basepoint=_freeze_point(doc.get("basepoint")) if "basepoint" in doc else None,
        window_radius=doc.get("window_radius"),
        edge=[_freeze_point(p) for p in doc["edge"]] if "edge" in doc else None,
    )
    if verify:
        verdict = verify_metric(window)
        if not verdict.ok:
            raise ConfigurationError(
                f"window {window.label!r} violates {verdict.kind}: {verdict.message}"
            )
    return window


def save_window(window: MetricWindow, path) -> None:
    with open(path, "w") as fh:
        json.dump(window_to_json(window), fh, indent=1)
        fh.write("\n")


def load_window(path, verify: bool = False) -> MetricWindow:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read window file {path}: {exc}") from exc
    return window_from_json(doc, verify=verify)
