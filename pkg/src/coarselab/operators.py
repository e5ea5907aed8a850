"""Sparse finite-propagation operators over a metric window.

Entries are kept exact (Fraction or int) whenever the inputs are exact;
floating point enters only inside norm and eigenvalue computations, and
every norm result records the method that produced it. The three
operator-shaped objects here:

* BandedOperator: a square sparse matrix indexed by window points, with
  its propagation (largest distance carrying a nonzero entry) cached.
* PartialTranslation: a partially defined injective displacement-bounded
  map, realized as a 0/1 partial isometry by `translation_operator`.
* RectangularIsometryBlock: a 0/1 block whose rows are indexed by group
  elements and columns by orbit points, each column hitting exactly one
  row. These are the isometries that factor orbit translations, and
  `verify_s_identity` checks that factorization against the partial
  action computed independently by the actions module.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

import numpy as np

from coarselab.errors import (
    ConfigurationError,
    DomainError,
    InvariantViolation,
    ResourceError,
)
from coarselab.metric import MetricWindow
from coarselab.util import format_rational, parse_rational


def _conj(v):
    return v.conjugate() if isinstance(v, complex) else v


def _is_exact(v) -> bool:
    return isinstance(v, (int, Fraction)) and not isinstance(v, bool)


class BandedOperator:
    """Immutable sparse operator over a window; no explicit zeros stored."""

    def __init__(self, window: MetricWindow, entries: Mapping):
        table = {}
        prop = 0
        for (r, c), v in entries.items():
            if v == 0:
                continue
            d = window.dist(r, c)          # also validates membership
            if d > prop:
                prop = d
            table[(r, c)] = v
        self.window = window
        self._entries = table
        self.propagation = prop

    @property
    def entries(self):
        return dict(self._entries)

    def items(self):
        return self._entries.items()

    def entry(self, r, c):
        return self._entries.get((r, c), 0)

    def __len__(self):
        return len(self._entries)

    def is_exact(self) -> bool:
        return all(_is_exact(v) for v in self._entries.values())

    def __eq__(self, other):
        if not isinstance(other, BandedOperator):
            return NotImplemented
        return self.window.points == other.window.points and self._entries == other._entries

    def __repr__(self):
        return (
            f"BandedOperator({self.window.label!r}, {len(self._entries)} entries, "
            f"propagation {self.propagation})"
        )


def _same_window(a: BandedOperator, b: BandedOperator) -> MetricWindow:
    if a.window is not b.window and a.window.points != b.window.points:
        raise DomainError(
            f"window mismatch: {a.window.label!r} vs {b.window.label!r}"
        )
    return a.window


def apply(op: BandedOperator, vec: Mapping) -> dict:
    """Matrix-vector product; the vector is a sparse {point: value} map."""
    for p in vec:
        if p not in op.window:
            raise DomainError(f"vector index {p!r} is not in window {op.window.label!r}")
    out = {}
    for (r, c), v in op.items():
        x = vec.get(c)
        if x:
            out[r] = out.get(r, 0) + v * x
    return {r: v for r, v in out.items() if v != 0}


def compose(a: BandedOperator, b: BandedOperator) -> BandedOperator:
    window = _same_window(a, b)
    b_rows = {}
    for (r, c), v in b.items():
        b_rows.setdefault(r, []).append((c, v))
    out = {}
    for (r, k), va in a.items():
        for c, vb in b_rows.get(k, ()):
            key = (r, c)
            out[key] = out.get(key, 0) + va * vb
    return BandedOperator(window, out)


def adjoint(a: BandedOperator) -> BandedOperator:
    return BandedOperator(a.window, {(c, r): _conj(v) for (r, c), v in a.items()})


def add(a: BandedOperator, b: BandedOperator) -> BandedOperator:
    window = _same_window(a, b)
    out = dict(a.items())
    for key, v in b.items():
        out[key] = out.get(key, 0) + v
    return BandedOperator(window, out)


def scale(c, a: BandedOperator) -> BandedOperator:
    return BandedOperator(a.window, {key: c * v for key, v in a.items()})


def subtract(a: BandedOperator, b: BandedOperator) -> BandedOperator:
    return add(a, scale(Fraction(-1), b))


def identity_operator(window: MetricWindow, points=None) -> BandedOperator:
    pts = window.points if points is None else points
    return BandedOperator(window, {(p, p): Fraction(1) for p in pts})


def compress(op: BandedOperator, points) -> BandedOperator:
    """Restrict rows and columns to a point subset (same window indexing)."""
    keep = set(points)
    return BandedOperator(
        op.window, {k: v for k, v in op.items() if k[0] in keep and k[1] in keep}
    )


def to_dense(op: BandedOperator, exact: bool = False) -> np.ndarray:
    """Dense matrix in window point order; exact=True keeps Fractions."""
    n = len(op.window.points)
    if exact:
        mat = np.zeros((n, n), dtype=object)
        mat[:] = Fraction(0)
    else:
        anycomplex = any(isinstance(v, complex) for v in op._entries.values())
        mat = np.zeros((n, n), dtype=complex if anycomplex else float)
    for (r, c), v in op.items():
        mat[op.window.index(r), op.window.index(c)] = v if exact else (
            complex(v) if isinstance(v, complex) else float(v)
        )
    return mat


# ---------------------------------------------------------------------------
# partial translations


@dataclass(frozen=True)
class PartialTranslation:
    """Pairs (target x, source y), both projections injective."""

    pairs: tuple
    displacement_bound: int

    def __post_init__(self):
        targets = [x for x, _ in self.pairs]
        sources = [y for _, y in self.pairs]
        if len(set(targets)) != len(targets):
            raise InvariantViolation("partial translation: duplicate target point")
        if len(set(sources)) != len(sources):
            raise InvariantViolation("partial translation: duplicate source point")


def partial_translation(window: MetricWindow, pairs, bound: int | None = None) -> PartialTranslation:
    """Validate pairs against a window and compute / check the bound."""
    worst = 0
    for x, y in pairs:
        worst = max(worst, window.dist(x, y))
    if bound is None:
        bound = worst
    elif worst > bound:
        raise InvariantViolation(
            f"pair moved distance {worst}, above the declared bound {bound}"
        )
    return PartialTranslation(tuple(pairs), bound)


def translation_operator(t: PartialTranslation, window: MetricWindow) -> BandedOperator:
    """The 0/1 operator sending delta_y to delta_x per pair (x, y)."""
    return BandedOperator(window, {(x, y): Fraction(1) for x, y in t.pairs})


def from_partial_action(pa, window: MetricWindow) -> PartialTranslation:
    """Adapt an actions-module PartialActionElement; its pairs are (y, g.y)."""
    return partial_translation(window, tuple((x, y) for y, x in pa.pairs))


# ---------------------------------------------------------------------------
# the s_y isometry blocks


@dataclass(frozen=True)
class RectangularIsometryBlock:
    """0/1 block: rows are group elements, columns orbit points.

    Column y' has its single 1 in row phi(y') phi(y)^-1; injectivity of
    that row assignment is exactly column orthonormality.
    """

    base_point: object
    source_window: MetricWindow    # orbit window indexing the columns
    columns: dict                  # y' -> group element (the row of the 1)
    ball_radius: int

    def __post_init__(self):
        rows = list(self.columns.values())
        if len(set(rows)) != len(rows):
            raise InvariantViolation(
                "isometry block: two columns share a row; columns not orthonormal"
            )


def build_s(section, y, ball_radius: int | None = None, columns=None) -> RectangularIsometryBlock:
    """The block s_y with s_y(delta_y') = delta_g, g = phi(y') phi(y)^-1."""
    group = section.scenario.group
    if y not in section.phi:
        raise DomainError(f"{y!r} is not an orbit point")
    inv_y = group.inv(section.phi[y])
    cols = section.orbit if columns is None else tuple(columns)
    table = {}
    worst = 0
    for yp in cols:
        g = group.mul(section.phi[yp], inv_y)
        wl = group.word_length(g)
        worst = max(worst, wl)
        if ball_radius is not None and wl > ball_radius:
            raise ResourceError(
                f"s-block at {y!r}: needs group ball radius {wl}, given {ball_radius}"
            )
        table[yp] = g
    return RectangularIsometryBlock(
        y, section.orbit_window(), table, ball_radius if ball_radius is not None else worst
    )


def block_adjoint_compose(
    sx: RectangularIsometryBlock, sy: RectangularIsometryBlock
) -> BandedOperator:
    """compose(adjoint(s_x), s_y) as a sparse operator on the orbit window.

    Entry (y', y'') = sum over group rows g of s_x[g, y'] s_y[g, y''];
    with one 1 per column this is [row of y' in s_x == row of y'' in s_y].
    """
    if sx.source_window.points != sy.source_window.points:
        raise DomainError("s-blocks over different orbit windows")
    x_rows = {g: yp for yp, g in sx.columns.items()}
    out = {}
    for ypp, g in sy.columns.items():
        yp = x_rows.get(g)
        if yp is not None:
            out[(yp, ypp)] = Fraction(1)
    return BandedOperator(sx.source_window, out)


@dataclass(frozen=True)
class SIdentityVerdict:
    ok: bool
    x: object
    y: object
    compared_columns: int
    mismatch: tuple = ()           # (y', y'') witnessing the first difference


def verify_s_identity(
    section,
    x,
    y,
    margin: int = 0,
    s_cache: dict | None = None,
) -> SIdentityVerdict:
    """Exact equality of s_x* s_y with the partial action of phi(x)^-1 phi(y).

    Both sides are computed by independent routes (block composition vs
    the actions module's partial action turned into a 0/1 operator) and
    compared entry-exactly on columns in the space interior at the
    given margin.
    """
    from coarselab.actions import partial_action  # local: avoid import cycle

    group = section.scenario.group
    space = section.scenario.space
    interior = set(space.interior(margin)) & set(section.orbit)
    if not interior:
        raise ResourceError(f"s-identity: interior at margin {margin} is empty")
    if s_cache is None:
        s_cache = {}
    for p in (x, y):
        if p not in s_cache:
            s_cache[p] = build_s(section, p)
    lhs = block_adjoint_compose(s_cache[x], s_cache[y])
    g = group.mul(group.inv(section.phi[x]), section.phi[y])
    rhs = translation_operator(
        from_partial_action(partial_action(section, g), section.orbit_window()),
        section.orbit_window(),
    )
    lhs_entries = {k: v for k, v in lhs.items() if k[0] in interior and k[1] in interior}
    rhs_entries = {k: v for k, v in rhs.items() if k[0] in interior and k[1] in interior}
    if lhs_entries == rhs_entries:
        return SIdentityVerdict(True, x, y, len(interior))
    diff = set(lhs_entries) ^ set(rhs_entries)
    witness = min(diff, key=lambda k: (space.index(k[0]), space.index(k[1])))
    return SIdentityVerdict(False, x, y, len(interior), witness)


# ---------------------------------------------------------------------------
# extension and norms


def extend_to_X(op: BandedOperator, full_window: MetricWindow) -> BandedOperator:
    """Zero-extend an orbit-window operator to a larger window."""
    for p in op.window.points:
        if p not in full_window:
            raise DomainError(
                f"point {p!r} of {op.window.label!r} missing from {full_window.label!r}"
            )
    return BandedOperator(full_window, dict(op.items()))


@dataclass(frozen=True)
class NormResult:
    value: object                  # Fraction for exact paths, float otherwise
    method: str
    tol: float

    def __float__(self):
        return float(self.value)


def operator_norm(
    op: BandedOperator,
    dense_cap: int = 2000,
    hard_cap: int = 50_000,
    power_iters: int = 300,
) -> NormResult:
    """Largest singular value, with the computation method recorded.

    Monomial operators (at most one nonzero per row and per column)
    have norm max |entry|, which is exact; below dense_cap a dense SVD
    runs, floored by max |entry| since that is always a lower bound;
    above it a seeded power iteration on A*A.
    """
    if not op._entries:
        return NormResult(Fraction(0), "exact-zero", 0.0)
    rows = [r for r, _ in op._entries]
    cols = [c for _, c in op._entries]
    if len(set(rows)) == len(rows) and len(set(cols)) == len(cols):
        best = max(op._entries.values(), key=lambda v: abs(v))
        val = abs(best)
        if _is_exact(val):
            return NormResult(Fraction(val), "exact-monomial", 0.0)
        return NormResult(abs(complex(val)) if isinstance(val, complex) else float(val),
                          "monomial-max-entry", 0.0)
    n = len(op.window.points)
    max_entry = max(abs(complex(v)) if isinstance(v, complex) else abs(float(v))
                    for v in op._entries.values())
    if n > hard_cap:
        raise ResourceError(f"operator_norm: window has {n} points, hard cap {hard_cap}")
    if n <= dense_cap:
        sigma = float(np.linalg.norm(to_dense(op), 2))
        return NormResult(max(sigma, float(max_entry)), "dense-svd", 1e-9)
    rng = np.random.default_rng(0)
    mat = to_dense(op)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    for _ in range(power_iters):
        w = mat.T.conj() @ (mat @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        v = w / nw
    sigma = float(np.sqrt(np.linalg.norm(mat.T.conj() @ (mat @ v))))
    return NormResult(max(sigma, float(max_entry)), "power-iteration", 1e-6)


# ---------------------------------------------------------------------------
# serialization


def _point_doc(p):
    return list(p) if isinstance(p, tuple) else p


def to_triplets(op: BandedOperator) -> list:
    """[[row point, col point, value]] with exact values as "p/q" strings."""
    trips = []
    for (r, c), v in sorted(
        op.items(), key=lambda kv: (op.window.index(kv[0][0]), op.window.index(kv[0][1]))
    ):
        if _is_exact(v):
            val = format_rational(Fraction(v))
        elif isinstance(v, complex):
            val = [v.real, v.imag]
        else:
            val = float(v)
        trips.append([_point_doc(r), _point_doc(c), val])
    return trips


def from_triplets(window: MetricWindow, trips) -> BandedOperator:
    from coarselab.metric import _freeze_point

    entries = {}
    for item in trips:
        if len(item) != 3:
            raise ConfigurationError(f"triplet must have 3 fields, got {item!r}")
        r, c, v = item
        key = (_freeze_point(r), _freeze_point(c))
        if isinstance(v, str):
            value = parse_rational(v)
        elif isinstance(v, list) and len(v) == 2:
            value = complex(v[0], v[1])
        elif isinstance(v, (int, float)):
            value = Fraction(v) if isinstance(v, int) else float(v)
        else:
            raise ConfigurationError(f"bad triplet value {v!r}")
        if key in entries:
            raise ConfigurationError(f"duplicate triplet for {key!r}")
        entries[key] = value
    return BandedOperator(window, entries)


def to_matrix_market(op: BandedOperator) -> str:
    """Matrix Market coordinate format, 1-based window-order indices."""
    if any(isinstance(v, complex) for v in op._entries.values()):
        raise ConfigurationError("matrix-market export supports real entries only")
    n = len(op.window.points)
    lines = [
        "%%MatrixMarket matrix coordinate real general",
        f"% window: {op.window.label}",
        f"{n} {n} {len(op._entries)}",
    ]
    for (r, c), v in sorted(
        op.items(), key=lambda kv: (op.window.index(kv[0][0]), op.window.index(kv[0][1]))
    ):
        lines.append(f"{op.window.index(r) + 1} {op.window.index(c) + 1} {float(v)!r}")
    return "\n".join(lines) + "\n"
