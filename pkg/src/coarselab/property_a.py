"""Witness families, kernels, and their slow-variation certificates.

A witness family assigns every point x a finite nonempty set A_x of
(point, tag) pairs concentrated within a support bound S of x. The
family certifies regularity when nearby points have almost identical
sets, measured by the symmetric-difference over intersection ratio.
`witness_to_kernel` converts a family into the normalized overlap
kernel u(x, y) = |A_x cap A_y| / sqrt(|A_x| |A_y|), a Gram matrix of
unit vectors, hence positive semidefinite by construction; the PSD
check never takes that on faith.

Exactness policy. Ratios and kernel values are exact rationals
whenever they can be (the overlap kernel value is rational iff
|A_x| |A_y| is a perfect square), and the PSD verdict for any kernel
with an integer congruent Gram runs over the integers via fraction-free
elimination, with the floating eigensolver kept as an independent
second route.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from coarselab.errors import (
    ConfigurationError,
    DomainError,
    InvariantViolation,
    ResourceError,
)
from coarselab.metric import MetricWindow, _freeze_point, ball
from coarselab.util import format_rational, parse_rational

_FLOAT_ZERO_TOL = 1e-12


# ---------------------------------------------------------------------------
# witness families


class WitnessFamily:
    """Per-point finite nonempty sets A_x of (point, tag) pairs."""

    def __init__(self, space: MetricWindow, sets: dict):
        self.space = space
        table = {}
        bound = 0
        for x in space.points:
            if x not in sets:
                raise ConfigurationError(f"witness family missing point {x!r}")
            a_x = frozenset(sets[x])
            if not a_x:
                raise InvariantViolation(f"witness set at {x!r} is empty")
            for y, tag in a_x:
                if not isinstance(tag, int) or tag < 1:
                    raise ConfigurationError(f"witness tag must be a positive int: {tag!r}")
                bound = max(bound, space.dist(x, y))   # also validates membership
            table[x] = a_x
        self.sets = table
        self.support_bound = bound

    def size(self, x) -> int:
        return len(self.sets[x])


def build_ball_witness(space: MetricWindow, radius: int, tags=(1,)) -> WitnessFamily:
    """A_x = B_radius(x) x tags; the balls truncate near the window edge."""
    if not tags:
        raise ConfigurationError("ball witness needs at least one tag")
    sets = {
        x: frozenset((y, t) for y in ball(space, x, radius) for t in tags)
        for x in space.points
    }
    return WitnessFamily(space, sets)


def singleton_witness(space: MetricWindow) -> WitnessFamily:
    return build_ball_witness(space, 0)


def random_witness(space: MetricWindow, rng: random.Random, max_radius: int = 4,
                   max_tag: int = 3) -> WitnessFamily:
    """Seeded random family: nonempty subsets of small balls with small tags."""
    sets = {}
    for x in space.points:
        r = rng.randint(0, max_radius)
        base = ball(space, x, r)
        pool = [(y, t) for y in base for t in range(1, max_tag + 1)]
        k = rng.randint(1, min(len(pool), 2 * max_radius + 2))
        sets[x] = frozenset(rng.sample(pool, k)) | {(x, 1)}
    return WitnessFamily(space, sets)


def _point_key(p) -> str:
    return json.dumps(list(p) if isinstance(p, tuple) else p, separators=(",", ":"))


def witness_to_json(w: WitnessFamily) -> dict:
    return {
        _point_key(x): sorted(
            ([list(y) if isinstance(y, tuple) else y, t] for y, t in w.sets[x]),
            key=repr,
        )
        for x in w.space.points
    }


def witness_from_json(doc: dict, space: MetricWindow) -> WitnessFamily:
    if not isinstance(doc, dict):
        raise ConfigurationError("witness document must be a JSON object")
    sets = {}
    for key, pairs in doc.items():
        try:
            x = _freeze_point(json.loads(key))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"bad witness point key {key!r}") from exc
        sets[x] = frozenset(
            (_freeze_point(y), t) for y, t in (tuple(pair) for pair in pairs)
        )
    return WitnessFamily(space, sets)


def load_witness(path, space: MetricWindow) -> WitnessFamily:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read witness file {path}: {exc}") from exc
    return witness_from_json(doc, space)


# ---------------------------------------------------------------------------
# kernels


class Kernel:
    """Symmetric kernel on a window, evaluated on a stated domain.

    support_width: distances beyond which values are claimed to vanish
    (None when no claim is made). exact: values are rationals computed
    exactly. Subclasses may provide an integer matrix congruent to a
    sampled Gram, unlocking the integer PSD route.
    """

    space: MetricWindow
    domain: tuple
    support_width: int | None
    exact: bool
    kind: str

    def value(self, x, y):
        raise NotImplementedError

    def is_zero(self, x, y) -> bool:
        v = self.value(x, y)
        if isinstance(v, float):
            return abs(v) <= _FLOAT_ZERO_TOL
        return v == 0

    def gram_int_matrix(self, sample) -> list | None:
        """Integer matrix D G D (D positive diagonal) for the sampled Gram."""
        if not self.exact:
            return None
        vals = [[Fraction(self.value(x, y)) for y in sample] for x in sample]
        scale = 1
        for row in vals:
            for v in row:
                scale = scale * v.denominator // math.gcd(scale, v.denominator)
        return [[int(v * scale) for v in row] for row in vals]

    def default_margin(self) -> int:
        return (self.support_width // 2) if self.support_width else 0


class ExplicitKernel(Kernel):
    """Values stored per unordered pair of domain points."""

    kind = "dense"

    def __init__(self, space, values: dict, domain=None, support_width=None, exact=None):
        self.space = space
        self.domain = tuple(domain) if domain is not None else space.points
        table = {}
        for (x, y), v in values.items():
            key = self._key(x, y)
            if key in table and table[key] != v:
                raise ConfigurationError(f"kernel is not symmetric at {x!r},{y!r}")
            table[key] = v
        self._values = table
        self.support_width = support_width
        if exact is None:
            exact = all(
                isinstance(v, (int, Fraction)) and not isinstance(v, bool)
                for v in table.values()
            )
        self.exact = exact

    def _key(self, x, y):
        i, j = self.space.index(x), self.space.index(y)
        return (x, y) if i <= j else (y, x)

    def value(self, x, y):
        key = self._key(x, y)
        if key not in self._values:
            raise DomainError(f"kernel has no value at pair {key!r}")
        return self._values[key]


class WitnessKernel(Kernel):
    """Normalized overlap kernel of a witness family.

    The value |A_x cap A_y| / sqrt(|A_x| |A_y|) is returned as an exact
    Fraction when |A_x| |A_y| is a perfect square and as a float
    otherwise; zero tests and the PSD route use the integer overlap
    counts either way, so no certificate depends on the float.
    """

    kind = "witness"

    def __init__(self, witness: WitnessFamily):
        self.space = witness.space
        self.witness = witness
        self.domain = witness.space.points
        self.support_width = 2 * witness.support_bound
        self.exact = True       # in the sense that the integer Gram route applies

    def overlap(self, x, y) -> int:
        return len(self.witness.sets[x] & self.witness.sets[y])

    def value(self, x, y):
        inter = self.overlap(x, y)
        m, n = self.witness.size(x), self.witness.size(y)
        root = math.isqrt(m * n)
        if root * root == m * n:
            return Fraction(inter, root)
        return inter / math.sqrt(m * n)

    def is_zero(self, x, y) -> bool:
        return self.overlap(x, y) == 0

    def gram_int_matrix(self, sample) -> list:
        # u = D^-1 M D^-1 with D = diag(sqrt |A_x|): PSD(u) iff PSD(M)
        return [[self.overlap(x, y) for y in sample] for x in sample]


class TriangularKernel(Kernel):
    """u(x, y) = max(0, 2N+1 - d) / (2N+1) on integer-like points."""

    kind = "triangular"

    def __init__(self, space: MetricWindow, n: int):
        if n < 0:
            raise ConfigurationError(f"triangular kernel needs N >= 0, got {n}")
        self.space = space
        self.n = n
        self.domain = space.points
        self.support_width = 2 * n
        self.exact = True

    def value(self, x, y):
        d = self.space.dist(x, y)
        return Fraction(max(0, 2 * self.n + 1 - d), 2 * self.n + 1)


class GaussianKernel(Kernel):
    """u = exp(-d^2 / (2 sigma^2)); never exactly zero, so it fails any
    finite support claim it can be tested against."""

    kind = "gaussian"

    def __init__(self, space: MetricWindow, sigma: float):
        if sigma <= 0:
            raise ConfigurationError(f"gaussian kernel needs sigma > 0, got {sigma}")
        self.space = space
        self.sigma = float(sigma)
        self.domain = space.points
        self.support_width = None
        self.exact = False

    def value(self, x, y):
        d = self.space.dist(x, y)
        return math.exp(-(d * d) / (2.0 * self.sigma * self.sigma))


def witness_to_kernel(w: WitnessFamily) -> WitnessKernel:
    return WitnessKernel(w)


def kernel_from_descriptor(space: MetricWindow, desc: str) -> Kernel:
    name, _, arg = desc.strip().partition(":")
    if name == "triangular":
        try:
            return TriangularKernel(space, int(arg))
        except ValueError as exc:
            raise ConfigurationError(f"bad triangular parameter in {desc!r}") from exc
    if name == "gaussian":
        try:
            return GaussianKernel(space, float(arg))
        except ValueError as exc:
            raise ConfigurationError(f"bad gaussian parameter in {desc!r}") from exc
    raise ConfigurationError(f"unknown kernel descriptor {desc!r}")


def kernel_from_file(path, space: MetricWindow) -> Kernel:
    """Dense kernel file: {"points": [...], "values": [[...]]}.

    Values are numbers or "p/q" strings; the matrix must be symmetric
    over the listed points, which must all lie in the space.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read kernel file {path}: {exc}") from exc
    unknown = set(doc) - {"points", "values", "support_width"}
    if unknown:
        raise ConfigurationError(f"unknown kernel file keys: {sorted(unknown)}")
    pts = [_freeze_point(p) for p in doc.get("points", [])]
    rows = doc.get("values")
    if not pts or not isinstance(rows, list) or len(rows) != len(pts):
        raise ConfigurationError("kernel file needs matching points and values")
    values = {}
    for i, x in enumerate(pts):
        if len(rows[i]) != len(pts):
            raise ConfigurationError("kernel value matrix is not square")
        for j, y in enumerate(pts):
            raw = rows[i][j]
            v = parse_rational(raw) if isinstance(raw, (str, int)) else float(raw)
            if (y, x) in values and values[(y, x)] != v:
                raise ConfigurationError(f"kernel file not symmetric at {x!r},{y!r}")
            values[(x, y)] = v
    return ExplicitKernel(space, values, domain=pts,
                          support_width=doc.get("support_width"))


# ---------------------------------------------------------------------------
# verdicts


@dataclass(frozen=True)
class WitnessVerdict:
    ok: bool
    radius: int
    eps: Fraction
    worst_ratio: object            # Fraction, or math.inf for empty intersections
    worst_pair: tuple | None
    checked_pairs: int
    margin: int


@dataclass(frozen=True)
class VariationVerdict:
    ok: bool
    radius: int
    eps: Fraction
    worst: object                  # max |u - 1|, Fraction when exact
    worst_pair: tuple | None
    checked_pairs: int
    margin: int


@dataclass(frozen=True)
class PsdReport:
    ok: bool
    lambda_min: float              # floating eigensolver route
    exact_psd: bool | None         # integer elimination route, when available
    routes_agree: bool | None
    method: str
    sample_size: int
    tol: float


@dataclass(frozen=True)
class SupportVerdict:
    ok: bool
    bound: int
    worst_pair: tuple | None
    worst_value: object
    checked_pairs: int


# ---------------------------------------------------------------------------
# checks


def _interior_pairs(space: MetricWindow, domain, margin: int, radius: int):
    """Unordered in-domain interior pairs (x, y) with d <= radius, scan order."""
    pts = [p for p in space.interior(margin) if p in set(domain)]
    idx = [space.index(p) for p in pts]
    sub = space.dmat[np.ix_(idx, idx)]
    for i in range(len(pts)):
        for j in np.nonzero(sub[i, i:] <= radius)[0]:
            yield pts[i], pts[i + int(j)], int(sub[i, i + int(j)])


def check_witness(w: WitnessFamily, radius: int, eps, margin: int | None = None) -> WitnessVerdict:
    """Symmetric-difference/intersection ratio below eps on close pairs.

    Pairs at distance <= radius with both points in the interior (margin
    defaults to the family's support bound, so truncated sets near the
    edge are never blamed). Empty intersection counts as an infinite
    ratio and fails immediately.
    """
    eps = Fraction(eps)
    if eps <= 0:
        raise DomainError("eps must be positive")
    if margin is None:
        margin = w.support_bound
    worst, worst_pair, checked = Fraction(0), None, 0
    for x, y, _d in _interior_pairs(w.space, w.space.points, margin, radius):
        checked += 1
        inter = len(w.sets[x] & w.sets[y])
        sym = len(w.sets[x] ^ w.sets[y])
        if inter == 0:
            return WitnessVerdict(False, radius, eps, math.inf, (x, y), checked, margin)
        ratio = Fraction(sym, inter)
        if ratio > worst:
            worst, worst_pair = ratio, (x, y)
    return WitnessVerdict(worst < eps, radius, eps, worst, worst_pair, checked, margin)


def check_variation(u: Kernel, radius: int, eps, margin: int | None = None) -> VariationVerdict:
    """|u(x, y) - 1| < eps for interior pairs at distance <= radius."""
    eps = Fraction(eps)
    if eps <= 0:
        raise DomainError("eps must be positive")
    if margin is None:
        margin = u.default_margin()
    worst, worst_pair, checked = Fraction(0), None, 0
    for x, y, _d in _interior_pairs(u.space, u.domain, margin, radius):
        checked += 1
        v = u.value(x, y)
        dev = abs(1 - v)
        if dev > worst:
            worst, worst_pair = dev, (x, y)
    return VariationVerdict(worst < eps, radius, eps, worst, worst_pair, checked, margin)


def psd_int_bareiss(mat) -> bool:
    """Fraction-free symmetric elimination over the integers.

    PSD iff every pivot stays nonnegative and any zero pivot has an
    all-zero residual row. Divisions are exact by the minor identity;
    a nonzero remainder would mean corrupted input, not a verdict.
    """
    n = len(mat)
    a = [list(map(int, row)) for row in mat]
    prev = 1
    for k in range(n):
        piv = a[k][k]
        if piv < 0:
            return False
        if piv == 0:
            if any(a[k][j] != 0 for j in range(k + 1, n)):
                return False
            continue
        for i in range(k + 1, n):
            row_i, row_k = a[i], a[k]
            aik = row_i[k]
            for j in range(k + 1, n):
                num = piv * row_i[j] - aik * row_k[j]
                q, r = divmod(num, prev)
                if r:
                    raise InvariantViolation("inexact division in integer elimination")
                row_i[j] = q
        prev = piv
    return True


def check_psd(
    u: Kernel,
    sample,
    tol: float = 1e-9,
    sample_cap: int = 1000,
) -> PsdReport:
    """Minimum eigenvalue of the sampled Gram matrix, two routes.

    The integer elimination route decides exactly whenever the kernel
    offers a congruent integer Gram; the floating eigensolver always
    runs and its lambda_min is reported. The verdict is the exact
    route's when available, else lambda_min >= -tol.
    """
    sample = tuple(sample)
    if not sample:
        raise DomainError("PSD check needs a nonempty sample")
    if len(sample) > sample_cap:
        raise ResourceError(f"PSD sample of {len(sample)} exceeds cap {sample_cap}")
    gram = np.array(
        [[float(u.value(x, y)) for y in sample] for x in sample], dtype=float
    )
    lam = float(np.linalg.eigvalsh(gram)[0])
    int_mat = u.gram_int_matrix(sample)
    if int_mat is not None:
        exact = psd_int_bareiss(int_mat)
        agree = exact == (lam >= -tol)
        method = "integer-bareiss + eigensolver"
        return PsdReport(exact, lam, exact, agree, method, len(sample), tol)
    return PsdReport(lam >= -tol, lam, None, None, "eigensolver", len(sample), tol)


def check_support(u: Kernel, bound: int, domain=None) -> SupportVerdict:
    """u must vanish on all domain pairs at distance > bound.

    Exact zero for exact kernels, |u| <= 1e-12 for floating ones; the
    worst offending pair is reported.
    """
    if bound < 0:
        raise DomainError("support bound must be >= 0")
    pts = tuple(domain) if domain is not None else u.domain
    space = u.space
    idx = [space.index(p) for p in pts]
    sub = space.dmat[np.ix_(idx, idx)]
    worst_pair, worst_value, checked = None, 0, 0
    ok = True
    for i in range(len(pts)):
        for j in np.nonzero(sub[i, i + 1:] > bound)[0]:
            y = pts[i + 1 + int(j)]
            checked += 1
            if not u.is_zero(pts[i], y):
                ok = False
                v = u.value(pts[i], y)
                if abs(v) > abs(worst_value):
                    worst_pair, worst_value = (pts[i], y), v
    return SupportVerdict(ok, bound, worst_pair, worst_value, checked)


# ---------------------------------------------------------------------------
# the schedule report


@dataclass(frozen=True)
class ScheduleEntry:
    radius: int
    eps: Fraction
    satisfied: bool
    parameter: int | None          # ladder N when scanning, else the input's bound
    worst: object
    detail: str


@dataclass(frozen=True)
class PropertyAReport:
    mode: str                      # "ladder" | "witness" | "kernel"
    ok: bool
    entries: tuple
    psd: PsdReport | None
    support: SupportVerdict | None
    note: str


def _ladder_values(space: MetricWindow, explicit=None):
    if explicit is not None:
        return tuple(explicit)
    margins = [space.edge_margin(p) for p in space.points]
    top = int(space.dmat.max()) if any(m is None for m in margins) else max(margins)
    return tuple(range(1, max(2, top // 2 + 1), 5))


def property_a_report(
    space: MetricWindow,
    schedule,
    witness: WitnessFamily | None = None,
    kernel: Kernel | None = None,
    ladder=None,
    psd_sample_cap: int = 301,
    tol: float = 1e-9,
) -> PropertyAReport:
    """Drive the battery over an (R, eps) schedule.

    With no witness or kernel supplied, scan the ball-family ladder
    N = 1, 6, 11, ... for the smallest N whose overlap kernel passes
    the variation check at each (R, eps); with one supplied, test it as
    given. Either way one PSD and one support verdict accompany the
    table. All window-scale: passing never certifies the infinite
    statement, and the note says so.
    """
    if witness is not None and kernel is not None:
        raise ConfigurationError("give a witness or a kernel, not both")
    if not schedule:
        raise ConfigurationError("schedule must be nonempty")
    schedule = [(int(r), Fraction(e)) for r, e in schedule]
    note = "certified at window scale only ({} points)".format(len(space.points))
    entries = []
    if witness is None and kernel is None:
        steps = _ladder_values(space, ladder)
        kernels = {}
        for r, eps in schedule:
            found = None
            last_worst = None
            for n in steps:
                if n not in kernels:
                    kernels[n] = witness_to_kernel(build_ball_witness(space, n))
                verdict = check_variation(kernels[n], r, eps)
                last_worst = verdict.worst
                if verdict.ok:
                    found = (n, verdict.worst)
                    break
            if found:
                entries.append(ScheduleEntry(
                    r, eps, True, found[0], found[1],
                    f"ball witness N={found[0]} meets ({r}, {eps})",
                ))
            else:
                entries.append(ScheduleEntry(
                    r, eps, False, None, last_worst,
                    "not certified at this scale: ladder exhausted",
                ))
        chosen = [e.parameter for e in entries if e.satisfied]
        psd = support = None
        if chosen:
            n = max(chosen)
            probe = kernels[n]
            sample = _psd_sample(space, probe, psd_sample_cap)
            psd = check_psd(probe, sample, tol=tol)
            support = check_support(probe, 2 * n)
        ok = all(e.satisfied for e in entries) and (psd is None or psd.ok) \
            and (support is None or support.ok)
        return PropertyAReport("ladder", ok, tuple(entries), psd, support, note)
    if witness is not None:
        u = witness_to_kernel(witness)
        for r, eps in schedule:
            v = check_witness(witness, r, eps)
            worst = v.worst_ratio
            entries.append(ScheduleEntry(
                r, eps, v.ok, witness.support_bound, worst,
                "witness ratio check"
                + ("" if v.ok else f" fails at pair {v.worst_pair!r}"),
            ))
        sample = _psd_sample(space, u, psd_sample_cap)
        psd = check_psd(u, sample, tol=tol)
        support = check_support(u, 2 * witness.support_bound)
        ok = all(e.satisfied for e in entries) and psd.ok and support.ok
        return PropertyAReport("witness", ok, tuple(entries), psd, support, note)
    for r, eps in schedule:
        v = check_variation(kernel, r, eps)
        entries.append(ScheduleEntry(
            r, eps, v.ok, kernel.support_width, v.worst,
            "kernel variation check"
            + ("" if v.ok else f" fails at pair {v.worst_pair!r}"),
        ))
    sample = _psd_sample(space, kernel, psd_sample_cap)
    psd = check_psd(kernel, sample, tol=tol)
    support = None
    if kernel.support_width is not None:
        support = check_support(kernel, kernel.support_width)
    ok = all(e.satisfied for e in entries) and psd.ok and (support is None or support.ok)
    return PropertyAReport("kernel", ok, tuple(entries), psd, support, note)


def _psd_sample(space: MetricWindow, u: Kernel, cap: int):
    pts = [p for p in u.domain]
    if len(pts) <= cap:
        return tuple(pts)
    step = (len(pts) + cap - 1) // cap
    return tuple(pts[::step])


def kernel_values_csv(u: Kernel, domain=None) -> str:
    """x,y,distance,value rows over ordered domain pairs; rationals as p/q."""
    pts = tuple(domain) if domain is not None else u.domain
    out = ["x,y,distance,value"]
    for x in pts:
        for y in pts:
            v = u.value(x, y)
            out.append(
                f"{_csv_point(x)},{_csv_point(y)},{u.space.dist(x, y)},"
                f"{format_rational(v) if isinstance(v, (int, Fraction)) else repr(v)}"
            )
    return "\n".join(out) + "\n"


def _csv_point(p) -> str:
    if isinstance(p, tuple):
        return '"' + ",".join(str(c) for c in p) + '"'
    return str(p)
