"""Finitely generated group models with exact arithmetic and word metrics.

Five built-in families: Z^d, free groups, the infinite dihedral group,
finite cyclic groups, and finite symmetric groups. Each family fixes a
canonical normal form (hashable tuples or ints), a symmetric generating
set, and a closed-form word length. The closed form is never trusted
blindly: `bfs_ball` re-derives balls using only multiplication and the
generator list, and the test suite requires exact agreement.

Word metric convention: d(g, h) = word_length(g^-1 h), which is left
invariant by construction. The generating set is recorded in every
window label since the metric depends on it.
"""

from __future__ import annotations

from itertools import permutations
from typing import Hashable, Sequence

import numpy as np

from coarselab.errors import ConfigurationError, DomainError, ResourceError
from coarselab.metric import MetricWindow

Element = Hashable

_FREE_LETTERS = "abcdefghijklmnopqrstuvwxyz"


class GroupModel:
    """Base class; subclasses fill in the family-specific pieces."""

    name: str
    generators: tuple          # of (label, element) pairs, symmetric as a set

    def identity(self) -> Element:
        raise NotImplementedError

    def mul(self, g: Element, h: Element) -> Element:
        raise NotImplementedError

    def inv(self, g: Element) -> Element:
        raise NotImplementedError

    def validate(self, g: Element) -> None:
        """Raise DomainError unless g is a well-formed normal form."""
        raise NotImplementedError

    def word_length(self, g: Element) -> int:
        raise NotImplementedError

    def sort_key(self, g: Element):
        """(word_length, normal form): the deterministic element order."""
        raise NotImplementedError

    def ball_size(self, radius: int) -> int:
        """Exact cardinality of the closed ball, computed cheaply."""
        raise NotImplementedError

    def enumerate_ball_elements(self, radius: int):
        """Yield all elements of word length <= radius, any order."""
        raise NotImplementedError

    def parse(self, text: str) -> Element:
        raise NotImplementedError

    def format(self, g: Element) -> str:
        raise NotImplementedError

    def generator_word(self, g: Element) -> tuple:
        """A generator sequence whose left-to-right product is g."""
        raise NotImplementedError

    # shared machinery ------------------------------------------------

    def enumerate_ball(self, radius: int, cap: int = 200_000) -> tuple:
        """Closed ball in sorted normal-form order, via the closed form."""
        if radius < 0:
            raise DomainError(f"ball radius must be >= 0, got {radius}")
        predicted = self.ball_size(radius)
        if predicted > cap:
            raise ResourceError(
                f"{self.name}: ball of radius {radius} has {predicted} elements, "
                f"cap is {cap}"
            )
        elems = sorted(self.enumerate_ball_elements(radius), key=self.sort_key)
        return tuple(elems)

    def dist(self, g: Element, h: Element) -> int:
        return self.word_length(self.mul(self.inv(g), h))


def bfs_ball(group: GroupModel, radius: int, cap: int = 200_000) -> tuple:
    """Oracle ball enumeration using only `mul` and the generator list.

    Exists to cross-check the per-family closed forms; deliberately
    ignores ball_size/word_length.
    """
    if radius < 0:
        raise DomainError(f"ball radius must be >= 0, got {radius}")
    e = group.identity()
    dist = {e: 0}
    frontier = [e]
    for depth in range(1, radius + 1):
        nxt = []
        for g in frontier:
            for _, s in group.generators:
                h = group.mul(g, s)
                if h not in dist:
                    dist[h] = depth
                    nxt.append(h)
                    if len(dist) > cap:
                        raise ResourceError(
                            f"{group.name}: BFS ball exceeded cap {cap} at depth {depth}"
                        )
        frontier = nxt
    return tuple(sorted(dist, key=group.sort_key))


def group_window(group: GroupModel, radius: int, cap: int = 3000) -> MetricWindow:
    """The ball B_radius(e) as a metric window under d(g,h) = |g^-1 h|."""
    elems = group.enumerate_ball(radius, cap=cap)
    n = len(elems)
    dmat = np.zeros((n, n), dtype=np.int64)
    inv = [group.inv(g) for g in elems]
    for i in range(n):
        gi = inv[i]
        row = dmat[i]
        for j in range(i + 1, n):
            row[j] = group.word_length(group.mul(gi, elems[j]))
    dmat = dmat + dmat.T
    gens = ",".join(label for label, _ in group.generators)
    return MetricWindow(
        f"{group.name}-ball:{radius} (gens {gens})",
        elems,
        dmat,
        basepoint=group.identity(),
        window_radius=radius,
    )


def word_length_of(group: GroupModel, g: Element) -> int:
    group.validate(g)
    return group.word_length(g)


# ---------------------------------------------------------------------------
# Z^d


class FreeAbelian(GroupModel):
    """Z^d with generators ±e_i and the l1 word length."""

    def __init__(self, d: int):
        if d < 1:
            raise ConfigurationError(f"Zd rank must be >= 1, got {d}")
        self.d = d
        self.name = f"Zd:{d}"
        gens = []
        for i in range(d):
            e_i = tuple(1 if j == i else 0 for j in range(d))
            e_i_neg = tuple(-1 if j == i else 0 for j in range(d))
            gens.append((f"+e{i + 1}", e_i))
            gens.append((f"-e{i + 1}", e_i_neg))
        self.generators = tuple(gens)

    def identity(self):
        return (0,) * self.d

    def mul(self, g, h):
        return tuple(a + b for a, b in zip(g, h))

    def inv(self, g):
        return tuple(-a for a in g)

    def validate(self, g):
        if (
            not isinstance(g, tuple)
            or len(g) != self.d
            or any(not isinstance(a, int) for a in g)
        ):
            raise DomainError(f"{self.name}: malformed element {g!r}")

    def word_length(self, g):
        return sum(abs(a) for a in g)

    def sort_key(self, g):
        return (self.word_length(g), g)

    def ball_size(self, radius):
        # counts[r] = number of lattice points with l1 norm exactly r
        counts = [1] + [0] * radius
        for _ in range(self.d):
            new = [0] * (radius + 1)
            for r, c in enumerate(counts):
                if c == 0:
                    continue
                for a in range(-(radius - r), radius - r + 1):
                    new[r + abs(a)] += c
            counts = new
        return sum(counts)

    def enumerate_ball_elements(self, radius):
        def rec(prefix, budget, k):
            if k == self.d:
                yield tuple(prefix)
                return
            for a in range(-budget, budget + 1):
                prefix.append(a)
                yield from rec(prefix, budget - abs(a), k + 1)
                prefix.pop()

        yield from rec([], radius, 0)

    def parse(self, text):
        s = text.strip()
        if s.startswith("(") and s.endswith(")"):
            s = s[1:-1]
        parts = [p.strip() for p in s.split(",")] if s else []
        if self.d == 1 and len(parts) == 1:
            pass
        if len(parts) != self.d:
            raise ConfigurationError(
                f"{self.name}: expected {self.d} coordinates in {text!r}"
            )
        try:
            return tuple(int(p) for p in parts)
        except ValueError as exc:
            raise ConfigurationError(f"{self.name}: bad element {text!r}") from exc

    def format(self, g):
        return "(" + ",".join(str(a) for a in g) + ")"

    def generator_word(self, g):
        word = []
        for i, a in enumerate(g):
            step = self.generators[2 * i][1] if a > 0 else self.generators[2 * i + 1][1]
            word.extend([step] * abs(a))
        return tuple(word)


# ---------------------------------------------------------------------------
# free groups


class FreeGroup(GroupModel):
    """F_k on letters a, b, c, ...; elements are reduced words.

    A word is a tuple of nonzero ints: letter i in 1..k, its inverse -i.
    """

    def __init__(self, k: int):
        if not 1 <= k <= 26:
            raise ConfigurationError(f"Free rank must be in 1..26, got {k}")
        self.k = k
        self.name = f"Free:{k}"
        gens = []
        for i in range(1, k + 1):
            letter = _FREE_LETTERS[i - 1]
            gens.append((letter, (i,)))
            gens.append((f"{letter}^-1", (-i,)))
        self.generators = tuple(gens)

    def identity(self):
        return ()

    def mul(self, g, h):
        out = list(g)
        for c in h:
            if out and out[-1] == -c:
                out.pop()
            else:
                out.append(c)
        return tuple(out)

    def inv(self, g):
        return tuple(-c for c in reversed(g))

    def validate(self, g):
        if not isinstance(g, tuple):
            raise DomainError(f"{self.name}: malformed element {g!r}")
        for c in g:
            if not isinstance(c, int) or c == 0 or abs(c) > self.k:
                raise DomainError(f"{self.name}: bad letter {c!r} in {g!r}")
        if any(g[i] == -g[i + 1] for i in range(len(g) - 1)):
            raise DomainError(f"{self.name}: word {g!r} is not reduced")

    def word_length(self, g):
        return len(g)

    def sort_key(self, g):
        return (len(g), g)

    def ball_size(self, radius):
        if radius == 0:
            return 1
        total, shell = 1, 2 * self.k
        for _ in range(radius):
            total += shell
            shell *= 2 * self.k - 1
        return total

    def enumerate_ball_elements(self, radius):
        def rec(word, remaining):
            yield tuple(word)
            if remaining == 0:
                return
            last = word[-1] if word else 0
            for c in range(-self.k, self.k + 1):
                if c == 0 or c == -last:
                    continue
                word.append(c)
                yield from rec(word, remaining - 1)
                word.pop()

        yield from rec([], radius)

    def parse(self, text):
        s = text.strip()
        if s in ("e", ""):
            return ()
        out = ()
        for token in s.split():
            if "^" in token:
                letter, _, exp = token.partition("^")
                try:
                    n = int(exp)
                except ValueError as exc:
                    raise ConfigurationError(f"{self.name}: bad token {token!r}") from exc
            else:
                letter, n = token, 1
            idx = _FREE_LETTERS.find(letter) + 1
            if not 1 <= idx <= self.k:
                raise ConfigurationError(f"{self.name}: unknown letter {letter!r}")
            c = idx if n >= 0 else -idx
            for _ in range(abs(n)):
                out = self.mul(out, (c,))
        return out

    def format(self, g):
        if not g:
            return "e"
        parts = []
        i = 0
        while i < len(g):
            j = i
            while j < len(g) and g[j] == g[i]:
                j += 1
            letter = _FREE_LETTERS[abs(g[i]) - 1]
            exp = (j - i) if g[i] > 0 else -(j - i)
            parts.append(letter if exp == 1 else f"{letter}^{exp}")
            i = j
        return " ".join(parts)

    def generator_word(self, g):
        return tuple((c,) for c in g)


# ---------------------------------------------------------------------------
# infinite dihedral


class InfiniteDihedral(GroupModel):
    """D_inf = <t, r | r^2, r t r = t^-1>, normal form t^n r^eps.

    Elements are pairs (n, eps) with eps in {0, 1}:
    (n, e)(m, f) = (n + (-1)^e m, e xor f). Word length |n| + eps, which
    the BFS oracle confirms on every tested ball.
    """

    def __init__(self):
        self.name = "DInfinity"
        self.generators = (("t", (1, 0)), ("t^-1", (-1, 0)), ("r", (0, 1)))

    def identity(self):
        return (0, 0)

    def mul(self, g, h):
        n, e = g
        m, f = h
        return (n + (m if e == 0 else -m), e ^ f)

    def inv(self, g):
        n, e = g
        return (n, 1) if e else (-n, 0)

    def validate(self, g):
        if (
            not isinstance(g, tuple)
            or len(g) != 2
            or not isinstance(g[0], int)
            or g[1] not in (0, 1)
        ):
            raise DomainError(f"{self.name}: malformed element {g!r}")

    def word_length(self, g):
        return abs(g[0]) + g[1]

    def sort_key(self, g):
        return (self.word_length(g), g)

    def ball_size(self, radius):
        # eps = 0 needs |n| <= radius, eps = 1 needs |n| <= radius - 1
        size = 2 * radius + 1
        if radius >= 1:
            size += 2 * (radius - 1) + 1
        return size

    def enumerate_ball_elements(self, radius):
        for n in range(-radius, radius + 1):
            yield (n, 0)
        for n in range(-(radius - 1), radius):   # empty when radius == 0
            yield (n, 1)

    def parse(self, text):
        s = text.strip()
        if s == "e":
            return (0, 0)
        n, eps = 0, 0
        tokens = s.split()
        if not tokens:
            raise ConfigurationError(f"{self.name}: empty element string")
        i = 0
        if tokens[i].startswith("t"):
            tok = tokens[i]
            if tok == "t":
                n = 1
            elif tok.startswith("t^"):
                try:
                    n = int(tok[2:])
                except ValueError as exc:
                    raise ConfigurationError(f"{self.name}: bad token {tok!r}") from exc
            else:
                raise ConfigurationError(f"{self.name}: bad token {tok!r}")
            i += 1
        if i < len(tokens):
            if tokens[i] != "r":
                raise ConfigurationError(f"{self.name}: bad token {tokens[i]!r}")
            eps = 1
            i += 1
        if i != len(tokens):
            raise ConfigurationError(f"{self.name}: trailing tokens in {text!r}")
        return (n, eps)

    def format(self, g):
        n, e = g
        if n == 0 and e == 0:
            return "e"
        parts = []
        if n == 1:
            parts.append("t")
        elif n != 0:
            parts.append(f"t^{n}")
        if e:
            parts.append("r")
        return " ".join(parts)

    def generator_word(self, g):
        n, e = g
        t_step = (1, 0) if n >= 0 else (-1, 0)
        word = [t_step] * abs(n)
        if e:
            word.append((0, 1))
        return tuple(word)


# ---------------------------------------------------------------------------
# finite cyclic


class Cyclic(GroupModel):
    """Z/n with generators ±1; word length min(k, n-k)."""

    def __init__(self, n: int):
        if n < 1:
            raise ConfigurationError(f"Cyclic order must be >= 1, got {n}")
        self.n = n
        self.name = f"Cyclic:{n}"
        self.generators = (("g", 1 % n), ("g^-1", (-1) % n))

    def identity(self):
        return 0

    def mul(self, g, h):
        return (g + h) % self.n

    def inv(self, g):
        return (-g) % self.n

    def validate(self, g):
        if not isinstance(g, int) or not 0 <= g < self.n:
            raise DomainError(f"{self.name}: malformed element {g!r}")

    def word_length(self, g):
        return min(g, self.n - g)

    def sort_key(self, g):
        return (self.word_length(g), g)

    def ball_size(self, radius):
        return sum(1 for k in range(self.n) if self.word_length(k) <= radius)

    def enumerate_ball_elements(self, radius):
        for k in range(self.n):
            if self.word_length(k) <= radius:
                yield k

    def parse(self, text):
        try:
            return int(text.strip()) % self.n
        except ValueError as exc:
            raise ConfigurationError(f"{self.name}: bad element {text!r}") from exc

    def format(self, g):
        return str(g)

    def generator_word(self, g):
        if g <= self.n - g:
            return (1 % self.n,) * g
        return ((-1) % self.n,) * (self.n - g)


# ---------------------------------------------------------------------------
# finite symmetric


class Symmetric(GroupModel):
    """Sym(n) on {0..n-1}, adjacent transpositions, inversion-count length.

    Elements are image tuples: g = (g(0), ..., g(n-1)); (gh)(i) = g(h(i)).
    """

    def __init__(self, n: int):
        if not 1 <= n <= 8:
            raise ConfigurationError(f"Symmetric degree must be in 1..8, got {n}")
        self.n = n
        self.name = f"Symmetric:{n}"
        gens = []
        for i in range(n - 1):
            img = list(range(n))
            img[i], img[i + 1] = img[i + 1], img[i]
            gens.append((f"s{i}", tuple(img)))
        self.generators = tuple(gens)

    def identity(self):
        return tuple(range(self.n))

    def mul(self, g, h):
        return tuple(g[h[i]] for i in range(self.n))

    def inv(self, g):
        out = [0] * self.n
        for i, v in enumerate(g):
            out[v] = i
        return tuple(out)

    def validate(self, g):
        if not isinstance(g, tuple) or sorted(g) != list(range(self.n)):
            raise DomainError(f"{self.name}: malformed element {g!r}")

    def word_length(self, g):
        return sum(
            1
            for i in range(self.n)
            for j in range(i + 1, self.n)
            if g[i] > g[j]
        )

    def sort_key(self, g):
        return (self.word_length(g), g)

    def ball_size(self, radius):
        return sum(
            1 for p in permutations(range(self.n)) if self.word_length(p) <= radius
        )

    def enumerate_ball_elements(self, radius):
        for p in permutations(range(self.n)):
            if self.word_length(p) <= radius:
                yield p

    def parse(self, text):
        parts = [p.strip() for p in text.strip().split(",")]
        try:
            img = tuple(int(p) for p in parts)
        except ValueError as exc:
            raise ConfigurationError(f"{self.name}: bad element {text!r}") from exc
        if sorted(img) != list(range(self.n)):
            raise ConfigurationError(
                f"{self.name}: {text!r} is not a permutation of 0..{self.n - 1}"
            )
        return img

    def format(self, g):
        return ",".join(str(v) for v in g)

    def generator_word(self, g):
        # peel adjacent descents on the right: g * s_i swaps positions i, i+1
        word = []
        q = list(g)
        while True:
            for i in range(self.n - 1):
                if q[i] > q[i + 1]:
                    q[i], q[i + 1] = q[i + 1], q[i]
                    word.append(self.generators[i][1])
                    break
            else:
                break
        # g * word == id and each s is an involution, so reversed(word) == g
        return tuple(reversed(word))


# ---------------------------------------------------------------------------
# config strings


_FAMILIES = {
    "Zd": lambda arg: FreeAbelian(int(arg)),
    "Free": lambda arg: FreeGroup(int(arg)),
    "DInfinity": lambda arg: InfiniteDihedral(),
    "Cyclic": lambda arg: Cyclic(int(arg)),
    "Symmetric": lambda arg: Symmetric(int(arg)),
}


def group_from_string(spec: str) -> GroupModel:
    """Build a group from a config string like "Zd:2" or "DInfinity"."""
    name, _, arg = spec.strip().partition(":")
    if name not in _FAMILIES:
        raise ConfigurationError(
            f"unknown group family {name!r}; expected one of {sorted(_FAMILIES)}"
        )
    if name == "DInfinity" and arg:
        raise ConfigurationError("DInfinity takes no parameter")
    if name != "DInfinity" and not arg:
        raise ConfigurationError(f"group family {name} needs a parameter, e.g. {name}:2")
    try:
        return _FAMILIES[name](arg)
    except ValueError as exc:
        raise ConfigurationError(f"bad group parameter in {spec!r}") from exc
