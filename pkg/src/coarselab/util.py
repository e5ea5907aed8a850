"""Small shared helpers: exact rationals in text form, stable JSON."""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Any

from coarselab.errors import ConfigurationError


def parse_rational(text: str | int | float) -> Fraction:
    """Parse ``"p/q"`` or a bare integer/decimal string into a Fraction.

    Floats are accepted from config files but converted via their
    decimal representation so that ``0.1`` means 1/10, not the binary
    float.
    """
    if isinstance(text, int):
        return Fraction(text)
    if isinstance(text, float):
        return Fraction(str(text))
    if not isinstance(text, str):
        raise ConfigurationError(f"cannot parse rational from {text!r}")
    s = text.strip()
    try:
        if "/" in s:
            num, den = s.split("/")
            return Fraction(int(num.strip()), int(den.strip()))
        return Fraction(s)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigurationError(f"cannot parse rational from {text!r}: {exc}") from exc


def format_rational(value: Fraction) -> str:
    """Render a Fraction as ``"p/q"``, or ``"n"`` when the denominator is 1."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def jsonable(obj: Any) -> Any:
    """Recursively convert Fractions/tuples/sets into JSON-safe values.

    Fractions become ``"p/q"`` strings so round-trips stay exact.
    """
    if isinstance(obj, Fraction):
        return format_rational(obj)
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted(jsonable(v) for v in obj)
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return obj
    return str(obj)


def stable_json(obj: Any) -> str:
    """Serialize deterministically: sorted keys, fixed separators, newline end.

    Two runs over equal data must produce byte-identical files, so no
    locale, timestamp, or hash-order dependence is allowed here.
    """
    return json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n"
