"""Fixed-point token amounts.

Every ETH or token quantity in the simulator is an ``int`` counting 1e-18 units
(wei for ETH, the smallest unit for an 18-decimal ERC-20).  Conversions to and
from human decimals live here so nothing else has to think about scale.
"""

from __future__ import annotations

from decimal import Decimal, localcontext
from fractions import Fraction

SCALE = 10**18
DECIMALS = 18


def to_units(value: int | float | str | Decimal) -> int:
    """Convert a decimal quantity (e.g. ``"1.18"`` ETH) to integer units, rounding half-even."""
    if isinstance(value, bool):
        raise TypeError("bool is not an amount")
    if isinstance(value, int):
        return value * SCALE
    if isinstance(value, float):
        value = repr(value)
    with localcontext() as ctx:
        ctx.prec = 80
        d = Decimal(value) * SCALE
        return int(d.to_integral_value())


def from_units(units: int) -> float:
    return units / SCALE


def format_units(units: int) -> str:
    """Canonical decimal string: no exponent, no trailing fractional zeros."""
    sign = "-" if units < 0 else ""
    whole, frac = divmod(abs(units), SCALE)
    if frac == 0:
        return f"{sign}{whole}"
    digits = f"{frac:018d}".rstrip("0")
    return f"{sign}{whole}.{digits}"


def parse_units(text: str) -> int:
    """Inverse of :func:`format_units`; also accepts any plain decimal string."""
    if not isinstance(text, str):
        raise TypeError(f"amount must be a decimal string, got {type(text).__name__}")
    with localcontext() as ctx:
        ctx.prec = 80
        d = Decimal(text) * SCALE
    if d != d.to_integral_value():
        raise ValueError(f"amount {text!r} has more than {DECIMALS} fractional digits")
    return int(d)


def mul_fraction(units: int, frac: Fraction) -> int:
    """``floor(units * frac)`` exactly."""
    return (units * frac.numerator) // frac.denominator
