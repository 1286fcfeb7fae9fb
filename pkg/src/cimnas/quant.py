"""Fixed-point formats and per-layer quantization schemes.

A format ``(M, N)`` spends ``M`` bits on the integer part and ``N`` bits on the
fraction. Weights carry one extra sign bit that is not counted in ``M``/``N``;
activations (post-ReLU) are unsigned. Values round half away from zero and
saturate at the ends of the representable range.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "QuantizationError",
    "FixedPointFormat",
    "QuantizationScheme",
    "representable_set",
    "enumerate_values",
    "quantize_value",
    "quantize_tensor",
    "ste_mask",
    "weight_data_bits",
    "magnitude_code",
]

_NOTATION = re.compile(r"^([su])(\d+)\.(\d+)$")


class QuantizationError(ValueError):
    pass


@dataclass(frozen=True)
class FixedPointFormat:
    int_bits: int
    frac_bits: int
    signed: bool = True

    def __post_init__(self):
        if self.int_bits < 0 or self.frac_bits < 0:
            raise QuantizationError(f"negative bit count in {self.int_bits}.{self.frac_bits}")
        if not self.signed and self.int_bits + self.frac_bits < 1:
            raise QuantizationError("unsigned format needs at least one integer or fraction bit")

    @property
    def step(self) -> float:
        return 2.0 ** -self.frac_bits

    @property
    def max(self) -> float:
        return 2.0 ** self.int_bits - self.step

    @property
    def min(self) -> float:
        return -(2.0 ** self.int_bits) if self.signed else 0.0

    @property
    def magnitude(self) -> float:
        """Largest absolute value the format can hold."""
        return max(self.max, -self.min)

    @property
    def bits(self) -> int:
        """Integer plus fraction bits (sign excluded)."""
        return self.int_bits + self.frac_bits

    def __str__(self) -> str:
        return f"{'s' if self.signed else 'u'}{self.int_bits}.{self.frac_bits}"

    @classmethod
    def parse(cls, text: str) -> "FixedPointFormat":
        """Parse ``"s1.2"`` / ``"u0.6"`` notation."""
        m = _NOTATION.match(text.strip())
        if m is None:
            raise QuantizationError(f"bad format notation {text!r}; expected e.g. 's1.2' or 'u0.4'")
        return cls(int(m.group(2)), int(m.group(3)), m.group(1) == "s")


@dataclass(frozen=True)
class QuantizationScheme:
    """Per parametric layer activation (``qa``) and weight (``qw``) formats."""

    qa: tuple[FixedPointFormat, ...]
    qw: tuple[FixedPointFormat, ...]

    def __post_init__(self):
        if len(self.qa) != len(self.qw):
            raise QuantizationError(f"qa has {len(self.qa)} layers but qw has {len(self.qw)}")

    def __len__(self) -> int:
        return len(self.qw)

    @classmethod
    def from_bits(cls, bits: Sequence[tuple[int, int, int, int]]) -> "QuantizationScheme":
        """Build from ``(wq_int, wq_frac, aq_int, aq_frac)`` tuples, one per layer."""
        qw = tuple(FixedPointFormat(wi, wf, signed=True) for wi, wf, _, _ in bits)
        qa = tuple(FixedPointFormat(ai, af, signed=False) for _, _, ai, af in bits)
        return cls(qa=qa, qw=qw)

    @classmethod
    def uniform(cls, layers: int, weight: str, activation: str) -> "QuantizationScheme":
        w, a = FixedPointFormat.parse(weight), FixedPointFormat.parse(activation)
        return cls(qa=(a,) * layers, qw=(w,) * layers)

    def to_strings(self) -> dict:
        return {"qa": [str(f) for f in self.qa], "qw": [str(f) for f in self.qw]}

    @classmethod
    def from_strings(cls, d: dict) -> "QuantizationScheme":
        return cls(
            qa=tuple(FixedPointFormat.parse(s) for s in d["qa"]),
            qw=tuple(FixedPointFormat.parse(s) for s in d["qw"]),
        )


def representable_set(fmt: FixedPointFormat) -> tuple[float, float, float]:
    """Return ``(min, max, step)`` of the format."""
    return fmt.min, fmt.max, fmt.step


def enumerate_values(fmt: FixedPointFormat) -> np.ndarray:
    """Every representable value, ascending."""
    lo = int(round(fmt.min / fmt.step))
    hi = int(round(fmt.max / fmt.step))
    return np.arange(lo, hi + 1, dtype=np.float64) * fmt.step


def quantize_tensor(x, fmt: FixedPointFormat) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    scale = 2.0 ** fmt.frac_bits
    q = np.sign(x) * np.floor(np.abs(x) * scale + 0.5) / scale
    return np.clip(q, fmt.min, fmt.max)


def quantize_value(x: float, fmt: FixedPointFormat) -> float:
    return float(quantize_tensor(x, fmt))


def ste_mask(x: np.ndarray, fmt: FixedPointFormat) -> np.ndarray:
    """Straight-through gradient: 1 inside the representable range, 0 outside."""
    return ((x >= fmt.min) & (x <= fmt.max)).astype(np.float64)


def weight_data_bits(fmt: FixedPointFormat) -> int:
    """Bits the device mapper has to store per weight."""
    return fmt.bits + (1 if fmt.signed else 0)


def magnitude_code(x: float, fmt: FixedPointFormat) -> int:
    """Integer code of ``|quantize(x)|`` in units of the format step."""
    return int(round(abs(quantize_value(x, fmt)) * 2.0 ** fmt.frac_bits))
