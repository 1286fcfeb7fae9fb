"""Device library, bit slicing onto multi-level cells, and variation noise.

Mapping convention used throughout (noise model and the cell-level simulator
in the tests agree on it):

* A weight is stored sign-magnitude. Signed formats use a differential pair of
  columns; the magnitude goes to one column and the other holds zero. Each
  column sees independent cell noise.
* The magnitude code ``c = |w| / step`` is split into ``K`` base-``2**b``
  digits (``b`` bits per cell), most-significant first.
* Every slice spreads its digit range linearly over the full current window
  ``[current_min, current_max]``. Lower slices use the full range
  ``[0, 2**b - 1]``; the top slice only needs ``[0, top]`` where ``top`` is the
  top digit of the largest magnitude code, so a single-slice weight maps its
  full-scale magnitude onto the full current window.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .quant import FixedPointFormat, weight_data_bits

__all__ = [
    "DeviceError",
    "DeviceModel",
    "DeviceLibrary",
    "default_library",
    "devices_per_weight",
    "max_magnitude_code",
    "slice_ranges",
    "slice_weight",
    "reassemble",
    "weight_noise_sigma",
    "layer_sigmas",
    "sample_cell_variation",
]


class DeviceError(ValueError):
    pass


@dataclass(frozen=True)
class DeviceModel:
    name: str
    bits_per_cell: int
    current_min: float  # uA
    current_max: float  # uA
    level_sigma: float  # nA

    def __post_init__(self):
        if self.bits_per_cell < 1:
            raise DeviceError(f"{self.name}: bits_per_cell must be >= 1")
        if not (self.current_max > self.current_min >= 0):
            raise DeviceError(f"{self.name}: need current_max > current_min >= 0")
        if self.level_sigma < 0:
            raise DeviceError(f"{self.name}: level_sigma must be >= 0")

    @property
    def levels(self) -> int:
        return 2 ** self.bits_per_cell

    @property
    def relative_sigma(self) -> float:
        """Per-level sigma as a fraction of the full current window."""
        return self.level_sigma * 1e-3 / (self.current_max - self.current_min)

    def level_currents(self) -> np.ndarray:
        return np.linspace(self.current_min, self.current_max, self.levels)

    def to_dict(self) -> dict:
        return asdict(self)


class DeviceLibrary(Sequence[DeviceModel]):
    """Ordered set of candidate devices, addressable by index or name."""

    def __init__(self, devices: Iterable[DeviceModel]):
        self._devices = tuple(devices)
        names = [d.name for d in self._devices]
        if len(set(names)) != len(names):
            raise DeviceError(f"duplicate device names in {names}")
        if not self._devices:
            raise DeviceError("device library is empty")

    def __getitem__(self, i):
        return self._devices[i]

    def __len__(self) -> int:
        return len(self._devices)

    def __eq__(self, other) -> bool:
        return isinstance(other, DeviceLibrary) and self._devices == other._devices

    def by_name(self, name: str) -> DeviceModel:
        for d in self._devices:
            if d.name == name:
                return d
        raise DeviceError(f"unknown device {name!r}")

    def to_list(self) -> list[dict]:
        return [d.to_dict() for d in self._devices]

    @classmethod
    def from_list(cls, items: list[dict]) -> "DeviceLibrary":
        return cls(DeviceModel(**item) for item in items)


def default_library() -> DeviceLibrary:
    # 4-bit ReRAM: 0-16 uA window with 800 nA per-level sigma; the binary
    # device keeps the same relative sigma.
    return DeviceLibrary([
        DeviceModel("reram4", 4, 0.0, 16.0, 800.0),
        DeviceModel("binary1", 1, 0.0, 16.0, 800.0),
    ])


def devices_per_weight(weight_bits: int, device: DeviceModel) -> int:
    if weight_bits < 1:
        raise DeviceError("weight_bits must be >= 1")
    return -(-weight_bits // device.bits_per_cell)


def max_magnitude_code(fmt: FixedPointFormat) -> int:
    """Largest magnitude code; ``2**bits`` for signed formats (the ``-2**M`` end)."""
    return 2 ** fmt.bits if fmt.signed else 2 ** fmt.bits - 1


def slice_ranges(fmt: FixedPointFormat, device: DeviceModel) -> list[int]:
    """Digit range each slice spreads over the current window, most-significant first."""
    k = devices_per_weight(weight_data_bits(fmt), device)
    b = device.bits_per_cell
    top = max_magnitude_code(fmt) >> (b * (k - 1))
    return [top] + [device.levels - 1] * (k - 1)


def slice_weight(code: int, fmt: FixedPointFormat, device: DeviceModel) -> list[int]:
    """Split a magnitude code into per-cell levels, most-significant slice first."""
    k = devices_per_weight(weight_data_bits(fmt), device)
    if not 0 <= code < 2 ** weight_data_bits(fmt):
        raise DeviceError(f"code {code} outside [0, 2**{weight_data_bits(fmt)}) for {fmt}")
    b = device.bits_per_cell
    mask = device.levels - 1
    return [(code >> (b * s)) & mask for s in reversed(range(k))]


def reassemble(levels: Sequence[int], device: DeviceModel) -> int:
    """Shift-and-add: inverse of :func:`slice_weight`."""
    code = 0
    for level in levels:
        code = (code << device.bits_per_cell) + int(level)
    return code


def weight_noise_sigma(device: DeviceModel, fmt: FixedPointFormat) -> float:
    """Weight-domain standard deviation caused by per-cell current variation.

    A slice of significance ``s`` whose digit range ``r`` spans the current
    window turns a current error of ``rho`` (relative) into a weight error of
    ``rho * r * 2**(b*s) * step``. Slices and differential columns add in
    variance.
    """
    rho = device.relative_sigma
    if rho == 0.0:
        return 0.0
    b = device.bits_per_cell
    ranges = slice_ranges(fmt, device)
    k = len(ranges)
    var = sum((r * 2.0 ** (b * (k - 1 - i))) ** 2 for i, r in enumerate(ranges))
    var *= (rho * fmt.step) ** 2
    if fmt.signed:
        var *= 2.0
    return math.sqrt(var)


def layer_sigmas(device: DeviceModel, weight_formats: Sequence[FixedPointFormat]) -> tuple[float, ...]:
    return tuple(weight_noise_sigma(device, f) for f in weight_formats)


def sample_cell_variation(device: DeviceModel, rng: np.random.Generator, size=None):
    """Gaussian current offset(s) in nA with zero mean and ``level_sigma`` spread."""
    if device.level_sigma == 0.0:
        return 0.0 if size is None else np.zeros(size)
    return rng.normal(0.0, device.level_sigma, size=size)
