"""Analytic crossbar cost model for weight-stationary CiM accelerators.

Every layer is unrolled onto ``U x V`` synaptic arrays: a conv kernel becomes
``FH*FW*C_in`` rows, and each output neuron takes ``devices_per_weight`` columns
(times two for differential signed weights). Activations stream in bit-serially
through 1-bit DACs. Each array has ``adcs = ceil(V / cols_per_adc)`` ADCs, so
one input phase takes as many ADC cycles as the busiest ADC has columns.

Per layer, with ``phases = ceil(act_bits / dac_bits)`` and
``groups = ceil(min(cols_used, V) / adcs)``::

    cycles   = positions * phases * groups
    latency  = cycles / clock_ghz                                   [ns]
    energy   = positions * phases * (rows_used * dac_pj
                 + rows_used * cols_used * cell_pj_per_ua * I_mean
                 + cols_used * (adc_pj + shift_add_pj))             [pJ]
    area     = arrays * array_area                                  [um^2]

    array_area = U*V*cell_area + U*dac_area
                 + adcs * (adc_area + shift_add_area)

At chip level latency is the sum over layers (no inter-layer pipelining).
Energy adds feature-map buffer traffic and NoC transfers; every output byte
travels ``ceil(sqrt(ceil(arrays / arrays_per_pe)))`` hops. Area covers every
allocated array plus PE buffers, tile buffers and routers.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Sequence

from .devices import DeviceModel, devices_per_weight
from .nn import Conv, FullyConnected, Output, shape_trace
from .quant import FixedPointFormat, QuantizationScheme, weight_data_bits

__all__ = [
    "CostModelError",
    "SynapticArray",
    "TechnologyParams",
    "TileConfig",
    "PEConfig",
    "ChipDesign",
    "LayerMapping",
    "LayerMetrics",
    "HardwareMetrics",
    "FULL_PRECISION",
    "map_layer",
    "map_network",
    "estimate_layer_metrics",
    "pe_grid",
    "tile_grid",
    "design_area",
    "optimize_circuit",
    "exhaustive_circuit",
    "noc_hops",
    "estimate_chip_metrics",
    "evaluate_hardware",
]

# Formats assumed when a network runs unquantized.
FULL_PRECISION = (FixedPointFormat(3, 6, signed=False), FixedPointFormat(3, 6, signed=True))


class CostModelError(ValueError):
    pass


@dataclass(frozen=True)
class SynapticArray:
    rows: int = 64
    cols: int = 64

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise CostModelError("array dimensions must be >= 1")


@dataclass(frozen=True)
class TechnologyParams:
    node_nm: int = 32
    clock_ghz: float = 1.0
    mem_voltage_v: float = 0.5
    chip_voltage_v: float = 1.1
    adc_bits: int = 4
    dac_bits: int = 1
    cols_per_adc: int = 16
    arrays_per_pe: int = 4
    # area, um^2
    cell_area_um2: float = 0.2
    adc_area_um2: float = 1000.0
    dac_area_um2: float = 6.0
    shift_add_area_um2: float = 150.0
    buffer_area_um2_per_byte: float = 2.5
    router_area_um2: float = 20000.0
    # energy, pJ
    cell_pj_per_ua: float = 0.0005
    adc_pj: float = 0.4
    dac_pj: float = 0.02
    shift_add_pj: float = 0.05
    buffer_pj_per_byte: float = 0.5
    noc_pj_per_byte_hop: float = 1.5

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise CostModelError(f"technology parameter {f.name} must be positive")

    ENERGY_KEYS = ("cell_pj_per_ua", "adc_pj", "dac_pj", "shift_add_pj",
                   "buffer_pj_per_byte", "noc_pj_per_byte_hop")

    def scaled_energy(self, k: float) -> "TechnologyParams":
        return replace(self, **{key: getattr(self, key) * k for key in self.ENERGY_KEYS})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TechnologyParams":
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise CostModelError(f"unknown technology keys {sorted(unknown)}")
        out = {}
        for k, v in d.items():
            default = getattr(cls, k)
            out[k] = int(v) if isinstance(default, int) else float(v)
        return cls(**out)

    @classmethod
    def load(cls, path) -> "TechnologyParams":
        """Read a flat ``key = value  # unit`` preset (INI ``[technology]`` section)."""
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        text = Path(path).read_text()
        if not text.lstrip().startswith("["):
            text = "[technology]\n" + text
        parser.read_string(text)
        return cls.from_dict(dict(parser["technology"]))

    def dump(self, path) -> None:
        units = {"clock_ghz": "GHz", "mem_voltage_v": "V", "chip_voltage_v": "V", "node_nm": "nm"}
        lines = ["[technology]"]
        for k, v in self.to_dict().items():
            unit = units.get(k) or ("um^2" if "area" in k else "pJ" if "pj" in k else "count")
            lines.append(f"{k} = {v}  # {unit}")
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class TileConfig:
    M: int
    N: int
    global_buffer_bytes: int
    link_bandwidth: int  # bits per cycle


@dataclass(frozen=True)
class PEConfig:
    P: int
    Q: int
    buffer_bytes: int
    bandwidth: int  # bits per cycle


@dataclass(frozen=True)
class ChipDesign:
    tiles: TileConfig
    pes: PEConfig
    array: SynapticArray
    device: DeviceModel
    arrays_per_pe: int

    @property
    def capacity(self) -> int:
        return self.tiles.M * self.tiles.N * self.pes.P * self.pes.Q * self.arrays_per_pe

    def to_dict(self) -> dict:
        return {"tiles": asdict(self.tiles), "pes": asdict(self.pes), "array": asdict(self.array),
                "device": self.device.name, "arrays_per_pe": self.arrays_per_pe}


@dataclass(frozen=True)
class LayerMapping:
    rows_used: int
    cols_used: int
    arrays_needed: int
    input_positions: int
    macs: int
    in_elems: int
    out_elems: int


@dataclass(frozen=True)
class LayerMetrics:
    latency_ns: float
    energy_pj: float
    area_um2: float


@dataclass(frozen=True)
class HardwareMetrics:
    latency_ns: float
    energy_pj: float
    area_um2: float
    edp_pj_ns: float
    throughput_tops: float
    efficiency_tops_per_w: float

    @classmethod
    def zero(cls) -> "HardwareMetrics":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HardwareMetrics":
        return cls(**d)


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def map_layer(layer, in_shape: tuple, qw: FixedPointFormat, device: DeviceModel,
              array: SynapticArray = SynapticArray(), differential: bool | None = None) -> LayerMapping:
    """Unroll one layer onto synaptic arrays.

    ``differential`` defaults to the weight format's signedness.
    """
    if differential is None:
        differential = qw.signed
    dpw = devices_per_weight(weight_data_bits(qw), device)
    if isinstance(layer, Conv):
        c, h, w = in_shape
        rows = c * layer.filter_h * layer.filter_w
        outs = layer.num_filters
        positions = h * w
        out_elems = outs * (h // 2) * (w // 2) if layer.pool else outs * h * w
    elif isinstance(layer, (FullyConnected, Output)):
        rows = math.prod(in_shape)
        outs = layer.neurons if isinstance(layer, FullyConnected) else layer.classes
        positions = 1
        out_elems = outs
    else:
        raise CostModelError(f"cannot map {layer!r}")
    cols = outs * dpw * (2 if differential else 1)
    arrays = _ceil_div(rows, array.rows) * _ceil_div(cols, array.cols)
    return LayerMapping(rows, cols, arrays, positions, positions * rows * outs,
                        math.prod(in_shape), out_elems)


def _layers_of(arch) -> tuple:
    if hasattr(arch, "layer_kinds"):
        return tuple(arch.layer_kinds())
    return tuple(arch)


def _formats(quant: QuantizationScheme | None, n: int):
    if quant is None:
        return [FULL_PRECISION[0]] * n, [FULL_PRECISION[1]] * n
    if len(quant) != n:
        raise CostModelError(f"quantization covers {len(quant)} layers, network has {n}")
    return list(quant.qa), list(quant.qw)


def map_network(arch, quant: QuantizationScheme | None, device: DeviceModel,
                array: SynapticArray = SynapticArray(), input_shape=(3, 32, 32)) -> list[LayerMapping]:
    layers = _layers_of(arch)
    if not layers:
        return []
    trace = shape_trace(layers, tuple(input_shape))
    _, qw = _formats(quant, len(layers))
    return [map_layer(layer, shp[0], f, device, array) for layer, shp, f in zip(layers, trace, qw)]


def _array_area(tech: TechnologyParams, array: SynapticArray) -> float:
    adcs = _ceil_div(array.cols, tech.cols_per_adc)
    return (array.rows * array.cols * tech.cell_area_um2 + array.rows * tech.dac_area_um2
            + adcs * (tech.adc_area_um2 + tech.shift_add_area_um2))


def estimate_layer_metrics(mapping: LayerMapping, qa: FixedPointFormat, tech: TechnologyParams,
                           device: DeviceModel, array: SynapticArray = SynapticArray()) -> LayerMetrics:
    phases = _ceil_div(qa.bits, tech.dac_bits)
    groups = _ceil_div(min(mapping.cols_used, array.cols), _ceil_div(array.cols, tech.cols_per_adc))
    cycles = mapping.input_positions * phases * groups
    latency = cycles / tech.clock_ghz
    i_mean = 0.5 * (device.current_min + device.current_max)
    per_phase = (mapping.rows_used * tech.dac_pj
                 + mapping.rows_used * mapping.cols_used * tech.cell_pj_per_ua * i_mean
                 + mapping.cols_used * (tech.adc_pj + tech.shift_add_pj))
    energy = mapping.input_positions * phases * per_phase
    area = mapping.arrays_needed * _array_area(tech, array)
    return LayerMetrics(latency, energy, area)


# -- circuit optimisation ----------------------------------------------------

def pe_grid() -> list[tuple[int, int]]:
    """Candidate PE arrays per tile: ``Q`` is ``P`` or ``2P`` with ``P`` a power of two up to 8."""
    return [(p, q) for p in (1, 2, 4, 8) for q in (p, 2 * p)]


def tile_grid(max_side: int = 64) -> list[tuple[int, int]]:
    """Candidate tile arrays: square or one column wider."""
    return [(m, n) for m in range(1, max_side + 1) for n in (m, m + 1)]


def _buffers(mappings: Sequence[LayerMapping], qa: Sequence[FixedPointFormat], input_elems: int,
             tech: TechnologyParams, array: SynapticArray):
    fmap_bits = [input_elems * qa[0].bits] + [
        m.out_elems * (qa[i + 1].bits if i + 1 < len(qa) else qa[i].bits) for i, m in enumerate(mappings)]
    global_bytes = _ceil_div(max(fmap_bits), 8)
    max_act = max(f.bits for f in qa)
    pe_bytes = 2 * _ceil_div(array.rows * max_act, 8)
    link_bw = max(m.rows_used for m in mappings) * tech.dac_bits
    pe_bw = min(max(m.rows_used for m in mappings), array.rows) * tech.dac_bits
    return global_bytes, pe_bytes, link_bw, pe_bw


def design_area(M: int, N: int, P: int, Q: int, global_bytes: int, pe_bytes: int,
                tech: TechnologyParams, array: SynapticArray) -> float:
    pe_area = pe_bytes * tech.buffer_area_um2_per_byte + tech.arrays_per_pe * _array_area(tech, array)
    tile_area = tech.router_area_um2 + global_bytes * tech.buffer_area_um2_per_byte + P * Q * pe_area
    return M * N * tile_area


def _prepare(arch, quant, device, tech, array, input_shape):
    layers = _layers_of(arch)
    if not layers or (hasattr(arch, "layers") and not arch.layers):
        raise CostModelError("cannot build a chip for an empty architecture")
    mappings = map_network(arch, quant, device, array, input_shape)
    qa, _ = _formats(quant, len(layers))
    demand = sum(m.arrays_needed for m in mappings)
    buffers = _buffers(mappings, qa, math.prod(input_shape), tech, array)
    return demand, buffers


def _design(M, N, P, Q, buffers, array, device, tech) -> ChipDesign:
    g, pb, lbw, pbw = buffers
    return ChipDesign(TileConfig(M, N, g, lbw), PEConfig(P, Q, pb, pbw), array, device, tech.arrays_per_pe)


def optimize_circuit(arch, quant: QuantizationScheme | None, device: DeviceModel,
                     tech: TechnologyParams = TechnologyParams(), array: SynapticArray = SynapticArray(),
                     input_shape=(3, 32, 32)) -> ChipDesign:
    """Smallest-area tile/PE hierarchy on the candidate grid that holds every weight.

    For each PE shape the smallest covering tile array is taken (area grows
    with the tile count), then the PE shape with the least total area wins.
    Ties go to fewer tiles, then fewer PEs per tile, then the smaller side.
    """
    demand, buffers = _prepare(arch, quant, device, tech, array, input_shape)
    g, pb = buffers[0], buffers[1]
    pes_needed = _ceil_div(demand, tech.arrays_per_pe)
    tiles = sorted(tile_grid(), key=lambda mn: (mn[0] * mn[1], mn[0]))
    best = None
    for p, q in pe_grid():
        need = _ceil_div(pes_needed, p * q)
        mn = next((t for t in tiles if t[0] * t[1] >= need), None)
        if mn is None:
            continue
        key = (design_area(mn[0], mn[1], p, q, g, pb, tech, array), mn[0] * mn[1], p * q, mn[0], p)
        if best is None or key < best[0]:
            best = (key, mn, (p, q))
    if best is None:
        raise CostModelError(f"{demand} arrays exceed the largest design on the grid")
    (m, n), (p, q) = best[1], best[2]
    return _design(m, n, p, q, buffers, array, device, tech)


def exhaustive_circuit(arch, quant, device, tech=TechnologyParams(), array=SynapticArray(),
                       input_shape=(3, 32, 32)) -> ChipDesign:
    """Brute-force counterpart of :func:`optimize_circuit` over the full grid."""
    demand, buffers = _prepare(arch, quant, device, tech, array, input_shape)
    g, pb = buffers[0], buffers[1]
    best = None
    for m, n in tile_grid():
        for p, q in pe_grid():
            if m * n * p * q * tech.arrays_per_pe < demand:
                continue
            key = (design_area(m, n, p, q, g, pb, tech, array), m * n, p * q, m, p)
            if best is None or key < best[0]:
                best = (key, (m, n, p, q))
    if best is None:
        raise CostModelError(f"{demand} arrays exceed the largest design on the grid")
    return _design(*best[1], buffers, array, device, tech)


# -- chip metrics ------------------------------------------------------------

def noc_hops(demand: int, tech: TechnologyParams) -> float:
    """Mean hops per output transfer: the side of the square PE grid holding ``demand`` arrays.

    Tied to the workload rather than to the chosen tile layout, so a bigger
    network never gets cheaper traffic by landing on a denser design.
    """
    return float(math.ceil(math.sqrt(_ceil_div(demand, tech.arrays_per_pe))))


def estimate_chip_metrics(design: ChipDesign, arch, quant: QuantizationScheme | None,
                          tech: TechnologyParams = TechnologyParams(), input_shape=(3, 32, 32)) -> HardwareMetrics:
    layers = _layers_of(arch)
    if not layers:
        return HardwareMetrics.zero()
    mappings = map_network(arch, quant, design.device, design.array, input_shape)
    demand = sum(m.arrays_needed for m in mappings)
    if design.capacity < demand:
        raise CostModelError(f"design holds {design.capacity} arrays, network needs {demand}")
    qa, _ = _formats(quant, len(layers))
    hops = noc_hops(demand, tech)
    latency = energy = 0.0
    macs = 0
    for i, m in enumerate(mappings):
        lm = estimate_layer_metrics(m, qa[i], tech, design.device, design.array)
        latency += lm.latency_ns
        out_bits = qa[i + 1].bits if i + 1 < len(qa) else qa[i].bits
        moved = (m.in_elems * qa[i].bits + m.out_elems * out_bits) / 8.0
        energy += lm.energy_pj + moved * tech.buffer_pj_per_byte
        energy += m.out_elems * out_bits / 8.0 * hops * tech.noc_pj_per_byte_hop
        macs += m.macs
    t, p = design.tiles, design.pes
    area = design_area(t.M, t.N, p.P, p.Q, t.global_buffer_bytes, p.buffer_bytes, tech, design.array)
    ops = 2.0 * macs
    return HardwareMetrics(
        latency_ns=latency,
        energy_pj=energy,
        area_um2=area,
        edp_pj_ns=energy * latency,
        throughput_tops=ops / latency * 1e-3,
        efficiency_tops_per_w=ops / energy,
    )


def evaluate_hardware(arch, quant, device, tech=TechnologyParams(), array=SynapticArray(),
                      input_shape=(3, 32, 32)) -> tuple[ChipDesign, HardwareMetrics]:
    """Circuit optimisation followed by chip metrics."""
    design = optimize_circuit(arch, quant, device, tech, array, input_shape)
    return design, estimate_chip_metrics(design, arch, quant, tech, input_shape)
