"""Joint architecture x quantization x device search spaces.

A space is a flat, ordered list of decisions. The order is layer-major: for
every searched layer its architecture fields come first (``fh, fw, filters,
pool`` for conv, ``neurons`` for dense), then its quantization fields
(``w_int, w_frac, a_int, a_frac``). The device choice is the final step.

A controller action sequence holds one choice index per decision, and
:func:`decode` / :func:`encode` map between action sequences and candidates.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

from .nn import Conv, FullyConnected, Output
from .quant import QuantizationScheme

__all__ = [
    "SearchSpaceError",
    "Decision",
    "ArchitectureSpec",
    "Candidate",
    "SearchSpace",
    "rls_space",
    "vls_space",
    "space_from_dict",
    "decode",
    "encode",
    "space_size",
    "iter_actions",
    "NACIM_HW_ROWS",
    "NACIM_SW_ROWS",
    "candidate_from_table",
]

QUANT_FIELDS = ("w_int", "w_frac", "a_int", "a_frac")
CONV_FIELDS = ("fh", "fw", "filters", "pool")

# (FH, FW, #F, P, WQ_int, WQ_frac, AQ_int, AQ_frac); dense rows carry neurons in
# the first slot and None for the conv-only fields.
NACIM_HW_ROWS = (
    (3, 5, 64, 0, 2, 6, 2, 6),
    (3, 1, 48, 0, 1, 2, 1, 2),
    (1, 3, 48, 1, 2, 6, 1, 3),
    (5, 3, 64, 1, 1, 2, 0, 4),
    (1, 1, 64, 1, 0, 1, 1, 3),
    (3, 3, 24, 0, 1, 1, 2, 5),
    (256, None, None, None, 3, 5, 1, 3),
    (64, None, None, None, 1, 3, 2, 6),
)
NACIM_SW_ROWS = (
    (5, 5, 64, 0, 1, 5, 3, 6),
    (3, 1, 48, 0, 3, 2, 1, 6),
    (1, 3, 48, 1, 2, 0, 3, 5),
    (5, 5, 64, 1, 2, 0, 0, 4),
    (1, 1, 64, 1, 1, 4, 2, 3),
    (3, 3, 24, 0, 0, 1, 0, 5),
    (256, None, None, 1, 2, 2, 3, 6),
    (64, None, None, 0, 0, 2, 0, 2),
)


class SearchSpaceError(ValueError):
    pass


@dataclass(frozen=True)
class Decision:
    name: str
    kind: str  # "arch" | "quant" | "device"
    layer: int | None
    field: str
    choices: tuple

    def __post_init__(self):
        if not self.choices:
            raise SearchSpaceError(f"decision {self.name} has no choices")


@dataclass(frozen=True)
class ArchitectureSpec:
    """Searched layers (``Conv`` / ``FullyConnected``) plus the classifier width."""

    layers: tuple
    classes: int = 10

    def layer_kinds(self) -> tuple:
        return tuple(self.layers) + (Output(self.classes),)

    def to_list(self) -> list:
        out = []
        for layer in self.layers:
            if isinstance(layer, Conv):
                out.append({"type": "conv", "fh": layer.filter_h, "fw": layer.filter_w,
                            "filters": layer.num_filters, "pool": int(layer.pool)})
            else:
                out.append({"type": "fc", "neurons": layer.neurons})
        return out

    @classmethod
    def from_list(cls, items: list, classes: int = 10) -> "ArchitectureSpec":
        layers = []
        for item in items:
            if item["type"] == "conv":
                layers.append(Conv(item["fh"], item["fw"], item["filters"], bool(item["pool"])))
            elif item["type"] == "fc":
                layers.append(FullyConnected(item["neurons"]))
            else:
                raise SearchSpaceError(f"unknown layer type {item['type']!r}")
        return cls(tuple(layers), classes)


@dataclass(frozen=True)
class Candidate:
    """One decoded point of a search space.

    ``bits`` holds ``(w_int, w_frac, a_int, a_frac)`` per searched layer, or is
    ``None`` for full precision. The classifier layer reuses the formats of
    the last searched layer.
    """

    arch: ArchitectureSpec
    bits: tuple | None
    device_index: int = 0

    def scheme(self) -> QuantizationScheme | None:
        if self.bits is None:
            return None
        return QuantizationScheme.from_bits(tuple(self.bits) + (self.bits[-1],))

    def table(self) -> list[tuple]:
        """Table-style rows ``(FH, FW, #F, P, WQ_int, WQ_frac, AQ_int, AQ_frac)``."""
        rows = []
        for i, layer in enumerate(self.arch.layers):
            q = tuple(self.bits[i]) if self.bits is not None else (None,) * 4
            if isinstance(layer, Conv):
                rows.append((layer.filter_h, layer.filter_w, layer.num_filters, int(layer.pool)) + q)
            else:
                rows.append((layer.neurons, None, None, None) + q)
        return rows

    def to_dict(self) -> dict:
        return {
            "arch": self.arch.to_list(),
            "classes": self.arch.classes,
            "bits": None if self.bits is None else [list(b) for b in self.bits],
            "device_index": self.device_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Candidate":
        bits = None if d["bits"] is None else tuple(tuple(b) for b in d["bits"])
        return cls(ArchitectureSpec.from_list(d["arch"], d["classes"]), bits, d["device_index"])


def candidate_from_table(rows: Sequence[tuple], classes: int = 10, device_index: int = 0) -> Candidate:
    layers, bits = [], []
    for row in rows:
        if row[1] is None:
            layers.append(FullyConnected(row[0]))
        else:
            layers.append(Conv(row[0], row[1], row[2], bool(row[3])))
        bits.append(tuple(row[4:8]))
    return Candidate(ArchitectureSpec(tuple(layers), classes), tuple(bits), device_index)


@dataclass(frozen=True)
class SearchSpace:
    name: str
    skeleton: tuple  # "conv" / "fc" per searched layer
    decisions: tuple
    classes: int = 10
    quantized: bool = True

    def __len__(self) -> int:
        return len(self.decisions)

    @property
    def choice_counts(self) -> tuple[int, ...]:
        return tuple(len(d.choices) for d in self.decisions)

    def kinds(self) -> set:
        return {d.kind for d in self.decisions if len(d.choices) > 1}

    def _rebuild(self, decisions, **kw) -> "SearchSpace":
        return replace(self, decisions=tuple(decisions), **kw)

    def fixed(self, candidate: Candidate, kinds: Sequence[str]) -> "SearchSpace":
        """Collapse the decisions of the given kinds to the candidate's values."""
        values = dict(zip((d.name for d in self.decisions), _values(candidate, self)))
        out = []
        for d in self.decisions:
            if d.kind in kinds:
                out.append(replace(d, choices=(values[d.name],)))
            else:
                out.append(d)
        return self._rebuild(out)

    def full_precision(self) -> "SearchSpace":
        """Drop the quantization steps; decoded candidates carry ``bits=None``."""
        return self._rebuild([d for d in self.decisions if d.kind != "quant"], quantized=False)

    def with_classes(self, classes: int) -> "SearchSpace":
        return replace(self, classes=classes)

    def to_dict(self) -> dict:
        layers = []
        for i, kind in enumerate(self.skeleton):
            entry = {"type": kind}
            for d in self.decisions:
                if d.layer == i:
                    entry[d.field] = list(d.choices)
            layers.append(entry)
        devices = [d for d in self.decisions if d.kind == "device"]
        return {"name": self.name, "layers": layers, "classes": self.classes,
                "quantized": self.quantized,
                "devices": list(devices[0].choices) if devices else [0]}


def _layer_decisions(i: int, kind: str, arch: dict, quant: dict | None) -> list[Decision]:
    fields = CONV_FIELDS if kind == "conv" else ("neurons",)
    prefix = f"{kind}{i}"
    out = [Decision(f"{prefix}.{f}", "arch", i, f, tuple(arch[f])) for f in fields]
    if quant is not None:
        out += [Decision(f"{prefix}.{f}", "quant", i, f, tuple(quant[f])) for f in QUANT_FIELDS]
    return out


def space_from_dict(d: dict) -> SearchSpace:
    """Build a space from an inline definition (also the :meth:`SearchSpace.to_dict` form).

    Each layer entry gives its choice lists; quantization lists default to the
    top-level ``w_int``/``w_frac``/``a_int``/``a_frac`` keys when absent.
    """
    decisions, skeleton = [], []
    quantized = d.get("quantized", True)
    for i, entry in enumerate(d["layers"]):
        kind = entry["type"]
        if kind not in ("conv", "fc"):
            raise SearchSpaceError(f"layer {i}: unknown type {kind!r}")
        arch = dict(entry)
        if kind == "conv":
            arch.setdefault("pool", [0, 1])
        quant = None
        if quantized:
            quant = {f: entry.get(f, d.get(f)) for f in QUANT_FIELDS}
            missing = [f for f, v in quant.items() if v is None]
            if missing:
                raise SearchSpaceError(f"layer {i}: no choices for {missing}")
        decisions += _layer_decisions(i, kind, arch, quant)
        skeleton.append(kind)
    devices = d.get("devices", [0])
    if isinstance(devices, int):
        devices = list(range(devices))
    decisions.append(Decision("device", "device", None, "device", tuple(devices)))
    return SearchSpace(d.get("name", "custom"), tuple(skeleton), tuple(decisions),
                       d.get("classes", 10), quantized)


def _table_space(name: str, convs: int, fcs: int, filters, sizes, neurons, devices: int, classes: int):
    quant = {"w_int": list(range(4)), "w_frac": list(range(7)),
             "a_int": list(range(4)), "a_frac": list(range(7))}
    conv = {"type": "conv", "fh": list(sizes), "fw": list(sizes), "filters": list(filters), "pool": [0, 1]}
    fc = {"type": "fc", "neurons": list(neurons)}
    return space_from_dict({"name": name, "layers": [conv] * convs + [fc] * fcs,
                            "devices": devices, "classes": classes, **quant})


def rls_space(devices: int = 2, classes: int = 10) -> SearchSpace:
    """Resource-limited space: 6 conv + 2 dense layers."""
    return _table_space("rls", 6, 2, (24, 36, 48, 64), (1, 3, 5, 7), (64, 128, 256, 512), devices, classes)


def vls_space(devices: int = 2, classes: int = 10) -> SearchSpace:
    """VGG-like space: 8 conv + 3 dense layers."""
    return _table_space("vls", 8, 3, (128, 256, 512, 1024), (1, 3, 5, 7), (256, 512, 1024, 2048),
                        devices, classes)


def _values(candidate: Candidate, space: SearchSpace) -> list:
    """Concrete value of every decision of ``space`` for ``candidate``."""
    layers = candidate.arch.layers
    if len(layers) != len(space.skeleton):
        raise SearchSpaceError(f"candidate has {len(layers)} layers, space has {len(space.skeleton)}")
    out = []
    for d in space.decisions:
        if d.kind == "device":
            out.append(candidate.device_index)
            continue
        layer = layers[d.layer]
        if d.kind == "quant":
            if candidate.bits is None:
                raise SearchSpaceError("full-precision candidate in a quantized space")
            out.append(candidate.bits[d.layer][QUANT_FIELDS.index(d.field)])
        elif d.field == "fh":
            out.append(layer.filter_h)
        elif d.field == "fw":
            out.append(layer.filter_w)
        elif d.field == "filters":
            out.append(layer.num_filters)
        elif d.field == "pool":
            out.append(int(layer.pool))
        else:
            out.append(layer.neurons)
    return out


def encode(candidate: Candidate, space: SearchSpace) -> tuple[int, ...]:
    actions = []
    for t, (d, v) in enumerate(zip(space.decisions, _values(candidate, space))):
        try:
            actions.append(d.choices.index(v))
        except ValueError:
            raise SearchSpaceError(f"step {t} ({d.name}): value {v!r} not in {d.choices}") from None
    return tuple(actions)


def decode(actions: Sequence[int], space: SearchSpace) -> Candidate:
    if len(actions) != len(space.decisions):
        raise SearchSpaceError(f"expected {len(space.decisions)} actions, got {len(actions)}")
    fields: list[dict] = [{} for _ in space.skeleton]
    device = 0
    for t, (a, d) in enumerate(zip(actions, space.decisions)):
        if not 0 <= a < len(d.choices):
            raise SearchSpaceError(f"step {t} ({d.name}): action {a} outside [0, {len(d.choices)})")
        v = d.choices[a]
        if d.kind == "device":
            device = v
        else:
            fields[d.layer][d.field] = v
    layers, bits = [], []
    for kind, f in zip(space.skeleton, fields):
        if kind == "conv":
            layers.append(Conv(f["fh"], f["fw"], f["filters"], bool(f["pool"])))
        else:
            layers.append(FullyConnected(f["neurons"]))
        if space.quantized:
            bits.append(tuple(f[q] for q in QUANT_FIELDS))
    return Candidate(ArchitectureSpec(tuple(layers), space.classes),
                     tuple(bits) if space.quantized else None, device)


def space_size(space: SearchSpace) -> int:
    return math.prod(space.choice_counts)


def iter_actions(space: SearchSpace) -> Iterator[tuple[int, ...]]:
    """Every action sequence of the space, in lexicographic order."""
    return itertools.product(*(range(n) for n in space.choice_counts))
