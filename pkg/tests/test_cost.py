import math

import numpy as np
import pytest

from cimnas.cost import (CostModelError, SynapticArray, TechnologyParams, design_area, estimate_chip_metrics,
                         estimate_layer_metrics, evaluate_hardware, exhaustive_circuit, map_layer, map_network, noc_hops,
                         optimize_circuit, pe_grid, tile_grid)
from cimnas.devices import default_library, devices_per_weight
from cimnas.nn import Conv, FullyConnected, Output
from cimnas.quant import FixedPointFormat, QuantizationScheme, weight_data_bits
from cimnas.space import NACIM_SW_ROWS, candidate_from_table

from oracles import arrays_by_placement, ceil_div

S14 = FixedPointFormat(1, 4)


def default_dev():
    return default_library()[0]


def random_layer(rng):
    c, h = int(rng.integers(1, 5)), int(rng.integers(3, 9))
    if rng.random() < 0.5:
        k = int(rng.choice([1, 3]))
        return Conv(k, k, int(rng.integers(1, 40)), bool(rng.integers(2))), (c, h, h)
    return FullyConnected(int(rng.integers(1, 40))), (c, h, h)


def random_net(rng, n_conv=2, classes=4):
    layers = [Conv(int(rng.choice([1, 3])), int(rng.choice([1, 3])), int(rng.integers(2, 33)), bool(rng.integers(2)))
              for _ in range(n_conv)]
    layers.append(FullyConnected(int(rng.integers(4, 65))))
    return tuple(layers) + (Output(classes),)


def random_quant(rng, n):
    return QuantizationScheme.from_bits([tuple(int(v) for v in rng.integers(0, [4, 7, 4, 7]) + [0, 0, 0, 1])
                                         for _ in range(n)])


# -- mapping -----------------------------------------------------------------

def test_conv_example():
    m = map_layer(Conv(3, 3, 64), (48, 16, 16), FixedPointFormat(0, 3), default_dev())
    assert (m.rows_used, m.cols_used, m.arrays_needed) == (432, 128, 14)


def test_fc_fits_one_array_unsigned():
    m = map_layer(FullyConnected(10), (16,), FixedPointFormat(0, 4, signed=False), default_dev())
    assert m.arrays_needed == 1


def test_crossing_device_boundary_doubles_columns():
    dev = default_dev()
    a = map_layer(Conv(3, 3, 8), (4, 8, 8), FixedPointFormat(1, 2), dev)  # 4 data bits -> 1 cell
    b = map_layer(Conv(3, 3, 8), (4, 8, 8), FixedPointFormat(3, 4), dev)  # 8 data bits -> 2 cells
    assert b.cols_used == 2 * a.cols_used


def test_mapping_matches_cell_placement():
    rng = np.random.default_rng(7)
    lib = default_library()
    array = SynapticArray(16, 16)
    for _ in range(50):
        layer, shape = random_layer(rng)
        dev = lib[int(rng.integers(len(lib)))]
        if rng.random() < 0.3:
            fmt = FixedPointFormat(int(rng.integers(0, 4)), int(rng.integers(1, 7)), signed=False)
        else:
            fmt = FixedPointFormat(int(rng.integers(0, 4)), int(rng.integers(0, 7)))
        m = map_layer(layer, shape, fmt, dev, array)
        dpw = devices_per_weight(weight_data_bits(fmt), dev)
        rows = shape[0] * layer.filter_h * layer.filter_w if isinstance(layer, Conv) else math.prod(shape)
        outs = layer.num_filters if isinstance(layer, Conv) else layer.neurons
        assert m.arrays_needed == arrays_by_placement(rows, outs, dpw, fmt.signed, array.rows, array.cols)
        assert m.arrays_needed == ceil_div(m.rows_used, 16) * ceil_div(m.cols_used, 16)


def test_bigger_network_never_needs_fewer_arrays():
    rng = np.random.default_rng(3)
    dev = default_dev()
    for _ in range(30):
        net = random_net(rng)
        wider = tuple(Conv(l.filter_h, l.filter_w, l.num_filters * 2, l.pool) if isinstance(l, Conv) else l
                      for l in net)
        q = random_quant(rng, len(net))
        small = sum(m.arrays_needed for m in map_network(net, q, dev, input_shape=(3, 8, 8)))
        big = sum(m.arrays_needed for m in map_network(wider, q, dev, input_shape=(3, 8, 8)))
        assert big >= small


# -- layer metrics -----------------------------------------------------------

def test_halving_act_bits_halves_latency():
    m = map_layer(Conv(3, 3, 16), (8, 8, 8), S14, default_dev())
    tech = TechnologyParams()
    l8 = estimate_layer_metrics(m, FixedPointFormat(4, 4, signed=False), tech, default_dev())
    l4 = estimate_layer_metrics(m, FixedPointFormat(2, 2, signed=False), tech, default_dev())
    assert l8.latency_ns == 2 * l4.latency_ns


def test_layer_metrics_by_hand():
    # one 64x64 array, 4 positions, 4 act bits, 18 rows x 16 cols
    dev = default_dev()
    m = map_layer(Conv(3, 3, 8), (2, 2, 2), FixedPointFormat(1, 2), dev)
    assert (m.rows_used, m.cols_used, m.arrays_needed, m.input_positions) == (18, 16, 1, 4)
    tech = TechnologyParams()
    lm = estimate_layer_metrics(m, FixedPointFormat(2, 2, signed=False), tech, dev)
    adcs = 64 / 16
    groups = math.ceil(16 / adcs)
    assert lm.latency_ns == 4 * 4 * groups / 1.0
    i_mean = (dev.current_min + dev.current_max) / 2
    per_phase = 18 * 0.02 + 18 * 16 * 0.0005 * i_mean + 16 * (0.4 + 0.05)
    assert lm.energy_pj == pytest.approx(4 * 4 * per_phase, rel=1e-12)
    assert lm.area_um2 == pytest.approx(64 * 64 * 0.2 + 64 * 6.0 + 4 * (1000.0 + 150.0), rel=1e-12)


def test_zero_layer_network_is_all_zero():
    design = optimize_circuit((Conv(1, 1, 4), Output(2)), None, default_dev(), input_shape=(1, 4, 4))
    assert estimate_chip_metrics(design, (), None).to_dict() == dict.fromkeys(
        ("latency_ns", "energy_pj", "area_um2", "edp_pj_ns", "throughput_tops", "efficiency_tops_per_w"), 0.0)


# -- chip metrics ------------------------------------------------------------

def test_edp_identity_exact_on_random_designs():
    rng = np.random.default_rng(11)
    for _ in range(100):
        net = random_net(rng, n_conv=int(rng.integers(1, 4)))
        q = random_quant(rng, len(net))
        _, m = evaluate_hardware(net, q, default_dev(), input_shape=(3, 16, 16))
        assert m.edp_pj_ns == m.energy_pj * m.latency_ns
        assert min(m.to_dict().values()) > 0
        assert m.efficiency_tops_per_w == pytest.approx(m.throughput_tops / (m.energy_pj / m.latency_ns * 1e-3))


def _bumped(q: QuantizationScheme, which: str, i: int) -> QuantizationScheme:
    qa, qw = list(q.qa), list(q.qw)
    if which == "act":
        qa[i] = FixedPointFormat(qa[i].int_bits, qa[i].frac_bits + 1, signed=False)
    else:
        qw[i] = FixedPointFormat(qw[i].int_bits, qw[i].frac_bits + 1, signed=True)
    return QuantizationScheme(tuple(qa), tuple(qw))


@pytest.mark.parametrize("which", ["act", "weight"])
def test_monotone_in_bits(which):
    rng = np.random.default_rng(5 if which == "act" else 6)
    dev = default_dev()
    for _ in range(100):
        net = random_net(rng, n_conv=int(rng.integers(1, 4)))
        q = random_quant(rng, len(net))
        i = int(rng.integers(len(net)))
        _, base = evaluate_hardware(net, q, dev, input_shape=(3, 16, 16))
        _, more = evaluate_hardware(net, _bumped(q, which, i), dev, input_shape=(3, 16, 16))
        assert more.area_um2 >= base.area_um2
        assert more.latency_ns >= base.latency_ns
        assert more.energy_pj >= base.energy_pj


def test_monotone_in_width():
    rng = np.random.default_rng(8)
    dev = default_dev()
    for _ in range(100):
        net = random_net(rng, n_conv=int(rng.integers(1, 4)))
        q = random_quant(rng, len(net))
        i = int(rng.integers(len(net) - 1))
        layer = net[i]
        wide = (Conv(layer.filter_h, layer.filter_w, layer.num_filters + 8, layer.pool) if isinstance(layer, Conv)
                else FullyConnected(layer.neurons + 8))
        wider = net[:i] + (wide,) + net[i + 1:]
        _, base = evaluate_hardware(net, q, dev, input_shape=(3, 16, 16))
        _, more = evaluate_hardware(wider, q, dev, input_shape=(3, 16, 16))
        assert more.area_um2 >= base.area_um2
        assert more.latency_ns >= base.latency_ns
        assert more.energy_pj >= base.energy_pj


def test_energy_scales_linearly_with_coefficients():
    cand = candidate_from_table(NACIM_SW_ROWS)
    tech = TechnologyParams()
    design = optimize_circuit(cand.arch, cand.scheme(), default_dev(), tech)
    e1 = estimate_chip_metrics(design, cand.arch, cand.scheme(), tech).energy_pj
    e3 = estimate_chip_metrics(design, cand.arch, cand.scheme(), tech.scaled_energy(3.0)).energy_pj
    assert e3 == pytest.approx(3.0 * e1, rel=1e-12)


def test_hops_grow_with_demand():
    tech = TechnologyParams()
    hops = [noc_hops(d, tech) for d in range(1, 500)]
    assert hops == sorted(hops) and hops[0] == 1.0


def test_identical_designs_identical_metrics():
    cand = candidate_from_table(NACIM_SW_ROWS)
    a = evaluate_hardware(cand.arch, cand.scheme(), default_dev())
    b = evaluate_hardware(cand.arch, cand.scheme(), default_dev())
    assert a == b


# -- circuit optimisation ----------------------------------------------------

def test_optimizer_matches_exhaustive_grid():
    rng = np.random.default_rng(2)
    dev = default_dev()
    for _ in range(15):
        net = random_net(rng, n_conv=1)
        q = random_quant(rng, len(net))
        assert optimize_circuit(net, q, dev, input_shape=(3, 16, 16)) == \
            exhaustive_circuit(net, q, dev, input_shape=(3, 16, 16))
    cand = candidate_from_table(NACIM_SW_ROWS)
    assert optimize_circuit(cand.arch, cand.scheme(), dev) == exhaustive_circuit(cand.arch, cand.scheme(), dev)


def test_design_covers_demand_and_is_minimal():
    rng = np.random.default_rng(9)
    dev = default_dev()
    tech = TechnologyParams()
    tiles, pes = set(tile_grid()), set(pe_grid())
    for _ in range(20):
        net = random_net(rng, n_conv=3)
        q = random_quant(rng, len(net))
        d = optimize_circuit(net, q, dev, input_shape=(3, 16, 16))
        demand = sum(m.arrays_needed for m in map_network(net, q, dev, input_shape=(3, 16, 16)))
        assert d.capacity >= demand
        dims = [d.tiles.M, d.tiles.N, d.pes.P, d.pes.Q]
        for k in range(4):
            smaller = list(dims)
            smaller[k] -= 1
            on_grid = tuple(smaller[:2]) in tiles and tuple(smaller[2:]) in pes
            covers = math.prod(smaller) * tech.arrays_per_pe >= demand
            assert not (on_grid and covers)


def test_fourteen_arrays_need_four_pes():
    dev = default_dev()
    net = (Conv(3, 3, 64), Output(2))
    q = QuantizationScheme.uniform(2, "s0.3", "u1.3")
    demand = sum(m.arrays_needed for m in map_network(net, q, dev, input_shape=(48, 4, 4)))
    d = optimize_circuit(net, q, dev, input_shape=(48, 4, 4))
    assert demand >= 14
    assert d.tiles.M * d.tiles.N * d.pes.P * d.pes.Q >= 4


def test_empty_architecture_rejected():
    with pytest.raises(CostModelError):
        optimize_circuit((), None, default_dev())


def test_design_area_grows_with_every_dimension():
    tech, arr = TechnologyParams(), SynapticArray()
    base = design_area(2, 2, 2, 2, 1024, 64, tech, arr)
    for k in range(4):
        dims = [2, 2, 2, 2]
        dims[k] += 1
        assert design_area(*dims, 1024, 64, tech, arr) > base


def test_technology_ini_round_trip(tmp_path):
    tech = TechnologyParams(adc_pj=0.7, cols_per_adc=8)
    tech.dump(tmp_path / "t.ini")
    assert TechnologyParams.load(tmp_path / "t.ini") == tech


def test_technology_rejects_nonpositive_and_unknown():
    with pytest.raises(CostModelError):
        TechnologyParams(adc_pj=0.0)
    with pytest.raises(CostModelError):
        TechnologyParams.from_dict({"warp_factor": 9})


def test_bundled_preset_is_default():
    from importlib import resources
    path = resources.files("cimnas.presets").joinpath("technology_32nm.ini")
    assert TechnologyParams.load(path) == TechnologyParams()
