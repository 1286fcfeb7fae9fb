import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cimnas.nn import Conv, FullyConnected, ShapeError, build_network
from cimnas.quant import QuantizationError
from cimnas.space import (NACIM_HW_ROWS, NACIM_SW_ROWS, Candidate, SearchSpaceError, candidate_from_table,
                          decode, encode, iter_actions, rls_space, space_from_dict, space_size, vls_space)

RLS = rls_space()
VLS = vls_space()


def test_rls_sequence_length():
    # 6 conv layers x (4 arch + 4 quant) + 2 dense x (1 + 4) + device
    assert len(RLS) == 59
    assert RLS.skeleton == ("conv",) * 6 + ("fc",) * 2


def test_vls_shape_and_filters():
    assert len(VLS.skeleton) == 11
    filters = {d.choices for d in VLS.decisions if d.field == "filters"}
    assert filters == {(128, 256, 512, 1024)}
    assert space_size(VLS) > space_size(RLS)


def test_rls_choice_lists():
    by_field = {}
    for d in RLS.decisions:
        by_field.setdefault(d.field, set()).add(d.choices)
    assert by_field["fh"] == {(1, 3, 5, 7)}
    assert by_field["filters"] == {(24, 36, 48, 64)}
    assert by_field["neurons"] == {(64, 128, 256, 512)}
    assert by_field["w_int"] == {(0, 1, 2, 3)}
    assert by_field["a_frac"] == {tuple(range(7))}
    assert by_field["device"] == {(0, 1)}


def test_round_trip_fuzz():
    rng = np.random.default_rng(0)
    counts = np.array(RLS.choice_counts)
    for _ in range(10_000):
        actions = tuple(int(a) for a in rng.integers(0, counts))
        assert encode(decode(actions, RLS), RLS) == actions


@given(st.data())
def test_round_trip_vls(data):
    actions = tuple(data.draw(st.integers(0, n - 1)) for n in VLS.choice_counts)
    cand = decode(actions, VLS)
    assert encode(cand, VLS) == actions
    assert Candidate.from_dict(cand.to_dict()) == cand


def test_all_zero_actions_give_smallest_candidate():
    cand = decode((0,) * len(RLS), RLS)
    for layer in cand.arch.layers[:6]:
        assert (layer.filter_h, layer.filter_w, layer.num_filters, layer.pool) == (1, 1, 24, False)
    assert [l.neurons for l in cand.arch.layers[6:]] == [64, 64]
    assert cand.bits == ((0, 0, 0, 0),) * 8
    assert cand.device_index == 0


@pytest.mark.parametrize("table", [NACIM_HW_ROWS, NACIM_SW_ROWS])
def test_reference_table_round_trip(table):
    cand = candidate_from_table(table)
    assert [tuple(r[:1]) + tuple(r[4:]) for r in cand.table()] == [tuple(r[:1]) + tuple(r[4:]) for r in table]
    assert cand.table()[:6] == [tuple(r) for r in table[:6]]
    assert encode(cand, RLS) is not None
    assert decode(encode(cand, RLS), RLS) == cand


def test_space_size_matches_enumeration():
    small = space_from_dict({
        "layers": [{"type": "conv", "fh": [1, 3], "fw": [3], "filters": [4, 8, 16]},
                   {"type": "fc", "neurons": [8, 16]}],
        "w_int": [0, 1], "w_frac": [2], "a_int": [1], "a_frac": [0, 3], "devices": 2,
    })
    seqs = list(iter_actions(small))
    assert len(seqs) == space_size(small) == (2 * 3 * 2) * (2 * 2) * 2 * (2 * 2) * 2
    assert len({decode(s, small) for s in seqs}) == len(seqs)


def test_out_of_range_action_names_step():
    actions = [0] * len(RLS)
    actions[9] = 4  # conv1.fh has 4 choices
    with pytest.raises(SearchSpaceError, match="step 9"):
        decode(actions, RLS)
    with pytest.raises(SearchSpaceError, match="step 0"):
        decode([-1] + [0] * (len(RLS) - 1), RLS)


def test_wrong_length_rejected():
    with pytest.raises(SearchSpaceError):
        decode((0,) * (len(RLS) - 1), RLS)


def test_encode_rejects_value_outside_space():
    cand = decode((0,) * len(RLS), RLS)
    bad = Candidate(cand.arch, ((5, 0, 0, 0),) + cand.bits[1:], 0)
    with pytest.raises(SearchSpaceError, match="w_int"):
        encode(bad, RLS)


def test_full_precision_space_decodes_without_bits():
    fp = RLS.full_precision()
    assert len(fp) == 6 * 4 + 2 + 1
    cand = decode((0,) * len(fp), fp)
    assert cand.bits is None and cand.scheme() is None


def test_rls_architecture_only_size():
    # three 4-way conv fields and a pool flag per conv layer, then two 4-way fc widths
    arch = RLS.full_precision()
    no_device = arch._rebuild([d for d in arch.decisions if d.kind != "device"], quantized=False)
    assert space_size(no_device) == 4 ** 18 * 2 ** 6 * 4 ** 2


def test_fixed_collapses_choices():
    cand = candidate_from_table(NACIM_HW_ROWS)
    pinned = RLS.fixed(cand, ["arch", "device"])
    assert pinned.kinds() == {"quant"}
    assert decode([0] * len(pinned), pinned).arch == cand.arch


@given(st.data())
def test_decoded_candidates_build_or_are_flagged(data):
    actions = tuple(data.draw(st.integers(0, n - 1)) for n in RLS.choice_counts)
    cand = decode(actions, RLS)
    try:
        scheme = cand.scheme()
        build_network(cand.arch, (3, 32, 32), 0)
    except (ShapeError, QuantizationError):
        return
    assert len(scheme) == len(cand.arch.layers) + 1


def test_output_layer_inherits_last_formats():
    cand = candidate_from_table(NACIM_SW_ROWS)
    s = cand.scheme()
    assert s.qw[-1] == s.qw[-2] and s.qa[-1] == s.qa[-2]


def test_table_rows_use_none_for_dense_fields():
    cand = candidate_from_table(NACIM_HW_ROWS)
    assert isinstance(cand.arch.layers[0], Conv)
    assert isinstance(cand.arch.layers[6], FullyConnected)
    assert cand.table()[6] == (256, None, None, None, 3, 5, 1, 3)


def test_to_dict_round_trip():
    again = space_from_dict(RLS.to_dict())
    assert again.choice_counts == RLS.choice_counts
    assert [d.name for d in again.decisions] == [d.name for d in RLS.decisions]
