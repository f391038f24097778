from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import ScalarReservoir
from tdreservoir import BACKENDS, GridTopology, Reservoir, ReservoirConfig
from tdreservoir.neuron import CurveParams
from tdreservoir.reservoir import ConfigError, input_frequency, write_state_dump

FAST = dict(input_step=3e-7)  # 30 micro-steps per input step keeps tests quick


def cfg(rows=4, cols=4, **kw):
    base = dict(topology=GridTopology(rows, cols), **FAST)
    base.update(kw)
    return ReservoirConfig(**base)


def test_connection_count_open_10x10():
    r = Reservoir(ReservoirConfig())
    assert r.n_connections == 360
    assert len(r.weight_assignment()) == 360


def test_toroidal_has_four_neighbors():
    r = Reservoir(ReservoirConfig(topology=GridTopology(5, 5, "toroidal")))
    assert np.all((r.nbr >= 0).sum(1) == 4)


def test_open_boundary_neighbor_counts():
    nb = GridTopology(4, 5).neighbor_slots()
    counts = (nb >= 0).sum(1).reshape(4, 5)
    assert counts[0, 0] == 2 and counts[0, 2] == 3 and counts[1, 1] == 4


def test_assignment_keys_are_grid_neighbors():
    r = Reservoir(cfg(3, 3))
    for (a, b) in r.weight_assignment().words:
        assert abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1


def test_zero_variation_gives_unit_factors():
    assert np.all(Reservoir(cfg()).factors == 1.0)


def test_variation_drawn_and_seeded():
    a = Reservoir(cfg(variation_std=0.3, seed=1))
    b = Reservoir(cfg(variation_std=0.3, seed=1))
    c = Reservoir(cfg(variation_std=0.3, seed=1, variation_seed=2))
    assert np.array_equal(a.factors, b.factors)
    assert not np.array_equal(a.factors, c.factors)
    # weights stay fixed when only the variation seed changes
    assert a.weight_assignment().words == c.weight_assignment().words


def test_same_seed_same_weight_file(tmp_path):
    p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
    Reservoir(cfg(seed=4)).weight_assignment().save(p1)
    Reservoir(cfg(seed=4)).weight_assignment().save(p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_initial_state():
    r = Reservoir(cfg())
    assert np.all(r.v == 0.5) and np.all(r.ph_p == 0) and np.all(r.cext_n == 0)


def test_input_frequency():
    assert input_frequency(1.0) == 2e6
    assert input_frequency(0.0) == 0.0
    assert input_frequency(0.5) == 1e6
    with pytest.raises(ValueError):
        input_frequency(1.2)


def test_bad_configs():
    with pytest.raises(ConfigError):
        ReservoirConfig(input_step=25e-9)
    with pytest.raises(ConfigError):
        ReservoirConfig(input_word=16)
    with pytest.raises(ValueError):
        GridTopology(0, 3)


def test_isolated_neuron_quiescent_counts():
    # one neuron, no neighbors, no input: v stays at rest and counters read
    # the closed-form period round(f_clk / f(0.5)) +- 1
    c = ReservoirConfig(topology=GridTopology(1, 1))
    r = Reservoir(c)
    x = r.run_sequence(np.zeros(3))
    assert np.all(r.v == 0.5)
    fp = r.curves.fire_pos_at(0.5)
    fn = r.curves.fire_neg_at(0.5)
    assert abs(r.cext_p[0] - 1e8 / fp) <= 1
    assert abs(r.cext_n[0] - 1e8 / fn) <= 1
    assert x[0, -1] == r.cext_n[0] - r.cext_p[0]


def test_zero_input_samples_equal_quiescent_baseline():
    r = Reservoir(ReservoirConfig(topology=GridTopology(1, 1)))
    s1 = r.run_input_step(0.0)
    s2 = r.run_input_step(0.0)
    assert np.array_equal(s1, s2)


def test_inhibitory_word15_edge_lowers_v():
    r = Reservoir(cfg(1, 2))
    r.nbr_row[0, :] = 31  # inhibitory word 15 on every slot of neuron 0
    r.edges[:] = 0
    r.edges[(r.steps & 1) ^ 1, 1] = 1  # neuron 1 fired in the previous step
    v0 = r.v[0]
    r.micro_step([0.0])
    assert r.v[0] < v0


def test_neighbor_events_bounded_by_degree():
    r = Reservoir(cfg(4, 4, curve_params=CurveParams(f_max=90e6, f_min=80e6)))
    deg = (r.nbr >= 0).sum(1)
    for _ in range(50):
        r.micro_step([0.0])
        e = r.last_edges()
        events = np.array([sum(e[j] for j in r.nbr[i] if j >= 0) for i in range(r.n_neurons)])
        assert np.all(events <= deg) and np.all(deg <= 4)


def test_sample_length_and_empty_sequence():
    r = Reservoir(ReservoirConfig(**FAST))
    assert r.run_input_step(1.0).shape == (100,)
    assert r.run_sequence(np.zeros(0)).shape == (100, 0)


def test_split_run_equals_one_shot():
    u = np.random.default_rng(0).integers(0, 2, 40).astype(float)
    a = Reservoir(cfg()).run_sequence(u)
    r = Reservoir(cfg())
    b = np.hstack([r.run_sequence(u[:17]), r.run_sequence(u[17:])])
    assert np.array_equal(a, b)


def test_single_vco_mode_reads_positive_counter_only():
    r = Reservoir(cfg(single_vco_mode=True))
    x = r.run_sequence(np.ones(5))
    assert np.all(r.cext_n == 0)
    assert np.array_equal(x[:, -1], -r.cext_p)


def test_consecutive_identical_inputs_differ_during_transient():
    r = Reservoir(ReservoirConfig(topology=GridTopology(4, 4)))
    a = r.run_input_step(1.0)
    b = r.run_input_step(1.0)
    assert not np.array_equal(a, b)


def test_constant_input_converges():
    r = Reservoir(ReservoirConfig(topology=GridTopology(4, 4)))
    X = r.run_sequence(np.full(40, 0.5)).astype(float)
    d = np.abs(np.diff(X, axis=1)).max(0)
    assert d[-10:].max() <= max(d[:5].max(), 2)
    assert d[-10:].max() <= 4


@pytest.mark.parametrize("backend", sorted(BACKENDS))
def test_backend_matches_scalar_oracle(backend):
    c = ReservoirConfig(topology=GridTopology(3, 3), input_step=2e-6, seed=2, variation_std=0.3,
                        curve_params=CurveParams(f_min=5e6, integ_amp=0.02))
    u = np.array([1, 0, 1, 1, 0.5, 0.25])
    got = Reservoir(c, backend=backend).run_sequence(u)
    ref = ScalarReservoir(Reservoir(c)).run(u)
    assert np.array_equal(got, ref)


def test_backends_bit_identical_full_state():
    c = ReservoirConfig(topology=GridTopology(5, 5), seed=3, variation_std=0.3, input_step=6e-6)
    u = np.random.default_rng(1).integers(0, 2, 20).astype(float)
    rs = {b: Reservoir(c, backend=b) for b in BACKENDS}
    xs = {b: r.run_sequence(u) for b, r in rs.items()}
    names = sorted(BACKENDS)
    for b in names[1:]:
        assert np.array_equal(xs[b], xs[names[0]])
        for attr in ("v", "ph_p", "ph_n", "cint_p", "cext_p", "cint_n", "cext_n", "edges"):
            assert np.array_equal(getattr(rs[b], attr), getattr(rs[names[0]], attr)), attr


@pytest.mark.parametrize("workers", [2, 3, 8, 64])
def test_worker_count_does_not_change_results(workers):
    c = cfg(6, 6, seed=5, input_step=3e-6)
    u = np.random.default_rng(2).integers(0, 2, 15).astype(float)
    assert np.array_equal(Reservoir(c, workers=1).run_sequence(u), Reservoir(c, workers=workers).run_sequence(u))


def test_multichannel_round_robin():
    r = Reservoir(cfg(3, 3, n_channels=4))
    assert r.chan.tolist() == [0, 1, 2, 3, 0, 1, 2, 3, 0]
    with pytest.raises(ValueError):
        r.run_input_step([1.0, 0.0])


@settings(max_examples=100)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=4), st.integers(0, 3))
def test_voltage_stays_in_range(us, seed):
    r = Reservoir(cfg(3, 3, seed=seed, input_step=1e-7, variation_std=0.3,
                      curve_params=CurveParams(integ_amp=0.2, word_exponent=1.0)))
    r.run_sequence(np.array(us))
    assert np.all((r.v >= 0.0) & (r.v <= 1.0))


def test_state_dump(tmp_path):
    r = Reservoir(cfg(2, 2))
    cn, cp = r.run_sequence_counts(np.ones(3))
    p = tmp_path / "s.csv"
    write_state_dump(p, cn, cp)
    lines = p.read_text().splitlines()
    assert lines[0] == "step,neuron_index,c_n,c_p,c"
    assert len(lines) == 1 + 3 * 4


def test_config_dict_roundtrip():
    c = cfg(seed=3, variation_std=0.2, curve_params=CurveParams(slope=7.0))
    assert ReservoirConfig.from_dict(c.to_dict()) == c
    assert replace(c, seed=4) != c


FROZEN_CFG = ReservoirConfig(
    topology=GridTopology(2, 3), input_step=1e-6, seed=7, sigma_max=2.5, input_word=9,
    curve_params=CurveParams(f_min=1e6, f_max=30e6, integ_amp=0.01, word_exponent=1.5, slope=10.0),
)
# produced once by the scalar oracle in tests/oracles.py
FROZEN_X = [
    [12, 27, 44, 69, 79, 83],
    [-7, -20, -30, -47, -65, -71],
    [-7, -13, -21, -27, -30, -40],
    [8, 19, 37, 60, 70, 79],
    [8, 16, 23, 32, 42, 52],
    [1, 3, 6, 12, 18, 27],
]


@pytest.mark.parametrize("backend", sorted(BACKENDS))
def test_frozen_state_matrix(backend):
    X = Reservoir(FROZEN_CFG, backend=backend).run_sequence(np.array([1, 0, 0.5, 1, 1, 0]))
    assert X.tolist() == FROZEN_X


def test_frozen_weight_words():
    text = Reservoir(FROZEN_CFG).weight_assignment().to_text().splitlines()
    assert text[:4] == ["# weights seed=7", "(1,0)->(0,0) excitatory 9",
                        "(0,1)->(0,0) excitatory 11", "(1,1)->(0,1) excitatory 3"]
