import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from engramnet.engine import EpisodeConfig, Network, snapshot, store_sample
from engramnet.experiments import (
    ConfigError,
    ExperimentConfig,
    RestorationScheme,
    damage_network,
    derive_seed,
    load_network,
    perturb_cue,
    preset,
    records_to_csv,
    restore_table,
    run_capacity,
    run_experiment,
    run_fault_tolerance,
    run_robustness,
    run_structures,
    sample_stream,
    sidecar,
)
from engramnet.graph import DirectedGraph, GeneratorSpec, generate
from engramnet.node_core import ActivationTrace, IndexTable

A, B, C, D, X, Y, Z, U = range(8)


def tiny(kind="capacity", **kw):
    base = dict(
        kind=kind, generator={"kind": "er", "params": {"p": 0.08}}, n=60, s=5, samples=25,
        grid=[0.0, 0.5], seeds=[1, 2],
    )
    base.update(kw)
    return ExperimentConfig(**base)


# -- cue perturbation ---------------------------------------------------------------------


def test_perturb_examples():
    S = frozenset(range(60))
    rng = random.Random(0)
    assert perturb_cue(S, 0, 0, 200, rng) == S
    assert perturb_cue(S, 1, 0, 200, rng) == frozenset()
    mixed = perturb_cue(S, 0.5, 0.5, 200, rng)
    assert len(mixed & S) == 30 and len(mixed - S) == 30


def test_perturb_rejects_exhausted_universe():
    with pytest.raises(ValueError):
        perturb_cue(range(8), 0, 1.0, 10, random.Random(0))
    with pytest.raises(ValueError):
        perturb_cue(range(8), 1.2, 0, 10, random.Random(0))


@given(
    st.frozensets(st.integers(0, 99), min_size=1, max_size=40),
    st.floats(0, 1),
    st.floats(0, 1),
    st.integers(0, 2**32),
)
def test_perturb_cardinalities(S, missing, noise, seed):
    out = perturb_cue(S, missing, noise, 200, random.Random(seed))
    assert len(S - out) == int(missing * len(S))
    assert len(out - S) == int(noise * len(S))
    assert all(0 <= v < 200 for v in out)
    assert out == perturb_cue(S, missing, noise, 200, random.Random(seed))


@given(st.frozensets(st.integers(0, 99), max_size=40), st.integers(0, 2**32))
def test_perturb_identity(S, seed):
    assert perturb_cue(S, 0, 0, 100, random.Random(seed)) == S


# -- damage and restoration -----------------------------------------------------------------


def _table_example():
    return IndexTable(20, [
        ActivationTrace(frozenset({A, B, C}), frozenset({X, Y, Z}), 1),
        ActivationTrace(frozenset({B, C, D}), frozenset({U, X, Z}), 1),
    ])


@pytest.mark.parametrize(
    "scheme, expected",
    [
        (RestorationScheme.UNION, {X, Y, U}),
        (RestorationScheme.INTERSECTION, {X}),
    ],
)
def test_restoration_merges_colliding_traces(scheme, expected):
    t = _table_example()
    gone = {A, D, Z}
    restore_table(t, gone, gone, scheme)
    assert len(t) == 1
    (e,) = t.entries
    assert e.fan_in == frozenset({B, C})
    assert e.fan_out == frozenset(expected)
    assert e.strength == 2


def test_highest_frequency_keeps_strongest_then_earliest():
    t = IndexTable(20, [
        ActivationTrace(frozenset({A, B, C}), frozenset({X, Y, Z}), 1),
        ActivationTrace(frozenset({B, C, D}), frozenset({U, X, Z}), 3),
    ])
    restore_table(t, {A, D, Z}, {A, D, Z}, RestorationScheme.HIGHEST_FREQUENCY)
    assert [(e.fan_in, e.fan_out) for e in t.entries] == [(frozenset({B, C}), frozenset({U, X}))]
    t = _table_example()
    restore_table(t, {A, D, Z}, {A, D, Z}, RestorationScheme.HIGHEST_FREQUENCY)
    assert t.entries[0].fan_out == frozenset({X, Y})


def test_maintain_leaves_traces_untouched():
    g = DirectedGraph(8, [(A, X), (B, X), (C, X), (D, X), (X, Y), (X, Z), (X, U)])
    net = Network(g, 20)
    net.tables[X] = _table_example()
    rng = random.Random(0)
    while True:
        dmg = damage_network(net, "nodes", 0.375, "maintain", rng)
        if X not in dmg.removed_nodes:
            break
    assert dmg.network.tables[X] == _table_example()


def test_damage_fraction_zero_maintain_is_identity():
    net = Network(generate(GeneratorSpec("er", {"p": 0.05}, seed=4), 100), 20)
    rng = random.Random(1)
    for _ in range(30):
        store_sample(net, rng.sample(range(100), 8), EpisodeConfig())
    for target in ("nodes", "edges"):
        dmg = damage_network(net, target, 0.0, "maintain", random.Random(0))
        assert snapshot(dmg.network) == snapshot(net)
        assert not dmg.removed_nodes and not dmg.removed_edges


def test_damage_removes_expected_counts_and_keeps_original():
    net = Network(generate(GeneratorSpec("er", {"p": 0.05}, seed=4), 100), 20)
    rng = random.Random(3)
    for _ in range(30):
        store_sample(net, rng.sample(range(100), 8), EpisodeConfig())
    before = snapshot(net)
    dmg = damage_network(net, "nodes", 0.3, "union", random.Random(5))
    assert len(dmg.removed_nodes) == 30
    g = dmg.network.graph
    assert not any(u in dmg.removed_nodes or v in dmg.removed_nodes for u, v in g.edges())
    assert g.m == net.graph.m - len(dmg.removed_edges)
    for v in dmg.removed_nodes:
        assert len(dmg.network.tables[v]) == 0
    for t in dmg.network.tables:
        for e in t.entries:
            assert not (e.fan_in | e.fan_out) & dmg.removed_nodes
            assert e.fan_out
    dmg = damage_network(net, "edges", 0.25, "intersection", random.Random(5))
    assert len(dmg.removed_edges) == int(0.25 * net.graph.m)
    assert not dmg.removed_nodes
    assert snapshot(net) == before
    with pytest.raises(ValueError):
        damage_network(net, "wires", 0.1, "union", random.Random(0))
    with pytest.raises(ValueError):
        damage_network(net, "nodes", 0.1, "median", random.Random(0))


# -- configuration -----------------------------------------------------------------------------


@pytest.mark.parametrize(
    "bad",
    [
        dict(kind="nope"),
        dict(s=600),
        dict(n=0),
        dict(grid=[0.1, 1.5]),
        dict(seeds=[]),
        dict(engine={"H": 3.0}),
        dict(engine={"colour": 1}),
        dict(schemes=["median"]),
        dict(generator={"kind": "lattice"}),
        dict(generator={"kind": "er", "params": {"p": 2}}),
        dict(workers=0),
        dict(capacity_stride=0),
    ],
)
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(**bad)


def test_config_round_trip_and_presets():
    cfg = preset("sparse")
    assert cfg.n == 500 and cfg.s == 15 and cfg.samples == 1000
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        preset("huge")
    for name in ("dense", "sparse_desk", "dense_desk", "edge_sweep", "structures"):
        preset(name)


def test_derive_seed_is_stable_and_separates_streams():
    assert derive_seed(5, 1, 2) == derive_seed(5, 1, 2)
    assert len({derive_seed(5, 1, i) for i in range(100)}) == 100
    assert derive_seed(5, 1) != derive_seed(6, 1)


def test_sample_stream_prefix_stable():
    a = list(sample_stream(100, 10, 7, 20))
    b = list(sample_stream(100, 10, 7, 5))
    assert a[:5] == b
    assert all(len(set(nodes)) == 10 for nodes, _ in a)


# -- runners ----------------------------------------------------------------------------------


def test_capacity_fixed_records():
    rows = run_capacity(tiny())
    assert [r["seed"] for r in rows] == [1, 2]
    for r in rows:
        assert 0 <= r["mean_accuracy"] <= 1 and 0 <= r["mean_completeness"] <= 1
        assert r["samples"] == 25


def test_capacity_sweep_records():
    rows = run_capacity(tiny(p_grid=[0.05, 0.1], capacity_max_samples=40, seeds=[1]))
    assert [r["p"] for r in rows] == [0.05, 0.1]
    assert all("simple_bound" in r and r["capacity"] >= 0 for r in rows)


def test_fault_records_cover_grid():
    rows = run_fault_tolerance(tiny("fault"))
    assert len(rows) == 2 * 3 * 2
    for mode in ("missing", "noise", "mixed"):
        r0 = next(r for r in rows if r["seed"] == 1 and r["mode"] == mode and r["fraction"] == 0.0)
        plain = next(r for r in run_capacity(tiny()) if r["seed"] == 1)
        assert r0["mean_accuracy"] == pytest.approx(plain["mean_accuracy"])
        assert r0["mean_completeness"] == pytest.approx(plain["mean_completeness"])


def test_robustness_records_cover_grid():
    rows = run_robustness(tiny("robustness", seeds=[1]))
    assert len(rows) == 2 * 2 * 4
    at_zero = [r for r in rows if r["fraction"] == 0.0]
    # no damage: every scheme is the untouched network
    assert len({(r["mean_accuracy"], r["mean_completeness"]) for r in at_zero}) == 1


def test_structures_records():
    cfg = tiny(
        "structures", n=80, s=6, seeds=[0], capacity_max_samples=20,
        structures=[{"kind": "global"}, {"kind": "star"}, {"kind": "ring", "params": {"L": 2}}],
    )
    rows = run_structures(cfg)
    by = {r["topology"]: r for r in rows}
    assert by["global"]["clustering"] == 1.0 and by["global"]["path_length"] == 1.0
    assert by["star"]["clustering"] == 0.0


def test_load_network_matches_manual_storage():
    cfg = tiny()
    loaded = load_network(cfg, 1)
    assert len(loaded.samples) == len(loaded.subgraphs) == 25
    assert all(len(s) == 5 for s in loaded.samples)


@pytest.mark.parametrize("kind", ["capacity", "fault", "robustness"])
def test_rerun_gives_identical_csv(kind):
    cfg = tiny(kind, seeds=[3])
    a = records_to_csv(run_experiment(cfg))
    b = records_to_csv(run_experiment(cfg))
    assert a == b and "runtime_s" not in a.splitlines()[0]


def test_parallel_matches_serial():
    for kind in ("capacity", "fault"):
        serial = tiny(kind, seeds=[1, 2, 3])
        par = serial.replace(workers=2)
        assert records_to_csv(run_experiment(serial)) == records_to_csv(run_experiment(par))


def test_sidecar_records_seeds_and_mixing():
    cfg = tiny()
    doc = json.loads(sidecar(cfg, run_capacity(cfg)))
    assert doc["seeds"] == [1, 2]
    assert "SeedSequence" in doc["seed_mixing"]
    assert len(doc["runtime_s"]) == 2
    assert doc["config"]["engine"]["H"] == 0.6
