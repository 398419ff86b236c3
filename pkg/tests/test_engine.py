import bisect

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from helpers import CAND_A, CAND_B, SILENT, SOURCE, events, fixture, tx_table
from wbanima.channel import Position
from wbanima.engine import EventQueue, Simulator, build_topology, rng_stream, run_scenario
from wbanima.ima import NodeId
from wbanima.mac import FrameKind, make_frame
from wbanima.metrics import render_csv, render_json
from wbanima.scenario import SensorConfig, WbanConfig, default_scenario


# --------------------------------------------------------------- event queue

def test_queue_orders_by_time_then_insertion():
    q = EventQueue()
    q.schedule(5, "late")
    q.schedule(3, "first")
    q.schedule(3, "second")
    assert [q.pop_next().kind for _ in range(3)] == ["first", "second", "late"]
    assert q.pop_next() is None


def test_queue_rejects_the_past_and_skips_cancelled():
    q = EventQueue()
    q.schedule(10, "a")
    ev = q.schedule(12, "b")
    q.pop_next()
    with pytest.raises(RuntimeError):
        q.schedule(9, "back")
    ev.cancel()
    assert q.peek_time() is None


@given(st.lists(st.integers(0, 10 ** 6), max_size=60))
def test_queue_pops_sorted(times):
    q = EventQueue()
    for t in times:
        q.schedule(t, "x")
    out = []
    while (ev := q.pop_next()) is not None:
        out.append(ev.time)
    assert out == sorted(times)


# ------------------------------------------------------------- randomness

def test_rng_streams():
    assert (rng_stream(42, "x").random(5) == rng_stream(42, "x").random(5)).all()
    assert not (rng_stream(42, "x").random(5) == rng_stream(42, "y").random(5)).any()
    assert not (rng_stream(42, "x").random(5) == rng_stream(43, "x").random(5)).any()


def test_spectator_node_leaves_other_draws_alone():
    base = default_scenario(sensors_per_wban=4, n_wbans=2, seed=9)
    wbans = list(base.wbans)
    wbans[1] = WbanConfig(wbans[1].coordinator_position,
                          wbans[1].sensors + (SensorConfig(),), uses_ima=False)
    bigger = base.replace(wbans=tuple(wbans))
    small, large = build_topology(base), build_topology(bigger)
    assert len(large) == len(small) + 1
    assert all(large[nid] == pos for nid, pos in small.items())
    s1, s2 = Simulator(base), Simulator(bigger)
    for nid in small:
        n1, n2 = s1.by_id[nid], s2.by_id[nid]
        assert n1.rng_backoff.random() == n2.rng_backoff.random()
        assert n1.rng_timer.random() == n2.rng_timer.random()


# --------------------------------------------------------------- topology

def test_topology_explicit_positions_ignore_seed():
    sc = fixture([(SOURCE, 5.0), (CAND_A, 5.0)])
    assert build_topology(sc) == build_topology(sc.replace(seed=77))


def test_topology_random_layout_is_seeded():
    sc = default_scenario(seed=5)
    assert build_topology(sc) == build_topology(default_scenario(seed=5))
    assert build_topology(sc) != build_topology(default_scenario(seed=6))
    for pos in build_topology(sc).values():
        assert pos.within(sc.space)


def test_sensor_outside_space_rejected():
    with pytest.raises(ValueError):
        fixture([(Position(5.0, 0.0, 0.0), 5.0)])


# ------------------------------------------------------------------- runs

def test_half_second_gives_one_beacon_per_wban():
    sc = default_scenario(sensors_per_wban=2, duration=0.5, seed=3)
    report = run_scenario(sc, trace=True)
    beacons = events(report.trace, "beacon")
    assert sorted(info["wban"] for _, info in beacons) == [0, 1]


def test_no_sources_means_beacon_only():
    sc = fixture([(SOURCE, SILENT), (CAND_A, SILENT)], duration=0.5)
    trace = run_scenario(sc, trace=True).trace
    assert [i["kind"] for i in tx_table(trace).values()] == ["BEACON"]


def expected_packets(sc, period_s):
    # first packet at a seeded phase within one period, then one per period
    phase = int(rng_stream(sc.seed, "traffic/wban0/node1").integers(0, int(period_s * 1e9)))
    return (int(sc.duration * 1e9) - 1 - phase) // int(period_s * 1e9) + 1


def test_loss_free_link_delivers_everything():
    sc = fixture([(SOURCE, 2.0)], uses_ima=False, duration=61.0)
    stats = run_scenario(sc).wban_stats["wban0"]
    assert stats["generated"] == expected_packets(sc, 2.0)
    assert stats["delivered"] == stats["generated"]
    assert stats["dropped"] == 0


def test_loss_free_link_gains_nothing_from_ima():
    sc = fixture([(SOURCE, 2.0)], duration=61.0)
    with_ima = run_scenario(sc).final_sop(0)
    without = run_scenario(sc.with_subject_ima(False)).final_sop(0)
    assert with_ima == without == expected_packets(sc, 2.0)


def _exchanges(trace):
    tx = tx_table(trace)
    source = NodeId(0, 1)
    return tx, [i for i in tx.values() if i["src"] == source]


def test_two_candidates_one_winner_before_data():
    sc = fixture([(SOURCE, 5.0), (CAND_A, SILENT), (CAND_B, SILENT)], duration=12.0, seed=4)
    report = run_scenario(sc, trace=True)
    tx, sent = _exchanges(report.trace)
    kinds = [i["kind"] for i in sent]
    assert kinds.count("RTS") >= 2
    # each RTS is followed by exactly one WINNER and then DATA to that relay
    for k, info in enumerate(sent):
        if info["kind"] != "RTS":
            continue
        assert sent[k + 1]["kind"] == "WINNER"
        assert sent[k + 2]["kind"] == "DATA"
        winner = [i for _, i in events(report.trace, "winner") if i["source"] == info["src"]]
        assert sent[k + 2]["dst"] in {NodeId(0, 2), NodeId(0, 3)}
        assert winner
    stats = report.wban_stats["wban0"]
    assert stats["relayed"] == stats["generated"] and stats["fallbacks"] == 0


def test_all_candidates_filtered_falls_back_to_direct():
    sc = fixture([(SOURCE, 5.0), (CAND_A, SILENT), (CAND_B, SILENT)], duration=12.0,
                 seed=4, margin=1.0)
    report = run_scenario(sc, trace=True)
    tx, sent = _exchanges(report.trace)
    assert not [i for i in tx.values() if i["kind"] in ("CTS", "WINNER")]
    assert all(i["dst"] == NodeId(0, 0) for i in sent if i["kind"] == "DATA")
    stats = report.wban_stats["wban0"]
    assert stats["fallbacks"] == stats["generated"] == stats["direct"] > 0


def test_duplicate_data_counted_once():
    sim = Simulator(fixture([(SOURCE, SILENT)], uses_ima=False))
    agent, coord = sim.agents[0], sim.nodes[0]
    data = make_frame(FrameKind.DATA, NodeId(0, 1), coord.id, sim.mac, origin=NodeId(0, 1), seq=0)
    agent.on_frame(coord, data, None)
    agent.on_frame(coord, data, None)
    assert sim.recorder.sop_count[0] == 1


def test_same_scenario_twice_is_byte_identical():
    sc = default_scenario(sensors_per_wban=4, duration=30.0, seed=11)
    a, b = run_scenario(sc), run_scenario(sc)
    assert render_csv(a) == render_csv(b)
    assert render_json(a) == render_json(b)


# ----------------------------------------------------------- trace checks

def check_trace(report, sc):
    trace = report.trace
    times = [t for t, _, _ in trace]
    assert times == sorted(times)
    tx = tx_table(trace)
    sim = Simulator(sc)
    ends = {i["tx"]: t for t, i in events(trace, "tx-end")}
    for uid, info in tx.items():
        if uid in ends:
            assert ends[uid] - info["start"] == sim.airtime_ns[FrameKind(info["kind"])]
            assert ends[uid] == info["end"]
    by_src = {}
    for info in tx.values():
        by_src.setdefault(info["src"], []).append((info["start"], info["end"]))
    ordered = sorted(tx.values(), key=lambda o: o["start"])
    starts = [o["start"] for o in ordered]
    longest = max(sim.airtime_ns.values())
    for _, rx in events(trace, "rx"):
        me = tx[rx["tx"]]
        lo = bisect.bisect_left(starts, me["start"] - longest)
        hi = bisect.bisect_left(starts, me["end"])
        # every overlapping transmission from someone else was counted as interference
        expected = sorted(o["tx"] for o in ordered[lo:hi]
                          if o["tx"] != me["tx"] and o["src"] != rx["node"]
                          and o["start"] < me["end"] and o["end"] > me["start"])
        assert rx["interferers"] == expected
        # half duplex: the receiver was not transmitting during the frame
        for s, e in by_src.get(rx["node"], []):
            assert e <= me["start"] or s >= me["end"]


def test_trace_invariants_hall_minute():
    sc = default_scenario(duration=60.0, seed=2, baseline="cooperative")
    check_trace(run_scenario(sc, trace=True), sc)


@settings(max_examples=5, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 2 ** 32), st.sampled_from(["direct", "cooperative"]),
       st.integers(2, 8))
def test_trace_invariants_random_seeds(seed, baseline, sensors):
    sc = default_scenario(sensors_per_wban=sensors, duration=5.0, seed=seed, baseline=baseline)
    check_trace(run_scenario(sc, trace=True), sc)


def test_mobility_keeps_nodes_in_space():
    sc = default_scenario(sensors_per_wban=4, duration=5.0, seed=1, mobility=True)
    sim = Simulator(sc)
    sim.run()
    assert all(nd.position.within(sc.space) for nd in sim.nodes)
    assert sim.nodes[0].position == Position(0.5, 1.5, 1.0)
