"""Discrete-event engine: scheduling, movement kinematics, messaging,
deployment, and run-to-run determinism."""

import numpy as np
import pytest

from swarical import SensorSpec, SimConfig, plan, run_simulation
from swarical.core import PlanError
from swarical.engine import Engine
from swarical.mesh import parse_obj, sample_surface, skateboard_obj
from swarical.noise import CalibrationCurve


@pytest.fixture(scope="module")
def small_plan():
    mesh = parse_obj(skateboard_obj(600, 200, 50))
    cloud = sample_surface(mesh, 30, seed=7)
    spec = SensorSpec(t_min=60, t_max=80, radius_r=25, fov_half_angle=90)
    deployment, _ = plan(cloud, 10, spec, seed=8)
    return deployment


class _NullPolicy:
    """Records callbacks without reacting; lets engine mechanics be
    observed in isolation."""

    def __init__(self):
        self.calls = []

    def on_deployed(self, agent):
        self.calls.append(("deployed", agent.id))

    def on_message(self, agent, sender_id, kind, payload):
        self.calls.append(("message", agent.id, sender_id, kind))

    def on_displaced(self, agent, delta, kind):
        self.calls.append(("displaced", agent.id, kind))

    def on_move_done(self, agent, kind):
        self.calls.append(("move_done", agent.id, kind))

    def on_timer(self, agent):
        self.calls.append(("timer", agent.id))


@pytest.fixture()
def bare_engine(small_plan):
    eng = Engine(small_plan, SimConfig(seed=0))
    eng.policy = _NullPolicy()
    return eng


class TestScheduling:
    def test_events_run_in_time_order(self, bare_engine):
        seen = []
        bare_engine.schedule(30.0, lambda: seen.append("late"))
        bare_engine.schedule(10.0, lambda: seen.append("early"))
        bare_engine.schedule(20.0, lambda: seen.append("mid"))
        bare_engine.run_until(100.0)
        assert seen == ["early", "mid", "late"]

    def test_simultaneous_events_keep_insertion_order(self, bare_engine):
        seen = []
        for name in ("a", "b", "c"):
            bare_engine.schedule(5.0, lambda n=name: seen.append(n))
        bare_engine.run_until(10.0)
        assert seen == ["a", "b", "c"]

    def test_rejects_past_scheduling(self, bare_engine):
        with pytest.raises(AssertionError):
            bare_engine.schedule(-1.0, lambda: None)

    def test_run_until_stops_at_horizon(self, bare_engine):
        seen = []
        bare_engine.schedule(50.0, lambda: seen.append("x"))
        bare_engine.run_until(40.0)
        assert seen == [] and bare_engine.now == 40.0


class TestMovement:
    def test_kinematics_timing_and_interpolation(self, bare_engine):
        agent = bare_engine.agents[0]
        agent.deployed = True
        bare_engine.start_move(agent, np.array([100.0, 0.0, 0.0]), "correction")
        # 100 mm at 1000 mm/s is 100 ms; halfway at 50 ms
        bare_engine.run_until(50.0)
        assert np.allclose(agent.position(50.0), agent.pos_from + [50.0, 0, 0])
        bare_engine.run_until(200.0)
        assert not agent.moving
        assert agent.odometer == pytest.approx(100.0)
        assert ("move_done", 0, "correction") in bare_engine.policy.calls

    def test_move_while_moving_queues(self, bare_engine):
        agent = bare_engine.agents[0]
        start = agent.pos_to.copy()
        bare_engine.start_move(agent, np.array([10.0, 0, 0]), "correction")
        bare_engine.start_move(agent, np.array([0.0, 10.0, 0]), "correction")
        bare_engine.run_until(1000.0)
        assert np.allclose(agent.pos_to, start + [10.0, 10.0, 0.0])
        assert agent.odometer == pytest.approx(20.0)

    def test_displacement_callback_reports_delta(self, bare_engine):
        agent = bare_engine.agents[3]
        bare_engine.start_move(agent, np.array([0.0, 0.0, 42.0]), "swarm_shift")
        bare_engine.run_until(1000.0)
        assert ("displaced", 3, "swarm_shift") in bare_engine.policy.calls


class TestMessaging:
    def test_delivery_after_latency(self, bare_engine):
        a, b = bare_engine.agents[0], bare_engine.agents[1]
        b.deployed = True
        bare_engine.send(a, 1, "ping", {})
        bare_engine.run_until(bare_engine.config.latency_ms - 1.0)
        assert ("message", 1, 0, "ping") not in bare_engine.policy.calls
        bare_engine.run_until(bare_engine.config.latency_ms + 1.0)
        assert ("message", 1, 0, "ping") in bare_engine.policy.calls

    def test_undeployed_recipient_drops_message(self, bare_engine):
        a = bare_engine.agents[0]
        bare_engine.send(a, 1, "ping", {})
        bare_engine.run_until(1000.0)
        assert all(c[0] != "message" for c in bare_engine.policy.calls)

    def test_broadcast_reaches_whole_swarm_except_sender(self, bare_engine):
        sender = bare_engine.agents[0]
        swarm = bare_engine.swarm_members[sender.record.swarm_id]
        for m in swarm:
            bare_engine.agents[m].deployed = True
        n = bare_engine.broadcast_swarm(sender, "pose", {})
        assert n == len(swarm) - 1
        bare_engine.run_until(1000.0)
        received = {c[1] for c in bare_engine.policy.calls if c[0] == "message"}
        assert received == set(swarm) - {0}

    def test_message_counter(self, bare_engine):
        bare_engine.send(bare_engine.agents[0], 1, "ping", {})
        assert bare_engine.counters["messages"] == 1


class TestTimers:
    def test_reset_supersedes_previous_timer(self, bare_engine):
        agent = bare_engine.agents[0]
        bare_engine.reset_timer(agent)
        bare_engine.run_until(100.0)
        bare_engine.reset_timer(agent)  # restart before the first fires
        bare_engine.run_until(10_000.0)
        fires = [c for c in bare_engine.policy.calls if c[0] == "timer"]
        assert len(fires) == 1

    def test_cancel_suppresses_timer(self, bare_engine):
        agent = bare_engine.agents[0]
        bare_engine.reset_timer(agent)
        bare_engine.cancel_timer(agent)
        bare_engine.run_until(10_000.0)
        assert all(c[0] != "timer" for c in bare_engine.policy.calls)


class TestDeployment:
    def test_staggered_launches_and_arrivals(self, small_plan):
        cfg = SimConfig(seed=1, run_ms=60_000, noise={"curve": "zero"})
        eng = run_simulation(small_plan, cfg)
        assert all(a.deployed for a in eng.agents)
        launches = {e["id"]: e["t"] for e in eng.log if e["ev"] == "deploy"}
        for aid, t in launches.items():
            assert t == pytest.approx(aid * cfg.deploy_interval_ms)

    def test_zero_dr_lands_exactly_on_targets(self, small_plan):
        cfg = SimConfig(seed=1, run_ms=60_000, dr_epsilon_deg=0.0, noise={"curve": "zero"})
        eng = run_simulation(small_plan, cfg)
        for a in eng.agents:
            assert np.allclose(a.pos_to, a.coordinate)

    def test_custom_dispatcher_origin(self, small_plan):
        cfg = SimConfig(seed=1, dispatcher_origin=[1.0, 2.0, 3.0])
        eng = Engine(small_plan, cfg)
        assert np.allclose(eng.dispatcher_origin(), [1.0, 2.0, 3.0])

    def test_default_dispatcher_is_bounding_box_corner(self, small_plan):
        eng = Engine(small_plan, SimConfig(seed=1))
        assert np.allclose(eng.dispatcher_origin(), eng.coords.min(axis=0))


class TestDeterminism:
    def test_identical_seeds_identical_series(self, small_plan):
        cfg = lambda: SimConfig(seed=42, run_ms=20_000, dr_epsilon_deg=5.0)
        a = run_simulation(small_plan, cfg())
        b = run_simulation(small_plan, cfg())
        assert a.recorder.to_csv() == b.recorder.to_csv()

    def test_different_seeds_differ(self, small_plan):
        a = run_simulation(small_plan, SimConfig(seed=1, run_ms=20_000, dr_epsilon_deg=5.0))
        b = run_simulation(small_plan, SimConfig(seed=2, run_ms=20_000, dr_epsilon_deg=5.0))
        assert a.recorder.to_csv() != b.recorder.to_csv()

    def test_metric_sampling_cadence(self, small_plan):
        eng = run_simulation(small_plan, SimConfig(seed=3, run_ms=10_000, noise={"curve": "zero"}))
        times = [s.t_ms for s in eng.recorder.samples]
        assert times == [i * 500.0 for i in range(21)]


class TestSimConfig:
    def test_json_round_trip(self):
        cfg = SimConfig(seed=9, technique="RSF", latency_ms=12.5)
        assert SimConfig.from_json(cfg.to_json()) == cfg

    def test_rejects_unknown_keys(self):
        with pytest.raises(PlanError):
            SimConfig.from_json('{"sneed": 1}')

    def test_rejects_unknown_technique(self):
        with pytest.raises(PlanError):
            SimConfig.from_json('{"technique": "XYZ"}')

    def test_noise_model_specs(self):
        zero = SimConfig(noise={"curve": "zero"}).noise_model()
        assert zero.relative_sd_div == 0.0
        flat = SimConfig(noise={"curve": "flat:1.5"}).noise_model()
        assert flat.curve.breakpoints[0][1] == 1.5
        custom = SimConfig(
            noise={"curve": {"breakpoints": [[1.0, 2.0], [10.0, 3.0]], "d_lo": 1.0, "d_hi": 10.0}}
        ).noise_model()
        assert isinstance(custom.curve, CalibrationCurve)
        with pytest.raises(PlanError):
            SimConfig(noise={"curve": "bogus"}).noise_model()
        with pytest.raises(PlanError):
            SimConfig(noise={"wat": 1}).noise_model()

    def test_latency_range_draws_within_bounds(self, small_plan):
        eng = Engine(small_plan, SimConfig(latency_ms=[10.0, 20.0]))
        draws = [eng.latency() for _ in range(100)]
        assert all(10.0 <= d <= 20.0 for d in draws)
