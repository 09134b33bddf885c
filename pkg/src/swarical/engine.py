"""Deterministic discrete-event simulation substrate.

Virtual clock, seeded per-agent RNG streams, message delivery with
latency, linear-kinematics movement with an odometer, and resettable
idle timers.  Event order is the total order (time, sequence number), so
identical inputs and seeds replay to identical logs on any host.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np

from .core import DeploymentPlan, PlanError, PointCloud
from .metrics import MetricRecorder
from .noise import (
    CalibrationCurve,
    NoiseModel,
    default_curve,
    deploy_with_dead_reckoning,
    flat_curve,
)

IDLE_TIMER_MS = 500.0


@dataclass
class SimConfig:
    seed: int = 0
    speed_mm_s: float = 1000.0
    latency_ms: float = 25.0
    threshold_mm: float = 1.0
    run_ms: float = 60_000.0
    technique: str = "ISR"
    metric_sample_ms: float = 500.0
    # minimum gap between an agent's localization cycles, modeling the
    # sensing + processing time of one measurement (0 disables the gap)
    cycle_interval_ms: float = 100.0
    dr_epsilon_deg: float = 0.0
    deploy_interval_ms: float = 50.0
    dispatcher_origin: Optional[list] = None  # None: bounding-box bottom corner
    fov_gating: bool = True
    log_messages: bool = False
    log_corrections: bool = False
    noise: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    @staticmethod
    def from_json(text: str) -> "SimConfig":
        doc = json.loads(text)
        known = {f for f in SimConfig.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise PlanError(f"unknown config keys: {sorted(unknown)}")
        cfg = SimConfig(**doc)
        if cfg.technique not in ("HC", "ISR", "RSF"):
            raise PlanError(f"unknown technique {cfg.technique!r}")
        return cfg

    def noise_model(self) -> NoiseModel:
        spec = dict(self.noise)
        curve = spec.pop("curve", "default")
        if isinstance(curve, CalibrationCurve):
            pass
        elif curve == "default":
            curve = default_curve()
        elif curve == "zero":
            curve = flat_curve(0.0, d_lo=1e-6, d_hi=1e15)
            spec.setdefault("relative_sd_div", 0.0)
        elif isinstance(curve, str) and curve.startswith("flat:"):
            curve = flat_curve(float(curve.split(":", 1)[1]))
        elif isinstance(curve, dict):
            curve = CalibrationCurve(
                tuple(tuple(bp) for bp in curve["breakpoints"]),
                d_lo=curve["d_lo"],
                d_hi=curve["d_hi"],
            )
        else:
            raise PlanError(f"bad noise curve spec {curve!r}")
        kwargs = {}
        if "relative_sd_div" in spec:
            kwargs["relative_sd_div"] = spec.pop("relative_sd_div")
        if "orientation_sigma_deg" in spec:
            kwargs["orientation_sigma_deg"] = tuple(spec.pop("orientation_sigma_deg"))
        if spec:
            raise PlanError(f"unknown noise config keys: {sorted(spec)}")
        return NoiseModel(curve=curve, **kwargs)


class Agent:
    """Mutable per-FLS simulation state."""

    __slots__ = (
        "id", "record", "coordinate", "rng",
        "pos_from", "pos_to", "move_t0", "move_t1", "moving", "move_kind",
        "move_queue", "relocalize_after",
        "odometer", "moves_count", "deployed",
        "pose_table", "member_corr", "last_corr", "last_corr_len",
        "timer_gen", "pending_localize", "next_cycle_ms",
        "inter_pending", "last_notify_ms",
    )

    def __init__(self, record, rng):
        self.id = record.id
        self.record = record
        self.coordinate = record.coordinate.to_array()
        self.rng = rng
        self.pos_from = self.coordinate.copy()
        self.pos_to = self.coordinate.copy()
        self.move_t0 = 0.0
        self.move_t1 = 0.0
        self.moving = False
        self.move_kind = ""
        self.move_queue: list = []
        self.relocalize_after = False
        self.odometer = 0.0
        self.moves_count = 0
        self.deployed = False
        self.pose_table: dict = {}
        self.member_corr: dict = {}
        self.last_corr = None
        self.last_corr_len = None
        self.timer_gen = 0
        self.pending_localize = False
        self.next_cycle_ms = 0.0
        self.inter_pending = False
        self.last_notify_ms: dict = {}

    def position(self, t: float) -> np.ndarray:
        if not self.moving or t >= self.move_t1:
            return self.pos_to
        if t <= self.move_t0 or self.move_t1 <= self.move_t0:
            return self.pos_from
        a = (t - self.move_t0) / (self.move_t1 - self.move_t0)
        return self.pos_from + a * (self.pos_to - self.pos_from)


class Engine:
    """Event queue plus agent bookkeeping.  A policy object (see
    policies module) supplies the per-agent behavior callbacks."""

    def __init__(self, plan: DeploymentPlan, config: SimConfig):
        self.plan = plan
        self.config = config
        self.noise_model = config.noise_model()
        self.now = 0.0
        self._seq = 0
        self._heap: list = []
        self.log: list = []
        self.counters = {
            "messages": 0,
            "detection_failures": 0,
            "inter_localizations": 0,
            "dropped_notifies": 0,
        }

        root_seq = np.random.SeedSequence(config.seed)
        streams = root_seq.spawn(len(plan.fls_records) + 1)
        self.net_rng = np.random.default_rng(streams[-1])
        self.agents = [
            Agent(r, np.random.default_rng(streams[r.id]))
            for r in plan.fls_records
        ]
        self.swarm_members: dict = {}
        for r in plan.fls_records:
            self.swarm_members.setdefault(r.swarm_id, []).append(r.id)
        self.coords = plan.coordinates()

        gt_cloud = PointCloud(self.coords)
        dark_mask = np.array([r.is_dark for r in plan.fls_records])
        self.recorder = MetricRecorder(gt_cloud, include_dark=True, dark_mask=dark_mask)
        self.policy = None  # attached by the policy module

    # -- event plumbing ----------------------------------------------------

    def schedule(self, delay_ms: float, fn: Callable, *args) -> None:
        if delay_ms < -1e-9:
            raise AssertionError(f"event scheduled {delay_ms} ms in the past")
        self._seq += 1
        heapq.heappush(self._heap, (self.now + max(delay_ms, 0.0), self._seq, fn, args))

    def run_until(self, t_end: float) -> list:
        while self._heap and self._heap[0][0] <= t_end:
            self.now, _, fn, args = heapq.heappop(self._heap)
            fn(*args)
        self.now = t_end
        return self.log

    def log_event(self, ev: str, **fields) -> None:
        entry = {"t": self.now, "ev": ev}
        entry.update(fields)
        self.log.append(entry)

    def log_jsonl(self) -> str:
        return "\n".join(json.dumps(e) for e in self.log) + "\n"

    # -- messaging ---------------------------------------------------------

    def latency(self) -> float:
        lat = self.config.latency_ms
        if isinstance(lat, (list, tuple)):
            return float(self.net_rng.uniform(lat[0], lat[1]))
        return float(lat)

    def send(self, sender: Agent, recipient_id: int, kind: str, payload: dict) -> None:
        self.counters["messages"] += 1
        if self.config.log_messages:
            self.log_event("message", frm=sender.id, to=recipient_id, kind=kind)
        self.schedule(
            self.latency(), self._deliver, sender.id, recipient_id, kind, payload
        )

    def _deliver(self, sender_id: int, recipient_id: int, kind: str, payload: dict) -> None:
        recipient = self.agents[recipient_id]
        if not recipient.deployed:
            # still in transit to the formation; the protocol starts on
            # arrival and anything sent before then describes a geometry
            # the agent never observed
            return
        self.policy.on_message(recipient, sender_id, kind, payload)

    def broadcast_swarm(self, sender: Agent, kind: str, payload: dict) -> int:
        n = 0
        for m in self.swarm_members[sender.record.swarm_id]:
            if m != sender.id:
                self.send(sender, m, kind, payload)
                n += 1
        return n

    # -- movement ----------------------------------------------------------

    def start_move(self, agent: Agent, v: np.ndarray, kind: str) -> None:
        """Displace the agent by v.  A move issued while another is in
        flight is queued and starts on arrival."""
        if agent.moving:
            agent.move_queue.append((np.asarray(v, dtype=float), kind))
            return
        self._begin_move(agent, np.asarray(v, dtype=float), kind)

    def _begin_move(self, agent: Agent, v: np.ndarray, kind: str) -> None:
        dist = float(np.linalg.norm(v))
        agent.pos_from = agent.position(self.now).copy()
        agent.pos_to = agent.pos_from + v
        agent.move_t0 = self.now
        agent.move_t1 = self.now + dist / self.config.speed_mm_s * 1000.0
        agent.moving = True
        agent.move_kind = kind
        self.log_event("move_start", id=agent.id, kind=kind, dist=dist)
        self.schedule(agent.move_t1 - self.now, self._arrive, agent.id, dist, kind)

    def _arrive(self, agent_id: int, dist: float, kind: str) -> None:
        agent = self.agents[agent_id]
        agent.moving = False
        agent.odometer += dist
        agent.moves_count += 1
        self.log_event("move_end", id=agent.id, kind=kind)
        self.policy.on_displaced(agent, agent.pos_to - agent.pos_from, kind)
        if agent.move_queue:
            v, k = agent.move_queue.pop(0)
            self._begin_move(agent, v, k)
            return
        self.policy.on_move_done(agent, kind)

    # -- timers ------------------------------------------------------------

    def reset_timer(self, agent: Agent) -> None:
        agent.timer_gen += 1
        self.schedule(IDLE_TIMER_MS, self._timer_fire, agent.id, agent.timer_gen)

    def cancel_timer(self, agent: Agent) -> None:
        agent.timer_gen += 1

    def _timer_fire(self, agent_id: int, gen: int) -> None:
        agent = self.agents[agent_id]
        if gen != agent.timer_gen:
            return  # stale: reset or canceled since scheduling
        self.log_event("timer", id=agent.id)
        self.policy.on_timer(agent)

    # -- deployment --------------------------------------------------------

    def dispatcher_origin(self) -> np.ndarray:
        if self.config.dispatcher_origin is not None:
            return np.asarray(self.config.dispatcher_origin, dtype=float)
        return self.coords.min(axis=0)  # bounding-box bottom corner

    def deploy_all(self) -> None:
        origin = self.dispatcher_origin()
        for agent in self.agents:
            t_launch = agent.id * self.config.deploy_interval_ms
            self.schedule(t_launch, self._launch, agent.id, origin)

    def _launch(self, agent_id: int, origin: np.ndarray) -> None:
        agent = self.agents[agent_id]
        target = agent.coordinate
        if np.allclose(target, origin):
            arrival_pos = target.copy()
        else:
            arrival_pos = deploy_with_dead_reckoning(
                target, origin, self.config.dr_epsilon_deg, agent.rng
            )
        dist = float(np.linalg.norm(arrival_pos - origin))
        agent.pos_from = origin.copy()
        agent.pos_to = arrival_pos
        agent.move_t0 = self.now
        agent.move_t1 = self.now + dist / self.config.speed_mm_s * 1000.0
        agent.moving = True
        agent.move_kind = "deploy"
        self.log_event("deploy", id=agent.id, dist=dist)
        self.schedule(agent.move_t1 - self.now, self._deploy_arrive, agent.id, dist)

    def _deploy_arrive(self, agent_id: int, dist: float) -> None:
        agent = self.agents[agent_id]
        agent.moving = False
        agent.odometer += dist
        agent.moves_count += 1
        agent.deployed = True
        self.log_event("arrived", id=agent.id)
        self.policy.on_deployed(agent)

    # -- sampling ----------------------------------------------------------

    def positions(self) -> np.ndarray:
        return np.array([a.position(self.now) for a in self.agents])

    def schedule_metric_samples(self) -> None:
        t = 0.0
        while t <= self.config.run_ms + 1e-9:
            self.schedule(t - self.now, self._sample)
            t += self.config.metric_sample_ms

    def _sample(self) -> None:
        total = sum(a.odometer for a in self.agents)
        moves = sum(a.moves_count for a in self.agents)
        s = self.recorder.record(self.now, self.positions(), total, moves)
        self.log_event("metric_sample", hd=s.hd_mm, cd=s.cd_mm2)


def run_simulation(plan: DeploymentPlan, config: SimConfig) -> Engine:
    """Deploy, attach the configured policy, and run to config.run_ms."""
    from . import policies  # local import to avoid a cycle

    engine = Engine(plan, config)
    engine.policy = policies.make_policy(config.technique, engine)
    engine.schedule_metric_samples()
    engine.deploy_all()
    engine.run_until(config.run_ms)
    return engine
