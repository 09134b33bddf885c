"""The three online localization policies: HC, ISR, and RSF.

All three share the same measurement primitive and correction-vector
formula; they differ in how much concurrent movement they allow within a
swarm and across the swarm hierarchy.

Sign convention: the pose of FLS i relative to FLS j is the vector
``position_i - position_j``.  A correction vector for i against j is the
ground-truth pose minus the believed pose, so moving along it restores
the ground-truth offset.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .core import MountType
from .engine import Agent, Engine
from .noise import DetectionFailure, measure_relative_pose


def compute_correction(agent: Agent, coords: np.ndarray, parent_of: dict,
                       children_of: dict):
    """Average correction vector over every FLS reachable through the
    agent's believed pose table.

    The table holds one entry per measured FLS-tree edge, keyed by the
    child id, with the measured pose of the child relative to its parent.
    The believed pose to a reachable FLS is the sum of edge poses along
    the tree path; the agent itself contributes a zero vector to the
    average.  Returns (vector, contributor count) or None when nothing is
    reachable.
    """
    table = agent.pose_table
    i = agent.id
    total = np.zeros(3)
    n = 1  # self contributes a zero correction
    seen = {i}
    q = deque([(i, np.zeros(3))])
    while q:
        a, acc = q.popleft()
        p = parent_of.get(a)
        if p is not None and p not in seen and a in table:
            r = acc + table[a]
            seen.add(p)
            total += (coords[i] - coords[p]) - r
            n += 1
            q.append((p, r))
        for c in children_of.get(a, ()):
            if c not in seen and c in table:
                r = acc - table[c]
                seen.add(c)
                total += (coords[i] - coords[c]) - r
                n += 1
                q.append((c, r))
    if n == 1:
        return None
    return total / n, n


class BasePolicy:
    """Shared plumbing: topology lookups and the measurement primitive."""

    name = "base"

    def __init__(self, engine: Engine):
        self.engine = engine
        self.plan = engine.plan
        self.coords = engine.coords
        self.threshold = engine.config.threshold_mm
        # global FLS-tree adjacency (trees are disjoint per swarm)
        self.parent_of: dict = {}
        self.children_of: dict = {}
        for t in self.plan.fls_trees:
            self.parent_of.update(t.parent)
        for r in self.plan.fls_records:
            self.children_of[r.id] = r.children_ids
        # inter-swarm wiring
        self.anchor_of: dict = {}  # primary id -> anchor id
        self.primary_of_swarm: dict = {}  # child swarm -> primary id
        for _, child_swarm, anchor, primary in self.plan.swarm_tree.edges:
            self.anchor_of[primary] = anchor
            self.primary_of_swarm[child_swarm] = primary
        self.root_swarm = self.plan.swarm_tree.root

    # -- helpers -----------------------------------------------------------

    def measure(self, observer: Agent, target: Agent):
        """Measured pose of the observer relative to the target, or None
        on detection failure."""
        engine = self.engine
        if not target.deployed:
            # the target has not reached the formation yet; there is
            # nothing in front of the sensor to detect
            engine.counters["detection_failures"] += 1
            engine.log_event(
                "detection_failure", id=observer.id, target=target.id, reason="absent"
            )
            return None
        true_obs_to_target = target.position(engine.now) - observer.position(engine.now)
        fov = (
            self.plan.sensor_spec.fov_half_angle
            if engine.config.fov_gating
            else 180.0
        )
        result = measure_relative_pose(
            true_obs_to_target,
            observer.record.mount,
            engine.noise_model,
            observer.rng,
            heading=observer.record.heading,
            fov_half_angle=fov,
        )
        if isinstance(result, DetectionFailure):
            engine.counters["detection_failures"] += 1
            engine.log_event(
                "detection_failure",
                id=observer.id,
                target=target.id,
                reason=result.reason,
            )
            return None
        return -result.vec.to_array()  # observer relative to target

    def gt(self, i: int, j: int) -> np.ndarray:
        return self.coords[i] - self.coords[j]

    def correction(self, agent: Agent):
        out = compute_correction(agent, self.coords, self.parent_of, self.children_of)
        if out is None:
            if len(self.engine.swarm_members[agent.record.swarm_id]) == 1:
                # a singleton swarm is trivially settled
                agent.last_corr = np.zeros(3)
                agent.last_corr_len = 0.0
                return agent.last_corr
            return None
        vec, n = out
        agent.last_corr = vec
        agent.last_corr_len = float(np.linalg.norm(vec))
        if self.engine.config.log_corrections:
            self.engine.log_event(
                "correction",
                id=agent.id,
                table={str(k): list(v) for k, v in sorted(agent.pose_table.items())},
                vec=list(vec),
                n=n,
            )
        return vec

    # -- engine callbacks overridden per policy ----------------------------

    def on_deployed(self, agent: Agent) -> None:
        raise NotImplementedError

    def on_message(self, agent: Agent, sender_id: int, kind: str, payload: dict) -> None:
        raise NotImplementedError

    def on_timer(self, agent: Agent) -> None:
        pass

    def on_move_done(self, agent: Agent, kind: str) -> None:
        pass

    def on_displaced(self, agent: Agent, delta: np.ndarray, kind: str) -> None:
        """Called after every completed move segment, before any queued
        move starts."""


class BroadcastAveragingPolicy(BasePolicy):
    """Common machinery for HC and ISR: continuous intra-swarm broadcast
    localization with averaged corrections.

    Each localization cycle measures the FLS-tree parent, broadcasts the
    measured edge (with the sender's last correction length piggybacked),
    recomputes the averaged correction, and moves along it.  Receiving a
    swarm broadcast stores the edge, resets the idle timer, and triggers
    a localize-and-move without a re-broadcast.  The 500 ms idle timer
    drives a full cycle with a broadcast.
    """

    def on_deployed(self, agent: Agent) -> None:
        self.engine.reset_timer(agent)
        self.cycle(agent, broadcast=True)

    def on_timer(self, agent: Agent) -> None:
        self.engine.reset_timer(agent)
        self.cycle(agent, broadcast=True)

    def request_cycle(self, agent: Agent) -> None:
        """Ask for one table-driven localization (no fresh measurement or
        broadcast), rate-limited to the sensing interval.  Received poses
        and move completions funnel through here so the cadence stays
        bounded; fresh measure-and-broadcast cycles ride the idle timer."""
        if agent.pending_localize:
            return
        agent.pending_localize = True
        self.engine.schedule(
            max(agent.next_cycle_ms - self.engine.now, 0.0),
            self._run_cycle,
            agent.id,
        )

    def _run_cycle(self, agent_id: int) -> None:
        agent = self.engine.agents[agent_id]
        agent.pending_localize = False
        if agent.moving:
            # no sensing in transit: measurements taken mid-move would be
            # compensated incorrectly on arrival; retry when the move ends
            agent.relocalize_after = True
            return
        self.cycle(agent, broadcast=False)

    def cycle(self, agent: Agent, broadcast: bool) -> None:
        """One localization cycle.  With broadcast=True the agent takes a
        fresh measurement of its parent and shares the edge; without, it
        recomputes from the table it already holds and moves."""
        engine = self.engine
        if agent.moving:
            agent.relocalize_after = True
            return
        agent.next_cycle_ms = engine.now + engine.config.cycle_interval_ms
        p = self.parent_of.get(agent.id)
        if broadcast:
            if p is not None:
                measured = self.measure(agent, engine.agents[p])
                if measured is not None:
                    agent.pose_table[agent.id] = measured
                else:
                    # the parent is not currently observable: the old
                    # measurement no longer describes any verifiable
                    # geometry and must not be used or re-broadcast
                    agent.pose_table.pop(agent.id, None)
            own_edge = agent.pose_table.get(agent.id)
            engine.broadcast_swarm(
                agent,
                "pose",
                {
                    "child": agent.id,
                    "parent": p,
                    "vec": None if own_edge is None else own_edge,
                    "corr_len": agent.last_corr_len,
                },
            )
        corr = self.correction(agent)
        if corr is not None and np.linalg.norm(corr) >= self.threshold:
            # below the threshold the FLS counts as localized and holds
            # still; the threshold gates movement, not measurement
            engine.start_move(agent, corr, "correction")
        self.after_correction(agent)

    def after_correction(self, agent: Agent) -> None:
        """Policy-specific inter-swarm hook, called whenever an agent has
        just recomputed its correction."""

    def on_message(self, agent: Agent, sender_id: int, kind: str, payload: dict) -> None:
        engine = self.engine
        if kind == "pose":
            if agent.moving and agent.move_kind == "swarm_shift":
                return  # sent before the swarm shift; stale on arrival
            if payload["vec"] is not None:
                agent.pose_table[payload["child"]] = payload["vec"]
            else:
                agent.pose_table.pop(payload["child"], None)
            if payload["corr_len"] is not None:
                agent.member_corr[sender_id] = payload["corr_len"]
            engine.reset_timer(agent)
            self.request_cycle(agent)
        elif kind == "swarm_move":
            self._apply_swarm_move(agent, np.asarray(payload["vec"]))
        else:
            self.on_protocol_message(agent, sender_id, kind, payload)

    def on_protocol_message(self, agent, sender_id, kind, payload) -> None:
        raise AssertionError(f"unexpected message kind {kind}")

    def _apply_swarm_move(self, agent: Agent, v: np.ndarray) -> None:
        engine = self.engine
        # the tree structure of broadcast poses is stale after an
        # inter-swarm move and is cleared
        agent.pose_table = {}
        agent.member_corr = {}
        agent.last_corr = None
        agent.last_corr_len = None
        engine.cancel_timer(agent)  # suspended while executing the commanded move
        engine.start_move(agent, v, "swarm_shift")

    def on_displaced(self, agent: Agent, delta: np.ndarray, kind: str) -> None:
        # keep the agent's own believed geometry consistent with the move
        # it just executed (an FLS dead-reckons its own short hops): shift
        # the stored edges adjacent to itself by its displacement
        if agent.id in agent.pose_table:
            agent.pose_table[agent.id] = agent.pose_table[agent.id] + delta
        for c in self.children_of.get(agent.id, ()):
            if c in agent.pose_table:
                agent.pose_table[c] = agent.pose_table[c] - delta

    def on_move_done(self, agent: Agent, kind: str) -> None:
        if kind == "swarm_shift":
            self.engine.reset_timer(agent)
            self.cycle(agent, broadcast=True)
        elif kind == "correction":
            if agent.relocalize_after:
                agent.relocalize_after = False
                self.request_cycle(agent)
            else:
                # the inter-swarm check in after_correction is skipped
                # while the correction move is in flight; redo it now
                self.after_correction(agent)

    # -- inter-swarm execution shared by HC and ISR ------------------------

    def perform_inter(self, primary: Agent) -> bool:
        """Measure the parent-swarm anchor and move the whole swarm along
        the resulting correction.  Returns False on detection failure."""
        engine = self.engine
        anchor_id = self.anchor_of[primary.id]
        measured = self.measure(primary, engine.agents[anchor_id])
        if measured is None:
            return False
        v = self.gt(primary.id, anchor_id) - measured
        if float(np.linalg.norm(v)) < self.threshold:
            return True  # already aligned; a shift would only churn tables
        engine.counters["inter_localizations"] += 1
        engine.log_event(
            "inter_localize", id=primary.id, anchor=anchor_id, dist=float(np.linalg.norm(v))
        )
        self._apply_swarm_move(primary, v)
        for m in engine.swarm_members[primary.record.swarm_id]:
            if m != primary.id:
                engine.send(primary, m, "swarm_move", {"vec": v})
        return True


class HCPolicy(BroadcastAveragingPolicy):
    """Highly Concurrent: every swarm may localize at once.  A primary
    goes inter-swarm only when every member's last reported correction
    (and its own) is below the threshold."""

    name = "HC"

    def after_correction(self, agent: Agent) -> None:
        self.maybe_inter(agent)

    def on_message(self, agent, sender_id, kind, payload) -> None:
        super().on_message(agent, sender_id, kind, payload)
        if kind == "pose" and agent.id in self.anchor_of:
            self.maybe_inter(agent)

    def maybe_inter(self, primary: Agent) -> None:
        if primary.id not in self.anchor_of or primary.moving:
            return
        members = self.engine.swarm_members[primary.record.swarm_id]
        if primary.last_corr_len is None or primary.last_corr_len >= self.threshold:
            return
        others = [m for m in members if m != primary.id]
        if any(m not in primary.member_corr for m in others):
            return
        if any(primary.member_corr[m] >= self.threshold for m in others):
            return
        self.perform_inter(primary)


class ISRPolicy(BroadcastAveragingPolicy):
    """Inter-Swarm Rounds: an anchor must be settled (and stationary)
    before its child primary localizes against it; the go-ahead cascades
    down the swarm-tree as notifications."""

    name = "ISR"
    NOTIFY_GAP_MS = 500.0

    def after_correction(self, agent: Agent) -> None:
        engine = self.engine
        if agent.last_corr_len is not None and agent.last_corr_len < self.threshold:
            for child_swarm in agent.record.inter_swarm_anchor_for:
                last = agent.last_notify_ms.get(child_swarm)
                if last is not None and engine.now - last < self.NOTIFY_GAP_MS:
                    continue
                agent.last_notify_ms[child_swarm] = engine.now
                primary_id = self.primary_of_swarm[child_swarm]
                engine.log_event("notify", id=agent.id, primary=primary_id)
                engine.send(agent, primary_id, "inter_notify", {})
        if agent.id in self.anchor_of:
            self.try_inter(agent)

    def on_protocol_message(self, agent, sender_id, kind, payload) -> None:
        assert kind == "inter_notify"
        if agent.inter_pending:
            self.engine.counters["dropped_notifies"] += 1
            self.engine.log_event("drop_duplicate_notify", id=agent.id, frm=sender_id)
            return
        agent.inter_pending = True
        self.try_inter(agent)

    def try_inter(self, primary: Agent) -> None:
        if not primary.inter_pending or primary.moving:
            return
        if primary.last_corr_len is None or primary.last_corr_len >= self.threshold:
            return
        anchor = self.engine.agents[self.anchor_of[primary.id]]
        if anchor.moving:
            # the anchor must be stationary; try again once it lands
            self.engine.schedule(
                max(anchor.move_t1 - self.engine.now, 1.0), self._retry, primary.id
            )
            return
        if self.perform_inter(primary):
            primary.inter_pending = False

    def _retry(self, primary_id: int) -> None:
        self.try_inter(self.engine.agents[primary_id])


class RSFPolicy(BasePolicy):
    """Rounds across the Swarm-tree and FLS-trees: localization proceeds
    in rounds down each FLS-tree, one parent/child level at a time, with
    the parent stationary while its children localize.  Corrections use
    the single parent measurement, never an average.  Anchors notify
    their child-swarm primaries after finishing their own move, which
    translates the whole child swarm."""

    name = "RSF"
    ROUND_MS = 500.0

    def __init__(self, engine: Engine):
        super().__init__(engine)
        root_tree = self.plan.fls_tree_of(self.root_swarm)
        self.round_initiator = root_tree.root_id
        # rounds that caught an agent mid-flight, replayed on arrival
        self.pending_round: dict[int, str] = {}

    def _round_timer(self) -> None:
        root = self.engine.agents[self.round_initiator]
        if root.deployed:
            self.engine.log_event("round_start", id=root.id)
            self._notify_descendants(root)
        self.engine.schedule(self.ROUND_MS, self._round_timer)

    def _notify_descendants(self, agent: Agent) -> None:
        for c in self.children_of.get(agent.id, ()):
            self.engine.send(agent, c, "rsf_localize", {})
        for child_swarm in agent.record.inter_swarm_anchor_for:
            primary_id = self.primary_of_swarm[child_swarm]
            self.engine.log_event("notify", id=agent.id, primary=primary_id)
            self.engine.send(agent, primary_id, "rsf_inter", {})

    def on_message(self, agent: Agent, sender_id: int, kind: str, payload: dict) -> None:
        engine = self.engine
        if kind == "rsf_localize":
            if not agent.deployed or agent.moving:
                # replay once the agent lands so the round still reaches
                # everything below it
                self.pending_round[agent.id] = kind
                return
            parent = self.parent_of.get(agent.id)
            if parent is None:
                return
            measured = self.measure(agent, engine.agents[parent])
            if measured is None:
                # keep the round flowing below even without a move
                self._notify_descendants(agent)
                return
            v = self.gt(agent.id, parent) - measured
            agent.last_corr = v
            agent.last_corr_len = float(np.linalg.norm(v))
            if agent.last_corr_len > 0:
                engine.start_move(agent, v, "correction")
            else:
                self._notify_descendants(agent)
        elif kind == "rsf_inter":
            if not agent.deployed or agent.moving:
                self.pending_round[agent.id] = kind
                return
            anchor_id = self.anchor_of.get(agent.id)
            if anchor_id is None:
                return
            measured = self.measure(agent, engine.agents[anchor_id])
            if measured is None:
                self._notify_descendants(agent)
                return
            v = self.gt(agent.id, anchor_id) - measured
            if float(np.linalg.norm(v)) == 0.0:
                self._notify_descendants(agent)
                return
            engine.counters["inter_localizations"] += 1
            engine.log_event(
                "inter_localize", id=agent.id, anchor=anchor_id, dist=float(np.linalg.norm(v))
            )
            engine.start_move(agent, v, "swarm_shift")
            for m in engine.swarm_members[agent.record.swarm_id]:
                if m != agent.id:
                    engine.send(agent, m, "swarm_move", {"vec": v})
        elif kind == "swarm_move":
            engine.start_move(agent, np.asarray(payload["vec"]), "swarm_shift")
        else:
            raise AssertionError(f"unexpected message kind {kind}")

    def on_move_done(self, agent: Agent, kind: str) -> None:
        if kind == "correction":
            self._notify_descendants(agent)
        elif kind == "swarm_shift" and agent.id in self.anchor_of:
            # the primary finished its inter-swarm move: its own round
            # continues below it
            self._notify_descendants(agent)
        pending = self.pending_round.pop(agent.id, None)
        if pending is not None:
            self.on_message(agent, agent.id, pending, {})

    def on_deployed(self, agent: Agent) -> None:
        if agent.id == self.round_initiator:
            self.engine.schedule(0.0, self._round_timer)
        pending = self.pending_round.pop(agent.id, None)
        if pending is not None:
            self.on_message(agent, agent.id, pending, {})


def make_policy(technique: str, engine: Engine) -> BasePolicy:
    cls = {"HC": HCPolicy, "ISR": ISRPolicy, "RSF": RSFPolicy}.get(technique)
    if cls is None:
        raise ValueError(f"unknown technique {technique!r}")
    return cls(engine)
