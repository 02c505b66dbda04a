"""Deterministic discrete-event WSN simulator with attack injection.

Single-writer core: all mutations happen on one logical thread, driven by
``advance``. The event heap is ordered by (time_ms, node_id, insertion seq)
so identical (scenario, seed) inputs produce byte-identical batches. External
commands enter through ``schedule_command`` and are stamped into simulated
time like any other event.
"""

from __future__ import annotations

import heapq
from collections import Counter
from typing import Any

from ..rng import SplitMix64, stream
from .topology import Topology, build_topology
from .types import (
    EMITTING,
    RELAY_CAPABLE,
    AttackSpec,
    EnergyModel,
    NodeState,
    NodeStatus,
)


class SimError(ValueError):
    pass


class SimCore:
    def __init__(
        self,
        nodes: list[NodeState],
        sink_id: str,
        radio_range_m: float,
        energy: EnergyModel,
        seed: int,
        jitter_frac: float = 0.0,
        ledger_trace: bool = False,
    ) -> None:
        self.sink_id = sink_id
        self.radio_range_m = radio_range_m
        self.energy = energy
        self.seed = seed
        self.jitter_frac = jitter_frac
        self.clock_ms = 0

        self.nodes: dict[str, NodeState] = {}
        for node in sorted(nodes, key=lambda n: n.node_id):
            if node.node_id in self.nodes:
                raise SimError(f"duplicate node_id {node.node_id!r}")
            self.nodes[node.node_id] = node
        if sink_id not in self.nodes:
            raise SimError(f"sink {sink_id!r} missing from node set")
        self.nodes[sink_id].is_sink = True

        self._heap: list[tuple[int, str, int, str, Any]] = []
        self._event_seq = 0
        self._telemetry_seq = 0
        self._attacks: list[AttackSpec] = []
        self._active_tampers: dict[str, list[AttackSpec]] = {}
        self._active_jams: list[tuple[AttackSpec, set[tuple[str, str]], SplitMix64]] = []
        self._jitter_rng: dict[str, SplitMix64] = {}
        self._value_rng: dict[str, SplitMix64] = {}
        self._tamper_rng: dict[str, SplitMix64] = {}

        self.delivered_total = 0
        self.delivered_by_source: Counter[str] = Counter()
        self.dropped_quarantine: Counter[str] = Counter()
        self.dropped_jam = 0
        self.dropped_no_route = 0
        self.dropped_energy = 0

        self.ledger_trace = ledger_trace
        self.ledger: dict[str, list[tuple[str, int]]] = {nid: [] for nid in self.nodes} if ledger_trace else {}

        self._telemetry: list[dict[str, Any]] = []
        self._deltas: list[dict[str, Any]] = []
        self._battery_samples: list[tuple[int, str, int, int, int]] = []

        self.topology: Topology = Topology({}, {}, {}, set())
        self._paths: dict[str, list[str] | None] = {}
        self._rebuild_topology("initial", emit_delta=False)

        for nid in self.nodes:
            self._schedule_node(nid, first=True)

    # ------------------------------------------------------------------
    # scheduling

    def _push(self, t_ms: int, key: str, kind: str, data: Any) -> None:
        self._event_seq += 1
        heapq.heappush(self._heap, (t_ms, key, self._event_seq, kind, data))

    def _schedule_node(self, nid: str, first: bool = False) -> None:
        node = self.nodes[nid]
        if node.is_sink:
            return
        base = self.clock_ms
        self._push(base + self._next_interval(node), nid, "emit", node.epoch)
        self._push(base + self.energy.sample_period_ms, nid, "tick", node.epoch)

    def _next_interval(self, node: NodeState) -> int:
        period = node.current_period_ms()
        if self.jitter_frac <= 0:
            return period
        j = int(period * self.jitter_frac)
        if j <= 0:
            return period
        rng = self._jitter_rng.get(node.node_id)
        if rng is None:
            rng = self._jitter_rng[node.node_id] = stream(self.seed, "jitter", node.node_id)
        return max(1, period + rng.randint(-j, j))

    def schedule_command(self, action: dict[str, Any], at_ms: int) -> None:
        """Queue a response action to apply at a simulated timestamp."""
        t = max(at_ms, self.clock_ms)
        self._push(t, str(action.get("target", "")), "command", action)

    # ------------------------------------------------------------------
    # energy

    def _charge(self, nid: str, cost_pj: int, op: str, t_ms: int) -> bool:
        """Deduct energy; True when the full cost was paid. Dead targets no-op."""
        node = self.nodes[nid]
        if node.is_sink or cost_pj <= 0:
            return True
        if node.status is NodeStatus.DEAD:
            self._deltas.append({"t_ms": t_ms, "kind": "dead_op", "node_id": nid, "op": op})
            return False
        take = cost_pj if node.battery_pj >= cost_pj else node.battery_pj
        node.battery_pj -= take
        if self.ledger_trace:
            self.ledger[nid].append((op, take))
        if node.battery_pj == 0:
            self._on_death(nid, t_ms, "battery_depleted")
        return take == cost_pj

    def _accrue_idle(self, nid: str, t_ms: int) -> None:
        node = self.nodes[nid]
        dt = t_ms - node.last_idle_ms
        if dt <= 0:
            return
        node.last_idle_ms = t_ms
        if node.is_sink or node.status in (NodeStatus.DEAD, NodeStatus.POWERED_OFF):
            return
        self._charge(nid, self.energy.idle_pj_per_ms * dt * node.idle_multiplier, "idle", t_ms)

    def accrue_all(self, t_ms: int | None = None) -> None:
        t = self.clock_ms if t_ms is None else t_ms
        for nid in self.nodes:
            self._accrue_idle(nid, t)

    def consume_energy(self, node_id: str, op: str, dt_s: float = 0.0) -> float:
        """Charge one tx/rx/idle(dt) operation; returns the new battery in joules."""
        if node_id not in self.nodes:
            raise SimError(f"unknown node {node_id!r}")
        node = self.nodes[node_id]
        if op == "tx":
            if self._charge(node_id, self.energy.e_tx_pj, "tx", self.clock_ms):
                node.tx_count += 1
        elif op == "rx":
            if self._charge(node_id, self.energy.e_rx_pj, "rx", self.clock_ms):
                node.rx_count += 1
        elif op == "idle":
            self._charge(node_id, round(self.energy.idle_pj_per_ms * dt_s * 1000), "idle", self.clock_ms)
        else:
            raise SimError(f"unknown energy op {op!r}")
        return node.battery_j

    # ------------------------------------------------------------------
    # attacks

    def inject_attack(self, spec: AttackSpec) -> str:
        spec.validate()
        if spec.start_ms < self.clock_ms:
            raise SimError("attack start is in the past")
        if spec.kind != "rogue_join" and spec.target not in self.nodes:
            raise SimError(f"attack target {spec.target!r} does not exist")
        spec_key = spec.target or spec.params.get("source_id")
        for other in self._attacks:
            other_key = other.target or other.params.get("source_id")
            if (
                other.kind == spec.kind
                and other_key == spec_key
                and spec.start_ms < other.end_ms
                and other.start_ms < spec.end_ms
            ):
                raise SimError(f"overlapping {spec.kind} attack on {spec_key!r}")
        if not spec.attack_id:
            spec.attack_id = f"a{len(self._attacks) + 1}"
        self._attacks.append(spec)
        key = spec.target or spec.params.get("source_id", "")
        self._push(spec.start_ms, key, "attack_start", spec)
        self._push(spec.end_ms, key, "attack_end", spec)
        return spec.attack_id

    def _on_attack_start(self, t_ms: int, spec: AttackSpec) -> None:
        self._deltas.append(
            {
                "t_ms": t_ms,
                "kind": "attack_start",
                "attack_id": spec.attack_id,
                "attack_kind": spec.kind,
                "target": spec.target or spec.params.get("source_id"),
                "params": spec.params,
            }
        )
        if spec.kind == "flood":
            node = self.nodes[spec.target]
            node.period_divisor = int(spec.params["multiplier"])
            if node.status is NodeStatus.ACTIVE:
                self._set_status(node, NodeStatus.COMPROMISED, t_ms, "flood_attack")
        elif spec.kind == "jam":
            center = self.nodes[spec.target]
            radius = float(spec.params.get("radius_m", self.radio_range_m))
            jammed = self._links_near(center.x, center.y, radius)
            self._active_jams.append((spec, jammed, stream(self.seed, "jam", spec.attack_id)))
        elif spec.kind == "tamper":
            self._active_tampers.setdefault(spec.target, []).append(spec)
            self._tamper_rng[spec.attack_id] = stream(self.seed, "tamper", spec.attack_id)
        elif spec.kind == "drain":
            self._accrue_idle(spec.target, t_ms)
            self.nodes[spec.target].idle_multiplier = int(spec.params["idle_multiplier"])
        elif spec.kind == "rogue_join":
            self._join_rogue(spec, t_ms)

    def _on_attack_end(self, t_ms: int, spec: AttackSpec) -> None:
        self._deltas.append({"t_ms": t_ms, "kind": "attack_end", "attack_id": spec.attack_id})
        if spec.kind == "flood":
            node = self.nodes[spec.target]
            if node.period_divisor != 1:
                node.period_divisor = 1
        elif spec.kind == "jam":
            self._active_jams = [j for j in self._active_jams if j[0] is not spec]
        elif spec.kind == "tamper":
            stack = self._active_tampers.get(spec.target, [])
            if spec in stack:
                stack.remove(spec)
        elif spec.kind == "drain":
            self._accrue_idle(spec.target, t_ms)
            self.nodes[spec.target].idle_multiplier = 1
        elif spec.kind == "rogue_join":
            rogue_id = spec.params["source_id"]
            rogue = self.nodes.get(rogue_id)
            if rogue is not None and rogue.status not in (NodeStatus.DEAD, NodeStatus.POWERED_OFF):
                rogue.epoch += 1
                self._accrue_idle(rogue_id, t_ms)
                self._set_status(rogue, NodeStatus.POWERED_OFF, t_ms, "rogue_left")

    def _links_near(self, x: float, y: float, radius: float) -> set[tuple[str, str]]:
        r2 = radius * radius
        inside = {
            nid
            for nid, n in self.nodes.items()
            if (n.x - x) ** 2 + (n.y - y) ** 2 <= r2
        }
        return {link for link in self.topology.links if link[0] in inside or link[1] in inside}

    def _join_rogue(self, spec: AttackSpec, t_ms: int) -> None:
        rogue_id = spec.params["source_id"]
        if rogue_id in self.nodes:
            raise SimError(f"rogue id {rogue_id!r} collides with an existing node")
        sink = self.nodes[self.sink_id]
        pos = spec.params.get("position")
        x, y = (float(pos[0]), float(pos[1])) if pos else (sink.x + self.radio_range_m / 2, sink.y)
        node = NodeState(
            node_id=rogue_id,
            x=x,
            y=y,
            battery_pj=self.energy.initial_battery_pj,
            emit_period_ms=round(float(spec.params.get("emit_period_s", 10.0)) * 1000),
            sensor_kind=spec.params.get("sensor_kind", "generic"),
            base_value=float(spec.params.get("base_value", 1.0)),
            is_rogue=True,
            last_idle_ms=t_ms,
        )
        self.nodes[rogue_id] = node
        if self.ledger_trace:
            self.ledger[rogue_id] = []
        self._rebuild_topology("rogue_join")
        self._deltas.append(
            {
                "t_ms": t_ms,
                "kind": "rogue_joined",
                "node_id": rogue_id,
                "parent": self.topology.routing.get(rogue_id),
                "hop_count": self.topology.hop_count.get(rogue_id),
            }
        )
        self._push(t_ms + self._next_interval(node), rogue_id, "emit", node.epoch)
        self._push(t_ms + self.energy.sample_period_ms, rogue_id, "tick", node.epoch)

    # ------------------------------------------------------------------
    # response actions

    def apply_action(self, action: dict[str, Any], at_ms: int | None = None) -> dict[str, Any]:
        """Apply quarantine/power_off/patch at the current clock (or given stamp)."""
        t = self.clock_ms if at_ms is None else at_ms
        kind = action.get("action")
        target = action.get("target")
        if target not in self.nodes:
            raise SimError(f"unknown target {target!r}")
        node = self.nodes[target]
        if kind == "quarantine":
            if node.status is NodeStatus.DEAD:
                raise SimError("cannot quarantine a dead node")
            self._set_status(node, NodeStatus.QUARANTINED, t, "quarantine")
            self._rebuild_topology("quarantine")
        elif kind == "power_off":
            self._accrue_idle(target, t)
            if node.status is not NodeStatus.DEAD:
                node.epoch += 1
                self._set_status(node, NodeStatus.POWERED_OFF, t, "power_off")
                self._rebuild_topology("power_off")
        elif kind == "patch":
            if node.status is not NodeStatus.COMPROMISED:
                raise SimError("patch is only valid for a compromised node")
            node.period_divisor = 1
            self._set_status(node, NodeStatus.ACTIVE, t, "patch")
        else:
            raise SimError(f"unknown action {kind!r}")
        return {"action": kind, "target": target, "t_ms": t}

    def _set_status(self, node: NodeState, to: NodeStatus, t_ms: int, reason: str) -> None:
        if node.status is to:
            return
        self._deltas.append(
            {
                "t_ms": t_ms,
                "kind": "status_change",
                "node_id": node.node_id,
                "from": node.status.value,
                "to": to.value,
                "reason": reason,
            }
        )
        node.status = to

    def _on_death(self, nid: str, t_ms: int, reason: str) -> None:
        node = self.nodes[nid]
        if node.status is NodeStatus.DEAD:
            return
        node.epoch += 1
        self._set_status(node, NodeStatus.DEAD, t_ms, reason)
        self._rebuild_topology("node_death")

    def _rebuild_topology(self, reason: str, emit_delta: bool = True) -> None:
        placements = [(nid, n.x, n.y) for nid, n in self.nodes.items()]
        blocked = frozenset(
            nid
            for nid, n in self.nodes.items()
            if not n.is_sink and (n.status not in RELAY_CAPABLE or n.is_rogue)
        )
        self.topology = build_topology(placements, self.sink_id, self.radio_range_m, blocked)
        self._paths = {}
        for nid, node in self.nodes.items():
            node.parent = self.topology.routing.get(nid)
        if emit_delta:
            self._deltas.append(
                {
                    "t_ms": self.clock_ms,
                    "kind": "routing_recompute",
                    "reason": reason,
                    "disconnected": sorted(self.topology.disconnected),
                }
            )

    # ------------------------------------------------------------------
    # emission and delivery

    def _reading(self, node: NodeState, t_ms: int) -> tuple[float, bool]:
        rng = self._value_rng.get(node.node_id)
        if rng is None:
            rng = self._value_rng[node.node_id] = stream(self.seed, "value", node.node_id)
        base = node.base_value
        if node.ramp_start_ms is not None and t_ms >= node.ramp_start_ms:
            base += node.ramp_per_s * (t_ms - node.ramp_start_ms) / 1000.0
        value = base + (rng.random() - 0.5)
        checksum_ok = True
        for tamper in self._active_tampers.get(node.node_id, []):
            value += float(tamper.params["offset"])
            if self._tamper_rng[tamper.attack_id].random() < 0.5:
                checksum_ok = False
        return round(value, 2), checksum_ok

    def _on_emit(self, t_ms: int, nid: str, epoch: int) -> None:
        node = self.nodes[nid]
        if epoch != node.epoch or node.status not in EMITTING:
            return
        path = self._paths.get(nid, False)
        if path is False:
            path = self.topology.path_to_sink(nid)
            self._paths[nid] = path
        value, checksum_ok = self._reading(node, t_ms)
        sent = self._charge(nid, self.energy.e_tx_pj, "tx", t_ms)
        if sent:
            node.tx_count += 1
            if path is None:
                self.dropped_no_route += 1
            else:
                self._deliver(node, path, t_ms, value, checksum_ok)
        if node.status in EMITTING:
            self._push(t_ms + self._next_interval(node), nid, "emit", node.epoch)

    def _deliver(self, src: NodeState, path: list[str], t_ms: int, value: float, checksum_ok: bool) -> None:
        hop_count = len(path) - 1
        for i in range(hop_count):
            a, b = path[i], path[i + 1]
            if self._active_jams:
                link = (a, b) if a < b else (b, a)
                for spec, jammed, rng in self._active_jams:
                    if link in jammed and rng.random() < spec.params["drop_prob"]:
                        self.dropped_jam += 1
                        return
            if b == self.sink_id:
                break
            relay = self.nodes[b]
            if relay.status not in RELAY_CAPABLE:
                self.dropped_energy += 1
                return
            both = self.energy.e_rx_pj + self.energy.e_tx_pj
            if relay.battery_pj > both and not self.ledger_trace:
                relay.battery_pj -= both
                relay.rx_count += 1
                relay.tx_count += 1
                continue
            if not self._charge(b, self.energy.e_rx_pj, "rx", t_ms):
                self.dropped_energy += 1
                return
            relay.rx_count += 1
            if not self._charge(b, self.energy.e_tx_pj, "tx", t_ms):
                self.dropped_energy += 1
                return
            relay.tx_count += 1
        if src.status is NodeStatus.QUARANTINED:
            self.dropped_quarantine[src.node_id] += 1
            return
        self._telemetry_seq += 1
        self.delivered_total += 1
        self.delivered_by_source[src.node_id] += 1
        self._telemetry.append(
            {
                "seq": self._telemetry_seq,
                "source_id": src.node_id,
                "sink_arrival_ms": t_ms,
                "sensor_kind": src.sensor_kind,
                "value": value,
                "checksum_ok": checksum_ok,
                "hop_count": hop_count,
            }
        )

    def allocate_telemetry_seq(self) -> int:
        """Used when externally imported rows join the sink's record stream."""
        self._telemetry_seq += 1
        return self._telemetry_seq

    def drain_deltas(self) -> list[dict[str, Any]]:
        """Hand buffered state deltas to the caller without advancing time."""
        out = self._deltas
        self._deltas = []
        return out

    def _on_tick(self, t_ms: int, nid: str, epoch: int) -> None:
        node = self.nodes[nid]
        if epoch != node.epoch or node.status in (NodeStatus.DEAD, NodeStatus.POWERED_OFF):
            return
        self._accrue_idle(nid, t_ms)
        if node.status in (NodeStatus.DEAD, NodeStatus.POWERED_OFF):
            return
        self._battery_samples.append((t_ms, nid, node.battery_pj, node.tx_count, node.rx_count))
        self._push(t_ms + self.energy.sample_period_ms, nid, "tick", node.epoch)

    # ------------------------------------------------------------------
    # main loop

    def advance(self, until_ms: int) -> dict[str, Any]:
        """Process every scheduled event with timestamp <= until_ms."""
        if until_ms < self.clock_ms:
            raise SimError(f"cannot advance backwards to {until_ms} (clock {self.clock_ms})")
        heap = self._heap
        while heap and heap[0][0] <= until_ms:
            t_ms, _key, _seq, kind, data = heapq.heappop(heap)
            self.clock_ms = t_ms
            if kind == "emit":
                self._on_emit(t_ms, _key, data)
            elif kind == "tick":
                self._on_tick(t_ms, _key, data)
            elif kind == "attack_start":
                self._on_attack_start(t_ms, data)
            elif kind == "attack_end":
                self._on_attack_end(t_ms, data)
            elif kind == "command":
                try:
                    self.apply_action(data, t_ms)
                except SimError as exc:
                    self._deltas.append(
                        {"t_ms": t_ms, "kind": "action_error", "action": data, "error": str(exc)}
                    )
        self.clock_ms = until_ms
        batch = {
            "clock_ms": self.clock_ms,
            "telemetry": self._telemetry,
            "deltas": self._deltas,
            "battery_samples": self._battery_samples,
        }
        self._telemetry = []
        self._deltas = []
        self._battery_samples = []
        return batch

    # ------------------------------------------------------------------
    # snapshots

    def node_statuses(self) -> dict[str, str]:
        return {nid: n.status.value for nid, n in self.nodes.items()}

    def energy_snapshot(self) -> dict[str, Any]:
        self.accrue_all()
        batteries = {nid: n.battery_pj for nid, n in self.nodes.items() if not n.is_sink}
        return {
            "clock_ms": self.clock_ms,
            "batteries_pj": batteries,
            "tx_counts": {nid: n.tx_count for nid, n in self.nodes.items() if not n.is_sink},
            "rx_counts": {nid: n.rx_count for nid, n in self.nodes.items() if not n.is_sink},
            "dead": sorted(nid for nid, n in self.nodes.items() if n.status is NodeStatus.DEAD),
        }

    def fleet_ids(self) -> list[str]:
        return sorted(nid for nid, n in self.nodes.items() if not n.is_sink and not n.is_rogue)
