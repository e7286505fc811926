"""Deterministic discrete-event engine driving one monitored guest.

One run wires a guest machine, protection registry, baseline table, the
configured checking strategy, a synthetic workload (system calls and
context switches), and a list of attacker scripts into a single ordered
event timeline, then accounts every simulated cost in integer ticks.

Time accounting is parallel, not displacing: events occur at their
scheduled instants; charged costs accumulate into the run total rather
than pushing later events back. The total simulated time of a run is
therefore exactly ``horizon + sum(strategy charges)``, and the baseline
strategy's total is exactly the horizon, which keeps the conservation
identity testable to the tick. Event-op base costs (t_syscall_base,
t_ctxswitch_base) describe the cost of the operation itself; they are
reported in absolute per-event latency but never extend the run.

Determinism: identical (setup, strategy, workload, attacks, costs, seed)
inputs replay to a byte-identical serialized result. All randomness flows
from named substreams of the run seed.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import random
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

from . import threat
from .errors import ConfigurationError
from .guest import GuestMachine
from .hypervisor import (
    FiringSchedule,
    ProtectionRegistry,
    VirtualDevice,
    fire_interrupt,
    install_virtual_device,
    on_control_register_write,
)
from .integrity import HANDLER_TARGET, IDTR_TARGET, snapshot_baselines
from .timebase import TICKS_PER_SECOND, Ticks

STRATEGY_BASELINE = "baseline"
STRATEGY_HRK = "hrk"
STRATEGY_HF = "hf"
STRATEGY_KINDS = (STRATEGY_BASELINE, STRATEGY_HRK, STRATEGY_HF)

# clean margin the evasion attacker keeps around known firing instants
EVASION_GUARD_TICKS = 1_000


class EventKind(enum.IntEnum):
    """Tie-break priority for simultaneous events (lower fires first)."""

    TRAP = 0
    DEVICE_FIRING = 1
    ATTACK = 2
    WORKLOAD = 3


@dataclass(frozen=True)
class Event:
    time: Ticks
    kind: EventKind
    seq: int
    payload: tuple


class EventQueue:
    """Min-heap ordered by (time, kind priority, insertion sequence)."""

    def __init__(self):
        self._heap: list[tuple[int, int, int, tuple]] = []
        self._seq = itertools.count()

    def push(self, time: Ticks, kind: EventKind, payload: tuple) -> None:
        heapq.heappush(self._heap, (time, int(kind), next(self._seq), payload))

    def pop(self) -> Optional[Event]:
        if not self._heap:
            return None
        time, kind, seq, payload = heapq.heappop(self._heap)
        return Event(time, EventKind(kind), seq, payload)

    def __len__(self) -> int:
        return len(self._heap)


def next_event(queue: EventQueue) -> Event:
    """Pop the next event; the queue must be non-empty."""
    event = queue.pop()
    if event is None:
        raise ConfigurationError("next_event on an empty queue")
    return event


class Arrival(enum.Enum):
    FIXED = "fixed"
    POISSON = "poisson"


@dataclass(frozen=True)
class WorkloadSpec:
    """Synthetic guest activity: event rates over a finite horizon."""

    syscall_rate: float
    ctxswitch_rate: float
    arrival: Arrival
    horizon: Ticks

    def __post_init__(self):
        if self.syscall_rate < 0 or self.ctxswitch_rate < 0:
            raise ConfigurationError("workload rates must be >= 0")
        if self.horizon <= 0:
            raise ConfigurationError("horizon must be positive")


@dataclass(frozen=True)
class CostModel:
    """Simulated durations, all integer ticks (1 tick = 1 ns)."""

    t_vmexit: Ticks = 0
    t_vmentry: Ticks = 0
    t_interrupt_delivery: Ticks = 0
    t_map_page: Ticks = 0
    t_hash_per_byte: Ticks = 0
    t_syscall_base: Ticks = 0
    t_ctxswitch_base: Ticks = 0

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            if getattr(self, name) < 0:
                raise ConfigurationError(f"cost {name} must be >= 0")

    @classmethod
    def zero(cls) -> "CostModel":
        return cls()


@dataclass(frozen=True)
class StrategyConfig:
    """Which checker runs: none, per-VMExit batches, or forced sweeps."""

    kind: str
    batch_k: int = 1
    schedule: Optional[FiringSchedule] = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ConfigurationError(f"unknown strategy kind {self.kind!r}")
        if self.kind == STRATEGY_HRK and self.batch_k < 1:
            raise ConfigurationError("batch_k must be >= 1")
        if self.kind == STRATEGY_HF and self.schedule is None:
            raise ConfigurationError("hf strategy requires a firing schedule")


@dataclass(frozen=True)
class MachineSpec:
    page_count: int
    page_size: int = 4096


@dataclass(frozen=True)
class ObjectsSpec:
    count: int
    size_bytes: int
    placement: str = "spread"  # spread: one object per page; packed: contiguous

    def __post_init__(self):
        if self.count < 1 or self.size_bytes < 1:
            raise ConfigurationError("objects count and size_bytes must be >= 1")
        if self.placement not in ("spread", "packed"):
            raise ConfigurationError(f"unknown placement {self.placement!r}")


@dataclass(frozen=True)
class SetupSpec:
    """Machine geometry plus the fixed layout conventions of a run.

    Layout: page 0 is unclaimed scratch, the IDT starts at page 1, the
    module occupies the first page after the IDT, objects follow the
    module page.
    """

    machine: MachineSpec
    objects: ObjectsSpec
    handler_vector: int = 32
    idt_vectors: int = 64


@dataclass(frozen=True)
class Layout:
    idt_base: int
    idt_limit: int
    module_addr: int
    objects_addrs: tuple[int, ...]
    pages_required: int


def plan_layout(setup: SetupSpec) -> Layout:
    """Compute (and validate) the concrete placement for a setup."""
    ps = setup.machine.page_size
    if setup.idt_vectors < setup.handler_vector + 1:
        raise ConfigurationError(
            f"idt_vectors {setup.idt_vectors} cannot hold vector {setup.handler_vector}"
        )
    idt_base = ps
    idt_limit = setup.idt_vectors * 8
    idt_pages = -(-idt_limit // ps)
    module_page = 1 + idt_pages
    module_addr = module_page * ps
    first_obj_page = module_page + 1
    objs = setup.objects
    if objs.placement == "spread":
        if objs.size_bytes > ps:
            raise ConfigurationError("spread placement requires size_bytes <= page_size")
        addrs = tuple((first_obj_page + i) * ps for i in range(objs.count))
        pages_required = first_obj_page + objs.count
    else:
        base = first_obj_page * ps
        addrs = tuple(base + i * objs.size_bytes for i in range(objs.count))
        pages_required = first_obj_page + -(-objs.count * objs.size_bytes // ps)
    if setup.machine.page_count < pages_required:
        raise ConfigurationError(
            f"machine needs >= {pages_required} pages for this layout, "
            f"got {setup.machine.page_count}"
        )
    return Layout(idt_base, idt_limit, module_addr, addrs, pages_required)


@dataclass(frozen=True)
class DetectionRecord:
    """First detection of one divergence episode of a target."""

    target: Union[int, str]
    tamper_time: Optional[Ticks]
    detected_time: Ticks
    via: str

    def to_json_dict(self) -> dict:
        return {
            "target": self.target,
            "tamper_time": self.tamper_time,
            "detected_time": self.detected_time,
            "via": self.via,
        }


@dataclass
class ScenarioResult:
    """Everything one run produced, fully determined by its inputs."""

    seed: int
    strategy_kind: str
    horizon: Ticks
    baseline_ticks: Ticks
    total_ticks: Ticks
    overhead_ticks: Ticks
    overhead_fraction: float
    cost_breakdown: dict
    workload_base: dict
    counts: dict
    per_event_added: dict
    detections: list
    trap_records: list
    attack_outcomes: list
    config_echo: dict

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "strategy_kind": self.strategy_kind,
            "horizon": self.horizon,
            "baseline_ticks": self.baseline_ticks,
            "total_ticks": self.total_ticks,
            "overhead_ticks": self.overhead_ticks,
            "overhead_fraction": self.overhead_fraction,
            "cost_breakdown": dict(sorted(self.cost_breakdown.items())),
            "workload_base": dict(sorted(self.workload_base.items())),
            "counts": dict(sorted(self.counts.items())),
            "per_event_added": dict(sorted(self.per_event_added.items())),
            "detections": [d.to_json_dict() for d in self.detections],
            "traps": [t.to_json_dict() for t in self.trap_records],
            "attacks": [o.to_json_dict() for o in self.attack_outcomes],
            "config_echo": self.config_echo,
        }


@dataclass(frozen=True)
class OverheadSummary:
    """Strategy-vs-baseline comparison for one (workload, seed) pair."""

    total_overhead_pct: float
    per_syscall_added_us: float
    per_ctxswitch_added_us: float

    def to_json_dict(self) -> dict:
        return {
            "total_overhead_pct": self.total_overhead_pct,
            "per_syscall_added_us": self.per_syscall_added_us,
            "per_ctxswitch_added_us": self.per_ctxswitch_added_us,
        }


def overhead_report(result: ScenarioResult, baseline: ScenarioResult) -> OverheadSummary:
    """Overhead percentages of a strategy run against a baseline run."""
    for key in ("machine", "objects", "workload"):
        if result.config_echo[key] != baseline.config_echo[key]:
            raise ConfigurationError(f"results differ in {key}; cannot compare")
    if result.seed != baseline.seed or result.horizon != baseline.horizon:
        raise ConfigurationError("results differ in seed or horizon; cannot compare")
    pct = 100.0 * (result.total_ticks - baseline.total_ticks) / baseline.total_ticks
    return OverheadSummary(
        total_overhead_pct=pct,
        per_syscall_added_us=result.per_event_added["syscall"] / 1000.0,
        per_ctxswitch_added_us=result.per_event_added["ctxswitch"] / 1000.0,
    )


def _arrival_times(
    rate: float, horizon: Ticks, arrival: Arrival, rng: random.Random
) -> list[Ticks]:
    if rate <= 0:
        return []
    times = []
    if arrival is Arrival.FIXED:
        interval = TICKS_PER_SECOND / rate
        n = 1
        while True:
            t = round(n * interval)
            if t > horizon:
                break
            times.append(t)
            n += 1
    else:
        t_s = 0.0
        while True:
            t_s += rng.expovariate(rate)
            t = round(t_s * TICKS_PER_SECOND)
            if t > horizon:
                break
            times.append(t)
    return times


def _module_code(page_size: int) -> bytes:
    return bytes((7 * i + 13) & 0xFF for i in range(page_size))


# attack action opcodes on the event timeline
_ACT_WRITE = "write"          # object byte write (persistent or dirty-begin)
_ACT_RESTORE = "restore"      # transient restore to baseline byte
_ACT_MODULE = "module_write"
_ACT_IDT = "idt_write"
_ACT_IDTR = "idtr_set"


class _ScenarioRun:
    def __init__(
        self,
        setup: SetupSpec,
        strategy: StrategyConfig,
        workload: WorkloadSpec,
        attacks: Sequence,
        costs: CostModel,
        seed: int,
        trace: Optional[Callable[[dict], None]] = None,
    ):
        self.setup = setup
        self.strategy = strategy
        self.workload = workload
        self.costs = costs
        self.seed = seed
        self.trace = trace
        self.horizon = workload.horizon

        layout = plan_layout(setup)
        self.machine = GuestMachine(setup.machine.page_count, setup.machine.page_size)
        self.machine.set_idtr(layout.idt_base, layout.idt_limit, privileged=True)
        self.machine.load_module(
            _module_code(setup.machine.page_size), layout.module_addr, setup.handler_vector
        )
        for i, addr in enumerate(layout.objects_addrs):
            self.machine.register_kernel_object(f"obj-{i:05d}", addr, setup.objects.size_bytes)
        self.registry = ProtectionRegistry(setup.machine.page_count)
        self.table = snapshot_baselines(self.machine)

        self.device: Optional[VirtualDevice] = None
        if strategy.kind == STRATEGY_HF:
            self.device = install_virtual_device(
                self.machine, setup.handler_vector, strategy.schedule
            )
            self.registry.protect_pages(self.machine.module.page_range(setup.machine.page_size))
            self.registry.protect_pages(self.machine.idt_pages())

        self.scripts = self._normalize_attacks(attacks)
        self.outcomes = {
            label: threat.AttackOutcome(label=label, kind=script.kind)
            for label, script in self.scripts
        }
        self.target_label: dict = {}
        for label, script in self.scripts:
            if isinstance(script, (threat.PersistentTamper, threat.TransientTamper)):
                key = script.object_index
            elif isinstance(script, threat.IdtrTamper):
                key = IDTR_TARGET
            else:
                continue
            if key in self.target_label:
                raise ConfigurationError(
                    f"attacks {self.target_label[key]!r} and {label!r} target "
                    f"the same object"
                )
            self.target_label[key] = label
        self._validate_scripts()

        # divergence episode per target: [dirty_since, episode_detected]
        self.state: dict = {oid: [None, False] for oid in self.machine.objects}
        self.state[IDTR_TARGET] = [None, False]
        self.state[HANDLER_TARGET] = [None, False]

        self.breakdown = {
            "vmexit": 0, "vmentry": 0, "map_page": 0, "hash": 0, "interrupt_delivery": 0,
        }
        self.base = {"syscall": 0, "ctxswitch": 0}
        self.counts = {
            "syscalls": 0, "ctxswitches": 0, "firings": 0, "vmexits": 0,
            "objects_checked": 0, "traps": 0,
        }
        self.added_by_kind = {"syscall": 0, "ctxswitch": 0}
        self.detections: list[DetectionRecord] = []

        self.queue = EventQueue()
        self._schedule_workload()
        self._schedule_firings()
        self._schedule_attacks()

    # -- setup ----------------------------------------------------------

    def _normalize_attacks(self, attacks: Sequence) -> list:
        scripts = []
        for i, entry in enumerate(attacks):
            if isinstance(entry, tuple):
                label, script = entry
            else:
                label, script = f"attack-{i}", entry
            scripts.append((label, script))
        return scripts

    def _validate_scripts(self) -> None:
        n_objects = len(self.machine.objects)
        for label, script in self.scripts:
            if isinstance(script, (threat.PersistentTamper, threat.TransientTamper)):
                if not 0 <= script.object_index < n_objects:
                    raise ConfigurationError(
                        f"attack {label!r}: object index {script.object_index} "
                        f"outside [0, {n_objects})"
                    )
            elif isinstance(script, threat.IdtTamper):
                if not 0 <= script.vector < self.machine.idtr.vector_count:
                    raise ConfigurationError(
                        f"attack {label!r}: vector {script.vector} outside the IDT"
                    )
            elif isinstance(script, threat.IdtrTamper):
                limit = script.new_limit if script.new_limit is not None else self.machine.idtr.limit
                if script.new_base < 0 or script.new_base + limit > self.machine.size:
                    raise ConfigurationError(f"attack {label!r}: new IDTR out of bounds")

    def _schedule_workload(self) -> None:
        sys_rng = random.Random(f"workload-syscall:{self.seed}")
        ctx_rng = random.Random(f"workload-ctxswitch:{self.seed}")
        for t in _arrival_times(self.workload.syscall_rate, self.horizon,
                                self.workload.arrival, sys_rng):
            self.queue.push(t, EventKind.WORKLOAD, ("syscall",))
        for t in _arrival_times(self.workload.ctxswitch_rate, self.horizon,
                                self.workload.arrival, ctx_rng):
            self.queue.push(t, EventKind.WORKLOAD, ("ctxswitch",))

    def _schedule_firings(self) -> None:
        if self.device is None:
            return
        self._firing_times = self.device.schedule.firing_times(self.horizon, salt=self.seed)
        for t in self._firing_times:
            self.queue.push(t, EventKind.DEVICE_FIRING, ("firing",))

    def _visible_schedule(self) -> Optional[list[Ticks]]:
        # the attacker learns firing times only from a guest-visible device
        if self.device is not None and self.device.schedule.guest_visible_times:
            return self._firing_times
        return None

    def _schedule_attacks(self) -> None:
        for label, script in self.scripts:
            if isinstance(script, threat.PersistentTamper):
                obj = self.machine.objects[script.object_index]
                orig = self.machine.read(obj.addr + script.offset, 1)[0]
                data = bytes([orig ^ script.xor_mask])
                self.queue.push(script.at, EventKind.ATTACK,
                                (_ACT_WRITE, label, obj.addr + script.offset, data))
            elif isinstance(script, threat.TransientTamper):
                obj = self.machine.objects[script.object_index]
                addr = obj.addr + script.offset
                orig = self.machine.read(addr, 1)[0]
                dirty = bytes([orig ^ script.xor_mask])
                clean = bytes([orig])
                windows = script.windows
                if script.knowledge is threat.ScheduleKnowledge.GUEST_VISIBLE_ONLY:
                    visible = self._visible_schedule()
                    if visible is not None:
                        windows = threat.clip_windows(windows, visible, EVASION_GUARD_TICKS)
                for start, end in windows:
                    self.queue.push(start, EventKind.ATTACK, (_ACT_WRITE, label, addr, dirty))
                    self.queue.push(end, EventKind.ATTACK, (_ACT_RESTORE, label, addr, clean))
            elif isinstance(script, threat.CodeTamper):
                addr = self.machine.module.addr + script.offset
                self.queue.push(script.at, EventKind.ATTACK,
                                (_ACT_MODULE, label, addr, script.payload))
            elif isinstance(script, threat.IdtTamper):
                self.queue.push(script.at, EventKind.ATTACK,
                                (_ACT_IDT, label, script.vector, script.new_handler))
            elif isinstance(script, threat.IdtrTamper):
                self.queue.push(script.at, EventKind.ATTACK,
                                (_ACT_IDTR, label, script.new_base, script.new_limit))
            else:
                raise ConfigurationError(f"unknown attack script {script!r}")

    # -- event dispatch --------------------------------------------------

    def run(self) -> ScenarioResult:
        while True:
            event = self.queue.pop()
            if event is None or event.time > self.horizon:
                break
            if event.kind is EventKind.WORKLOAD:
                self._on_workload(event)
            elif event.kind is EventKind.DEVICE_FIRING:
                self._on_firing(event)
            elif event.kind is EventKind.ATTACK:
                self._on_attack(event)
        return self._finish()

    def _emit(self, entry: dict) -> None:
        if self.trace is not None:
            self.trace(entry)

    def _on_workload(self, event: Event) -> None:
        op = event.payload[0]
        if op == "syscall":
            self.counts["syscalls"] += 1
            self.base["syscall"] += self.costs.t_syscall_base
        else:
            self.counts["ctxswitches"] += 1
            self.base["ctxswitch"] += self.costs.t_ctxswitch_base
        self._emit({"t": event.time, "kind": op})
        if self.strategy.kind != STRATEGY_HRK:
            return
        report = on_control_register_write(
            self.machine, self.registry, self.table, self.costs,
            self.strategy.batch_k, now=event.time,
        )
        self.counts["vmexits"] += 1
        self.counts["objects_checked"] += sum(1 for c in report.checked if isinstance(c, int))
        self.breakdown["vmexit"] += self.costs.t_vmexit
        self.breakdown["vmentry"] += self.costs.t_vmentry
        self.breakdown["map_page"] += report.map_cost
        self.breakdown["hash"] += report.hash_cost
        self.added_by_kind[op] += report.duration
        self._emit({
            "t": event.time, "kind": "vmexit_check",
            "checked": len(report.checked), "violations": len(report.violations),
        })
        self._process_violations(report.violations, via="hrk_vmexit")

    def _on_firing(self, event: Event) -> None:
        self.counts["firings"] += 1
        self._emit({"t": event.time, "kind": "firing_start"})
        report = fire_interrupt(
            self.device, self.machine, self.registry, self.table, self.costs,
            now=event.time, trace=self.trace,
        )
        self.breakdown["interrupt_delivery"] += self.costs.t_interrupt_delivery
        self.breakdown["hash"] += report.hash_cost
        self.counts["objects_checked"] += sum(1 for c in report.checked if isinstance(c, int))
        self._emit({
            "t": event.time, "kind": "firing_end",
            "checked": len(report.checked), "violations": len(report.violations),
            "subverted": report.subverted,
        })
        self._process_violations(report.violations, via="hf_interrupt")

    def _on_attack(self, event: Event) -> None:
        action, label = event.payload[0], event.payload[1]
        outcome = self.outcomes[label]
        now = event.time
        if action in (_ACT_WRITE, _ACT_RESTORE, _ACT_MODULE):
            addr, data = event.payload[2], event.payload[3]
            result = self.machine.guest_write(self.registry, addr, data, now=now)
            self._account_write(outcome, result, now)
            if result.applied:
                for oid in self.machine.objects_overlapping(addr, len(data)):
                    self._refresh_object_state(oid, now)
        elif action == _ACT_IDT:
            vector, handler = event.payload[2], event.payload[3]
            result = self.machine.set_idt_entry(vector, handler, self.registry, now=now)
            self._account_write(outcome, result, now)
        elif action == _ACT_IDTR:
            base, limit = event.payload[2], event.payload[3]
            if limit is None:
                limit = self.machine.idtr.limit
            self.machine.set_idtr(base, limit, privileged=False)
            outcome.attempted += 1
            outcome.applied += 1
            self._refresh_idtr_state(now)
        self._emit({"t": now, "kind": "attack", "label": label, "action": action})

    def _account_write(self, outcome, result, now: Ticks) -> None:
        outcome.attempted += 1
        if result.applied:
            outcome.applied += 1
        else:
            outcome.trapped += 1
            outcome.note_detection(now)
            self._emit({"t": now, "kind": "trap", "trap": result.trap.to_json_dict()})

    def _refresh_object_state(self, oid: int, now: Ticks) -> None:
        clean = self.table.current_digest(self.machine, oid) == self.table.entries[oid]
        self._refresh_state(oid, clean, now)

    def _refresh_idtr_state(self, now: Ticks) -> None:
        clean = (self.machine.idtr.base, self.machine.idtr.limit) == self.table.idtr_baseline
        self._refresh_state(IDTR_TARGET, clean, now)

    def _refresh_state(self, target, clean: bool, now: Ticks) -> None:
        st = self.state[target]
        if clean:
            st[0] = None
            st[1] = False
            return
        if st[0] is None:
            st[0] = now
            st[1] = False
        label = self.target_label.get(target)
        if label is not None:
            self.outcomes[label].was_dirty = True

    def _process_violations(self, violations, via: str) -> None:
        for violation in violations:
            target = violation.target
            st = self.state[target]
            if st[1]:
                continue  # this divergence episode was already reported
            st[1] = True
            tamper_time = st[0]
            if target == HANDLER_TARGET and tamper_time is None:
                # handler subversion traces back to the IDTR move, if any
                tamper_time = self.state[IDTR_TARGET][0]
            record = DetectionRecord(
                target=target, tamper_time=tamper_time,
                detected_time=violation.time, via=via,
            )
            self.detections.append(record)
            self._emit({"t": violation.time, "kind": "detection", **record.to_json_dict()})
            label = self.target_label.get(target)
            if label is None and target == HANDLER_TARGET:
                label = self.target_label.get(IDTR_TARGET)
            if label is not None:
                self.outcomes[label].note_detection(violation.time)

    # -- result assembly --------------------------------------------------

    def _finish(self) -> ScenarioResult:
        for outcome in self.outcomes.values():
            outcome.finalize()
        self.counts["traps"] = len(self.registry.trap_log)
        overhead = sum(self.breakdown.values())
        per_event_added = {
            "syscall": (self.added_by_kind["syscall"] / self.counts["syscalls"])
            if self.counts["syscalls"] else 0.0,
            "ctxswitch": (self.added_by_kind["ctxswitch"] / self.counts["ctxswitches"])
            if self.counts["ctxswitches"] else 0.0,
        }
        echo = {
            "machine": {"page_count": self.setup.machine.page_count,
                        "page_size": self.setup.machine.page_size},
            "objects": {"count": self.setup.objects.count,
                        "size_bytes": self.setup.objects.size_bytes,
                        "placement": self.setup.objects.placement},
            "workload": {"syscall_rate": self.workload.syscall_rate,
                         "ctxswitch_rate": self.workload.ctxswitch_rate,
                         "arrival": self.workload.arrival.value,
                         "horizon": self.horizon},
            "strategy": {"kind": self.strategy.kind,
                         "batch_k": self.strategy.batch_k,
                         "schedule": None if self.strategy.schedule is None else {
                             "mode": self.strategy.schedule.mode.value,
                             "period": self.strategy.schedule.period,
                             "jitter": self.strategy.schedule.jitter,
                             "seed": self.strategy.schedule.seed,
                         }},
            "seed": self.seed,
        }
        return ScenarioResult(
            seed=self.seed,
            strategy_kind=self.strategy.kind,
            horizon=self.horizon,
            baseline_ticks=self.horizon,
            total_ticks=self.horizon + overhead,
            overhead_ticks=overhead,
            overhead_fraction=overhead / self.horizon,
            cost_breakdown=self.breakdown,
            workload_base=self.base,
            counts=self.counts,
            per_event_added=per_event_added,
            detections=self.detections,
            trap_records=list(self.registry.trap_log),
            attack_outcomes=[self.outcomes[label] for label, _ in self.scripts],
            config_echo=echo,
        )


def run_scenario(
    setup: SetupSpec,
    strategy: StrategyConfig,
    workload: WorkloadSpec,
    attacks: Sequence = (),
    costs: CostModel = CostModel(),
    seed: int = 0,
    trace: Optional[Callable[[dict], None]] = None,
) -> ScenarioResult:
    """Execute one deterministic run and return its full result."""
    return _ScenarioRun(setup, strategy, workload, attacks, costs, seed, trace).run()
