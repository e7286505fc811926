"""Hypervisor-side authority: page protection, traps, and the virtual device.

The hypervisor outranks the guest kernel. It owns the set of write-protected
pages and the trap log, it owns the virtual interrupt device whose firing
schedule the guest can never observe (unless deliberately configured as
guest-visible for experiments), and it drives both checking strategies:

* the forced in-guest checker: unlock module pages, dispatch through the
  IDT into the module, run a full sweep, re-lock (:func:`fire_interrupt`);
* the in-hypervisor checker: on every control-register-write VMExit, map
  the next batch of object pages into hypervisor space and check them
  (:func:`on_control_register_write`).
"""

from __future__ import annotations

import enum
import json
import random
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterable, Optional

from . import integrity
from .errors import AddressError, ConfigurationError
from .timebase import TICKS_PER_SECOND, Ticks, seconds_from_ticks

if TYPE_CHECKING:
    from .guest import GuestMachine
    from .simulation import CostModel


class TrapKind(enum.Enum):
    MODULE_CODE_WRITE = "module_code_write"
    IDT_WRITE = "idt_write"
    OTHER_PROTECTED_WRITE = "other_protected_write"


@dataclass(frozen=True)
class TrapRecord:
    """One vetoed write: when, where, and which protected region it hit."""

    time: Ticks
    addr: int
    length: int
    page: int
    kind: TrapKind

    def to_json_dict(self) -> dict:
        return {
            "time": self.time,
            "addr": self.addr,
            "len": self.length,
            "page": self.page,
            "kind": self.kind.value,
        }


class ProtectionRegistry:
    """Write-protected page set plus the append-only, time-ordered trap log."""

    def __init__(self, page_count: int):
        self.page_count = page_count
        self.protected_pages: set[int] = set()
        self.trap_log: list[TrapRecord] = []

    def _check_pages(self, pages: Iterable[int]) -> list[int]:
        pages = list(pages)
        for p in pages:
            if p < 0 or p >= self.page_count:
                raise AddressError(f"page {p} outside machine of {self.page_count} pages")
        return pages

    def protect_pages(self, pages: Iterable[int]) -> None:
        """Add pages to the protected set (idempotent)."""
        self.protected_pages.update(self._check_pages(pages))

    def unprotect_pages(self, pages: Iterable[int]) -> None:
        """Remove pages from the protected set; absent pages are a no-op."""
        self.protected_pages.difference_update(self._check_pages(pages))

    def is_protected(self, page: int) -> bool:
        return page in self.protected_pages

    def record_trap(
        self, time: Ticks, addr: int, length: int, page: int, kind: TrapKind
    ) -> TrapRecord:
        record = TrapRecord(time=time, addr=addr, length=length, page=page, kind=kind)
        self.trap_log.append(record)
        return record

    def trap_log_json_lines(self) -> Iterable[str]:
        """Trap log as JSON lines, one record per line."""
        for record in self.trap_log:
            yield json.dumps(record.to_json_dict(), sort_keys=True)


class ScheduleMode(enum.Enum):
    PERIODIC = "periodic"
    PERIODIC_JITTERED = "jittered"
    GUEST_VISIBLE = "guest_visible"


@dataclass(frozen=True)
class FiringSchedule:
    """When the virtual device raises its interrupt.

    PERIODIC and PERIODIC_JITTERED are hypervisor-private: nothing in
    guest-visible state carries the firing times. GUEST_VISIBLE models a
    naive in-guest timer whose (periodic) schedule an attacker can read.

    Jittered firings are ``i*period + round(u_i * 1e9)`` ticks where the
    ``u_i`` are drawn in order from ``random.Random(f"device:{seed}")``
    (or ``f"device:{seed}:{salt}"``) as ``uniform(-J, +J)`` seconds.
    """

    mode: ScheduleMode
    period: Ticks
    jitter: Ticks = 0
    seed: int = 0

    def __post_init__(self):
        if self.period <= 0:
            raise ConfigurationError("schedule period must be positive")
        if not 0 <= self.jitter < self.period:
            raise ConfigurationError("jitter must satisfy 0 <= J < period")
        if self.mode is not ScheduleMode.PERIODIC_JITTERED and self.jitter != 0:
            raise ConfigurationError(f"{self.mode.value} schedule takes no jitter")

    @classmethod
    def periodic(cls, period: Ticks) -> "FiringSchedule":
        return cls(ScheduleMode.PERIODIC, period)

    @classmethod
    def jittered(cls, period: Ticks, jitter: Ticks, seed: int = 0) -> "FiringSchedule":
        return cls(ScheduleMode.PERIODIC_JITTERED, period, jitter, seed)

    @classmethod
    def guest_visible(cls, period: Ticks) -> "FiringSchedule":
        return cls(ScheduleMode.GUEST_VISIBLE, period)

    @property
    def guest_visible_times(self) -> bool:
        return self.mode is ScheduleMode.GUEST_VISIBLE

    def firing_times(self, horizon: Ticks, salt: Optional[int] = None) -> list[Ticks]:
        """All firing instants in (0, horizon], sorted ascending."""
        times = []
        if self.mode is ScheduleMode.PERIODIC_JITTERED:
            key = f"device:{self.seed}" if salt is None else f"device:{self.seed}:{salt}"
            rng = random.Random(key)
            jitter_s = seconds_from_ticks(self.jitter)
            i = 1
            while i * self.period - self.jitter <= horizon:
                t = i * self.period + round(rng.uniform(-jitter_s, jitter_s) * TICKS_PER_SECOND)
                if 0 < t <= horizon:
                    times.append(t)
                i += 1
            times.sort()
        else:
            i = 1
            while i * self.period <= horizon:
                times.append(i * self.period)
                i += 1
        return times


@dataclass(frozen=True)
class VirtualDevice:
    """Hypervisor-owned interrupt source bound to the module's vector."""

    vector: int
    schedule: FiringSchedule


def install_virtual_device(
    machine: "GuestMachine", vector: int, schedule: FiringSchedule
) -> VirtualDevice:
    """Register the device; its vector must match the loaded module's."""
    if machine.module is None:
        raise ConfigurationError("cannot install device before the module is loaded")
    if vector != machine.module.handler_vector:
        raise ConfigurationError(
            f"device vector {vector} does not match module handler vector "
            f"{machine.module.handler_vector}"
        )
    return VirtualDevice(vector=vector, schedule=schedule)


@dataclass
class InterruptReport:
    """Outcome of one device interrupt: the forced in-guest sweep."""

    time: Ticks
    duration: Ticks
    checked: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    hash_cost: Ticks = 0
    subverted: bool = False


@dataclass
class VmexitReport:
    """Outcome of one control-register-write VMExit batch check."""

    time: Ticks
    duration: Ticks
    checked: list
    violations: list
    pages_mapped: int
    map_cost: Ticks
    hash_cost: Ticks
    cycle_completed: bool


def fire_interrupt(
    device: VirtualDevice,
    machine: "GuestMachine",
    reg: ProtectionRegistry,
    table: integrity.BaselineTable,
    costs: "CostModel",
    now: Ticks = 0,
    trace: Optional[Callable[[dict], None]] = None,
) -> InterruptReport:
    """Unlock-dispatch-sweep-relock envelope for one device interrupt.

    The handler address is read through the *current* IDTR before dispatch;
    if it no longer points inside the module region the sweep is refused
    and an integrity-subversion detection is reported instead. The envelope
    is atomic with respect to guest events: no guest write can interleave
    between the unlock and the relock.
    """
    module = machine.module
    if module is None:
        raise ConfigurationError("fire_interrupt requires a loaded module")
    delivery = costs.t_interrupt_delivery
    try:
        handler = machine.idt_entry(device.vector)
    except (ConfigurationError, AddressError):
        handler = None
    if handler is None or not module.contains(handler):
        violation = integrity.Violation(
            target=integrity.HANDLER_TARGET,
            expected=(module.addr, module.end),
            found=handler,
            time=now + delivery,
        )
        return InterruptReport(
            time=now,
            duration=delivery,
            violations=[violation],
            subverted=True,
        )

    pages = list(module.page_range(machine.page_size))
    reg.unprotect_pages(pages)
    if trace is not None:
        trace({"t": now, "kind": "module_unprotect", "pages": pages})
    report = integrity.check_all(
        machine, table, hash_ticks_per_byte=costs.t_hash_per_byte, now=now + delivery
    )
    reg.protect_pages(pages)
    if trace is not None:
        trace({"t": now, "kind": "module_protect", "pages": pages})
    return InterruptReport(
        time=now,
        duration=delivery + report.duration,
        checked=report.checked,
        violations=report.violations,
        hash_cost=report.duration,
    )


def on_control_register_write(
    machine: "GuestMachine",
    reg: ProtectionRegistry,
    table: integrity.BaselineTable,
    costs: "CostModel",
    k: int,
    now: Ticks = 0,
) -> VmexitReport:
    """Model one MOV_CR* VMExit: map, check the next k objects, re-enter.

    Charges the exit/entry transitions plus one page-remap per distinct
    page touched by the batch (the in-hypervisor checker cannot read guest
    memory natively). The batch cursor advances round-robin.
    """
    if k <= 0:
        raise ConfigurationError(f"batch size must be >= 1, got {k}")
    batch = table.peek_batch(k)
    pages = set()
    for oid in batch:
        obj = machine.objects[oid]
        first = obj.addr // machine.page_size
        last = (obj.end - 1) // machine.page_size
        pages.update(range(first, last + 1))
    map_cost = len(pages) * costs.t_map_page
    start = now + costs.t_vmexit + map_cost
    report = integrity.check_batch(
        machine, table, k, hash_ticks_per_byte=costs.t_hash_per_byte, now=start
    )
    duration = costs.t_vmexit + map_cost + report.duration + costs.t_vmentry
    return VmexitReport(
        time=now,
        duration=duration,
        checked=report.checked,
        violations=report.violations,
        pages_mapped=len(pages),
        map_cost=map_cost,
        hash_cost=report.duration,
        cycle_completed=report.cycle_completed,
    )
