"""Digest-based invariance checking over registered kernel objects.

A baseline table snapshots one digest per object (plus the IDTR value)
while the machine is still trusted. Checking compares current digests
against the baseline, either over everything at once (the in-guest sweep)
or over a round-robin batch per call (the in-hypervisor path). The hash is
64-bit FNV-1a behind a pluggable digest function; digest-collision forgery
is out of scope for this model.

Current digests are memoized against each object's write epoch, so a check
only rehashes objects whose bytes may have changed since the last check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Optional, Union

from .errors import ConfigurationError
from .timebase import Ticks

if TYPE_CHECKING:
    from .guest import GuestMachine

FNV64_OFFSET_BASIS = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

IDTR_TARGET = "idtr"
HANDLER_TARGET = "handler"

DigestFn = Callable[[bytes], int]


def compute_digest(data: bytes) -> int:
    """64-bit FNV-1a over the byte sequence."""
    h = FNV64_OFFSET_BASIS
    for b in data:
        h = ((h ^ b) * FNV64_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class Violation:
    """A checked target whose current value differs from its baseline."""

    target: Union[int, str]
    expected: object
    found: object
    time: Ticks

    def to_json_dict(self) -> dict:
        def plain(v):
            return list(v) if isinstance(v, tuple) else v

        return {
            "target": self.target,
            "expected": plain(self.expected),
            "found": plain(self.found),
            "time": self.time,
        }


@dataclass
class CheckReport:
    """What one check pass looked at, what it found, and what it cost."""

    checked: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    duration: Ticks = 0
    cycle_completed: bool = False


class BaselineTable:
    """Precomputed per-object digests plus the round-robin check cursor."""

    def __init__(
        self,
        entries: dict[int, int],
        idtr_baseline: tuple[int, int],
        digest_fn: DigestFn = compute_digest,
    ):
        self.entries = dict(entries)
        self.idtr_baseline = idtr_baseline
        self.digest_fn = digest_fn
        self.order: list[int] = sorted(self.entries)
        self.cursor = 0
        self._cache: dict[int, tuple[int, int]] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def current_digest(self, machine: "GuestMachine", object_id: int) -> int:
        """Digest of the object's current bytes, memoized by write epoch."""
        epoch = machine.object_epoch(object_id)
        cached = self._cache.get(object_id)
        if cached is not None and cached[0] == epoch:
            return cached[1]
        obj = machine.objects[object_id]
        digest = self.digest_fn(machine.read(obj.addr, obj.length))
        self._cache[object_id] = (epoch, digest)
        return digest

    def peek_batch(self, k: int) -> list[int]:
        """Object ids the next check_batch(k) call will cover."""
        if k <= 0:
            raise ConfigurationError(f"batch size must be >= 1, got {k}")
        n = len(self.order)
        return [self.order[(self.cursor + i) % n] for i in range(min(k, n))]


def snapshot_baselines(
    machine: "GuestMachine", digest_fn: DigestFn = compute_digest
) -> BaselineTable:
    """Digest every registered object and snapshot the IDTR; cursor = 0.

    Meant to run during the trusted setup phase, before any attacker event.
    Identical object contents share one digest computation.
    """
    if not machine.objects:
        raise ConfigurationError("cannot snapshot baselines: no objects registered")
    memo: dict[bytes, int] = {}
    entries = {}
    for oid, obj in machine.objects.items():
        data = machine.read(obj.addr, obj.length)
        digest = memo.get(data)
        if digest is None:
            digest = digest_fn(data)
            memo[data] = digest
        entries[oid] = digest
    return BaselineTable(
        entries=entries,
        idtr_baseline=(machine.idtr.base, machine.idtr.limit),
        digest_fn=digest_fn,
    )


def verify_idtr(
    machine: "GuestMachine", table: BaselineTable, now: Ticks = 0
) -> Optional[Violation]:
    """Violation iff the current (base, limit) differs from the snapshot."""
    current = (machine.idtr.base, machine.idtr.limit)
    if current == table.idtr_baseline:
        return None
    return Violation(
        target=IDTR_TARGET, expected=table.idtr_baseline, found=current, time=now
    )


def check_batch(
    machine: "GuestMachine",
    table: BaselineTable,
    k: int,
    hash_ticks_per_byte: Ticks = 0,
    now: Ticks = 0,
) -> CheckReport:
    """Check the next k objects from the cursor (wrapping), advance it.

    k saturates at the object count, so k >= N is one full pass. Whenever
    the batch covers the last object in id order a cycle has completed and
    the IDTR rides along as a pseudo-object.
    """
    if k < 1:
        raise ConfigurationError(f"batch size must be >= 1, got {k}")
    n = len(table.order)
    k_eff = min(k, n)
    report = CheckReport()
    duration = 0
    wrapped = False
    for i in range(k_eff):
        idx = (table.cursor + i) % n
        if idx == n - 1:
            wrapped = True
        oid = table.order[idx]
        duration += machine.objects[oid].length * hash_ticks_per_byte
        found = table.current_digest(machine, oid)
        report.checked.append(oid)
        if found != table.entries[oid]:
            report.violations.append(
                Violation(target=oid, expected=table.entries[oid], found=found,
                          time=now + duration)
            )
    if wrapped:
        report.checked.append(IDTR_TARGET)
        violation = verify_idtr(machine, table, now=now + duration)
        if violation is not None:
            report.violations.append(violation)
    table.cursor = (table.cursor + k_eff) % n
    report.duration = duration
    report.cycle_completed = wrapped
    return report


def check_all(
    machine: "GuestMachine",
    table: BaselineTable,
    hash_ticks_per_byte: Ticks = 0,
    now: Ticks = 0,
) -> CheckReport:
    """Check every object once plus the IDTR; the cursor is untouched."""
    if not table.entries:
        raise ConfigurationError("baseline table is empty")
    report = CheckReport(cycle_completed=True)
    duration = 0
    for oid in table.order:
        duration += machine.objects[oid].length * hash_ticks_per_byte
        found = table.current_digest(machine, oid)
        report.checked.append(oid)
        if found != table.entries[oid]:
            report.violations.append(
                Violation(target=oid, expected=table.entries[oid], found=found,
                          time=now + duration)
            )
    report.checked.append(IDTR_TARGET)
    violation = verify_idtr(machine, table, now=now + duration)
    if violation is not None:
        report.violations.append(violation)
    report.duration = duration
    return report
