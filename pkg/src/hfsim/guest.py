"""Simulated guest machine: paged physical memory, IDT, IDTR, kernel objects.

Every guest-initiated write goes through :meth:`GuestMachine.guest_write`,
which consults the hypervisor's protection registry and vetoes the write
whole if it touches any protected page. Reads are never mediated. A
privileged write path exists for hypervisor-side setup (module loading)
and for test harnesses that need to model bugs bypassing protection.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Iterator, Optional

from .errors import AddressError, ConfigurationError
from .hypervisor import ProtectionRegistry, TrapKind, TrapRecord
from .timebase import Ticks

IDT_ENTRY_SIZE = 8
MIN_PAGE_SIZE = 64


@dataclass(frozen=True)
class Idtr:
    """Interrupt descriptor table register: base address and byte length."""

    base: int
    limit: int

    @property
    def vector_count(self) -> int:
        return self.limit // IDT_ENTRY_SIZE


@dataclass(frozen=True)
class Page:
    """One page of guest-physical memory, as exported by snapshots."""

    index: int
    data: bytes


@dataclass(frozen=True)
class KernelObjectDescriptor:
    """A registered invariant kernel object: a named guest-physical range."""

    object_id: int
    name: str
    addr: int
    length: int

    @property
    def end(self) -> int:
        return self.addr + self.length


@dataclass(frozen=True)
class ModuleRegion:
    """Pages holding the in-guest monitoring module's code and data.

    The region is page-aligned at both ends because protection is
    page-granular; the IDT entry at ``handler_vector`` points into it.
    """

    addr: int
    length: int
    handler_vector: int

    @property
    def end(self) -> int:
        return self.addr + self.length

    def contains(self, addr: int) -> bool:
        return self.addr <= addr < self.end

    def page_range(self, page_size: int) -> range:
        return range(self.addr // page_size, (self.end - 1) // page_size + 1)


@dataclass(frozen=True)
class WriteOutcome:
    """Result of a mediated write: applied, or trapped with a record.

    A trapped write leaves memory completely unchanged, even when the
    write span also covered unprotected pages.
    """

    applied: bool
    trap: Optional[TrapRecord] = None

    @property
    def trapped(self) -> bool:
        return not self.applied


class GuestMachine:
    """Guest-physical memory plus the architectural state this model needs."""

    def __init__(self, page_count: int, page_size: int = 4096):
        if page_count < 1:
            raise ConfigurationError(f"page_count must be >= 1, got {page_count}")
        if page_size < MIN_PAGE_SIZE or page_size & (page_size - 1) != 0:
            raise ConfigurationError(
                f"page_size must be a power of two >= {MIN_PAGE_SIZE}, got {page_size}"
            )
        self.page_count = page_count
        self.page_size = page_size
        self._mem = bytearray(page_count * page_size)
        self.idtr = Idtr(0, 0)  # unset sentinel
        self.objects: dict[int, KernelObjectDescriptor] = {}
        self.module: Optional[ModuleRegion] = None
        self._next_object_id = 0
        # write-epoch per object, bumped whenever its bytes may have changed;
        # lets digest layers memoize without rehashing untouched objects
        self._epochs: dict[int, int] = {}
        self._starts: list[int] = []
        self._index: list[tuple[int, int, int]] = []  # (addr, end, id), sorted
        self._index_stale = False
        self._max_obj_len = 0

    # ------------------------------------------------------------------
    # memory access
    # ------------------------------------------------------------------

    @property
    def size(self) -> int:
        return self.page_count * self.page_size

    def _check_range(self, addr: int, length: int) -> None:
        if addr < 0 or length < 0 or addr + length > self.size:
            raise AddressError(
                f"range [{addr}, {addr + length}) outside memory of {self.size} bytes"
            )

    def read(self, addr: int, length: int) -> bytes:
        """Unmediated read; protection never affects reads."""
        self._check_range(addr, length)
        return bytes(self._mem[addr : addr + length])

    def guest_write(
        self,
        reg: ProtectionRegistry,
        addr: int,
        data: bytes,
        now: Ticks = 0,
    ) -> WriteOutcome:
        """Mediated write: vetoed whole if any touched page is protected."""
        self._check_range(addr, len(data))
        if data:
            first = addr // self.page_size
            last = (addr + len(data) - 1) // self.page_size
            hit = [p for p in range(first, last + 1) if reg.is_protected(p)]
            if hit:
                trap = reg.record_trap(
                    time=now,
                    addr=addr,
                    length=len(data),
                    page=hit[0],
                    kind=self._classify_write(addr, len(data)),
                )
                return WriteOutcome(applied=False, trap=trap)
        self._store(addr, data)
        return WriteOutcome(applied=True)

    def privileged_write(self, addr: int, data: bytes) -> None:
        """Hypervisor-side write; bypasses the protection check."""
        self._check_range(addr, len(data))
        self._store(addr, data)

    def _store(self, addr: int, data: bytes) -> None:
        self._mem[addr : addr + len(data)] = data
        if self._epochs:
            for oid in self.objects_overlapping(addr, len(data)):
                self._epochs[oid] += 1

    def _classify_write(self, addr: int, length: int) -> TrapKind:
        end = addr + length
        if self.module is not None and addr < self.module.end and end > self.module.addr:
            return TrapKind.MODULE_CODE_WRITE
        if self.idtr.limit > 0:
            idt_end = self.idtr.base + self.idtr.limit
            if addr < idt_end and end > self.idtr.base:
                return TrapKind.IDT_WRITE
        return TrapKind.OTHER_PROTECTED_WRITE

    # ------------------------------------------------------------------
    # IDT / IDTR
    # ------------------------------------------------------------------

    def set_idtr(self, base: int, limit: int, privileged: bool = False) -> None:
        """Update the IDTR.

        Non-privileged updates model an attacker moving the table: they are
        applied silently (a register write traps nothing) and are only
        caught later by the IDTR baseline check.
        """
        if limit < 0 or limit % IDT_ENTRY_SIZE != 0:
            raise ConfigurationError(
                f"idtr limit must be a non-negative multiple of {IDT_ENTRY_SIZE}"
            )
        self._check_range(base, limit)
        self.idtr = Idtr(base, limit)

    def idt_pages(self) -> range:
        if self.idtr.limit == 0:
            return range(0)
        first = self.idtr.base // self.page_size
        last = (self.idtr.base + self.idtr.limit - 1) // self.page_size
        return range(first, last + 1)

    def _vector_addr(self, vector: int) -> int:
        if vector < 0 or vector >= self.idtr.vector_count:
            raise ConfigurationError(
                f"vector {vector} outside IDT of {self.idtr.vector_count} entries"
            )
        return self.idtr.base + IDT_ENTRY_SIZE * vector

    def set_idt_entry(
        self,
        vector: int,
        handler_addr: int,
        reg: Optional[ProtectionRegistry] = None,
        now: Ticks = 0,
        privileged: bool = False,
    ) -> WriteOutcome:
        """Write the 8-byte little-endian handler address for a vector.

        The guest path is an ordinary mediated write, so it traps once the
        IDT page is protected. The privileged path (module loading) always
        applies.
        """
        entry_addr = self._vector_addr(vector)
        if handler_addr < 0 or handler_addr >= 1 << 64:
            raise ConfigurationError("handler address does not fit in 8 bytes")
        encoded = handler_addr.to_bytes(IDT_ENTRY_SIZE, "little")
        if privileged:
            self.privileged_write(entry_addr, encoded)
            return WriteOutcome(applied=True)
        if reg is None:
            raise ConfigurationError("guest IDT write requires the protection registry")
        return self.guest_write(reg, entry_addr, encoded, now=now)

    def idt_entry(self, vector: int) -> int:
        """Read the handler address for a vector through the current IDTR."""
        entry_addr = self._vector_addr(vector)
        self._check_range(entry_addr, IDT_ENTRY_SIZE)
        return int.from_bytes(self._mem[entry_addr : entry_addr + IDT_ENTRY_SIZE], "little")

    # ------------------------------------------------------------------
    # module and kernel objects
    # ------------------------------------------------------------------

    def load_module(self, code: bytes, addr: int, handler_vector: int) -> ModuleRegion:
        """Install the monitoring module and point its vector at it.

        The code write and the IDT entry update are privileged: loading
        happens during the trusted setup phase. Reloading at the same (or
        another) address replaces the previous region.
        """
        if not code:
            raise ConfigurationError("module code must be non-empty")
        if addr % self.page_size != 0:
            raise ConfigurationError(f"module address {addr} is not page-aligned")
        if self.idtr.limit == 0:
            raise ConfigurationError("IDT must be placed before loading the module")
        pages = -(-len(code) // self.page_size)
        length = pages * self.page_size
        self._check_range(addr, length)
        region = ModuleRegion(addr=addr, length=length, handler_vector=handler_vector)
        self._vector_addr(handler_vector)  # validates the vector
        for page in region.page_range(self.page_size):
            if page in self.idt_pages():
                raise ConfigurationError(
                    "module region may not share pages with the IDT"
                )
        for obj in self.objects.values():
            if obj.addr < region.end and obj.end > region.addr:
                raise ConfigurationError(
                    f"module region overlaps object {obj.object_id} ({obj.name})"
                )
        self.privileged_write(addr, code)
        self.set_idt_entry(handler_vector, addr, privileged=True)
        self.module = region
        return region

    def register_kernel_object(self, name: str, addr: int, length: int) -> int:
        """Register an invariant object range; returns its sequential id."""
        if length <= 0:
            raise ConfigurationError(f"object length must be positive, got {length}")
        self._check_range(addr, length)
        if self.module is not None:
            if addr < self.module.end and addr + length > self.module.addr:
                raise ConfigurationError(
                    f"object {name!r} overlaps the module region"
                )
        oid = self._next_object_id
        self._next_object_id += 1
        self.objects[oid] = KernelObjectDescriptor(oid, name, addr, length)
        self._epochs[oid] = 0
        self._index_stale = True
        if length > self._max_obj_len:
            self._max_obj_len = length
        return oid

    def object_epoch(self, object_id: int) -> int:
        return self._epochs[object_id]

    def objects_overlapping(self, addr: int, length: int) -> list[int]:
        """Ids of registered objects intersecting [addr, addr+length)."""
        if not self.objects or length <= 0:
            return []
        if self._index_stale:
            self._index = sorted(
                (o.addr, o.end, o.object_id) for o in self.objects.values()
            )
            self._starts = [entry[0] for entry in self._index]
            self._index_stale = False
        end = addr + length
        lo = bisect_left(self._starts, addr - self._max_obj_len + 1)
        hi = bisect_right(self._starts, end - 1)
        return [oid for s, e, oid in self._index[lo:hi] if e > addr and s < end]

    # ------------------------------------------------------------------
    # snapshot export
    # ------------------------------------------------------------------

    def snapshot(self) -> bytes:
        """Full memory image (used by veto-atomicity and golden-file tests)."""
        return bytes(self._mem)

    def page(self, index: int) -> Page:
        if index < 0 or index >= self.page_count:
            raise AddressError(f"page {index} outside machine of {self.page_count} pages")
        start = index * self.page_size
        return Page(index, bytes(self._mem[start : start + self.page_size]))

    def pages(self) -> Iterator[Page]:
        for i in range(self.page_count):
            yield self.page(i)


def new_machine(page_count: int, page_size: int = 4096) -> GuestMachine:
    """Zero-initialized machine with no objects, no module, IDTR unset."""
    return GuestMachine(page_count, page_size)
