"""Shared helpers and independent oracles for the test suite."""

from hfsim.simulation import MachineSpec, ObjectsSpec, SetupSpec


def fnv1a64_ref(data: bytes) -> int:
    """Independent FNV-1a 64 reference, straight from the definition.

    Kept deliberately separate from the implementation: xor byte, multiply
    by the prime, reduce mod 2**64.
    """
    h = 0xCBF29CE484222325
    for byte in data:
        h = h ^ byte
        h = (h * 0x100000001B3) % (2**64)
    return h


def make_setup(
    count: int = 4,
    size_bytes: int = 64,
    page_size: int = 4096,
    placement: str = "spread",
    idt_vectors: int = 64,
    extra_pages: int = 0,
) -> SetupSpec:
    """Setup spec with page_count auto-sized to fit the standard layout."""
    idt_pages = -(-idt_vectors * 8 // page_size)
    first_obj_page = 1 + idt_pages + 1
    if placement == "spread":
        pages = first_obj_page + count
    else:
        pages = first_obj_page + -(-count * size_bytes // page_size)
    return SetupSpec(
        machine=MachineSpec(page_count=pages + extra_pages, page_size=page_size),
        objects=ObjectsSpec(count=count, size_bytes=size_bytes, placement=placement),
        idt_vectors=idt_vectors,
    )


def assert_conservation(result) -> None:
    """The exact fixed-point accounting identity every run must satisfy."""
    assert result.total_ticks == result.baseline_ticks + sum(
        result.cost_breakdown.values()
    )
    assert result.overhead_ticks == sum(result.cost_breakdown.values())
    assert result.baseline_ticks == result.horizon
