"""Domain type invariants: groups, payload generation, schedule validation."""

import pytest

from allgather_lab import (
    Step,
    block_payload,
    make_block,
    make_group,
    sparbit_schedule,
    ring_schedule,
    validate_schedule,
)
from allgather_lab.core import CommSchedule, receive, send


def test_make_group_basic():
    group = make_group(5, 1024)
    assert group.p == 5
    assert group.block_size == 1024
    assert list(group.ranks()) == [0, 1, 2, 3, 4]


def test_make_group_degenerate_single_process():
    group = make_group(1, 1)
    assert group.p == 1
    assert ring_schedule(group).steps == ()


@pytest.mark.parametrize("p,block_size", [(0, 8), (8, 0), (-1, 4), (4, -1)])
def test_make_group_rejects_nonpositive(p, block_size):
    with pytest.raises(ValueError):
        make_group(p, block_size)


def test_payload_is_deterministic_and_origin_specific():
    assert block_payload(3, 64) == block_payload(3, 64)
    assert block_payload(3, 64) != block_payload(4, 64)
    assert block_payload(3, 64, seed=1) != block_payload(3, 64, seed=2)
    assert len(block_payload(0, 17)) == 17


def test_block_roundtrip_bit_exact():
    group = make_group(6, 33, seed=9)
    for origin in group.ranks():
        first = make_block(group, origin)
        again = make_block(group, origin)
        assert first == again
        assert first.payload == block_payload(origin, 33, 9)


def test_make_block_rejects_foreign_origin():
    with pytest.raises(ValueError):
        make_block(make_group(3, 8), 3)


def test_validate_clean_sparbit_schedule():
    assert validate_schedule(sparbit_schedule(make_group(8, 4))) == []


def test_validate_empty_schedule_for_single_process():
    group = make_group(1, 4)
    assert validate_schedule(ring_schedule(group)) == []


def test_validate_reports_unmatched_send():
    group = make_group(2, 4)
    step = Step(((send(1, (0,)),), ()))
    schedule = CommSchedule("handmade", group, (step,))
    violations = validate_schedule(schedule)
    assert any("no matching receive" in v for v in violations)


def test_single_extra_send_is_exactly_one_violation():
    # A complete exchange plus one stray send: totals stay right, the
    # pairing defect is the only finding.
    group = make_group(2, 4)
    step = Step(
        (
            (send(1, (0,)), receive(1, (1,)), send(1, (0,))),
            (send(0, (1,)), receive(0, (0,))),
        )
    )
    schedule = CommSchedule("handmade", group, (step,))
    assert len(validate_schedule(schedule)) == 1


def test_validate_reports_unmatched_receive_and_totals():
    group = make_group(2, 4)
    step = Step(((), (receive(0, (0,)),)))
    schedule = CommSchedule("handmade", group, (step,))
    violations = validate_schedule(schedule)
    assert any("no matching send" in v for v in violations)
    assert any("receives 0 blocks" in v for v in violations)  # rank 0 got nothing


def test_validate_reports_self_send_and_duplicate_displacements():
    group = make_group(3, 4)
    step = Step(
        (
            (send(0, (0,)),),  # self targeting
            (send(2, (0, 0)),),  # duplicate displacement
            (receive(1, (0, 1)),),
        )
    )
    schedule = CommSchedule("handmade", group, (step,))
    violations = validate_schedule(schedule)
    assert any("targets itself" in v for v in violations)
    assert any("repeats a displacement" in v for v in violations)


def test_validate_reports_count_mismatch():
    group = make_group(2, 4)
    step = Step(((send(1, (0,)),), (receive(0, (0, 1)),)))
    schedule = CommSchedule("handmade", group, (step,))
    assert any("counts differ" in v for v in validate_schedule(schedule))


def test_validate_reports_bad_epilogue():
    group = make_group(2, 4)
    schedule = CommSchedule("handmade", group, (), epilogue=((0, 0), (0, 1)))
    assert any("not a permutation" in v for v in validate_schedule(schedule))
