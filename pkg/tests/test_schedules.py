"""Builder-level checks: step counts, frozen hand-unrolled actions, plans.

Expected values were derived by hand-simulating each rule (and are
cross-checked against the executor oracle in test_executor.py).
"""

import pytest

from allgather_lab import (
    AlgorithmId,
    NonPowerOfTwoError,
    OddProcessCountError,
    binomial_broadcast_schedule,
    blocks_sent_per_rank,
    bruck_schedule,
    build_schedule,
    make_group,
    neighbor_exchange_schedule,
    recursive_doubling_schedule,
    ring_schedule,
    skip_reason,
    sparbit_ignore_steps,
    sparbit_plan,
    sparbit_schedule,
    validate_schedule,
)
from allgather_lab.core import Direction
from allgather_lab.schedules import ceil_log2, is_power_of_two


def sends_of(schedule, step, rank):
    return [a for a in schedule.steps[step].per_rank[rank] if a.direction is Direction.SEND]


def per_step_send_counts(schedule, rank=0):
    counts = []
    for step in schedule.steps:
        counts.append(
            sum(
                len(a.displacements)
                for a in step.per_rank[rank]
                if a.direction is Direction.SEND
            )
        )
    return tuple(counts)


# ---------------------------------------------------------------------------
# step counts and restrictions
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("p", [1, 2, 3, 4, 5, 8, 13, 16, 21, 32, 33])
def test_step_counts(p):
    group = make_group(p, 4)
    assert ring_schedule(group).num_steps == p - 1
    assert bruck_schedule(group).num_steps == ceil_log2(p)
    assert sparbit_schedule(group).num_steps == ceil_log2(p)
    assert binomial_broadcast_schedule(group).num_steps == ceil_log2(p)
    if p % 2 == 0:
        assert neighbor_exchange_schedule(group).num_steps == p // 2
    if is_power_of_two(p):
        assert recursive_doubling_schedule(group).num_steps == p.bit_length() - 1


def test_neighbor_exchange_rejects_odd():
    with pytest.raises(OddProcessCountError):
        neighbor_exchange_schedule(make_group(5, 4))


def test_recursive_doubling_rejects_non_power_of_two():
    with pytest.raises(NonPowerOfTwoError):
        recursive_doubling_schedule(make_group(6, 4))


def test_single_process_is_always_empty():
    group = make_group(1, 4)
    for algorithm in AlgorithmId:
        assert build_schedule(algorithm, group).steps == ()


def test_skip_reason():
    assert skip_reason(AlgorithmId.NEIGHBOR_EXCHANGE, 5) == "odd process count"
    assert skip_reason(AlgorithmId.RECURSIVE_DOUBLING, 6) == "process count not a power of two"
    assert skip_reason(AlgorithmId.NEIGHBOR_EXCHANGE, 1) is None
    assert skip_reason(AlgorithmId.RING, 7) is None


# ---------------------------------------------------------------------------
# ring
# ---------------------------------------------------------------------------


def test_ring_p5_step0_rank0_actions():
    schedule = ring_schedule(make_group(5, 4))
    send_action, recv_action = schedule.steps[0].per_rank[0]
    assert send_action.peer == 1 and send_action.displacements == (0,)
    assert recv_action.peer == 4 and recv_action.displacements == (4,)


def test_ring_p4_one_block_per_step():
    schedule = ring_schedule(make_group(4, 4))
    assert schedule.num_steps == 3
    for rank in range(4):
        assert per_step_send_counts(schedule, rank) == (1, 1, 1)


# ---------------------------------------------------------------------------
# neighbor exchange
# ---------------------------------------------------------------------------


def test_neighbor_exchange_p6_block_counts():
    schedule = neighbor_exchange_schedule(make_group(6, 4))
    assert schedule.num_steps == 3
    for rank in range(6):
        assert per_step_send_counts(schedule, rank) == (1, 2, 2)  # totals p - 1 = 5


def test_neighbor_exchange_p2_single_exchange():
    schedule = neighbor_exchange_schedule(make_group(2, 4))
    assert schedule.num_steps == 1
    assert sends_of(schedule, 0, 0)[0].peer == 1
    assert sends_of(schedule, 0, 1)[0].peer == 0


def test_neighbor_exchange_partners_alternate():
    schedule = neighbor_exchange_schedule(make_group(6, 4))
    assert sends_of(schedule, 0, 0)[0].peer == 1  # even, +1 on even steps
    assert sends_of(schedule, 1, 0)[0].peer == 5  # even, -1 on odd steps
    assert sends_of(schedule, 1, 1)[0].peer == 2  # odd, +1 on odd steps


# ---------------------------------------------------------------------------
# recursive doubling
# ---------------------------------------------------------------------------


def test_recursive_doubling_p8_counts_and_groups():
    schedule = recursive_doubling_schedule(make_group(8, 4))
    for rank in range(8):
        assert per_step_send_counts(schedule, rank) == (1, 2, 4)
    # step 1: rank 5 holds its aligned pair {4, 5}, trades with 7
    action = sends_of(schedule, 1, 5)[0]
    assert action.peer == 7
    assert action.displacements == (4, 5)


# ---------------------------------------------------------------------------
# bruck
# ---------------------------------------------------------------------------


def test_bruck_p5_partial_last_step():
    schedule = bruck_schedule(make_group(5, 4))
    assert schedule.num_steps == 3
    for rank in range(5):
        assert per_step_send_counts(schedule, rank) == (1, 2, 1)  # 5 - 4 = 1 in the last step


def test_bruck_p8_no_partial_step():
    schedule = bruck_schedule(make_group(8, 4))
    assert schedule.num_steps == 3
    for rank in range(8):
        assert per_step_send_counts(schedule, rank) == (1, 2, 4)


def test_bruck_rotated_layout_and_epilogue():
    schedule = bruck_schedule(make_group(5, 4))
    assert schedule.own_slot_at_start == (0, 0, 0, 0, 0)
    # rank 0 keeps stored order, rank 2 maps stored (2,3,4,0,1) to (0..4)
    assert schedule.epilogue[0] == (0, 1, 2, 3, 4)
    assert schedule.epilogue[2] == (3, 4, 0, 1, 2)
    stored_origin_order = tuple((2 + i) % 5 for i in range(5))
    assert stored_origin_order == (2, 3, 4, 0, 1)
    assert tuple(stored_origin_order[s] for s in schedule.epilogue[2]) == (0, 1, 2, 3, 4)


# ---------------------------------------------------------------------------
# binomial broadcast
# ---------------------------------------------------------------------------


def broadcast_pairs(schedule):
    pairs = []
    for step in schedule.steps:
        current = set()
        for rank, actions in enumerate(step.per_rank):
            for action in actions:
                if action.direction is Direction.SEND:
                    current.add((rank, action.peer))
        pairs.append(current)
    return pairs


def test_binomial_p5_root0_shape():
    schedule = binomial_broadcast_schedule(make_group(5, 4), root=0)
    assert broadcast_pairs(schedule) == [{(0, 4)}, {(0, 2)}, {(0, 1), (2, 3)}]


def test_binomial_root_translation():
    p = 8
    base = broadcast_pairs(binomial_broadcast_schedule(make_group(p, 4), root=0))
    shifted = broadcast_pairs(binomial_broadcast_schedule(make_group(p, 4), root=3))
    translated = [{((s + 3) % p, (d + 3) % p) for s, d in step} for step in base]
    assert shifted == translated


def test_binomial_rejects_bad_root():
    with pytest.raises(ValueError):
        binomial_broadcast_schedule(make_group(4, 4), root=4)


# ---------------------------------------------------------------------------
# sparbit
# ---------------------------------------------------------------------------


def test_ignore_mask_values():
    assert sparbit_ignore_steps(8) == 0
    assert sparbit_ignore_steps(5) == 0b011
    assert sparbit_ignore_steps(21) == 0b01011  # distances 8, 2 and 1


@pytest.mark.parametrize("k", range(11))
def test_ignore_mask_zero_for_powers_of_two(k):
    assert sparbit_ignore_steps(1 << k) == 0


def test_plan_spot_values():
    assert sparbit_plan(5).send_counts == (1, 1, 2)
    assert sparbit_plan(21).send_counts == (1, 1, 3, 5, 10)
    assert sparbit_plan(4).send_counts == (1, 2)


def test_plan_recurrence_terminates_at_p():
    for p in range(2, 1025):
        plan = sparbit_plan(p)
        assert plan.steps[-1].data_after == p
        assert sum(plan.send_counts) == p - 1
        assert plan.num_steps == ceil_log2(p)


def test_sparbit_p5_rank0_step0_actions():
    schedule = sparbit_schedule(make_group(5, 4))
    send_action, recv_action = schedule.steps[0].per_rank[0]
    assert send_action.peer == 4 and send_action.displacements == (0,)
    assert recv_action.peer == 1 and recv_action.displacements == (1,)  # (0 - 4) mod 5


def test_sparbit_distances_halve():
    plan = sparbit_plan(21)
    distances = [step.distance for step in plan.steps]
    assert distances == [16, 8, 4, 2, 1]


def test_sparbit_projection_onto_origin0_equals_binomial():
    # Following only the root-0 block through the parallel trees gives the
    # plain binomial broadcast rooted at 0.
    for p in (5, 8, 12, 21):
        group = make_group(p, 4)
        tree = broadcast_pairs(binomial_broadcast_schedule(group, root=0))
        flat = []
        for step in sparbit_schedule(group).steps:
            moved = set()
            for rank, actions in enumerate(step.per_rank):
                for action in actions:
                    if action.direction is Direction.SEND and 0 in action.displacements:
                        moved.add((rank, action.peer))
            flat.append(moved)
        assert flat == tree


# ---------------------------------------------------------------------------
# cross-cutting invariants
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("p", [2, 3, 4, 5, 6, 7, 8, 12, 16, 21, 31, 32, 33, 64])
def test_every_allgather_builder_sends_p_minus_1_and_validates(p):
    group = make_group(p, 4)
    for algorithm in (
        AlgorithmId.RING,
        AlgorithmId.NEIGHBOR_EXCHANGE,
        AlgorithmId.RECURSIVE_DOUBLING,
        AlgorithmId.BRUCK,
        AlgorithmId.SPARBIT,
    ):
        if skip_reason(algorithm, p):
            continue
        schedule = build_schedule(algorithm, group)
        assert validate_schedule(schedule) == []
        assert blocks_sent_per_rank(schedule) == (p - 1,) * p
