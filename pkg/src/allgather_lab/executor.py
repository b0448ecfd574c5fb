"""Step-synchronous execution of communication schedules.

Within one step every send reads buffer state as of the step's start and
receives commit only after all sends of the step are captured, so a block
received in step s is forwardable from step s + 1 on.  That is exactly the
contract the halving-distance builder relies on for its ignore-forwarding
behaviour, and it makes the displacement algebra race-free by construction.

``execute`` is the single-threaded reference; ``execute_concurrent`` runs
one worker per rank over in-memory point-to-point links with a barrier per
step and must reproduce the reference state bit-exactly.
"""

from __future__ import annotations

import queue
import threading
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .core import (
    Block,
    CommSchedule,
    Direction,
    ProcessGroup,
    make_block,
    pair_step,
)


class ScheduleError(ValueError):
    """Structurally broken schedule: unmatched or malformed actions."""


class SendFromEmptySlotError(RuntimeError):
    """A schedule told a rank to forward a block it does not hold yet."""


class DoubleWriteError(RuntimeError):
    """Conflicting content written to an already filled slot."""


class ExecutionTimeoutError(RuntimeError):
    """A matching receive never arrived (deadlocked schedule)."""


class Delivery(NamedTuple):
    step: int
    sender: int
    receiver: int
    origin_slot: int
    nbytes: int


@dataclass
class ExecutionTrace:
    """Delivered messages plus per-rank block counters.

    ``double_writes`` counts tolerated rewrites of identical content;
    conflicting content raises instead.
    """

    deliveries: list[Delivery] = field(default_factory=list)
    sent_blocks: list[int] = field(default_factory=list)
    received_blocks: list[int] = field(default_factory=list)
    double_writes: int = 0

    def to_csv(self) -> str:
        lines = ["step,sender,receiver,origin_slot,bytes"]
        lines.extend(
            f"{d.step},{d.sender},{d.receiver},{d.origin_slot},{d.nbytes}" for d in self.deliveries
        )
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as handle:
            handle.write(self.to_csv())


@dataclass
class GatherState:
    """Per-rank receive buffers of p slots each (None = not yet received)."""

    group: ProcessGroup
    buffers: list[list[Optional[Block]]]

    def is_complete(self) -> bool:
        return all(all(slot is not None for slot in buffer) for buffer in self.buffers)

    def origin_grid(self) -> list[list[Optional[int]]]:
        return [[slot.origin if slot else None for slot in buffer] for buffer in self.buffers]


def _initial_buffers(schedule: CommSchedule) -> list[list[Optional[Block]]]:
    group = schedule.group
    buffers: list[list[Optional[Block]]] = [[None] * group.p for _ in range(group.p)]
    for rank in group.ranks():
        slot = rank if schedule.own_slot_at_start is None else schedule.own_slot_at_start[rank]
        buffers[rank][slot] = make_block(group, rank)
    return buffers


def oracle_allgather(group: ProcessGroup) -> GatherState:
    """Ground-truth final state, built directly from the definition.

    Every rank holds the block of origin i at slot i, for all i.  No
    schedule is involved, so this is the independent reference any executed
    allgather schedule must reproduce bit-exactly.
    """
    blocks = [make_block(group, origin) for origin in group.ranks()]
    return GatherState(group, [list(blocks) for _ in group.ranks()])


def verify_final_state(schedule: CommSchedule, state: GatherState) -> bool:
    """Did the executed schedule deliver what its kind promises?"""
    group = schedule.group
    if schedule.kind == "broadcast":
        root_block = make_block(group, schedule.root)
        return all(state.buffers[rank][schedule.root] == root_block for rank in group.ranks())
    return state == oracle_allgather(group)


def _commit(
    buffers: list[list[Optional[Block]]],
    receiver: int,
    slot: int,
    block: Block,
    sender: int,
    step_index: int,
    trace: ExecutionTrace,
) -> None:
    existing = buffers[receiver][slot]
    if existing is None:
        buffers[receiver][slot] = block
    elif existing == block:
        trace.double_writes += 1
    else:
        raise DoubleWriteError(
            f"step {step_index}: rank {receiver} slot {slot} already holds different "
            f"content than the block arriving from rank {sender}"
        )
    trace.received_blocks[receiver] += 1
    trace.deliveries.append(Delivery(step_index, sender, receiver, slot, len(block.payload)))


def _apply_epilogue(schedule: CommSchedule, buffers: list[list[Optional[Block]]]) -> None:
    if schedule.epilogue is None:
        return
    for rank, perm in enumerate(schedule.epilogue):
        old = buffers[rank]
        buffers[rank] = [old[source] for source in perm]


def execute(schedule: CommSchedule) -> tuple[GatherState, ExecutionTrace]:
    """Run a schedule step-synchronously against in-memory buffers.

    Raises ScheduleError on unmatched or malformed actions,
    SendFromEmptySlotError when a rank is told to forward a block it does
    not hold, and DoubleWriteError when conflicting content lands on a
    filled slot.  Rewrites of identical content are tolerated and counted
    (the receive-total invariant is deliberately not enforced here, so the
    no-ignore debug experiment stays runnable; ``validate_schedule`` still
    reports it).
    """
    group = schedule.group
    p = group.p
    step_pairs = []
    for index, step in enumerate(schedule.steps):
        if len(step.per_rank) != p:
            raise ScheduleError(f"step {index}: {len(step.per_rank)} rank entries, expected {p}")
        pairs, violations = pair_step(step, p, index)
        if violations:
            raise ScheduleError("; ".join(violations))
        step_pairs.append(pairs)

    buffers = _initial_buffers(schedule)
    trace = ExecutionTrace(sent_blocks=[0] * p, received_blocks=[0] * p)
    for index, pairs in enumerate(step_pairs):
        staged = []
        for sender, receiver, sent, incoming in pairs:
            source = buffers[sender]
            for k, slot in enumerate(sent.displacements):
                block = source[slot]
                if block is None:
                    raise SendFromEmptySlotError(
                        f"step {index}: rank {sender} sends empty slot {slot}"
                    )
                staged.append((receiver, incoming.displacements[k], block, sender))
            trace.sent_blocks[sender] += len(sent.displacements)
        for receiver, slot, block, sender in staged:
            _commit(buffers, receiver, slot, block, sender, index, trace)
    _apply_epilogue(schedule, buffers)
    return GatherState(group, buffers), trace


def execute_concurrent(
    schedule: CommSchedule, timeout: float = 10.0
) -> tuple[GatherState, ExecutionTrace]:
    """Run a schedule with one worker thread per rank.

    Blocks travel over single-producer single-consumer in-memory links and
    a barrier per step is the only global synchronisation.  The final state
    must equal ``execute``'s bit-exactly; delivery ordering inside a step
    may differ (the trace is merged in a fixed sort order).  Unlike
    ``execute`` there is no up-front pairing check: an unmatched receive
    simply never gets its message and surfaces as ExecutionTimeoutError.
    """
    group = schedule.group
    p = group.p
    links: dict[tuple[int, int], queue.SimpleQueue] = {}
    for step in schedule.steps:
        for rank, actions in enumerate(step.per_rank):
            for action in actions:
                if action.direction is Direction.SEND:
                    links.setdefault((rank, action.peer), queue.SimpleQueue())

    buffers = _initial_buffers(schedule)
    barrier = threading.Barrier(p)
    errors: list[BaseException] = []
    errors_lock = threading.Lock()
    local_traces = [ExecutionTrace(sent_blocks=[0] * p, received_blocks=[0] * p) for _ in range(p)]

    def worker(rank: int) -> None:
        mine = buffers[rank]
        trace = local_traces[rank]
        try:
            for index, step in enumerate(schedule.steps):
                actions = step.per_rank[rank]
                outgoing = []
                for action in actions:
                    if action.direction is not Direction.SEND:
                        continue
                    payload = []
                    for slot in action.displacements:
                        block = mine[slot]
                        if block is None:
                            raise SendFromEmptySlotError(
                                f"step {index}: rank {rank} sends empty slot {slot}"
                            )
                        payload.append(block)
                    outgoing.append((action.peer, payload))
                for peer, payload in outgoing:
                    links[(rank, peer)].put(payload)
                    trace.sent_blocks[rank] += len(payload)
                for action in actions:
                    if action.direction is not Direction.RECEIVE:
                        continue
                    link = links.get((action.peer, rank))
                    if link is None:
                        raise ExecutionTimeoutError(
                            f"step {index}: rank {rank} expects a message from {action.peer} "
                            f"but no link carries one"
                        )
                    try:
                        payload = link.get(timeout=timeout)
                    except queue.Empty:
                        raise ExecutionTimeoutError(
                            f"step {index}: rank {rank} timed out waiting on rank {action.peer}"
                        ) from None
                    if len(payload) != len(action.displacements):
                        raise ScheduleError(
                            f"step {index}: {action.peer}->{rank} block counts differ"
                        )
                    for slot, block in zip(action.displacements, payload):
                        _commit(buffers, rank, slot, block, action.peer, index, trace)
                barrier.wait()
            if schedule.epilogue is not None:
                perm = schedule.epilogue[rank]
                buffers[rank] = [mine[source] for source in perm]
        except threading.BrokenBarrierError:
            return
        except BaseException as exc:
            with errors_lock:
                errors.append(exc)
            barrier.abort()

    threads = [threading.Thread(target=worker, args=(rank,), daemon=True) for rank in range(p)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    if errors:
        raise errors[0]

    trace = ExecutionTrace(sent_blocks=[0] * p, received_blocks=[0] * p)
    for local in local_traces:
        trace.deliveries.extend(local.deliveries)
        trace.double_writes += local.double_writes
        for rank in range(p):
            trace.sent_blocks[rank] += local.sent_blocks[rank]
            trace.received_blocks[rank] += local.received_blocks[rank]
    trace.deliveries.sort()
    return GatherState(group, buffers), trace
