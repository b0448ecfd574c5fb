"""Shared domain types for block-granular communication schedules.

Ranks are plain ints in [0, p).  A schedule fixes, per rank and per step,
which buffer slots travel to which peer.  Payload bytes never appear in a
schedule: displacements are in block units, so one schedule serves every
block size.  Builders live in ``schedules``, execution in ``executor`` and
cost accounting in ``netmodel``.

All types here are immutable value data and safe to share across threads.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

Rank = int


class Direction(Enum):
    SEND = "send"
    RECEIVE = "receive"


@dataclass(frozen=True)
class ProcessGroup:
    """p processes, each contributing one block of ``block_size`` bytes.

    ``seed`` feeds the payload generator, so two groups with equal seeds
    produce bit-identical blocks.
    """

    p: int
    block_size: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.p < 1:
            raise ValueError(f"process count must be positive, got {self.p}")
        if self.block_size < 1:
            raise ValueError(f"block size must be positive, got {self.block_size}")

    def ranks(self) -> range:
        return range(self.p)


def make_group(p: int, block_size: int, seed: int = 0) -> ProcessGroup:
    """Build a process group; p = 0 or block_size = 0 is rejected."""
    return ProcessGroup(p, block_size, seed)


def block_payload(origin: Rank, block_size: int, seed: int = 0) -> bytes:
    """Deterministic fill pattern for ``origin``'s block.

    Any copy can be re-derived from (origin, size, seed) alone, so a
    corrupted or misplaced payload is always detectable without a side
    channel.
    """
    return random.Random((seed << 32) + origin).randbytes(block_size)


class Block(NamedTuple):
    """One rank's contribution: origin rank plus payload bytes."""

    origin: Rank
    payload: bytes


def make_block(group: ProcessGroup, origin: Rank) -> Block:
    if not 0 <= origin < group.p:
        raise ValueError(f"origin {origin} outside [0, {group.p})")
    return Block(origin, block_payload(origin, group.block_size, group.seed))


class MessageAction(NamedTuple):
    """One message: ``displacements[k]`` locates the k-th block moved.

    A send reads the listed slots of the issuing rank; the matching receive
    writes the arriving blocks to its own listed slots, in order.  One
    action is one message, however many blocks it carries.
    """

    direction: Direction
    peer: Rank
    displacements: tuple[int, ...]


def send(peer: Rank, displacements: tuple[int, ...]) -> MessageAction:
    return MessageAction(Direction.SEND, peer, displacements)


def receive(peer: Rank, displacements: tuple[int, ...]) -> MessageAction:
    return MessageAction(Direction.RECEIVE, peer, displacements)


@dataclass(frozen=True)
class Step:
    """All actions issued concurrently in one step, indexed by rank."""

    per_rank: tuple[tuple[MessageAction, ...], ...]


@dataclass(frozen=True)
class CommSchedule:
    """Ordered steps plus an optional local-permutation epilogue.

    kind "allgather" means every rank ends holding all p blocks at
    origin-indexed slots; kind "broadcast" means every rank ends holding
    the root's block at slot ``root``.  ``epilogue``, when present,
    reorders each rank's buffer after the final step
    (new[i] = old[epilogue[rank][i]]); it models local copies, never
    messages.  ``own_slot_at_start`` declares where each rank's own block
    sits before step 0 (default: its origin-indexed slot); a builder that
    works over a shifted intermediate layout uses it to model the initial
    local copy that parks the own block in position.
    """

    algorithm: str
    group: ProcessGroup
    steps: tuple[Step, ...]
    kind: str = "allgather"
    root: Optional[Rank] = None
    epilogue: Optional[tuple[tuple[int, ...], ...]] = None
    own_slot_at_start: Optional[tuple[int, ...]] = None

    @property
    def num_steps(self) -> int:
        return len(self.steps)


def blocks_sent_per_rank(schedule: CommSchedule) -> tuple[int, ...]:
    totals = [0] * schedule.group.p
    for step in schedule.steps:
        for rank, actions in enumerate(step.per_rank):
            for action in actions:
                if action.direction is Direction.SEND:
                    totals[rank] += len(action.displacements)
    return tuple(totals)


def blocks_received_per_rank(schedule: CommSchedule) -> tuple[int, ...]:
    totals = [0] * schedule.group.p
    for step in schedule.steps:
        for rank, actions in enumerate(step.per_rank):
            for action in actions:
                if action.direction is Direction.RECEIVE:
                    totals[rank] += len(action.displacements)
    return tuple(totals)


StepPair = tuple[int, int, MessageAction, MessageAction]


def pair_step(step: Step, p: int, step_index: int = 0) -> tuple[list[StepPair], list[str]]:
    """Match the sends of one step to its receives.

    Returns ``(pairs, violations)``.  Pairs are (sender, receiver,
    send_action, receive_action); matching is positional per
    (sender, receiver) channel, which is exact for well-formed schedules
    and surfaces the defect as a violation string otherwise.
    """
    pending: dict[tuple[int, int], deque[MessageAction]] = {}
    violations: list[str] = []
    for rank, actions in enumerate(step.per_rank):
        for action in actions:
            if action.peer == rank:
                violations.append(f"step {step_index}: rank {rank} targets itself")
            if len(set(action.displacements)) != len(action.displacements):
                violations.append(f"step {step_index}: rank {rank} repeats a displacement")
            if any(not 0 <= d < p for d in action.displacements):
                violations.append(f"step {step_index}: rank {rank} uses a slot outside [0, {p})")
            if action.direction is Direction.SEND:
                pending.setdefault((rank, action.peer), deque()).append(action)
    pairs: list[StepPair] = []
    for rank, actions in enumerate(step.per_rank):
        for action in actions:
            if action.direction is not Direction.RECEIVE:
                continue
            channel = pending.get((action.peer, rank))
            if not channel:
                violations.append(
                    f"step {step_index}: rank {rank} receive from {action.peer} has no matching send"
                )
                continue
            sent = channel.popleft()
            if len(sent.displacements) != len(action.displacements):
                violations.append(
                    f"step {step_index}: {action.peer}->{rank} block counts differ "
                    f"({len(sent.displacements)} sent, {len(action.displacements)} received)"
                )
                continue
            pairs.append((action.peer, rank, sent, action))
    for (sender, receiver), channel in pending.items():
        for _ in channel:
            violations.append(
                f"step {step_index}: rank {sender} send to {receiver} has no matching receive"
            )
    return pairs, violations


def validate_schedule(schedule: CommSchedule) -> list[str]:
    """Collect invariant violations; an empty list means the schedule is sound.

    Checks per-step send/receive pairing plus the end-to-end receive totals:
    p - 1 blocks per rank for an allgather, exactly one block for every
    non-root rank of a broadcast.  Violations are returned as data, never
    raised.
    """
    p = schedule.group.p
    violations: list[str] = []
    for index, step in enumerate(schedule.steps):
        if len(step.per_rank) != p:
            violations.append(f"step {index}: {len(step.per_rank)} rank entries, expected {p}")
            continue
        violations.extend(pair_step(step, p, index)[1])
    if schedule.epilogue is not None:
        if len(schedule.epilogue) != p:
            violations.append(f"epilogue covers {len(schedule.epilogue)} ranks, expected {p}")
        else:
            for rank, perm in enumerate(schedule.epilogue):
                if sorted(perm) != list(range(p)):
                    violations.append(f"epilogue for rank {rank} is not a permutation of [0, {p})")
    received = blocks_received_per_rank(schedule)
    if schedule.kind == "allgather":
        for rank, count in enumerate(received):
            if count != p - 1:
                violations.append(f"rank {rank} receives {count} blocks in total, expected {p - 1}")
    elif schedule.kind == "broadcast":
        for rank, count in enumerate(received):
            expected = 0 if rank == schedule.root else 1
            if count != expected:
                violations.append(f"rank {rank} receives {count} blocks in total, expected {expected}")
    else:
        violations.append(f"unknown schedule kind {schedule.kind!r}")
    return violations
