"""Schedule builders: one pure function per algorithm.

Each builder translates a communication rule into an explicit CommSchedule:
who sends which buffer slots to whom on every step.  Builders never look at
payloads, so a schedule built once is valid for any block size, and a group
of one process always yields the empty schedule.

Slot arithmetic uses true mathematical modulo throughout (results always in
[0, p)); C-style ``(x + p) % p`` idioms underflow once the subtracted
multiple exceeds p, which happens in the halving-distance builder for large
send indices.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .core import CommSchedule, ProcessGroup, Step, receive, send


class AlgorithmId(str, Enum):
    """The implemented algorithms; values double as CSV and CLI names."""

    RING = "ring"
    NEIGHBOR_EXCHANGE = "neighbor_exchange"
    RECURSIVE_DOUBLING = "recursive_doubling"
    BRUCK = "bruck"
    SPARBIT = "sparbit"
    BINOMIAL_BROADCAST = "binomial_broadcast"


#: Allgather builders in fixed name order; ties and CSV rows use this order.
ALLGATHER_ALGORITHMS: tuple[AlgorithmId, ...] = (
    AlgorithmId.BRUCK,
    AlgorithmId.NEIGHBOR_EXCHANGE,
    AlgorithmId.RECURSIVE_DOUBLING,
    AlgorithmId.RING,
    AlgorithmId.SPARBIT,
)


class OddProcessCountError(ValueError):
    """Neighbor Exchange only works for even process counts."""


class NonPowerOfTwoError(ValueError):
    """Recursive Doubling only works for power-of-two process counts."""


def ceil_log2(n: int) -> int:
    return (n - 1).bit_length()


def is_power_of_two(n: int) -> bool:
    return n & (n - 1) == 0


def trailing_zeros(n: int) -> int:
    return (n & -n).bit_length() - 1


def skip_reason(algorithm: AlgorithmId, p: int) -> Optional[str]:
    """Why ``algorithm`` cannot run at ``p`` processes, or None if it can.

    p = 1 is never skipped: every builder degenerates to the empty schedule.
    """
    if p == 1:
        return None
    if algorithm is AlgorithmId.NEIGHBOR_EXCHANGE and p % 2:
        return "odd process count"
    if algorithm is AlgorithmId.RECURSIVE_DOUBLING and not is_power_of_two(p):
        return "process count not a power of two"
    return None


def ring_schedule(group: ProcessGroup) -> CommSchedule:
    """Shift blocks around the rank circle, one neighbor hop per step.

    On step s, rank r forwards the block with origin (r - s) mod p to
    r + 1 and receives origin (r - s - 1) mod p from r - 1, stored at the
    slot equal to its origin.  Any block needs p - 1 hops to visit
    everyone, so there are p - 1 steps of one block each.
    """
    p = group.p
    steps = []
    for s in range(p - 1):
        per_rank = tuple(
            (
                send((r + 1) % p, ((r - s) % p,)),
                receive((r - 1) % p, ((r - s - 1) % p,)),
            )
            for r in range(p)
        )
        steps.append(Step(per_rank))
    return CommSchedule(AlgorithmId.RING.value, group, tuple(steps))


def neighbor_exchange_schedule(group: ProcessGroup) -> CommSchedule:
    """Pairwise exchanges with alternating left/right neighbors.

    On step s an even rank r partners with r + (-1)^s and an odd rank with
    r - (-1)^s, both with wrap-around.  Step 0 trades own blocks, step 1
    trades {own block, step-0 receipt} and every later step forwards the
    two blocks received on the previous step, so p/2 steps move
    1 + 2(p/2 - 1) = p - 1 blocks per rank.  Even process counts only.
    """
    p = group.p
    if p == 1:
        return CommSchedule(AlgorithmId.NEIGHBOR_EXCHANGE.value, group, ())
    if p % 2:
        raise OddProcessCountError(f"neighbor exchange needs an even process count, got {p}")
    steps = []
    previous: list[tuple[int, ...]] = [()] * p
    for s in range(p // 2):
        sign = 1 if s % 2 == 0 else -1
        partners = [(r + sign) % p if r % 2 == 0 else (r - sign) % p for r in range(p)]
        if s == 0:
            outgoing = [(r,) for r in range(p)]
        elif s == 1:
            outgoing = [(r, previous[r][0]) for r in range(p)]
        else:
            outgoing = previous
        per_rank = tuple(
            (send(partners[r], outgoing[r]), receive(partners[r], outgoing[partners[r]]))
            for r in range(p)
        )
        steps.append(Step(per_rank))
        previous = [outgoing[partners[r]] for r in range(p)]
    return CommSchedule(AlgorithmId.NEIGHBOR_EXCHANGE.value, group, tuple(steps))


def recursive_doubling_schedule(group: ProcessGroup) -> CommSchedule:
    """Pairwise exchange with partner r XOR 2^s, doubling data every step.

    Before step s every rank holds exactly the blocks of its aligned
    2^s-rank group (the ranks sharing its bits above bit s); exchanging
    with the sibling group fills the aligned 2^(s+1) group.  Blocks land
    straight at origin-indexed slots, so no final shuffle is needed.
    Power-of-two process counts only; log2 p steps.
    """
    p = group.p
    if not is_power_of_two(p):
        raise NonPowerOfTwoError(f"recursive doubling needs a power-of-two process count, got {p}")
    steps = []
    for s in range(p.bit_length() - 1):
        size = 1 << s
        per_rank = []
        for r in range(p):
            partner = r ^ size
            own_base = r & ~(size - 1)
            peer_base = own_base ^ size
            per_rank.append(
                (
                    send(partner, tuple(range(own_base, own_base + size))),
                    receive(partner, tuple(range(peer_base, peer_base + size))),
                )
            )
        steps.append(Step(tuple(per_rank)))
    return CommSchedule(AlgorithmId.RECURSIVE_DOUBLING.value, group, tuple(steps))


def bruck_schedule(group: ProcessGroup) -> CommSchedule:
    """Doubling exchanges over a rotated layout plus a final local rotation.

    Intermediate layout: slot i at rank r holds the block with origin
    (r + i) mod p, so every rank starts with its own block parked at slot 0
    (declared via ``own_slot_at_start``, the initial local copy of the
    classical implementation).  Step s sends slots [0, 2^s) to rank
    r - 2^s and receives into slots [2^s, 2^(s+1)) from rank r + 2^s.
    When p is not a power of two, one last step moves only the first
    p - 2^floor(log2 p) slots, for ceil(log2 p) message steps in total.
    The closing rotation back to origin-indexed slots is recorded as the
    schedule epilogue: local copies, not messages, so the cost model can
    price it separately (at zero by default).
    """
    p = group.p
    whole = p.bit_length() - 1
    steps = []
    for s in range(whole):
        count = 1 << s
        per_rank = tuple(
            (
                send((r - count) % p, tuple(range(count))),
                receive((r + count) % p, tuple(range(count, 2 * count))),
            )
            for r in range(p)
        )
        steps.append(Step(per_rank))
    rest = p - (1 << whole)
    if rest:
        top = 1 << whole
        per_rank = tuple(
            (
                send((r - top) % p, tuple(range(rest))),
                receive((r + top) % p, tuple(range(top, top + rest))),
            )
            for r in range(p)
        )
        steps.append(Step(per_rank))
    epilogue = tuple(tuple((i - r) % p for i in range(p)) for r in range(p))
    return CommSchedule(
        AlgorithmId.BRUCK.value,
        group,
        tuple(steps),
        epilogue=epilogue,
        own_slot_at_start=(0,) * p,
    )


def binomial_broadcast_schedule(group: ProcessGroup, root: int = 0) -> CommSchedule:
    """Halving-distance binomial broadcast of the root's block.

    A virtual tree of size 2^ceil(log2 p) is walked top down: on the step
    with distance d, every relative rank that is a multiple of 2d (and so
    already holds the block) sends it d ranks forward; sends aimed at
    relative ranks >= p are dropped.  After ceil(log2 p) steps every rank
    holds the root's block at slot ``root``.
    """
    p = group.p
    if not 0 <= root < p:
        raise ValueError(f"root {root} outside [0, {p})")
    levels = ceil_log2(p)
    steps = []
    for i in range(levels):
        d = 1 << (levels - 1 - i)
        per_rank: list[list] = [[] for _ in range(p)]
        for v in range(0, p, 2 * d):
            if v + d >= p:
                continue
            src = (root + v) % p
            dst = (root + v + d) % p
            per_rank[src].append(send(dst, (root,)))
            per_rank[dst].append(receive(src, (root,)))
        steps.append(Step(tuple(tuple(actions) for actions in per_rank)))
    return CommSchedule(
        AlgorithmId.BINOMIAL_BROADCAST.value, group, tuple(steps), kind="broadcast", root=root
    )


def sparbit_ignore_steps(p: int) -> int:
    """Mask of step distances on which the freshly-leafed block is withheld.

    Write p in binary, invert every bit to the left of the lowest set bit,
    keep that lowest bit, and truncate to the ceil(log2 p) distance bits in
    use.  A set bit at distance d means: on the step with distance d each
    rank holds back the one block it received as the leaf of another rank's
    tree.  For a power of two no used bit is ever set.
    """
    if p <= 1:
        return 0
    tz = trailing_zeros(p)
    mask = ((~(p >> tz)) | 1) << tz
    return mask & ((1 << ceil_log2(p)) - 1)


@dataclass(frozen=True)
class SparbitStepPlan:
    distance: int
    blocks_to_send: int
    data_after: int


@dataclass(frozen=True)
class SparbitPlan:
    """Per-step bookkeeping of the halving-distance binomial-tree allgather.

    ``data`` starts at one block and evolves as data <- 2*data - ignore;
    with the ignore mask matching the subtree decomposition of p, the last
    step ends with data == p and the send counts add up to p - 1.
    """

    p: int
    num_steps: int
    ignore_steps: int
    steps: tuple[SparbitStepPlan, ...]

    @property
    def send_counts(self) -> tuple[int, ...]:
        return tuple(step.blocks_to_send for step in self.steps)


def sparbit_plan(p: int, force_no_ignore: bool = False) -> SparbitPlan:
    mask = 0 if force_no_ignore else sparbit_ignore_steps(p)
    num = ceil_log2(p)
    data = 1
    plan = []
    for i in range(num):
        distance = 1 << (num - 1 - i)
        ignoring = 1 if distance & mask else 0
        sends = data - ignoring
        data = 2 * data - ignoring
        plan.append(SparbitStepPlan(distance, sends, data))
    return SparbitPlan(p, num, mask, tuple(plan))


def sparbit_schedule(group: ProcessGroup, force_no_ignore: bool = False) -> CommSchedule:
    """Allgather through p parallel binomial trees with halving distances.

    Every rank is the root of the tree distributing its own block and a
    leaf or interior node of the other p - 1 trees, all shifted copies of
    one another on the circular rank space.  On the step with distance d,
    rank r sends ``data - ignore`` single blocks to rank r + d, taken from
    slots (r - 2jd) mod p, and receives the same count from rank r - d
    into slots (r - (2j + 1)d) mod p, j = 0 .. data - ignore - 1.  Blocks
    therefore keep origin-indexed slots, distances halve from
    2^(ceil(log2 p) - 1) down to 1 while the data doubles, and the ignore
    mask withholds exactly the block each rank received as a leaf, which
    is what prevents double writes for non-power-of-two p.

    ``force_no_ignore`` drops the mask (debug aid): the schedule then
    rewrites identical blocks instead of skipping them, which the executor
    counts as tolerated double writes.
    """
    p = group.p
    plan = sparbit_plan(p, force_no_ignore)
    steps = []
    for step_plan in plan.steps:
        d = step_plan.distance
        count = step_plan.blocks_to_send
        if force_no_ignore:
            # The un-ignored sends can revisit a slot once 2jd wraps past p,
            # so they stay separate single-block messages (rewriting the
            # same block is the very hazard this debug mode demonstrates).
            per_rank = tuple(
                tuple(send((r + d) % p, ((r - 2 * j * d) % p,)) for j in range(count))
                + tuple(receive((r - d) % p, ((r - (2 * j + 1) * d) % p,)) for j in range(count))
                for r in range(p)
            )
        else:
            per_rank = tuple(
                (
                    send((r + d) % p, tuple((r - 2 * j * d) % p for j in range(count))),
                    receive((r - d) % p, tuple((r - (2 * j + 1) * d) % p for j in range(count))),
                )
                for r in range(p)
            )
        steps.append(Step(per_rank))
    return CommSchedule(AlgorithmId.SPARBIT.value, group, tuple(steps))


_BUILDERS = {
    AlgorithmId.RING: ring_schedule,
    AlgorithmId.NEIGHBOR_EXCHANGE: neighbor_exchange_schedule,
    AlgorithmId.RECURSIVE_DOUBLING: recursive_doubling_schedule,
    AlgorithmId.BRUCK: bruck_schedule,
    AlgorithmId.SPARBIT: sparbit_schedule,
}


def build_schedule(
    algorithm: AlgorithmId | str,
    group: ProcessGroup,
    root: int = 0,
    force_no_ignore: bool = False,
) -> CommSchedule:
    """Dispatch to the named builder (restriction errors pass through)."""
    algorithm = AlgorithmId(algorithm)
    if algorithm is AlgorithmId.BINOMIAL_BROADCAST:
        return binomial_broadcast_schedule(group, root)
    if algorithm is AlgorithmId.SPARBIT:
        return sparbit_schedule(group, force_no_ignore)
    return _BUILDERS[algorithm](group)
