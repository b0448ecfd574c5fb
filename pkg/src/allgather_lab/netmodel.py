"""Hockney cost model, hierarchical topologies, rank mappings and locality.

A message of b bytes costs alpha + b*beta.  Which (alpha, beta) applies is
decided by where the two endpoints sit in the machine hierarchy: the level
of their deepest common ancestor picks the parameters, so messages between
machines under different switches pay the topmost (core) prices while
same-machine traffic pays the cheapest ones.  Sends inside a step are
parallel and contention-free, so a step costs its most expensive message
and a schedule costs the sum over steps.  On a single-level topology this
accounting collapses to the classical closed forms below.

All arithmetic is plain +, *, / and max, so exact number types (for
example ``fractions.Fraction``) pass through unchanged; feed floats and you
get floats back.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .core import CommSchedule, Direction
from .schedules import (
    AlgorithmId,
    NonPowerOfTwoError,
    OddProcessCountError,
    ceil_log2,
    is_power_of_two,
)


class ConfigError(ValueError):
    """Malformed topology / sweep configuration."""


class InsufficientSlotsError(ValueError):
    """The topology has fewer slots than the ranks to place."""


@dataclass(frozen=True)
class HockneyParams:
    """Per-message start-up time ``alpha`` and per-byte time ``beta``."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")


@dataclass(frozen=True)
class Machine:
    """A leaf of the topology tree: ``path`` from the root, ``slots`` cores."""

    path: tuple[int, ...]
    slots: int


StructureNode = Union[int, tuple]


@dataclass(frozen=True)
class Topology:
    """Rooted tree of switches with machines at the leaves.

    ``level_params[k]`` prices every message whose endpoints' deepest
    common ancestor sits at depth k: index 0 is the topmost (core) level
    and the last index is the machine itself (intra-machine traffic).
    """

    name: str
    level_params: tuple[HockneyParams, ...]
    level_names: tuple[str, ...]
    machines: tuple[Machine, ...]
    structure: StructureNode

    @property
    def total_slots(self) -> int:
        return sum(machine.slots for machine in self.machines)

    @property
    def num_levels(self) -> int:
        return len(self.level_params)

    def common_level(self, a: int, b: int) -> int:
        """Depth of the deepest common ancestor of machines ``a`` and ``b``."""
        level = 0
        for x, y in zip(self.machines[a].path, self.machines[b].path):
            if x != y:
                break
            level += 1
        return level


def build_topology(
    name: str,
    structure: StructureNode,
    level_params: Sequence[HockneyParams],
    level_names: Optional[Sequence[str]] = None,
) -> Topology:
    """Flatten a nested structure description into a Topology.

    ``structure`` is an int (a machine with that many slots) or a nested
    sequence of such descriptions (an internal switch).  One HockneyParams
    entry is required per tree level, machines included.
    """
    machines: list[Machine] = []

    def walk(node, path: tuple[int, ...]) -> None:
        if isinstance(node, int):
            if node < 1:
                raise ConfigError(f"machine slot count must be positive, got {node}")
            machines.append(Machine(path, node))
            return
        children = tuple(node)
        if not children:
            raise ConfigError("topology groups must not be empty")
        for index, child in enumerate(children):
            walk(child, path + (index,))

    def freeze(node):
        if isinstance(node, int):
            return node
        return tuple(freeze(child) for child in node)

    walk(structure, ())
    depth = max(len(machine.path) for machine in machines)
    params = tuple(level_params)
    if len(params) != depth + 1:
        raise ConfigError(
            f"{len(params)} level params for a depth-{depth} machine tree; expected {depth + 1}"
        )
    names = tuple(level_names) if level_names else tuple(f"level{i}" for i in range(len(params)))
    if len(names) != len(params):
        raise ConfigError("one level name per level param required")
    return Topology(name, params, names, tuple(machines), freeze(structure))


def uniform_topology(slots: int, alpha: float, beta: float, name: str = "uniform") -> Topology:
    """Single-level topology: every rank pair sees the same (alpha, beta)."""
    return build_topology(name, slots, (HockneyParams(alpha, beta),), ("flat",))


def yahoo_topology(
    core: HockneyParams = HockneyParams(20.0, 0.25),
    leaf: HockneyParams = HockneyParams(5.0, 0.05),
    node: HockneyParams = HockneyParams(0.5, 0.005),
) -> Topology:
    """Two-tier preset: a core switch over leaf switches with 5 and 11
    eight-slot machines.

    The default alpha/beta values are illustrative knobs, not measured
    figures; they are chosen so the core level costs at least 4x the leaf
    level, which makes hierarchy effects visible in qualitative runs.
    """
    return build_topology(
        "yahoo", ((8,) * 5, (8,) * 11), (core, leaf, node), ("core", "leaf", "node")
    )


def cervino_topology(
    switch: HockneyParams = HockneyParams(5.0, 0.05),
    node: HockneyParams = HockneyParams(0.5, 0.005),
) -> Topology:
    """Flat preset: five 32-slot machines on one switch (illustrative alpha/beta)."""
    return build_topology("cervino", (32,) * 5, (switch, node), ("switch", "node"))


def topology_to_dict(topology: Topology) -> dict:
    def thaw(node):
        if isinstance(node, int):
            return node
        return [thaw(child) for child in node]

    return {
        "name": topology.name,
        "levels": [
            {"name": name, "alpha": params.alpha, "beta": params.beta}
            for name, params in zip(topology.level_names, topology.level_params)
        ],
        "structure": thaw(topology.structure),
    }


def topology_from_dict(data: dict) -> Topology:
    try:
        levels = data["levels"]
        structure = data["structure"]
    except KeyError as missing:
        raise ConfigError(f"topology config is missing the {missing} key") from None
    params = []
    names = []
    for index, level in enumerate(levels):
        try:
            params.append(HockneyParams(float(level["alpha"]), float(level["beta"])))
        except KeyError as missing:
            raise ConfigError(f"levels[{index}] is missing the {missing} key") from None
        names.append(str(level.get("name", f"level{index}")))

    def listify(node):
        if isinstance(node, (int, float)):
            return int(node)
        if isinstance(node, list):
            return tuple(listify(child) for child in node)
        raise ConfigError(f"structure entries must be ints or lists, got {type(node).__name__}")

    return build_topology(str(data.get("name", "custom")), listify(structure), params, names)


def load_json(path) -> dict:
    """Read a JSON config file, reporting parse errors with line/column."""
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level value must be an object")
    return data


def load_topology(path) -> Topology:
    data = load_json(path)
    return topology_from_dict(data.get("topology", data))


def save_topology(topology: Topology, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(topology_to_dict(topology), handle, indent=2)
        handle.write("\n")


@dataclass(frozen=True)
class RankMapping:
    """Injective placement of ranks onto (machine, slot) pairs."""

    kind: str
    placements: tuple[tuple[int, int], ...]

    @property
    def p(self) -> int:
        return len(self.placements)

    def machine_of(self, rank: int) -> int:
        return self.placements[rank][0]


def make_mapping(kind: str, p: int, topology: Topology) -> RankMapping:
    """Place p ranks on the topology.

    sequential fills each machine's slots completely before moving to the
    next machine; cyclic deals rank i to machine i mod #machines (skipping
    machines that are already full) and takes its next free slot.
    """
    if p > topology.total_slots:
        raise InsufficientSlotsError(
            f"{p} ranks need more than the {topology.total_slots} slots of '{topology.name}'"
        )
    kind = kind.lower()
    machines = topology.machines
    if kind == "sequential":
        placements = [
            (index, slot) for index, machine in enumerate(machines) for slot in range(machine.slots)
        ][:p]
    elif kind == "cyclic":
        used = [0] * len(machines)
        placements = []
        for rank in range(p):
            index = rank % len(machines)
            while used[index] >= machines[index].slots:
                index = (index + 1) % len(machines)
            placements.append((index, used[index]))
            used[index] += 1
    else:
        raise ValueError(f"unknown mapping kind {kind!r} (use sequential, cyclic or explicit_mapping)")
    return RankMapping(kind, tuple(placements))


def explicit_mapping(placements: Sequence[tuple[int, int]], topology: Topology) -> RankMapping:
    """Wrap a caller-supplied placement list, checking it is injective and fits."""
    seen = set()
    for rank, (machine, slot) in enumerate(placements):
        if not 0 <= machine < len(topology.machines):
            raise ValueError(f"rank {rank}: machine {machine} does not exist")
        if not 0 <= slot < topology.machines[machine].slots:
            raise InsufficientSlotsError(f"rank {rank}: slot {slot} outside machine {machine}")
        if (machine, slot) in seen:
            raise ValueError(f"rank {rank}: slot ({machine}, {slot}) assigned twice")
        seen.add((machine, slot))
    return RankMapping("explicit", tuple((m, s) for m, s in placements))


def circular_distance(a: int, b: int, p: int) -> int:
    forward = (a - b) % p
    return min(forward, p - forward)


@dataclass(frozen=True)
class StepProfile:
    """Size-independent per-step aggregate of one schedule under one placement."""

    index: int
    max_distance: int
    level_blocks: tuple[int, ...]
    level_max_blocks: tuple[int, ...]


@dataclass(frozen=True)
class CostProfile:
    """Everything simulate_cost needs, precomputed once per placement.

    The per-step aggregates depend only on the schedule, the topology
    structure and the mapping, so one profile can price any number of
    total-data sizes via ``report``.
    """

    topology: Topology
    p: int
    steps: tuple[StepProfile, ...]
    epilogue_moved_max: int

    def report(self, m, rotation_beta=0) -> "CostReport":
        """Price the profiled schedule for total data size ``m`` (bytes).

        Every block carries m/p bytes.  A step costs the maximum over its
        messages of alpha(level) + blocks*(m/p)*beta(level); the report sums
        step costs and accumulates each message's bytes at its level.
        ``rotation_beta`` optionally charges the epilogue's local copies per
        byte (zero by default).
        """
        bytes_per_block = m / self.p
        params = self.topology.level_params
        traffic = [0] * self.topology.num_levels
        per_step = []
        total = 0
        for step in self.steps:
            cost = 0
            for level, biggest in enumerate(step.level_max_blocks):
                if biggest:
                    candidate = params[level].alpha + biggest * bytes_per_block * params[level].beta
                    if candidate > cost:
                        cost = candidate
                traffic[level] += step.level_blocks[level] * bytes_per_block
            per_step.append((step.index, cost, step.max_distance))
            total = total + cost
        rotation_time = self.epilogue_moved_max * bytes_per_block * rotation_beta
        return CostReport(total + rotation_time, tuple(per_step), tuple(traffic), rotation_time)


@dataclass(frozen=True)
class CostReport:
    """Modeled time of one schedule under one topology, mapping and size.

    total_time is the sum of per-step times plus the (default zero)
    rotation charge; per_step entries are (step index, step time, max
    circular rank distance); per_level_traffic holds the bytes whose
    deepest-common-ancestor level is each topology level, index 0 being
    the topmost (core) level.
    """

    total_time: float
    per_step: tuple[tuple[int, float, int], ...]
    per_level_traffic: tuple[float, ...]
    rotation_time: float = 0.0


def cost_profile(schedule: CommSchedule, topology: Topology, mapping: RankMapping) -> CostProfile:
    p = schedule.group.p
    if mapping.p != p:
        raise ValueError(f"mapping places {mapping.p} ranks, schedule has {p}")
    if p > topology.total_slots:
        raise InsufficientSlotsError(
            f"{p} ranks need more than the {topology.total_slots} slots of '{topology.name}'"
        )
    num_levels = topology.num_levels
    steps = []
    for index, step in enumerate(schedule.steps):
        level_blocks = [0] * num_levels
        level_max = [0] * num_levels
        max_distance = 0
        for rank, actions in enumerate(step.per_rank):
            for action in actions:
                if action.direction is not Direction.SEND:
                    continue
                blocks = len(action.displacements)
                level = topology.common_level(mapping.machine_of(rank), mapping.machine_of(action.peer))
                level_blocks[level] += blocks
                if blocks > level_max[level]:
                    level_max[level] = blocks
                distance = circular_distance(rank, action.peer, p)
                if distance > max_distance:
                    max_distance = distance
        steps.append(StepProfile(index, max_distance, tuple(level_blocks), tuple(level_max)))
    moved = 0
    if schedule.epilogue is not None:
        moved = max(
            sum(1 for slot, source in enumerate(perm) if slot != source)
            for perm in schedule.epilogue
        )
    return CostProfile(topology, p, tuple(steps), moved)


def simulate_cost(
    schedule: CommSchedule,
    topology: Topology,
    mapping: RankMapping,
    m,
    rotation_beta=0,
) -> CostReport:
    """Price a schedule on a topology for total data size ``m`` bytes.

    Convenience wrapper over ``cost_profile(...).report(m)``; when sweeping
    many sizes over one schedule, build the profile once and reuse it.
    """
    return cost_profile(schedule, topology, mapping).report(m, rotation_beta)


def closed_form_cost(algorithm: AlgorithmId | str, p: int, m, params: HockneyParams):
    """Closed-form Hockney time of one algorithm, total data size ``m``.

    With a = alpha, b = beta and blocks of m/p bytes:

      ring                 (p - 1) * (a + (m/p) b)
      neighbor_exchange    (p/2) a + (p - 1)(m/p) b         (even p)
      recursive_doubling   log2(p) a + (p - 1)(m/p) b       (p a power of two)
      bruck                ceil(log2 p) a + (p - 1)(m/p) b
      sparbit              ceil(log2 p) a + (p - 1)(m/p) b
      binomial_broadcast   ceil(log2 p) * (a + m b)

    For the broadcast, ``m`` is the payload every message carries (the
    whole broadcast block), so its simulate_cost counterpart is a group
    whose total data is p*m.  p = 1 costs zero for every algorithm.
    """
    algorithm = AlgorithmId(algorithm)
    if p == 1:
        return 0
    alpha, beta = params.alpha, params.beta
    bandwidth = (p - 1) * (m / p) * beta
    if algorithm is AlgorithmId.RING:
        return (p - 1) * (alpha + (m / p) * beta)
    if algorithm is AlgorithmId.NEIGHBOR_EXCHANGE:
        if p % 2:
            raise OddProcessCountError(f"neighbor exchange needs an even process count, got {p}")
        return (p // 2) * alpha + bandwidth
    if algorithm is AlgorithmId.RECURSIVE_DOUBLING:
        if not is_power_of_two(p):
            raise NonPowerOfTwoError(f"recursive doubling needs a power of two, got {p}")
        return (p.bit_length() - 1) * alpha + bandwidth
    if algorithm in (AlgorithmId.BRUCK, AlgorithmId.SPARBIT):
        return ceil_log2(p) * alpha + bandwidth
    return ceil_log2(p) * (alpha + m * beta)


def locality_profile(schedule: CommSchedule) -> list[tuple[int, int]]:
    """Per step, the sum over messages of circular rank distance x blocks.

    An abstract locality measure: under sequential placement, rank distance
    is the proxy for physical distance, so these entries expose where an
    algorithm does its long-haul communication.  The total over all ranks
    is returned; divide by p for the per-rank figure of regular schedules.
    """
    p = schedule.group.p
    profile = []
    for index, step in enumerate(schedule.steps):
        weighted = 0
        for rank, actions in enumerate(step.per_rank):
            for action in actions:
                if action.direction is Direction.SEND:
                    weighted += circular_distance(rank, action.peer, p) * len(action.displacements)
        profile.append((index, weighted))
    return profile


def step_distance_sequence(schedule: CommSchedule) -> tuple[int, ...]:
    """Largest circular send distance of each step, in step order."""
    p = schedule.group.p
    distances = []
    for step in schedule.steps:
        largest = 0
        for rank, actions in enumerate(step.per_rank):
            for action in actions:
                if action.direction is Direction.SEND:
                    distance = circular_distance(rank, action.peer, p)
                    if distance > largest:
                        largest = distance
        distances.append(largest)
    return tuple(distances)
