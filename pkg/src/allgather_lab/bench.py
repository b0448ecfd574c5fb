"""Sweep harness: grids of (p, block size) across algorithms.

Every sweep cell is priced with the topology-aware model and each
(algorithm, p) pair is executed once against the oracle (schedules do not
depend on the block size, so one execution certifies every size row).
Output is deterministic: fixed row ordering, shortest-round-trip float
formatting and no timestamps, so identical specs give byte-identical CSV.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional

from .core import blocks_sent_per_rank, make_group
from .executor import (
    execute,
    execute_concurrent,
    verify_final_state,
)
from .netmodel import (
    ConfigError,
    CostProfile,
    RankMapping,
    Topology,
    cost_profile,
    make_mapping,
    uniform_topology,
)
from .schedules import ALLGATHER_ALGORITHMS, AlgorithmId, build_schedule, skip_reason

THREADS_ENV_VAR = "ALLGATHER_LAB_THREADS"

SWEEP_CSV_HEADER = "p,block_size,algorithm,steps,blocks_per_rank,modeled_time,core_bytes,correct"


def worker_count() -> int:
    """Sweep cell parallelism, capped by the ALLGATHER_LAB_THREADS env var."""
    raw = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}") from None


def default_procs() -> tuple[int, ...]:
    """The two arithmetic progressions (start 5 and 8, step 8, up to 256),
    merged ascending so odd and even counts interleave."""
    return tuple(sorted(set(range(5, 254, 8)) | set(range(8, 257, 8))))


def default_sizes() -> tuple[int, ...]:
    """Block sizes 1 B .. 1 MiB on successive doublings (21 sizes)."""
    return tuple(2**i for i in range(21))


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: which grid to run, on which topology, placed how."""

    procs: tuple[int, ...]
    sizes: tuple[int, ...]
    algorithms: tuple[AlgorithmId, ...]
    topology: Topology
    mapping_kind: str = "sequential"
    seed: int = 0
    force_no_ignore: bool = False
    repetitions: int = 0


def default_spec(
    topology: Optional[Topology] = None,
    procs: Optional[Iterable[int]] = None,
    sizes: Optional[Iterable[int]] = None,
    algorithms: Optional[Iterable[AlgorithmId]] = None,
    mapping_kind: str = "sequential",
    seed: int = 0,
) -> SweepSpec:
    procs = tuple(procs) if procs is not None else default_procs()
    sizes = tuple(sizes) if sizes is not None else default_sizes()
    algorithms = tuple(algorithms) if algorithms is not None else ALLGATHER_ALGORITHMS
    if topology is None:
        topology = uniform_topology(max(procs), 10.0, 0.01)
    return SweepSpec(procs, sizes, algorithms, topology, mapping_kind, seed)


def _check_spec(spec: SweepSpec) -> None:
    if not spec.procs:
        raise ConfigError("spec has no process counts")
    if not spec.sizes:
        raise ConfigError("spec has no block sizes")
    if not spec.algorithms:
        raise ConfigError("spec has no algorithms")
    if any(p < 1 for p in spec.procs):
        raise ConfigError("process counts must be positive")
    if any(size < 1 for size in spec.sizes):
        raise ConfigError("block sizes must be positive")
    biggest = max(spec.procs)
    if biggest > spec.topology.total_slots:
        raise ConfigError(
            f"topology '{spec.topology.name}' has {spec.topology.total_slots} slots "
            f"but the spec includes p={biggest}"
        )


@dataclass(frozen=True)
class SweepRow:
    p: int
    block_size: int
    algorithm: str
    steps: int
    blocks_per_rank: int
    modeled_time: float
    core_bytes: float
    correct: bool

    def as_csv(self) -> str:
        return (
            f"{self.p},{self.block_size},{self.algorithm},{self.steps},"
            f"{self.blocks_per_rank},{self.modeled_time!r},{self.core_bytes!r},"
            f"{'true' if self.correct else 'false'}"
        )


@dataclass(frozen=True)
class SkipRecord:
    p: int
    algorithm: str
    reason: str


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    rows: tuple[SweepRow, ...]
    skips: tuple[SkipRecord, ...]

    def to_csv(self) -> str:
        lines = [SWEEP_CSV_HEADER]
        lines.extend(row.as_csv() for row in self.rows)
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as handle:
            handle.write(self.to_csv())

    @property
    def all_correct(self) -> bool:
        return all(row.correct for row in self.rows)


@dataclass(frozen=True)
class _CellResult:
    steps: int
    blocks_per_rank: int
    correct: bool
    profile: CostProfile


def _evaluate_cell(
    algorithm: AlgorithmId,
    p: int,
    spec: SweepSpec,
    mapping: RankMapping,
) -> _CellResult:
    group = make_group(p, min(spec.sizes), spec.seed)
    schedule = build_schedule(algorithm, group, force_no_ignore=spec.force_no_ignore)
    state, _ = execute(schedule)
    correct = verify_final_state(schedule, state)
    profile = cost_profile(schedule, spec.topology, mapping)
    sent = blocks_sent_per_rank(schedule)
    return _CellResult(schedule.num_steps, max(sent) if sent else 0, correct, profile)


def run_sweep(spec: SweepSpec) -> SweepResult:
    """Evaluate the whole grid; deterministic ordering regardless of workers.

    Rows are sorted by (p, block size, algorithm name).  Algorithms whose
    restriction rules out a process count are skipped with a record instead
    of a row.
    """
    _check_spec(spec)
    procs = tuple(sorted(set(spec.procs)))
    sizes = tuple(sorted(set(spec.sizes)))
    algorithms = tuple(sorted(set(spec.algorithms), key=lambda a: a.value))

    skips = []
    cells = []
    for p in procs:
        for algorithm in algorithms:
            reason = skip_reason(algorithm, p)
            if reason:
                skips.append(SkipRecord(p, algorithm.value, reason))
            else:
                cells.append((algorithm, p))

    mappings = {p: make_mapping(spec.mapping_kind, p, spec.topology) for p in procs}
    workers = worker_count()
    if workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                cell: pool.submit(_evaluate_cell, cell[0], cell[1], spec, mappings[cell[1]])
                for cell in cells
            }
            results = {cell: future.result() for cell, future in futures.items()}
    else:
        results = {cell: _evaluate_cell(cell[0], cell[1], spec, mappings[cell[1]]) for cell in cells}

    rows = []
    for p in procs:
        for size in sizes:
            for algorithm in algorithms:
                cell = results.get((algorithm, p))
                if cell is None:
                    continue
                report = cell.profile.report(p * size)
                rows.append(
                    SweepRow(
                        p,
                        size,
                        algorithm.value,
                        cell.steps,
                        cell.blocks_per_rank,
                        float(report.total_time),
                        float(report.per_level_traffic[0]),
                        cell.correct,
                    )
                )
    return SweepResult(spec, tuple(rows), tuple(skips))


def read_sweep_csv(path) -> list[SweepRow]:
    with open(path, "r", encoding="ascii") as handle:
        lines = [line.rstrip("\n") for line in handle if line.strip()]
    if not lines or lines[0] != SWEEP_CSV_HEADER:
        raise ConfigError(f"{path}: not a sweep CSV (bad header)")
    rows = []
    for number, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 8:
            raise ConfigError(f"{path}:{number}: expected 8 columns, got {len(parts)}")
        try:
            rows.append(
                SweepRow(
                    int(parts[0]),
                    int(parts[1]),
                    parts[2],
                    int(parts[3]),
                    int(parts[4]),
                    float(parts[5]),
                    float(parts[6]),
                    parts[7] == "true",
                )
            )
        except ValueError as exc:
            raise ConfigError(f"{path}:{number}: {exc}") from None
    return rows


class IncompleteGridError(ValueError):
    """The sweep dataset does not cover a full (p, size) grid."""

    def __init__(self, missing: list[str]):
        self.missing = missing
        preview = ", ".join(missing[:8])
        suffix = "" if len(missing) <= 8 else f" (and {len(missing) - 8} more)"
        super().__init__(f"incomplete grid, missing cells: {preview}{suffix}")


@dataclass(frozen=True)
class HeatmapCell:
    """Winner of one (p, block size) cell plus every contender's time.

    improvement_pct compares the winner against the runner-up,
    (second - best) / second * 100; ties are broken by algorithm name
    order and flagged.
    """

    p: int
    block_size: int
    winner: str
    improvement_pct: float
    times: tuple[tuple[str, Optional[float]], ...]
    tie: bool


def heatmap_cells(rows: Iterable[SweepRow]) -> list[HeatmapCell]:
    rows = list(rows)
    algorithms = sorted({row.algorithm for row in rows})
    by_cell: dict[tuple[int, int], dict[str, float]] = {}
    for row in rows:
        by_cell.setdefault((row.p, row.block_size), {})[row.algorithm] = row.modeled_time
    cells = []
    for (p, size) in sorted(by_cell):
        times = by_cell[(p, size)]
        ranked = sorted(times.items(), key=lambda item: (item[1], item[0]))
        winner, best = ranked[0]
        if len(ranked) > 1:
            second = ranked[1][1]
            improvement = 0.0 if second == 0 else (second - best) / second * 100.0
        else:
            improvement = 0.0
        tie = sum(1 for _, value in ranked if value == best) > 1
        cells.append(
            HeatmapCell(
                p,
                size,
                winner,
                improvement,
                tuple((name, times.get(name)) for name in algorithms),
                tie,
            )
        )
    return cells


def _check_grid(rows: list[SweepRow]) -> None:
    procs = sorted({row.p for row in rows})
    sizes = sorted({row.block_size for row in rows})
    present = {(row.p, row.block_size, row.algorithm) for row in rows}
    missing = []
    covered_cells = {(p, s) for p, s, _ in present}
    for p in procs:
        for size in sizes:
            if (p, size) not in covered_cells:
                missing.append(f"p={p},size={size}")
    for algorithm in sorted({row.algorithm for row in rows}):
        its_procs = sorted({row.p for row in rows if row.algorithm == algorithm})
        for p in its_procs:
            for size in sizes:
                if (p, size, algorithm) not in present:
                    missing.append(f"p={p},size={size},algorithm={algorithm}")
    if missing:
        raise IncompleteGridError(missing)


HEATMAP_COLORS = {
    AlgorithmId.RING.value: "#2166ac",
    AlgorithmId.NEIGHBOR_EXCHANGE.value: "#d6604d",
    AlgorithmId.RECURSIVE_DOUBLING.value: "#984ea3",
    AlgorithmId.BRUCK.value: "#1b7837",
    AlgorithmId.BINOMIAL_BROADCAST.value: "#ff8c00",
}
GREYSCALE_ALGORITHM = AlgorithmId.SPARBIT.value


def _cell_color(cell: HeatmapCell) -> str:
    if cell.winner == GREYSCALE_ALGORITHM:
        # Lighter grey = larger improvement over the runner-up.
        share = min(max(cell.improvement_pct, 0.0), 100.0) / 100.0
        tone = int(0x40 + (0xF7 - 0x40) * share)
        return f"#{tone:02x}{tone:02x}{tone:02x}"
    return HEATMAP_COLORS.get(cell.winner, "#888888")


def _size_label(size: int) -> str:
    if size >= 1 << 20 and size % (1 << 20) == 0:
        return f"{size >> 20}MiB"
    if size >= 1 << 10 and size % (1 << 10) == 0:
        return f"{size >> 10}KiB"
    return f"{size}B"


def render_heatmap_svg(cells: list[HeatmapCell]) -> str:
    """Standalone SVG: one rect per cell, categorical colors for classical
    winners and a grey improvement ramp for the halving-distance algorithm."""
    procs = sorted({cell.p for cell in cells})
    sizes = sorted({cell.block_size for cell in cells})
    side = 16
    left, top = 64, 24
    legend_width = 170
    width = left + side * len(procs) + legend_width
    height = top + side * len(sizes) + 58
    lookup = {(cell.p, cell.block_size): cell for cell in cells}
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="9">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left}" y="14">best modeled algorithm per (p, block size)</text>',
    ]
    for row, size in enumerate(sizes):
        y = top + row * side
        out.append(f'<text x="4" y="{y + side - 4}">{_size_label(size)}</text>')
        for col, p in enumerate(procs):
            cell = lookup.get((p, size))
            if cell is None:
                continue
            x = left + col * side
            color = _cell_color(cell)
            title = f"p={p} size={_size_label(size)} winner={cell.winner} +{cell.improvement_pct:.2f}%"
            out.append(
                f'<rect x="{x}" y="{y}" width="{side}" height="{side}" fill="{color}" '
                f'stroke="#ffffff" stroke-width="0.5"><title>{title}</title></rect>'
            )
    label_y = top + side * len(sizes) + 10
    for col, p in enumerate(procs):
        x = left + col * side + side // 2
        out.append(f'<text x="{x}" y="{label_y}" transform="rotate(90 {x} {label_y})">{p}</text>')
    legend_x = left + side * len(procs) + 12
    y = top
    for name, color in sorted(HEATMAP_COLORS.items()):
        out.append(f'<rect x="{legend_x}" y="{y}" width="{side}" height="{side}" fill="{color}"/>')
        out.append(f'<text x="{legend_x + side + 4}" y="{y + side - 4}">{name}</text>')
        y += side + 4
    out.append(
        f'<text x="{legend_x}" y="{y + 10}">{GREYSCALE_ALGORITHM}: grey,</text>'
    )
    out.append(f'<text x="{legend_x}" y="{y + 22}">lighter = larger gain</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def heatmap_csv(cells: list[HeatmapCell]) -> str:
    algorithms = [name for name, _ in cells[0].times] if cells else []
    header = "p,block_size,winner,improvement_pct," + ",".join(f"time_{a}" for a in algorithms)
    lines = [header]
    for cell in cells:
        times = ",".join("" if value is None else repr(value) for _, value in cell.times)
        lines.append(f"{cell.p},{cell.block_size},{cell.winner},{cell.improvement_pct!r},{times}")
    return "\n".join(lines) + "\n"


def emit_heatmap(rows: Iterable[SweepRow], out_dir, basename: str = "heatmap") -> tuple[str, str]:
    """Write heatmap CSV + SVG from sweep rows; returns the two paths.

    Pure function of the sweep dataset: no model evaluation happens here.
    Raises IncompleteGridError when the dataset has holes.
    """
    rows = list(rows)
    if not rows:
        raise IncompleteGridError(["<empty dataset>"])
    _check_grid(rows)
    cells = heatmap_cells(rows)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{basename}.csv")
    svg_path = os.path.join(out_dir, f"{basename}.svg")
    with open(csv_path, "w", encoding="ascii", newline="\n") as handle:
        handle.write(heatmap_csv(cells))
    with open(svg_path, "w", encoding="ascii", newline="\n") as handle:
        handle.write(render_heatmap_svg(cells))
    return csv_path, svg_path


@dataclass(frozen=True)
class VerifyEntry:
    algorithm: str
    p: int
    oracle_match: bool
    concurrent_match: Optional[bool]
    double_writes: int


@dataclass(frozen=True)
class VerifyReport:
    entries: tuple[VerifyEntry, ...]
    skips: tuple[SkipRecord, ...]

    @property
    def mismatches(self) -> list[VerifyEntry]:
        return [
            entry
            for entry in self.entries
            if not entry.oracle_match or entry.concurrent_match is False
        ]

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def lines(self) -> list[str]:
        out = []
        for entry in self.entries:
            flags = "ok" if entry.oracle_match else "ORACLE-MISMATCH"
            if entry.concurrent_match is False:
                flags += ",CONCURRENT-MISMATCH"
            extra = f" double_writes={entry.double_writes}" if entry.double_writes else ""
            out.append(f"{entry.algorithm} p={entry.p}: {flags}{extra}")
        for skip in self.skips:
            out.append(f"{skip.algorithm} p={skip.p}: skipped ({skip.reason})")
        out.append(f"verified {len(self.entries)} cases, {len(self.mismatches)} mismatches")
        return out


def _verify_cell(algorithm: AlgorithmId, p: int, spec: SweepSpec, concurrent: bool) -> VerifyEntry:
    group = make_group(p, min(spec.sizes), spec.seed)
    schedule = build_schedule(algorithm, group, force_no_ignore=spec.force_no_ignore)
    state, trace = execute(schedule)
    oracle_match = verify_final_state(schedule, state)
    concurrent_match = None
    if concurrent:
        concurrent_state, _ = execute_concurrent(schedule)
        concurrent_match = concurrent_state == state
    return VerifyEntry(algorithm.value, p, oracle_match, concurrent_match, trace.double_writes)


def verify_all(spec: SweepSpec, concurrent: bool = True) -> VerifyReport:
    """Execute every applicable (algorithm, p) of the spec and compare:
    reference run against the oracle, threaded run against the reference.

    Double-write counts ride along; with spec.force_no_ignore set they are
    the point of the exercise (expected nonzero for non-power-of-two p).
    """
    _check_spec(spec)
    procs = tuple(sorted(set(spec.procs)))
    algorithms = tuple(sorted(set(spec.algorithms), key=lambda a: a.value))
    skips = []
    cells = []
    for p in procs:
        for algorithm in algorithms:
            reason = skip_reason(algorithm, p)
            if reason:
                skips.append(SkipRecord(p, algorithm.value, reason))
            else:
                cells.append((algorithm, p))
    workers = worker_count()
    if workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                cell: pool.submit(_verify_cell, cell[0], cell[1], spec, concurrent)
                for cell in cells
            }
            results = {cell: future.result() for cell, future in futures.items()}
    else:
        results = {cell: _verify_cell(cell[0], cell[1], spec, concurrent) for cell in cells}
    entries = tuple(results[cell] for cell in cells)
    return VerifyReport(entries, tuple(skips))


@dataclass(frozen=True)
class TimingRow:
    p: int
    algorithm: str
    repetition: int
    seconds: float


def run_timing(spec: SweepSpec) -> list[TimingRow]:
    """Wall-clock the threaded executor (diagnostic only).

    In-process thread timing says nothing about real network behaviour; it
    exists to sanity-check executor scaling and must never stand in for
    modeled or measured communication time.
    """
    _check_spec(spec)
    rows = []
    for p in sorted(set(spec.procs)):
        for algorithm in sorted(set(spec.algorithms), key=lambda a: a.value):
            if skip_reason(algorithm, p):
                continue
            group = make_group(p, min(spec.sizes), spec.seed)
            schedule = build_schedule(algorithm, group, force_no_ignore=spec.force_no_ignore)
            for repetition in range(spec.repetitions):
                start = time.perf_counter()
                execute_concurrent(schedule)
                rows.append(
                    TimingRow(p, algorithm.value, repetition, time.perf_counter() - start)
                )
    return rows


def timing_csv(rows: list[TimingRow]) -> str:
    lines = ["p,algorithm,repetition,seconds"]
    lines.extend(f"{r.p},{r.algorithm},{r.repetition},{r.seconds!r}" for r in rows)
    return "\n".join(lines) + "\n"
