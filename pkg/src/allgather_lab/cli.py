"""Command line harness: ``sweep``, ``heatmap`` and ``verify`` subcommands.

Exit status is nonzero iff a correctness check fails (oracle mismatch or a
sweep row flagged incorrect); configuration problems exit with status 2.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional

from . import bench
from .netmodel import (
    ConfigError,
    Topology,
    cervino_topology,
    load_json,
    topology_from_dict,
    uniform_topology,
    yahoo_topology,
)
from .schedules import ALLGATHER_ALGORITHMS, AlgorithmId

_SUFFIXES = {"": 1, "b": 1, "k": 1 << 10, "kib": 1 << 10, "m": 1 << 20, "mib": 1 << 20}


def parse_bytes(token: str) -> int:
    text = token.strip().lower()
    digits = text.rstrip("kmib")
    suffix = text[len(digits):]
    if suffix not in _SUFFIXES or not digits:
        raise ConfigError(f"cannot parse byte size {token!r}")
    try:
        return int(digits) * _SUFFIXES[suffix]
    except ValueError:
        raise ConfigError(f"cannot parse byte size {token!r}") from None


def parse_procs(spec: str) -> tuple[int, ...]:
    """Comma list of ints and ranges: ``5,8,16`` or ``8-64:8`` (step optional)."""
    values: set[int] = set()
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        if "-" in token:
            body, _, step_text = token.partition(":")
            lo_text, _, hi_text = body.partition("-")
            try:
                lo, hi = int(lo_text), int(hi_text)
                step = int(step_text) if step_text else 1
            except ValueError:
                raise ConfigError(f"cannot parse process range {token!r}") from None
            if step < 1 or hi < lo:
                raise ConfigError(f"bad process range {token!r}")
            values.update(range(lo, hi + 1, step))
        else:
            try:
                values.add(int(token))
            except ValueError:
                raise ConfigError(f"cannot parse process count {token!r}") from None
    if not values:
        raise ConfigError(f"no process counts in {spec!r}")
    return tuple(sorted(values))


def parse_sizes(spec: str) -> tuple[int, ...]:
    """Comma list of byte sizes (suffixes K/M) and doubling ranges ``1-1M``."""
    values: set[int] = set()
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        if "-" in token:
            lo_text, _, hi_text = token.partition("-")
            lo, hi = parse_bytes(lo_text), parse_bytes(hi_text)
            if hi < lo:
                raise ConfigError(f"bad size range {token!r}")
            size = lo
            while size <= hi:
                values.add(size)
                size *= 2
        else:
            values.add(parse_bytes(token))
    if not values:
        raise ConfigError(f"no sizes in {spec!r}")
    return tuple(sorted(values))


def parse_algos(spec: str) -> tuple[AlgorithmId, ...]:
    if spec.strip().lower() == "all":
        return ALLGATHER_ALGORITHMS
    names = [token.strip() for token in spec.split(",") if token.strip()]
    try:
        return tuple(AlgorithmId(name) for name in names)
    except ValueError:
        known = ", ".join(a.value for a in AlgorithmId)
        raise ConfigError(f"unknown algorithm in {spec!r} (known: {known})") from None


_PRESETS = {
    "yahoo": lambda _: yahoo_topology(),
    "cervino": lambda _: cervino_topology(),
}


def resolve_topology(name: Optional[str], max_p: int, config: dict) -> Topology:
    if name == "uniform":
        return uniform_topology(max_p, 10.0, 0.01)
    if name in _PRESETS:
        return _PRESETS[name](None)
    if config:
        # name was a config file path (already loaded), or no --topology at all
        if "topology" in config:
            return topology_from_dict(config["topology"])
        if "levels" in config:
            return topology_from_dict(config)
        if name is None or os.path.exists(name):
            return uniform_topology(max_p, 10.0, 0.01)
    if name is None:
        return uniform_topology(max_p, 10.0, 0.01)
    raise ConfigError(f"topology {name!r} is neither a preset (uniform, yahoo, cervino) nor a readable file")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--topology",
        help="topology file (JSON; may also carry sweep fields) or preset name: "
        "uniform (default), yahoo, cervino",
    )
    parser.add_argument("--mapping", choices=("sequential", "cyclic"), help="rank placement")
    parser.add_argument("--procs", help="process counts, e.g. 5,8,13 or 8-64:8")
    parser.add_argument("--sizes", help="block sizes in bytes, e.g. 1-1M or 64,1K,64K")
    parser.add_argument("--algos", help="comma list of algorithms, or 'all'")
    parser.add_argument("--out", default="out", help="output directory (default: ./out)")
    parser.add_argument("--seed", type=int, help="payload generator seed")
    parser.add_argument(
        "--force-no-ignore",
        action="store_true",
        help="debug: drop the sparbit ignore mask (provokes counted double writes)",
    )
    parser.add_argument(
        "--reps",
        type=int,
        help="wall-clock the threaded executor this many times per case "
        "(diagnostic timing only, written to timing.csv)",
    )


def _build_spec(args: argparse.Namespace) -> bench.SweepSpec:
    config: dict = {}
    if args.topology and os.path.exists(args.topology):
        config = load_json(args.topology)
    procs = parse_procs(args.procs) if args.procs else None
    if procs is None and "procs" in config:
        procs = tuple(int(p) for p in config["procs"])
    if procs is None:
        procs = bench.default_procs()
    sizes = parse_sizes(args.sizes) if args.sizes else None
    if sizes is None and "sizes" in config:
        sizes = tuple(int(s) for s in config["sizes"])
    if sizes is None:
        sizes = bench.default_sizes()
    algos = parse_algos(args.algos) if args.algos else None
    if algos is None and "algos" in config:
        algos = parse_algos(",".join(config["algos"]))
    if algos is None:
        algos = ALLGATHER_ALGORITHMS
    mapping = args.mapping or config.get("mapping", "sequential")
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    reps = args.reps if args.reps is not None else int(config.get("repetitions", 0))
    topology = resolve_topology(args.topology, max(procs), config)
    return bench.SweepSpec(
        procs=procs,
        sizes=sizes,
        algorithms=algos,
        topology=topology,
        mapping_kind=mapping,
        seed=seed,
        force_no_ignore=args.force_no_ignore,
        repetitions=reps,
    )


def _cmd_sweep(args: argparse.Namespace) -> int:
    spec = _build_spec(args)
    result = bench.run_sweep(spec)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "sweep.csv")
    result.write_csv(csv_path)
    for skip in result.skips:
        print(f"skip: p={skip.p} {skip.algorithm} ({skip.reason})")
    print(f"wrote {csv_path} ({len(result.rows)} rows, {len(result.skips)} skips)")
    if spec.repetitions > 0:
        timing_path = os.path.join(args.out, "timing.csv")
        with open(timing_path, "w", encoding="ascii", newline="\n") as handle:
            handle.write(bench.timing_csv(bench.run_timing(spec)))
        print(f"wrote {timing_path} (wall-clock diagnostics, not modeled time)")
    if not result.all_correct:
        bad = [row for row in result.rows if not row.correct]
        print(f"CORRECTNESS FAILURES: {len(bad)} rows", file=sys.stderr)
        return 1
    return 0


def _cmd_heatmap(args: argparse.Namespace) -> int:
    csv_path = args.csv or os.path.join(args.out, "sweep.csv")
    if not os.path.exists(csv_path):
        print(f"no sweep CSV at {csv_path}; run the sweep subcommand first", file=sys.stderr)
        return 2
    rows = bench.read_sweep_csv(csv_path)
    out_csv, out_svg = bench.emit_heatmap(rows, args.out)
    print(f"wrote {out_csv}")
    print(f"wrote {out_svg}")
    incorrect = [row for row in rows if not row.correct]
    if incorrect:
        print(f"CORRECTNESS FAILURES recorded in dataset: {len(incorrect)} rows", file=sys.stderr)
        return 1
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    spec = _build_spec(args)
    report = bench.verify_all(spec)
    for line in report.lines():
        print(line)
    return 0 if report.ok else 1


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="allgather-lab",
        description="Build, execute and price allgather communication schedules.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="run a (p x block size x algorithm) sweep to CSV")
    _add_common(sweep)
    sweep.set_defaults(func=_cmd_sweep)

    heatmap = sub.add_parser("heatmap", help="render best-algorithm heatmap from a sweep CSV")
    _add_common(heatmap)
    heatmap.add_argument("csv", nargs="?", help="sweep CSV (default: <out>/sweep.csv)")
    heatmap.set_defaults(func=_cmd_heatmap)

    verify = sub.add_parser("verify", help="execute schedules and compare against the oracle")
    _add_common(verify)
    verify.set_defaults(func=_cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
