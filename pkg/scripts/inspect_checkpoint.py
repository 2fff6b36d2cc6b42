#!/usr/bin/env python3
"""
Helper script to inspect IEPG checkpoints in a human-friendly format.

Usage:
    python scripts/inspect_checkpoint.py runs/gec/gec.ckpt
    python scripts/inspect_checkpoint.py runs/pis/pis.ckpt --tensors
    python scripts/inspect_checkpoint.py runs/pis/pis.ckpt \
        --losses runs/pis/pis_losses.txt
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from iepg.errors import IepgError
from iepg.storage import load_checkpoint
from iepg.training import read_loss_log


def format_header(path: Path, metadata: dict) -> str:
    """Format checkpoint metadata for display."""
    lines = [
        f"Checkpoint: {path}",
        f"Stage: {metadata.get('stage', '?')}",
        f"Step: {metadata.get('step', '?')}",
        f"Seed: {metadata.get('seed', '?')}",
        f"IEPG version: {metadata.get('iepg_version', 'unknown')}",
    ]
    for key in ("gec_hash", "pyramid_hash"):
        if key in metadata:
            lines.append(f"{key}: {metadata[key][:16]}...")
    return "\n".join(lines)


def format_groups(tensors: dict) -> str:
    """Parameter counts per top-level group (model, adam.generator, ...)."""
    groups = {}
    for name, arr in tensors.items():
        head, _, rest = name.partition(".")
        if head == "adam":
            head = f"adam.{rest.split('.', 1)[0]}"
        count, size = groups.get(head, (0, 0))
        groups[head] = (count + 1, size + arr.size)
    lines = []
    for head in sorted(groups):
        count, size = groups[head]
        lines.append(f"  {head:<24} {count:>5} tensors  {size:>10,} values")
    return "\n".join(lines)


def format_tensor(name: str, arr: np.ndarray) -> str:
    stats = ""
    if arr.size:
        stats = f"  mean={arr.mean():+.4e}  std={arr.std():.4e}"
    return f"  {name:<56} {str(arr.shape):<16}{stats}"


def main():
    parser = argparse.ArgumentParser(
        description="Inspect an IEPG checkpoint in human-friendly format"
    )
    parser.add_argument("checkpoint", help="Path to a .ckpt file")
    parser.add_argument(
        "--tensors",
        action="store_true",
        help="List every tensor with its shape and summary statistics",
    )
    parser.add_argument(
        "--config",
        action="store_true",
        help="Print the run config echoed into the checkpoint",
    )
    parser.add_argument(
        "--losses",
        help="Also summarise a loss log written next to the checkpoint",
    )
    args = parser.parse_args()

    path = Path(args.checkpoint)
    if not path.exists():
        print(f"Error: {path} does not exist", file=sys.stderr)
        print("Run `iepg train gec` first to create one", file=sys.stderr)
        sys.exit(1)

    try:
        ckpt = load_checkpoint(path)
    except IepgError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        sys.exit(1)

    print("=" * 70)
    print(format_header(path, ckpt.metadata))
    print("=" * 70)

    print(f"\nTensors ({len(ckpt.tensors)} total):")
    print(format_groups(ckpt.tensors))

    if args.tensors:
        print()
        for name in sorted(ckpt.tensors):
            print(format_tensor(name, ckpt.tensors[name]))

    if args.config:
        print("\nConfig:")
        print(json.dumps(ckpt.metadata.get("config", {}), indent=2, sort_keys=True))

    if args.losses:
        curve = read_loss_log(args.losses)
        print(f"\nLosses ({args.losses}):")
        for name in curve.names():
            series = curve.series(name)
            first, last = series[0][1], series[-1][1]
            print(
                f"  {name:<20} {first:>12.5f} -> {last:>12.5f}"
                f"  ({len(series)} points)"
            )


if __name__ == "__main__":
    main()
