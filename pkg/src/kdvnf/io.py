"""Deterministic JSON reports, CSV tables and two-column plot data."""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

SCHEMA = 1


def clean(obj):
    """Plain JSON types: numpy scalars unwrapped, complex as [re, im], nan as null."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [clean(obj.real), clean(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if not math.isfinite(v) else v
    return obj


def report(command: str, config: dict, results: dict, version: str) -> dict:
    return {"schema": SCHEMA, "tool": "kdvnf", "version": version, "command": command,
            "config": clean(config), "results": clean(results)}


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def write_plot_data(path, x, y, header: str = ""):
    """Two whitespace-separated columns; header lines start with '#'."""
    with open(path, "w") as fh:
        for line in header.splitlines():
            fh.write(f"# {line}\n")
        for a, b in zip(x, y):
            fh.write(f"{float(a):.17g} {float(b):.17g}\n")


def read_plot_data(path):
    return np.loadtxt(path, comments="#", ndmin=2)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
