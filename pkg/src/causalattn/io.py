"""Output writers that stamp every file with the resolved configuration and its hash."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .verify import _jsonable  # noqa: E402


def provenance_lines(resolved: dict, digest: str) -> list[str]:
    return [f"config: {json.dumps(_jsonable(resolved), sort_keys=True)}", f"input_sha256: {digest}"]


def write_csv(path, header, rows, resolved: dict, digest: str) -> Path:
    """CSV with ``#`` provenance lines ahead of the header row."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        for line in provenance_lines(resolved, digest):
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def read_csv(path):
    """Rows of a CSV written by :func:`write_csv`, skipping provenance lines."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_json(path, payload: dict, resolved: dict, digest: str) -> Path:
    path = Path(path)
    doc = {"config": resolved, "input_sha256": digest}
    doc.update(payload)
    with open(path, "w") as fh:
        json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_svg(fig, path, resolved: dict, digest: str) -> Path:
    """Save a figure as SVG with deterministic ids and the provenance in its metadata."""
    path = Path(path)
    with matplotlib.rc_context({"svg.hashsalt": digest, "svg.fonttype": "none"}):
        fig.savefig(
            path,
            format="svg",
            metadata={"Date": None, "Description": "\n".join(provenance_lines(resolved, digest))},
        )
    plt.close(fig)
    return path
