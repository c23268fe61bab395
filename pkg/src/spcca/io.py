"""File formats: matrix CSV, canonical JSON, and static SVG line plots."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, NonFinite
from .matrix import DataMatrix


def fmt(x: float) -> str:
    """Shortest decimal that round-trips to the same double."""
    return repr(float(x))


def write_matrix_csv(m: DataMatrix, path, id_header: str = "sample") -> None:
    ids = m.sample_ids or tuple(f"s{i + 1:03d}" for i in range(m.rows))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([id_header, *m.col_labels])
        for sid, row in zip(ids, m.values):
            w.writerow([sid, *(fmt(v) for v in row)])


def read_matrix_csv(path) -> DataMatrix:
    """Read the shared matrix CSV: header of feature labels, first column sample ids."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3:
        raise ConfigError(f"{path}: need a header and at least 2 samples")
    labels = rows[0][1:]
    ids, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(labels) + 1:
            raise ConfigError(f"{path}:{lineno}: expected {len(labels) + 1} cells, got {len(row)}")
        ids.append(row[0])
        try:
            vals = [float(c) if c.strip() else math.nan for c in row[1:]]
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
        values.append(vals)
    arr = np.array(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise NonFinite(f"{path}: missing or non-finite value at sample {ids[bad[0]]!r}, "
                        f"feature {labels[bad[1]]!r}")
    return DataMatrix(arr, tuple(labels), False, tuple(ids))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(config: Mapping) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def provenance(config: Mapping, seed: int) -> dict:
    from . import __version__
    from ._backend import BACKEND
    import numba
    import scipy

    return {
        "config_sha256": config_hash(config),
        "seed": int(seed),
        "versions": {
            "spcca": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
            "python": platform.python_version(),
        },
        "backend": BACKEND,
    }


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_rows(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def line_plot_svg(series: Mapping[str, np.ndarray], title: str = "",
                  width: int = 720, height: int = 320) -> str:
    """One polyline per series against sample index.  No timestamps, so output is reproducible."""
    left, right, top, bottom = 48, 140, 28, 32
    n = max(len(v) for v in series.values())
    allv = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    lo, hi = float(allv.min()), float(allv.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    pw, ph = width - left - right, height - top - bottom

    def xy(i, v):
        x = left + (pw * i / max(n - 1, 1))
        y = top + ph * (hi - v) / (hi - lo)
        return f"{x:.2f},{y:.2f}"

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left}" y="18" font-family="sans-serif" font-size="13">{_esc(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>',
    ]
    if lo < 0 < hi:
        y0 = top + ph * hi / (hi - lo)
        out.append(f'<line x1="{left}" y1="{y0:.2f}" x2="{left + pw}" y2="{y0:.2f}" '
                   'stroke="#ccc" stroke-dasharray="4,3"/>')
    out.append(f'<text x="{left}" y="{height - 10}" font-family="sans-serif" font-size="11">'
               f'sample 1..{n}</text>')
    for j, (name, vals) in enumerate(series.items()):
        color = _COLORS[j % len(_COLORS)]
        pts = " ".join(xy(i, float(v)) for i, v in enumerate(vals))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 + 18 * j
        out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 28}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 32}" y="{ly}" font-family="sans-serif" '
                   f'font-size="11">{_esc(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")
