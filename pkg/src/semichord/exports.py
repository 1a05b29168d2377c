"""Deterministic artifact writers: CSV tables, raster heatmaps, manifests.

Every text artifact starts with a header block recording the code
version, the convention flags, and a caller-supplied configuration
hash. No timestamps anywhere: rerunning with the same inputs must make
byte-identical files.
"""

from __future__ import annotations

import hashlib
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from PIL import Image, ImageDraw

from . import __version__
from .analysis import BlindSpotSet, CorrelationCurve, NodalLineSet
from .phasespace import ChordSection

__all__ = [
    "config_hash",
    "header_lines",
    "write_csv",
    "write_section_csv",
    "read_section_csv",
    "write_nodal_lines_csv",
    "write_spots_csv",
    "write_correlation_csv",
    "write_manifest",
    "render_heatmap",
]

CONVENTION_FLAGS = "chi(0)=1; wedge(xi,x)=xi_p.q-xi_q.p; states 0-indexed ascending"


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def config_hash(config: Dict) -> str:
    """Stable short hash of a nested config mapping."""

    def canon(obj) -> str:
        if isinstance(obj, dict):
            return "{" + ",".join(f"{k}={canon(obj[k])}" for k in sorted(obj)) + "}"
        if isinstance(obj, (list, tuple)):
            return "[" + ",".join(canon(o) for o in obj) + "]"
        if isinstance(obj, float):
            return _fmt(obj)
        return repr(obj)

    return hashlib.sha256(canon(config).encode("utf-8")).hexdigest()[:12]


def header_lines(cfg_hash: str, extra: Optional[Dict[str, object]] = None) -> List[str]:
    lines = [
        f"# semichord {__version__}",
        f"# conventions: {CONVENTION_FLAGS}",
        f"# config_hash: {cfg_hash}",
    ]
    for key in sorted(extra or {}):
        lines.append(f"# {key}: {extra[key]}")
    return lines


def write_csv(path, headers: List[str], columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="\n") as fh:
        for line in headers:
            fh.write(line + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) if not isinstance(x, str) else x for x in row) + "\n")


def write_section_csv(path, section: ChordSection, cfg_hash: str) -> None:
    extra = {
        "axes": f"{section.plane.axes[0]},{section.plane.axes[1]}",
        "hbar": _fmt(section.hbar),
        "source": section.source,
        "shape": f"{len(section.u)}x{len(section.v)}",
    }
    base = section.plane.base()
    extra["offset"] = ";".join(_fmt(x) for x in base.as_vector())
    rows = []
    for a, ua in enumerate(section.u):
        for b, vb in enumerate(section.v):
            z = section.values[a, b]
            rows.append((ua, vb, z.real, z.imag))
    write_csv(path, header_lines(cfg_hash, extra), ("u", "v", "re", "im"), rows)


def read_section_csv(path) -> dict:
    """Round-trips the section table; returns axes names, u, v, values."""
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                if ":" in line:
                    key, _, val = line[1:].partition(":")
                    meta[key.strip()] = val.strip()
                continue
            if not line or line.startswith("u,"):
                continue
            rows.append(tuple(float(x) for x in line.split(",")))
    data = np.asarray(rows)
    u = np.unique(data[:, 0])
    v = np.unique(data[:, 1])
    values = (data[:, 2] + 1j * data[:, 3]).reshape(len(u), len(v))
    return {"meta": meta, "u": u, "v": v, "values": values}


def write_nodal_lines_csv(path, lines: NodalLineSet, cfg_hash: str) -> None:
    extra = {
        "part": lines.part,
        "source": lines.source,
        "degenerate": str(lines.degenerate).lower(),
        "polylines": len(lines.polylines),
    }
    rows = []
    for pid, pl in enumerate(lines.polylines):
        for vid, (x, y) in enumerate(pl):
            rows.append((pid, vid, x, y))
    write_csv(path, header_lines(cfg_hash, extra), ("polyline", "vertex", "u", "v"), rows)


def write_spots_csv(path, spots: BlindSpotSet, cfg_hash: str) -> None:
    extra = {"section": spots.section, "mode": spots.mode, "count": len(spots.spots)}
    if spots.mode == "curves":
        rows = []
        for pid, pl in enumerate(spots.curves):
            for vid, (x, y) in enumerate(pl):
                rows.append((pid, vid, x, y))
        write_csv(path, header_lines(cfg_hash, extra), ("curve", "vertex", "u", "v"), rows)
        return
    rows = [
        (s.point[0], s.point[1], s.residual, s.nearest_node_distance)
        for s in spots.spots
    ]
    write_csv(
        path,
        header_lines(cfg_hash, extra),
        ("u", "v", "residual", "nearest_node_distance"),
        rows,
    )


def write_correlation_csv(path, curve: CorrelationCurve, cfg_hash: str) -> None:
    extra = {
        "Q": ";".join(_fmt(x) for x in curve.Q),
        "delta": _fmt(curve.delta),
        "source": curve.source,
    }
    rows = list(zip(curve.magnitudes, curve.values))
    write_csv(path, header_lines(cfg_hash, extra), ("xi_q_magnitude", "value"), rows)


def write_manifest(path, cfg_hash: str, entries: Dict[str, object]) -> None:
    with open(path, "w", newline="\n") as fh:
        for line in header_lines(cfg_hash):
            fh.write(line + "\n")
        for key in sorted(entries):
            fh.write(f"{key} = {entries[key]}\n")


# ---------------------------------------------------------------------------
# raster heatmaps

_DIV_NEG = np.array([59.0, 76.0, 192.0])
_DIV_MID = np.array([255.0, 255.0, 255.0])
_DIV_POS = np.array([180.0, 4.0, 38.0])


def _diverging_rgb(norm: np.ndarray) -> np.ndarray:
    """norm in [-1, 1] -> blue-white-red, linear per side."""
    t = np.clip(norm, -1.0, 1.0)
    out = np.empty(t.shape + (3,))
    neg = t < 0
    out[neg] = _DIV_MID + (-t[neg])[..., None] * (_DIV_NEG - _DIV_MID)
    out[~neg] = _DIV_MID + (t[~neg])[..., None] * (_DIV_POS - _DIV_MID)
    return out.astype(np.uint8)


def render_heatmap(
    path,
    u: np.ndarray,
    v: np.ndarray,
    field: np.ndarray,
    cfg_hash: str,
    mode: str = "diverging",
    upsample: int = 4,
    polylines: Optional[List[np.ndarray]] = None,
    spots: Optional[np.ndarray] = None,
) -> None:
    """PNG of a section field, v upward, with optional contour/spot overlay.

    A sidecar <path>.range.txt records the color-scale limits so the
    image is quantitative. "diverging" maps a signed field symmetrically
    about zero; "modulus" maps [0, max] to grayscale.
    """
    field = np.asarray(field, dtype=float)
    if mode == "diverging":
        vmax = float(np.abs(field).max()) or 1.0
        vmin = -vmax
        rgb = _diverging_rgb(field / vmax)
    elif mode == "modulus":
        vmin = 0.0
        vmax = float(field.max()) or 1.0
        gray = np.clip(field / vmax, 0.0, 1.0)
        rgb = np.repeat((gray[..., None] * 255).astype(np.uint8), 3, axis=2)
    else:
        raise ValueError("mode must be 'diverging' or 'modulus'")

    # image rows run top-down; field axis 0 is u (horizontal), 1 is v
    img_arr = rgb.transpose(1, 0, 2)[::-1]
    img_arr = np.repeat(np.repeat(img_arr, upsample, axis=0), upsample, axis=1)
    img = Image.fromarray(img_arr, mode="RGB")

    if polylines or spots is not None:
        draw = ImageDraw.Draw(img)
        w = img_arr.shape[1] - 1
        h = img_arr.shape[0] - 1
        du = float(u[-1] - u[0]) or 1.0
        dv = float(v[-1] - v[0]) or 1.0

        def to_pix(x: float, y: float):
            return ((x - u[0]) / du * w, (1.0 - (y - v[0]) / dv) * h)

        for pl in polylines or []:
            if len(pl) < 2:
                continue
            draw.line([to_pix(x, y) for x, y in pl], fill=(20, 120, 20), width=1)
        if spots is not None:
            r = max(2, upsample)
            for x, y in np.atleast_2d(spots):
                cx, cy = to_pix(x, y)
                draw.ellipse([cx - r, cy - r, cx + r, cy + r], outline=(0, 0, 0), width=1)

    img.save(path, format="PNG")
    with open(str(path) + ".range.txt", "w", newline="\n") as fh:
        for line in header_lines(cfg_hash, {"vmin": _fmt(vmin), "vmax": _fmt(vmax), "mode": mode}):
            fh.write(line + "\n")
