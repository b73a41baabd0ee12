"""File formats: XYZ clouds, binary elevation rasters, PGM previews,
GeoJSON footprints and CSV diagnostics.

The raster format is minimal: a 16-byte header (magic ``ZIMG``, u32 rows,
u32 cols, 4 reserved bytes, all little-endian) followed by row-major
float32 samples, with the geotransform in a ``<path>.txt`` sidecar.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .geometry import GeoTransform, pixel_to_world, world_to_pixel

_ZIMG_MAGIC = b"ZIMG"


# ---------------------------------------------------------------------------
# point clouds


def read_xyz(path) -> np.ndarray:
    """Read an ASCII cloud: one ``x y z`` triple per line, ``#`` comments."""
    pts = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 values, got {len(parts)}")
            pts.append([float(v) for v in parts])
    return np.asarray(pts, dtype=float).reshape(-1, 3)


def write_xyz(path, points) -> None:
    pts = np.asarray(points, dtype=float)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# x y z\n")
        for x, y, z in pts:
            fh.write(f"{x!r} {y!r} {z!r}\n")


# ---------------------------------------------------------------------------
# binary elevation rasters


def zimg_sidecar(path) -> Path:
    return Path(str(path) + ".txt")


def write_zimg(path, values, gt: GeoTransform | None = None) -> None:
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError("raster must be 2-D")
    rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(_ZIMG_MAGIC)
        fh.write(struct.pack("<II", rows, cols))
        fh.write(b"\x00" * 4)
        fh.write(arr.astype("<f4").tobytes(order="C"))
    if gt is not None:
        with open(zimg_sidecar(path), "w", encoding="ascii") as fh:
            fh.write(f"origin_x={gt.origin_x!r}\n")
            fh.write(f"origin_y={gt.origin_y!r}\n")
            fh.write(f"pixel_size={gt.pixel_size!r}\n")
            fh.write(f"rows={gt.rows}\n")
            fh.write(f"cols={gt.cols}\n")


def read_zimg(path):
    """Read a raster; returns (values, geotransform-or-None)."""
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != _ZIMG_MAGIC:
            raise ValueError(f"{path}: not a ZIMG raster")
        rows, cols = struct.unpack("<II", header[4:12])
        data = np.frombuffer(fh.read(rows * cols * 4), dtype="<f4")
    if data.size != rows * cols:
        raise ValueError(f"{path}: truncated raster body")
    values = data.reshape(rows, cols).astype(float)
    side = zimg_sidecar(path)
    gt = None
    if side.exists():
        kv = {}
        for line in side.read_text(encoding="ascii").splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                kv[k.strip()] = v.strip()
        gt = GeoTransform(float(kv["origin_x"]), float(kv["origin_y"]),
                          float(kv["pixel_size"]), int(kv["rows"]), int(kv["cols"]))
    return values, gt


# ---------------------------------------------------------------------------
# PGM previews and band input


def write_pgm(path, values, bits: int = 16) -> None:
    """Min-max scaled binary PGM (P5); 16-bit samples are big-endian."""
    arr = np.asarray(values, dtype=float)
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    maxval = (1 << bits) - 1
    lo, hi = float(arr.min()), float(arr.max())
    if hi > lo:
        scaled = np.round((arr - lo) / (hi - lo) * maxval)
    else:
        scaled = np.zeros_like(arr)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode("ascii"))
        if bits == 8:
            fh.write(scaled.astype(np.uint8).tobytes())
        else:
            fh.write(scaled.astype(">u2").tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM into floats scaled to [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(b"P5"):
        raise ValueError(f"{path}: only binary (P5) PGM supported")
    # header: magic, width, height, maxval; arbitrary whitespace/comments between
    tokens = []
    i = 2
    while len(tokens) < 3:
        while i < len(raw) and raw[i:i + 1].isspace():
            i += 1
        if raw[i:i + 1] == b"#":
            while i < len(raw) and raw[i] != 0x0A:
                i += 1
            continue
        j = i
        while j < len(raw) and not raw[j:j + 1].isspace():
            j += 1
        tokens.append(int(raw[i:j]))
        i = j
    i += 1  # single whitespace after maxval
    width, height, maxval = tokens
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    data = np.frombuffer(raw, dtype=dtype, count=width * height, offset=i)
    return data.reshape(height, width).astype(float) / maxval


# ---------------------------------------------------------------------------
# GeoJSON footprints


def contours_to_feature_collection(contours, gt: GeoTransform | None = None,
                                   space: str = "world",
                                   extra_properties=None) -> dict:
    """Build a FeatureCollection of Polygon features from (row, col) contours.

    ``space='world'`` converts through the geotransform to metres;
    ``space='pixel'`` stores [col, row] fractional coordinates.  The frame is
    flagged in every feature's properties.
    """
    if space not in ("world", "pixel"):
        raise ValueError("space must be 'world' or 'pixel'")
    if space == "world" and gt is None:
        raise ValueError("world output needs a geotransform")
    features = []
    for i, contour in enumerate(contours):
        pts = np.asarray(contour, dtype=float)
        if space == "world":
            x, y = pixel_to_world(gt, pts[:, 0], pts[:, 1])
        else:
            x, y = pts[:, 1], pts[:, 0]
        ring = [[float(a), float(b)] for a, b in zip(x, y)]
        ring.append(ring[0])
        props = {"index": i, "space": space}
        if extra_properties:
            props.update(extra_properties[i])
        features.append({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [ring]},
            "properties": props,
        })
    return {"type": "FeatureCollection", "features": features}


def write_geojson(path, feature_collection: dict) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(feature_collection, fh, separators=(",", ":"), sort_keys=True)
        fh.write("\n")


def read_geojson(path) -> list:
    """Read Polygon features; returns a list of (ring, properties) pairs.

    The ring is the outer ring without the repeated endpoint, as the raw
    [x, y] pairs stored in the file.
    """
    with open(path, "r", encoding="ascii") as fh:
        fc = json.load(fh)
    out = []
    for feature in fc.get("features", []):
        geom = feature.get("geometry", {})
        if geom.get("type") != "Polygon":
            continue
        ring = np.asarray(geom["coordinates"][0], dtype=float)
        if len(ring) > 1 and np.allclose(ring[0], ring[-1]):
            ring = ring[:-1]
        out.append((ring, feature.get("properties", {})))
    return out


def feature_to_pixel_contour(ring: np.ndarray, properties: dict,
                             gt: GeoTransform | None = None) -> np.ndarray:
    """Convert a stored ring back into (row, col) fractional coordinates."""
    space = properties.get("space", "world")
    if space == "pixel":
        return np.stack([ring[:, 1], ring[:, 0]], axis=1)
    if gt is None:
        raise ValueError("world-space feature needs a geotransform")
    row, col = world_to_pixel(gt, ring[:, 0], ring[:, 1])
    return np.stack([row, col], axis=1)


# ---------------------------------------------------------------------------
# CSV diagnostics


def write_trace_csv(path, trace) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("iter,diff,cost\n")
        for i, (d, c) in enumerate(zip(trace.diffs, trace.costs), 1):
            fh.write(f"{i},{d!r},{c!r}\n")


def write_history_csv(path, history) -> None:
    from .geometry import enclosed_area
    with open(path, "w", encoding="ascii") as fh:
        fh.write("iter,max_move,area\n")
        for state in history:
            fh.write(f"{state.iteration},{state.last_move!r},"
                     f"{enclosed_area(state.contour)!r}\n")


def _fmt_pct(v: float) -> str:
    return "nan" if np.isnan(v) else f"{v:.2f}"


def write_eval_csv(path, report) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("section,tp,fp,fn,cp,cr,q\n")
        a = report.per_area
        fh.write(f"per_area,,,,{_fmt_pct(a.cp)},{_fmt_pct(a.cr)},{_fmt_pct(a.q)}\n")
        for name, o in (("per_object", report.per_object),
                        ("per_object_50", report.per_object_50)):
            fh.write(f"{name},{o.tp},{o.fp},{o.fn},"
                     f"{_fmt_pct(o.cp)},{_fmt_pct(o.cr)},{_fmt_pct(o.q)}\n")
        rmse = report.boundary_rmse
        fh.write(f"boundary_rmse_m,,,,,,{'nan' if np.isnan(rmse) else f'{rmse:.3f}'}\n")


def format_eval_table(report) -> str:
    a = report.per_area
    lines = [
        "                    Cp        Cr        Q       TP   FP   FN",
        f"per-area        {_fmt_pct(a.cp):>8}  {_fmt_pct(a.cr):>8}  {_fmt_pct(a.q):>8}    -    -    -",
    ]
    for name, o in (("per-object", report.per_object),
                    ("per-object>=50m2", report.per_object_50)):
        lines.append(f"{name:<15} {_fmt_pct(o.cp):>8}  {_fmt_pct(o.cr):>8}  "
                     f"{_fmt_pct(o.q):>8}  {o.tp:>3}  {o.fp:>3}  {o.fn:>3}")
    rmse = report.boundary_rmse
    lines.append(f"boundary RMSE   {'nan' if np.isnan(rmse) else f'{rmse:.3f} m'}")
    return "\n".join(lines) + "\n"
