"""Declarative run configuration (INI-style key=value sections).

A pipeline config names the inputs, the raster frame, solver and contour
parameters, scene thresholds and batch settings.  A scene config describes
a synthetic fixture: extent, ground level, boxes and sampling density.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geometry import GeoTransform
from .scene import BoxSpec, SceneSpec
from .snake import SnakeParams
from .superres import SrParams


@dataclass
class PipelineConfig:
    cloud_path: Path | None = None
    zimage_path: Path | None = None
    red_band_path: Path | None = None
    nir_band_path: Path | None = None
    truth_path: Path | None = None
    footprints_path: Path | None = None
    out_dir: Path = Path(".")
    geotransform: GeoTransform | None = None
    sr: SrParams = field(default_factory=SrParams)
    snake: SnakeParams = field(default_factory=SnakeParams)
    gvf_iters: int = 200
    external: str = "gvf"
    min_height: float = 2.0
    min_area: float = 50.0
    ndvi_threshold: float = 0.3
    tile_size: int = 256
    jobs: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.tile_size < 64:
            raise ConfigError("tile size must be at least 64 px")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")


def _read_ini(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parser


def _get(parser, section, key, cast, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key).strip()
    if raw == "":
        return default
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc


def load_pipeline_config(path) -> PipelineConfig:
    parser = _read_ini(path)
    base = Path(path).resolve().parent

    def _path(section, key):
        v = _get(parser, section, key, str, None)
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() else base / p

    gt = None
    if parser.has_section("raster"):
        try:
            gt = GeoTransform(
                _get(parser, "raster", "origin_x", float, 0.0),
                _get(parser, "raster", "origin_y", float, 0.0),
                _get(parser, "raster", "pixel_size", float, 1.0),
                _get(parser, "raster", "rows", int, 1),
                _get(parser, "raster", "cols", int, 1),
            )
        except ValueError as exc:
            raise ConfigError(f"[raster]: {exc}") from exc

    try:
        sr = SrParams(
            lam=_get(parser, "superres", "lam", float, None),
            max_iters=_get(parser, "superres", "max_iters", int, 1000),
            diff_tol=_get(parser, "superres", "diff_tol", float, 1e-3),
            step_size=_get(parser, "superres", "step_size", float, 1.0 / 16.0),
        )
        snake = SnakeParams(
            alpha=_get(parser, "snake", "alpha", float, 0.2),
            beta=_get(parser, "snake", "beta", float, 0.2),
            kappa=_get(parser, "snake", "kappa", float, 0.1),
            mu_gvf=_get(parser, "snake", "mu_gvf", float, 0.2),
            w_line=_get(parser, "snake", "w_line", float, 0.04),
            w_edge=_get(parser, "snake", "w_edge", float, 2.0),
            w_term=_get(parser, "snake", "w_term", float, 0.01),
            sigma=_get(parser, "snake", "sigma", float, 1.0),
            gamma=_get(parser, "snake", "gamma", float, 1.0),
            max_iters=_get(parser, "snake", "max_iters", int, 400),
            resample_spacing=_get(parser, "snake", "resample_spacing", float, 2.0),
            convergence_tol=_get(parser, "snake", "convergence_tol", float, 0.05),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    return PipelineConfig(
        cloud_path=_path("paths", "cloud"),
        zimage_path=_path("paths", "zimage"),
        red_band_path=_path("paths", "red_band"),
        nir_band_path=_path("paths", "nir_band"),
        truth_path=_path("paths", "truth"),
        footprints_path=_path("paths", "footprints"),
        out_dir=_path("paths", "out_dir") or base,
        geotransform=gt,
        sr=sr,
        snake=snake,
        gvf_iters=_get(parser, "snake", "gvf_iters", int, 200),
        external=_get(parser, "snake", "external", str, "gvf"),
        min_height=_get(parser, "scene", "min_height", float, 2.0),
        min_area=_get(parser, "scene", "min_area", float, 50.0),
        ndvi_threshold=_get(parser, "scene", "ndvi_threshold", float, 0.3),
        tile_size=_get(parser, "run", "tile_size", int, 256),
        jobs=_get(parser, "run", "jobs", int, 1),
        seed=_get(parser, "run", "seed", int, 0),
    )


def load_scene_spec(path) -> SceneSpec:
    """Read a synthetic scene description.

    The ``[scene]`` section carries extent/ground/density; each ``[box:*]``
    section holds ``polygon = x,y; x,y; ...`` in world metres and ``height``.
    """
    parser = _read_ini(path)
    if not parser.has_section("scene"):
        raise ConfigError(f"{path}: missing [scene] section")
    boxes = []
    for section in parser.sections():
        if not section.startswith("box"):
            continue
        raw = _get(parser, section, "polygon", str, None)
        height = _get(parser, section, "height", float, None)
        if raw is None or height is None:
            raise ConfigError(f"[{section}] needs polygon and height")
        try:
            pts = [[float(v) for v in pair.split(",")]
                   for pair in raw.split(";") if pair.strip()]
            boxes.append(BoxSpec(np.asarray(pts), height))
        except ValueError as exc:
            raise ConfigError(f"[{section}] polygon: {exc}") from exc
    try:
        return SceneSpec(
            width=_get(parser, "scene", "width", float, None),
            height=_get(parser, "scene", "height", float, None),
            ground=_get(parser, "scene", "ground", float, 0.0),
            boxes=tuple(boxes),
            density=_get(parser, "scene", "density", float, 8.0),
            noise_std=_get(parser, "scene", "noise_std", float, 0.0),
            pixel_size=_get(parser, "scene", "pixel_size", float, 0.5),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[scene]: {exc}") from exc
