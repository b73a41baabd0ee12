"""Command-line entry point.

Subcommands: ``superres`` (cloud to elevation raster), ``extract`` (raster
to GeoJSON footprints), ``evaluate`` (footprints vs ground truth),
``synth`` (write a synthetic fixture directory) and ``bench-sr``
(subsample-and-reconstruct comparison table).

Exit codes: 0 success, 2 configuration error, 3 missing input,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import PipelineConfig, load_pipeline_config, load_scene_spec
from .errors import ConfigError, LidarSnakeError, MissingInput
from .evaluation import evaluate_footprints
from .pipeline import extract_buildings, tiled_superres
from .scene import MultiSpectralImage, synth_scene
from .superres import SrBenchmarkReport, sr_benchmark

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING_INPUT = 3
EXIT_NUMERICAL = 4


def _require(path, what: str) -> Path:
    if path is None:
        raise ConfigError(f"config does not name a {what}")
    p = Path(path)
    if not p.exists():
        raise MissingInput(f"{what} not found: {p}")
    return p


def _load_config(args) -> PipelineConfig:
    cfg_path = _require(args.config, "config file")
    cfg = load_pipeline_config(cfg_path)
    if args.out is not None:
        cfg.out_dir = Path(args.out)
    if args.tile_size is not None:
        cfg.tile_size = args.tile_size
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.seed is not None:
        cfg.seed = args.seed
    if cfg.tile_size < 64:
        raise ConfigError("tile size must be at least 64 px")
    return cfg


def _load_cloud(cfg: PipelineConfig) -> np.ndarray:
    return io.read_xyz(_require(cfg.cloud_path, "point cloud"))


def _ensure_out(cfg: PipelineConfig) -> Path:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    return cfg.out_dir


def cmd_superres(args) -> int:
    cfg = _load_config(args)
    if cfg.geotransform is None:
        raise ConfigError("superres needs a [raster] section")
    cloud = _load_cloud(cfg)
    out = _ensure_out(cfg)
    dense = tiled_superres(cloud, cfg.geotransform, cfg.sr,
                           tile_size=cfg.tile_size, jobs=cfg.jobs)
    io.write_zimg(out / "zimage.zimg", dense, cfg.geotransform)
    io.write_pgm(out / "zimage.pgm", dense, bits=16)
    # trace of a whole-raster single-window solve, for convergence inspection
    from .superres import project_points, propagate_fista
    if cfg.geotransform.rows <= cfg.tile_size and cfg.geotransform.cols <= cfg.tile_size:
        sparse = project_points(cloud, cfg.geotransform)
        _, trace = propagate_fista(sparse, cfg.sr)
        io.write_trace_csv(out / "trace.csv", trace)
    print(f"wrote {out / 'zimage.zimg'}")
    return EXIT_OK


def _load_zimage(cfg: PipelineConfig):
    if cfg.zimage_path is not None and Path(cfg.zimage_path).exists():
        values, gt = io.read_zimg(cfg.zimage_path)
        return values, (gt or cfg.geotransform)
    default = cfg.out_dir / "zimage.zimg"
    if default.exists():
        values, gt = io.read_zimg(default)
        return values, (gt or cfg.geotransform)
    if cfg.geotransform is None:
        raise ConfigError("extract needs a [raster] section or a raster sidecar")
    cloud = _load_cloud(cfg)
    return tiled_superres(cloud, cfg.geotransform, cfg.sr,
                          tile_size=cfg.tile_size, jobs=cfg.jobs), cfg.geotransform


def _load_bands(cfg: PipelineConfig) -> MultiSpectralImage | None:
    if cfg.red_band_path is None or cfg.nir_band_path is None:
        return None
    red = io.read_pgm(_require(cfg.red_band_path, "red band"))
    nir = io.read_pgm(_require(cfg.nir_band_path, "nir band"))
    return MultiSpectralImage({"red": red, "nir": nir})


def cmd_extract(args) -> int:
    cfg = _load_config(args)
    z, gt = _load_zimage(cfg)
    if gt is None:
        raise ConfigError("no geotransform available")
    ms = _load_bands(cfg)
    out = _ensure_out(cfg)
    buildings, failures = extract_buildings(
        z, gt, cfg.snake, ms=ms, min_height=cfg.min_height,
        min_area=cfg.min_area, ndvi_threshold=cfg.ndvi_threshold,
        gvf_iters=cfg.gvf_iters, external=cfg.external, jobs=cfg.jobs)
    fc = io.contours_to_feature_collection(
        [b.contour_px for b in buildings], gt, space="world")
    io.write_geojson(out / "footprints.geojson", fc)
    for b in buildings:
        io.write_history_csv(out / f"history_{b.index:03d}.csv", b.history)
    print(f"extracted {len(buildings)} buildings ({len(failures)} failed)")
    if failures and not buildings:
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    if cfg.geotransform is None:
        raise ConfigError("evaluate needs a [raster] section")
    gt = cfg.geotransform
    fp_path = cfg.footprints_path or (cfg.out_dir / "footprints.geojson")
    extracted = [io.feature_to_pixel_contour(ring, props, gt)
                 for ring, props in io.read_geojson(_require(fp_path, "footprints"))]
    truth = [io.feature_to_pixel_contour(ring, props, gt)
             for ring, props in io.read_geojson(_require(cfg.truth_path, "ground truth"))]
    out = _ensure_out(cfg)
    report = evaluate_footprints(extracted, truth, gt, min_area=50.0)
    io.write_eval_csv(out / "evaluation.csv", report)
    table = io.format_eval_table(report)
    (out / "evaluation.txt").write_text(table, encoding="ascii")
    print(table, end="")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = load_scene_spec(_require(args.config, "scene config"))
    seed = args.seed if args.seed is not None else 0
    out = Path(args.out) if args.out is not None else Path("fixture")
    out.mkdir(parents=True, exist_ok=True)
    cloud, z_truth, truth_contours, ms = synth_scene(spec, seed)
    gt = spec.geotransform()
    io.write_xyz(out / "cloud.xyz", cloud)
    io.write_zimg(out / "dsm_truth.zimg", z_truth, gt)
    io.write_pgm(out / "red.pgm", ms.band("red"), bits=16)
    io.write_pgm(out / "nir.pgm", ms.band("nir"), bits=16)
    io.write_geojson(out / "truth.geojson",
                     io.contours_to_feature_collection(truth_contours, gt, "world"))
    (out / "pipeline.ini").write_text(
        "[paths]\n"
        "cloud=cloud.xyz\n"
        "red_band=red.pgm\n"
        "nir_band=nir.pgm\n"
        "truth=truth.geojson\n"
        "out_dir=.\n"
        "\n"
        "[raster]\n"
        f"origin_x={gt.origin_x!r}\n"
        f"origin_y={gt.origin_y!r}\n"
        f"pixel_size={gt.pixel_size!r}\n"
        f"rows={gt.rows}\n"
        f"cols={gt.cols}\n"
        "\n"
        "[scene]\n"
        "min_height=2.0\n"
        "min_area=8.0\n"
        "\n"
        f"[run]\nseed={seed}\n",
        encoding="ascii")
    print(f"fixture written to {out}")
    return EXIT_OK


def cmd_bench_sr(args) -> int:
    cfg = _load_config(args)
    if cfg.geotransform is None:
        raise ConfigError("bench-sr needs a [raster] section")
    cloud = _load_cloud(cfg)
    out = _ensure_out(cfg)
    rows = ["method,factor,rmse,ssim,psnr"]
    for factor in (2, 4, 8):
        report = sr_benchmark(cloud, cfg.geotransform, factor, cfg.sr)
        for method in SrBenchmarkReport.METHODS:
            r, s, p = report.scores[method]
            rows.append(f"{method},{factor},{r!r},{s!r},{p!r}")
    (out / "sr_benchmark.csv").write_text("\n".join(rows) + "\n", encoding="ascii")
    print(f"wrote {out / 'sr_benchmark.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lidarsnake",
        description="Building footprint extraction from LiDAR point clouds")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler, help_text in (
            ("superres", cmd_superres, "densify a point cloud into an elevation raster"),
            ("extract", cmd_extract, "extract building footprints to GeoJSON"),
            ("evaluate", cmd_evaluate, "score footprints against ground truth"),
            ("synth", cmd_synth, "generate a synthetic fixture directory"),
            ("bench-sr", cmd_bench_sr, "benchmark reconstruction methods")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="config file path")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--tile-size", type=int, default=None, dest="tile_size")
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.set_defaults(handler=handler)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingInput as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except LidarSnakeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
