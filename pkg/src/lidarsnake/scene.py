"""Everything upstream of the contour evolution.

Candidate buildings come from a deliberately simple stand-in extractor:
estimate the terrain from blockwise low percentiles, threshold the
height-above-terrain raster, drop vegetation by NDVI, keep large connected
components and trace their boundaries.  The module also provides polygon
rasterisation (shared with the evaluation metrics) and a deterministic
synthetic-scene generator used heavily by the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import MissingBand
from .geometry import GeoTransform, world_to_pixel
from .validation import check_contour, check_mask, check_raster


@dataclass
class MultiSpectralImage:
    """Named reflectance-like bands of equal shape (values >= 0)."""

    bands: dict

    def __post_init__(self):
        if not self.bands:
            raise ValueError("at least one band required")
        shapes = {np.asarray(b).shape for b in self.bands.values()}
        if len(shapes) != 1:
            raise ValueError("bands must share a shape")
        self.bands = {k: check_raster(v, f"band {k}") for k, v in self.bands.items()}
        for k, v in self.bands.items():
            if (v < 0).any():
                raise ValueError(f"band {k} has negative values")

    @property
    def shape(self):
        return next(iter(self.bands.values())).shape

    def band(self, name: str) -> np.ndarray:
        if name not in self.bands:
            raise MissingBand(f"band {name!r} not present")
        return self.bands[name]


def ndvi(ms: MultiSpectralImage) -> np.ndarray:
    """(NIR - R) / (NIR + R), with 0/0 mapped to 0."""
    nir = ms.band("nir")
    red = ms.band("red")
    num = nir - red
    den = nir + red
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den == 0, 0.0, num / den)
    return out


def vegetation_mask(ndvi_field, threshold: float) -> np.ndarray:
    return check_raster(ndvi_field, "ndvi") > threshold


# ---------------------------------------------------------------------------
# polygon rasterisation (pixel-centre, even-odd, boundary-inclusive)


def mask_from_contour(contour, rows: int, cols: int) -> np.ndarray:
    """Scanline fill of a closed polygon in fractional pixel coordinates.

    A pixel is set when its centre (i + 0.5, j + 0.5) lies inside the
    polygon under the even-odd rule; centres exactly on the boundary count
    as inside, so tracing a mask and re-filling the traced ring is a
    near-inverse pair.  Traversal direction does not matter.
    """
    pts = check_contour(contour)
    out = np.zeros((rows, cols), dtype=bool)
    closed = np.vstack([pts, pts[:1]])
    p = closed[:-1]
    q = closed[1:]
    r1, c1 = p[:, 0], p[:, 1]
    r2, c2 = q[:, 0], q[:, 1]
    nonflat = r1 != r2
    rmin = np.minimum(r1, r2)
    rmax = np.maximum(r1, r2)
    eps = 1e-9
    lo = max(0, int(np.floor(rmin.min() - 0.5)))
    hi = min(rows - 1, int(np.ceil(rmax.max() - 0.5)))
    centres = np.arange(cols) + 0.5
    for i in range(lo, hi + 1):
        y = i + 0.5
        hit = nonflat & (rmin <= y) & (y < rmax)
        if not hit.any():
            continue
        t = (y - r1[hit]) / (r2[hit] - r1[hit])
        xs = np.sort(c1[hit] + t * (c2[hit] - c1[hit]))
        for a, b in zip(xs[0::2], xs[1::2]):
            out[i] |= (centres >= a - eps) & (centres <= b + eps)
    return out


def points_in_polygon(x, y, polygon) -> np.ndarray:
    """Even-odd point-in-polygon test for (x, y) arrays against an (k, 2) ring."""
    poly = np.asarray(polygon, dtype=float)
    px = np.asarray(x, dtype=float).ravel()
    py = np.asarray(y, dtype=float).ravel()
    x1, y1 = poly[:, 0], poly[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    inside = np.zeros(px.shape, dtype=bool)
    for ex1, ey1, ex2, ey2 in zip(x1, y1, x2, y2):
        if ey1 == ey2:
            continue
        ymin, ymax = min(ey1, ey2), max(ey1, ey2)
        sel = (py >= ymin) & (py < ymax)
        if not sel.any():
            continue
        t = (py[sel] - ey1) / (ey2 - ey1)
        xc = ex1 + t * (ex2 - ex1)
        flip = xc > px[sel]
        inside[sel] ^= flip
    return inside.reshape(np.asarray(x).shape)


# ---------------------------------------------------------------------------
# boundary tracing


_MOORE_OFFSETS = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]


def moore_trace(component: np.ndarray) -> np.ndarray:
    """Clockwise Moore-neighbour boundary trace of one connected component.

    Returns the ordered boundary pixel indices without a repeated endpoint.
    The walk starts at the row-major first filled pixel (its west neighbour
    is guaranteed background) and stops when it is about to re-traverse its
    first boundary edge, so the full ring is emitted exactly once.
    """
    comp = check_mask(component)
    rows, cols = comp.shape
    filled = np.argwhere(comp)
    if filled.size == 0:
        return np.empty((0, 2), dtype=int)
    start = (int(filled[0, 0]), int(filled[0, 1]))

    def on(p):
        return 0 <= p[0] < rows and 0 <= p[1] < cols and comp[p]

    def advance(cur, backtrack):
        # scan clockwise from the backtrack direction; the cell scanned just
        # before the first filled hit is background and becomes the new
        # backtrack, expressed relative to the hit
        for s in range(1, 9):
            k = (backtrack + s) % 8
            dro, dco = _MOORE_OFFSETS[k]
            nxt = (cur[0] + dro, cur[1] + dco)
            if on(nxt):
                pr, pc = _MOORE_OFFSETS[(backtrack + s - 1) % 8]
                prev = (cur[0] + pr, cur[1] + pc)
                nbt = _MOORE_OFFSETS.index((prev[0] - nxt[0], prev[1] - nxt[1]))
                return nxt, nbt
        return None

    boundary = [start]
    cur, bt = start, 6  # backtrack west: first filled pixel in scan order
    limit = 4 * rows * cols
    while len(boundary) <= limit:
        step = advance(cur, bt)
        if step is None:
            break  # isolated pixel
        nxt, nbt = step
        if nxt == start and len(boundary) > 1:
            follow = advance(nxt, nbt)
            if follow is not None and follow[0] == boundary[1]:
                break  # ring closed: the next move would repeat the first edge
        boundary.append(nxt)
        cur, bt = nxt, nbt
    return np.asarray(boundary, dtype=int)


def component_contour(component: np.ndarray) -> np.ndarray:
    """Boundary of a component as a closed contour through pixel centres.

    Components too small for a 3-point ring fall back to the pixel-corner
    rectangle of their bounding box.
    """
    px = moore_trace(component)
    if len(px) >= 3:
        return px.astype(float) + 0.5
    filled = np.argwhere(component)
    r0, c0 = filled.min(axis=0)
    r1, c1 = filled.max(axis=0) + 1
    return np.array([[r0, c0], [r0, c1], [r1, c1], [r1, c0]], dtype=float)


# ---------------------------------------------------------------------------
# terrain and candidate extraction


def estimate_terrain(z, block: int = 32) -> np.ndarray:
    """Terrain surface from blockwise 5th percentiles, bilinearly blended.

    A deliberately simple ground model: adequate when every block keeps
    at least a few percent of ground pixels.
    """
    zz = check_raster(z)
    rows, cols = zz.shape
    nbr = int(np.ceil(rows / block))
    nbc = int(np.ceil(cols / block))
    vals = np.empty((nbr, nbc))
    rcent = np.empty(nbr)
    ccent = np.empty(nbc)
    for bi in range(nbr):
        r0, r1 = bi * block, min((bi + 1) * block, rows)
        rcent[bi] = 0.5 * (r0 + r1)
        for bj in range(nbc):
            c0, c1 = bj * block, min((bj + 1) * block, cols)
            vals[bi, bj] = np.percentile(zz[r0:r1, c0:c1], 5)
            if bi == 0:
                ccent[bj] = 0.5 * (c0 + c1)
    rr = np.arange(rows) + 0.5
    cc = np.arange(cols) + 0.5
    tmp = np.empty((rows, nbc))
    for bj in range(nbc):
        tmp[:, bj] = np.interp(rr, rcent, vals[:, bj])
    terrain = np.empty((rows, cols))
    for i in range(rows):
        terrain[i] = np.interp(cc, ccent, tmp[i])
    return terrain


def preliminary_extract(z, gt: GeoTransform, min_height: float, min_area: float,
                        veg_mask=None, terrain_block: int = 32):
    """Candidate building boundaries and masks from an elevation raster.

    Thresholds height-above-terrain at ``min_height`` metres, removes
    vegetation pixels, keeps 4-connected components of at least
    ``min_area`` square metres and traces each component's boundary.

    Returns (contours, masks); both lists are index-aligned and the masks
    are pairwise disjoint.
    """
    zz = check_raster(z)
    terrain = estimate_terrain(zz, block=terrain_block)
    above = (zz - terrain) >= min_height
    if veg_mask is not None:
        above &= ~check_mask(veg_mask, shape=zz.shape)
    labels, count = ndimage.label(above)  # default structure = 4-connectivity
    min_pixels = min_area / (gt.pixel_size * gt.pixel_size)
    contours = []
    masks = []
    for lab in range(1, count + 1):
        comp = labels == lab
        if comp.sum() < min_pixels:
            continue
        contours.append(component_contour(comp))
        masks.append(comp)
    return contours, masks


# ---------------------------------------------------------------------------
# synthetic scenes


@dataclass(frozen=True)
class BoxSpec:
    """A flat-roofed building: a simple polygon footprint and its height."""

    polygon: np.ndarray   # (k, 2) world (x, y) metres
    height: float

    def __post_init__(self):
        poly = np.asarray(self.polygon, dtype=float)
        if poly.ndim != 2 or poly.shape[1] != 2 or poly.shape[0] < 3:
            raise ValueError("box polygon must be (k >= 3, 2)")
        if self.height <= 0:
            raise ValueError("box height must be positive")
        object.__setattr__(self, "polygon", poly)


@dataclass(frozen=True)
class SceneSpec:
    """Synthetic scene description: a flat ground plane plus boxes.

    The raster covers world x in [origin_x, origin_x + width] and
    y in [origin_y - height, origin_y]; grid-aligned box edges give
    rasterisations that match the point sampling exactly.
    """

    width: float
    height: float
    ground: float
    boxes: tuple = field(default_factory=tuple)
    density: float = 8.0
    noise_std: float = 0.0
    pixel_size: float = 0.5
    origin_x: float = 0.0
    origin_y: float | None = None

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("extent must be positive")
        if self.density <= 0:
            raise ValueError("density must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.pixel_size <= 0:
            raise ValueError("pixel_size must be positive")
        object.__setattr__(self, "boxes", tuple(self.boxes))

    def geotransform(self) -> GeoTransform:
        oy = self.origin_y if self.origin_y is not None else self.height
        return GeoTransform(self.origin_x, oy, self.pixel_size,
                            int(round(self.height / self.pixel_size)),
                            int(round(self.width / self.pixel_size)))


def _elevation_at(spec: SceneSpec, x, y) -> np.ndarray:
    z = np.full(np.asarray(x).shape, float(spec.ground))
    for box in spec.boxes:
        z = z + box.height * points_in_polygon(x, y, box.polygon)
    return z


def synth_scene(spec: SceneSpec, seed: int):
    """Deterministic synthetic scene.

    Returns (cloud, z_truth, truth_contours, multispectral):
    points on a jittered grid at the requested density with analytic
    elevations (plus optional Gaussian noise), the noise-free elevation
    raster sampled at pixel centres, the exact footprints in fractional
    pixel coordinates, and a two-band image with NIR equal to red
    (vegetation-free scene).
    """
    rng = np.random.default_rng(seed)
    gt = spec.geotransform()
    pitch = 1.0 / np.sqrt(spec.density)
    nx = int(np.floor(spec.width / pitch))
    ny = int(np.floor(spec.height / pitch))
    gx, gy = np.meshgrid(np.arange(nx), np.arange(ny))
    xs = spec.origin_x + (gx.ravel() + rng.random(gx.size)) * pitch
    oy = gt.origin_y
    ys = oy - (gy.ravel() + rng.random(gy.size)) * pitch
    zs = _elevation_at(spec, xs, ys)
    if spec.noise_std > 0:
        zs = zs + rng.normal(0.0, spec.noise_std, zs.shape)
    cloud = np.stack([xs, ys, zs], axis=1)

    jj, ii = np.meshgrid(np.arange(gt.cols), np.arange(gt.rows))
    cx = gt.origin_x + (jj + 0.5) * gt.pixel_size
    cy = oy - (ii + 0.5) * gt.pixel_size
    z_truth = _elevation_at(spec, cx, cy)

    truth_contours = []
    for box in spec.boxes:
        rr, cc = world_to_pixel(gt, box.polygon[:, 0], box.polygon[:, 1])
        truth_contours.append(np.stack([rr, cc], axis=1))

    span = float(z_truth.max() - z_truth.min())
    red = (z_truth - z_truth.min()) / span if span > 0 else np.zeros_like(z_truth)
    ms = MultiSpectralImage({"red": red, "nir": red.copy()})
    return cloud, z_truth, truth_contours, ms
