"""Projection, propagation and reconstruction-metric tests.

The propagation solver is checked against an independent dense solve of the
constrained quadratic problem (the l1-free case), and the SSIM path against
a brute-force sliding-window implementation.
"""

import numpy as np
import pytest

from lidarsnake.errors import DimMismatch, EmptyCloud, EmptySparse
from lidarsnake.geometry import GeoTransform
from lidarsnake.superres import (SparseZImage, SrParams, SuperResolution,
                                 interp_bilinear, interp_nearest,
                                 project_points, propagate_fista, psnr,
                                 rmse_image, sr_benchmark, ssdg_cost,
                                 ssdg_grad, ssim)


# ---------------------------------------------------------------------------
# independent oracles


def dense_constrained_solve(sp: SparseZImage):
    """Direct solve of the constrained smoothness minimisation (no l1 term).

    The optimum satisfies the 5-point Laplace equation on the free pixels
    with the constrained pixels as Dirichlet data; assembled densely and
    solved with LAPACK.
    """
    rows, cols = sp.rows, sp.cols
    shape = (rows, cols)
    mask = sp.mask()
    free = ~mask
    nf = int(free.sum())
    fmap = np.full(shape, -1, dtype=int)
    fmap[free] = np.arange(nf)
    fixed = sp.to_dense(0.0)
    A = np.zeros((nf, nf))
    b = np.zeros(nf)
    for i in range(rows):
        for j in range(cols):
            if not free[i, j]:
                continue
            fi = fmap[i, j]
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < rows and 0 <= jj < cols:
                    A[fi, fi] += 1.0
                    if free[ii, jj]:
                        A[fi, fmap[ii, jj]] -= 1.0
                    else:
                        b[fi] += fixed[ii, jj]
    out = fixed.copy()
    if nf:
        out[free] = np.linalg.solve(A, b)
    return out


def brute_force_ssdg(img, lam):
    """Enumerate every forward difference explicitly."""
    rows, cols = img.shape
    total = 0.0
    for i in range(rows):
        for j in range(cols):
            if j + 1 < cols:
                total += (img[i, j + 1] - img[i, j]) ** 2
            if i + 1 < rows:
                total += (img[i + 1, j] - img[i, j]) ** 2
            total += lam * abs(img[i, j])
    return total


def brute_force_ssim(a, b, dynamic_range):
    """Windowed SSIM with explicit loops; window spans offsets -4..+3."""
    rows, cols = a.shape
    pa = np.pad(a, ((4, 3), (4, 3)), mode="edge")
    pb = np.pad(b, ((4, 3), (4, 3)), mode="edge")
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    vals = np.empty((rows, cols))
    for i in range(rows):
        for j in range(cols):
            wa = pa[i:i + 8, j:j + 8]
            wb = pb[i:i + 8, j:j + 8]
            mu_a, mu_b = wa.mean(), wb.mean()
            var_a = (wa * wa).mean() - mu_a ** 2
            var_b = (wb * wb).mean() - mu_b ** 2
            cov = (wa * wb).mean() - mu_a * mu_b
            vals[i, j] = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)
                          / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)))
    return vals.mean()


# ---------------------------------------------------------------------------
# projection


def test_project_single_point():
    gt = GeoTransform(0.0, 10.0, 1.0, 10, 10)
    sp = project_points(np.array([[0.2, 9.7, 5.0]]), gt)
    assert sp.n_filled == 1
    assert tuple(sp.indices[0]) == (0, 0)
    assert sp.values[0] == 5.0


def test_project_collision_keeps_max():
    gt = GeoTransform(0.0, 10.0, 1.0, 10, 10)
    cloud = np.array([[3.5, 6.5, 2.0], [3.9, 6.1, 7.0]])
    sp = project_points(cloud, gt)
    assert sp.n_filled == 1
    assert sp.values[0] == 7.0


def test_project_matches_brute_force_hash():
    rng = np.random.default_rng(11)
    gt = GeoTransform(0.0, 32.0, 1.0, 32, 32)
    pts = np.stack([rng.uniform(0, 32, 1000), rng.uniform(0, 32, 1000),
                    rng.normal(5, 2, 1000)], axis=1)
    sp = project_points(pts, gt)
    landing = {}
    for x, y, z in pts:
        key = (int(np.floor((32.0 - y) / 1.0)), int(np.floor(x / 1.0)))
        if 0 <= key[0] < 32 and 0 <= key[1] < 32:
            landing[key] = max(landing.get(key, -np.inf), z)
    assert sp.n_filled == len(landing)
    got = {tuple(ij): v for ij, v in zip(sp.indices, sp.values)}
    assert got == pytest.approx(landing)


def test_project_outside_extent_raises():
    gt = GeoTransform(0.0, 10.0, 1.0, 10, 10)
    with pytest.raises(EmptyCloud):
        project_points(np.array([[100.0, 100.0, 1.0]]), gt)


def test_sparse_image_validation():
    with pytest.raises(EmptySparse):
        SparseZImage(4, 4, np.empty((0, 2), dtype=int), np.empty(0))
    with pytest.raises(ValueError):
        SparseZImage(4, 4, np.array([[0, 0], [0, 0]]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        SparseZImage(4, 4, np.array([[4, 0]]), np.array([1.0]))


# ---------------------------------------------------------------------------
# cost and gradient


def test_ssdg_constant_zero():
    assert ssdg_cost(np.full((5, 7), 3.2), 0.0) == 0.0


def test_ssdg_two_by_two():
    img = np.array([[0.0, 1.0], [0.0, 1.0]])
    assert ssdg_cost(img, 0.0) == pytest.approx(2.0)
    assert ssdg_cost(img, 0.0) == pytest.approx(brute_force_ssdg(img, 0.0))


def test_ssdg_l1_decomposition():
    rng = np.random.default_rng(5)
    img = rng.normal(0, 2, (6, 8))
    base = ssdg_cost(img, 0.0)
    assert ssdg_cost(img, 1.0) == pytest.approx(base + np.sum(np.abs(img)))
    assert ssdg_cost(img, 0.7) == pytest.approx(brute_force_ssdg(img, 0.7))


def test_ssdg_grad_matches_finite_differences():
    rng = np.random.default_rng(17)
    h = 1e-6
    for _ in range(10):
        img = rng.normal(0, 3, (6, 6))
        g = ssdg_grad(img)
        fd = np.zeros_like(img)
        for i in range(6):
            for j in range(6):
                up = img.copy(); up[i, j] += h
                dn = img.copy(); dn[i, j] -= h
                fd[i, j] = (ssdg_cost(up) - ssdg_cost(dn)) / (2 * h)
        rel = np.abs(g - fd).max() / max(1.0, np.abs(fd).max())
        assert rel < 1e-5


# ---------------------------------------------------------------------------
# propagation


def test_fista_fully_constrained_is_identity():
    ii, jj = np.mgrid[0:4, 0:4]
    vals = (ii * 4 + jj).astype(float).ravel()
    sp = SparseZImage(4, 4, np.stack([ii.ravel(), jj.ravel()], 1), vals)
    dense, trace = propagate_fista(sp)
    assert np.array_equal(dense, vals.reshape(4, 4))
    assert len(trace) == 1


def test_fista_matches_laplace_dirichlet_solve():
    # left column 0, right column 7: free interior solves the Laplace equation
    idx = [(i, 0) for i in range(8)] + [(i, 7) for i in range(8)]
    vals = [0.0] * 8 + [7.0] * 8
    sp = SparseZImage(8, 8, np.array(idx), np.array(vals))
    dense, _ = propagate_fista(sp, SrParams(lam=0.0, max_iters=20000, diff_tol=1e-10))
    ref = dense_constrained_solve(sp)
    assert np.abs(dense - ref).max() < 1e-4


def test_fista_zero_constraints_stay_zero():
    sp = SparseZImage(6, 6, np.array([[0, 0], [5, 5], [2, 3]]), np.zeros(3))
    dense, _ = propagate_fista(sp, SrParams(lam=0.1))
    assert np.abs(dense).max() == 0.0


def test_fista_constraint_exactness_bitwise():
    rng = np.random.default_rng(23)
    for max_iters in (1, 3, 17, 300):
        mask = rng.random((10, 10)) < 0.3
        mask[0, 0] = True
        vals = rng.normal(4, 2, int(mask.sum()))
        sp = SparseZImage(10, 10, np.argwhere(mask), vals)
        dense, _ = propagate_fista(sp, SrParams(max_iters=max_iters, diff_tol=1e-15))
        assert np.array_equal(dense[mask], vals)


def test_fista_oracle_equivalence_random_grids():
    rng = np.random.default_rng(99)
    for _ in range(20):
        rows = int(rng.integers(4, 13))
        cols = int(rng.integers(4, 13))
        mask = rng.random((rows, cols)) < 0.35
        if not mask.any():
            mask[rows // 2, cols // 2] = True
        vals = rng.normal(10, 5, int(mask.sum()))
        sp = SparseZImage(rows, cols, np.argwhere(mask), vals)
        dense, _ = propagate_fista(sp, SrParams(lam=0.0, max_iters=20000, diff_tol=1e-10))
        ref = dense_constrained_solve(sp)
        assert np.abs(dense - ref).max() < 1e-4


def test_fista_flat_region_preservation():
    # constrained ring of constant value: interior converges to that constant
    mask = np.zeros((9, 9), dtype=bool)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
    sp = SparseZImage(9, 9, np.argwhere(mask), np.full(int(mask.sum()), 4.25))
    dense, _ = propagate_fista(sp, SrParams(lam=0.0, max_iters=20000, diff_tol=1e-12))
    assert np.abs(dense - 4.25).max() < 1e-6


def test_fista_trace_and_cost_vs_nearest():
    rng = np.random.default_rng(31)
    mask = rng.random((16, 16)) < 0.25
    mask[3, 3] = True
    vals = rng.normal(6, 2, int(mask.sum()))
    sp = SparseZImage(16, 16, np.argwhere(mask), vals)
    params = SrParams()
    dense, trace = propagate_fista(sp, params)
    assert len(trace.diffs) == len(trace.costs)
    assert trace.diffs[-1] < params.diff_tol
    lam = params.resolve_lam(vals)
    assert ssdg_cost(dense, lam) <= ssdg_cost(interp_nearest(sp), lam)


def test_fista_fill_iteration_recorded():
    sp = SparseZImage(12, 12, np.array([[0, 0]]), np.array([3.0]))
    _, trace = propagate_fista(sp, SrParams(lam=0.0, max_iters=500, diff_tol=1e-12))
    # value diffuses one ring per iteration from the single seed
    assert trace.fill_iteration is not None
    assert trace.fill_iteration >= 11


# ---------------------------------------------------------------------------
# baseline interpolators


def test_interp_single_seed_floods():
    sp = SparseZImage(5, 5, np.array([[2, 2]]), np.array([3.0]))
    assert np.all(interp_nearest(sp) == 3.0)
    assert np.all(interp_bilinear(sp) == 3.0)


def test_interp_row_midpoint():
    sp = SparseZImage(3, 9, np.array([[1, 0], [1, 8]]), np.array([0.0, 10.0]))
    near = interp_nearest(sp)
    bil = interp_bilinear(sp)
    assert abs(bil[1, 4] - 5.0) < 1e-9
    assert near[1, 4] == 0.0  # tie resolves to the smaller column


def test_interp_reproduces_filled_exactly():
    rng = np.random.default_rng(8)
    mask = rng.random((12, 12)) < 0.3
    mask[0, 0] = True
    vals = rng.normal(0, 5, int(mask.sum()))
    sp = SparseZImage(12, 12, np.argwhere(mask), vals)
    for out in (interp_nearest(sp), interp_bilinear(sp)):
        assert np.array_equal(out[mask], vals)
        assert np.isfinite(out).all()


def test_interp_checkerboard_ramp_bilinear_beats_nearest():
    ii, jj = np.mgrid[0:16, 0:16]
    ramp = (ii + 2.0 * jj).astype(float)
    keep = (ii + jj) % 2 == 0
    sp = SparseZImage(16, 16, np.argwhere(keep), ramp[keep])
    err_b = rmse_image(interp_bilinear(sp), ramp)
    err_n = rmse_image(interp_nearest(sp), ramp)
    assert err_b < err_n


# ---------------------------------------------------------------------------
# quality metrics


def test_metric_identities():
    rng = np.random.default_rng(2)
    a = rng.normal(0, 3, (20, 20))
    assert rmse_image(a, a) == 0.0
    assert psnr(a, a, 255.0) == float("inf")
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)


def test_psnr_unit_offset_closed_form():
    a = np.zeros((16, 16))
    b = a + 1.0
    # MSE = 1 so PSNR = 10*log10(255^2) = 48.1308... dB
    assert psnr(a, b, 255.0) == pytest.approx(20.0 * np.log10(255.0), abs=1e-9)


def test_dim_mismatch():
    with pytest.raises(DimMismatch):
        rmse_image(np.zeros((3, 3)), np.zeros((4, 3)))


def test_ssim_matches_brute_force_windows():
    rng = np.random.default_rng(77)
    a = rng.normal(5, 2, (14, 11))
    b = a + rng.normal(0, 0.5, a.shape)
    want = brute_force_ssim(a, b, 10.0)
    assert ssim(a, b, dynamic_range=10.0) == pytest.approx(want, abs=1e-12)


def test_ssim_ordering_with_noise():
    rng = np.random.default_rng(4)
    a = rng.normal(0, 1, (24, 24))
    slightly = a + rng.normal(0, 0.1, a.shape)
    badly = a + rng.normal(0, 1.5, a.shape)
    assert ssim(a, slightly) > ssim(a, badly)


# ---------------------------------------------------------------------------
# benchmark harness

from lidarsnake.scene import BoxSpec, SceneSpec, synth_scene

STANDARD_SCENE = SceneSpec(
    width=32.0, height=32.0, ground=2.0,
    boxes=(
        BoxSpec(np.array([[5.0, 20.0], [15.0, 20.0], [15.0, 28.0], [5.0, 28.0]]), 6.0),
        BoxSpec(np.array([[20.0, 6.0], [26.0, 6.0], [26.0, 12.0], [20.0, 12.0]]), 4.0),
    ),
    density=8.0, noise_std=0.05, pixel_size=0.5)


def test_benchmark_factor_one_exact_on_constrained():
    cloud, _, _, _ = synth_scene(STANDARD_SCENE, seed=7)
    gt = STANDARD_SCENE.geotransform()
    report = sr_benchmark(cloud, gt, factor=1)
    mask = report.sparse.mask()
    ref = report.sparse.to_dense()
    for img in report.images.values():
        assert np.abs(img[mask] - ref[mask]).max() == 0.0


@pytest.mark.parametrize("factor", [2, 4, 8])
def test_benchmark_sr_beats_baselines(factor):
    cloud, _, _, _ = synth_scene(STANDARD_SCENE, seed=7)
    gt = STANDARD_SCENE.geotransform()
    report = sr_benchmark(cloud, gt, factor=factor)
    sr_rmse = report.scores["sr"][0]
    assert sr_rmse < report.scores["bilinear"][0]
    assert sr_rmse < report.scores["nearest"][0]


def test_benchmark_rejects_sparse_cloud():
    thin = SceneSpec(width=32.0, height=32.0, ground=1.0, density=0.5, pixel_size=0.5)
    cloud, _, _, _ = synth_scene(thin, seed=1)
    with pytest.raises(ValueError):
        sr_benchmark(cloud, thin.geotransform(), factor=2)


# ---------------------------------------------------------------------------
# estimator facade


def test_super_resolution_estimator():
    sp = SparseZImage(6, 6, np.array([[0, 0], [5, 5]]), np.array([1.0, 2.0]))
    est = SuperResolution(lam=0.0, max_iters=5000, diff_tol=1e-9)
    dense = est.fit_transform(sp)
    assert dense.shape == (6, 6)
    assert dense[0, 0] == 1.0 and dense[5, 5] == 2.0
    assert len(est.trace_) >= 1
    assert est.get_params()["lam"] == 0.0
