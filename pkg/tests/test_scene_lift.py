import numpy as np
import pytest

from omnisync import cube_geometry as cg
from omnisync import depth_tools as dtool
from omnisync import scene_lift as sl


def unit_sphere_depth(h):
    e = dtool.DepthCubemap.from_values(np.ones((6, h, h)), dtool.EUCLIDEAN)
    return dtool.euclidean_to_z(e)


def test_lift_cubemap_unit_sphere():
    h = 16
    rgb = cg.CubemapGrid(np.full((6, h, h, 3), 0.5))
    pc = sl.lift_cubemap(rgb, unit_sphere_depth(h))
    assert pc.positions.shape == (6 * h * h, 3)
    assert pc.colors.shape == (6 * h * h, 3)
    r = np.linalg.norm(pc.positions, axis=1)
    assert np.abs(r - 1.0).max() < 1e-12
    assert np.all(pc.colors == 0.5)


def test_lift_cubemap_point_order_matches_faces():
    h = 4
    rng = np.random.default_rng(0)
    rgb = cg.CubemapGrid(rng.random((6, h, h, 3)))
    depth = dtool.DepthCubemap.from_values(np.full((6, h, h), 2.0), dtool.ZDEPTH)
    pc = sl.lift_cubemap(rgb, depth)
    assert np.array_equal(pc.colors, rgb.faces.reshape(-1, 3))
    # pixel (i, j) of face f lands along that pixel's ray at z-depth 2
    f, i, j = 3, 1, 2
    idx = f * h * h + i * h + j
    d = cg.face_direction_grid(cg.CubeFace(f), h)[i, j]
    lz = d @ cg.FACE_FRAMES[f][:, 2]
    want = d * (2.0 / lz)
    assert np.abs(pc.positions[idx] - want).max() < 1e-12


def test_lift_cubemap_validates_conventions():
    h = 4
    rgb = cg.CubemapGrid(np.zeros((6, h, h, 3)))
    e = dtool.DepthCubemap.from_values(np.ones((6, h, h)), dtool.EUCLIDEAN)
    with pytest.raises(ValueError):
        sl.lift_cubemap(rgb, e)  # euclidean must be converted first
    small = dtool.DepthCubemap.from_values(np.ones((6, 3, 3)), dtool.ZDEPTH)
    with pytest.raises(ValueError):
        sl.lift_cubemap(rgb, small)


def euler_characteristic(n_verts, triangles):
    edges = set()
    for a, b, c in triangles:
        for e in ((a, b), (b, c), (c, a)):
            edges.add(frozenset(e))
    used = set(triangles.ravel().tolist())
    return len(used), len(edges), triangles.shape[0]


def test_mesh_from_cubemap_is_closed_for_smooth_depth():
    h = 8
    rgb = cg.CubemapGrid(np.full((6, h, h, 3), 0.25))
    mesh = sl.mesh_from_cubemap(rgb, unit_sphere_depth(h))
    assert mesh.vertices.shape[0] == 6 * h * h + 8
    v, e, f = euler_characteristic(mesh.vertices.shape[0], mesh.triangles)
    assert v - e + f == 2  # sphere topology
    # every directed edge appears exactly once in each direction
    directed = {}
    for a, b, c in mesh.triangles:
        for p, q in ((a, b), (b, c), (c, a)):
            directed[(p, q)] = directed.get((p, q), 0) + 1
    assert all(n == 1 for n in directed.values())
    assert all((q, p) in directed for (p, q) in directed)


def test_mesh_welds_corner_vertices_on_the_sphere():
    # corner welds average the three incident face corners; for the unit
    # sphere they sit slightly inside it but nowhere else
    h = 8
    rgb = cg.CubemapGrid(np.zeros((6, h, h, 3)))
    mesh = sl.mesh_from_cubemap(rgb, unit_sphere_depth(h))
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert np.abs(r[:6 * h * h] - 1).max() < 1e-12
    assert np.all(r[6 * h * h:] < 1.0)
    assert np.all(r[6 * h * h:] > 0.9)


def test_mesh_drops_triangles_across_depth_steps():
    h = 8
    rgb = cg.CubemapGrid(np.zeros((6, h, h, 3)))
    vals = np.ones((6, h, h))
    vals[0, :, 4:] = 10.0  # a cliff across the front face
    step = dtool.DepthCubemap.from_values(vals, dtool.ZDEPTH)
    smooth = dtool.DepthCubemap.from_values(np.ones((6, h, h)), dtool.ZDEPTH)
    m_step = sl.mesh_from_cubemap(rgb, step, edge_ratio_tau=1.5)
    m_smooth = sl.mesh_from_cubemap(rgb, smooth, edge_ratio_tau=1.5)
    assert m_step.triangles.shape[0] < m_smooth.triangles.shape[0]
    # a permissive threshold keeps the cliff stitched
    m_loose = sl.mesh_from_cubemap(rgb, step, edge_ratio_tau=20.0)
    assert m_loose.triangles.shape[0] == m_smooth.triangles.shape[0]
    with pytest.raises(ValueError):
        sl.mesh_from_cubemap(rgb, step, edge_ratio_tau=1.0)


def test_lift_erp_euclidean_radii():
    h, w = 8, 16
    rng = np.random.default_rng(1)
    rgb = cg.ErpGrid(rng.random((h, w, 3)))
    depth = cg.ErpGrid(np.full((h, w, 1), 3.0))
    pc = sl.lift_erp(rgb, depth)
    assert pc.positions.shape == (h * w, 3)
    r = np.linalg.norm(pc.positions, axis=1)
    assert np.abs(r - 3.0).max() < 1e-12
    assert np.array_equal(pc.colors, rgb.data.reshape(-1, 3))
    with pytest.raises(ValueError):
        sl.lift_erp(rgb, cg.ErpGrid(np.ones((h // 2, w // 2, 1))))


def test_density_uniformity_prefers_cubemap_over_erp():
    h = 32
    cube_rgb = cg.CubemapGrid(np.zeros((6, h, h, 3)))
    pc_cube = sl.lift_cubemap(cube_rgb, unit_sphere_depth(h))
    erp_rgb = cg.ErpGrid(np.zeros((2 * h, 4 * h, 3)))
    erp_depth = cg.ErpGrid(np.ones((2 * h, 4 * h, 1)))
    pc_erp = sl.lift_erp(erp_rgb, erp_depth)
    d_cube = sl.density_uniformity(pc_cube, k=8)
    d_erp = sl.density_uniformity(pc_erp, k=8)
    assert d_cube["cv_nn"] < d_erp["cv_nn"]
    assert len(d_cube["band_profile"]) == 18
    # ERP piles points into the pole bands; the cubemap does not
    prof_cube = np.asarray(d_cube["band_profile"])
    prof_erp = np.asarray(d_erp["band_profile"])
    pole_cube = max(prof_cube[0], prof_cube[-1]) / prof_cube.mean()
    pole_erp = max(prof_erp[0], prof_erp[-1]) / prof_erp.mean()
    assert pole_erp > 2.0 * pole_cube


def test_density_uniformity_input_validation():
    few = sl.ScenePointCloud(np.zeros((3, 3)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        sl.density_uniformity(few, k=8)
    same = sl.ScenePointCloud(np.ones((20, 3)), np.zeros((20, 3)))
    with pytest.raises(ValueError):
        sl.density_uniformity(same, k=3)


def test_point_cloud_validates_shapes():
    with pytest.raises(ValueError):
        sl.ScenePointCloud(np.zeros((5, 3)), np.zeros((4, 3)))
    with pytest.raises(ValueError):
        sl.ScenePointCloud(np.zeros((5, 2)), np.zeros((5, 3)))
