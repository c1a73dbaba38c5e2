import numpy as np
import pytest

from magtopt.mesh import (Boundary, MeshError, PointNotFound, Region, TriMesh,
                          generate_disc_mesh, generate_mini_motor,
                          generate_square_benchmark, load_mesh, save_mesh,
                          unit_square_mesh, MINI_MOTOR_RADII,
                          MINI_MOTOR_PROBE_RADIUS)

RNG = np.random.default_rng(3)


def euler_characteristic(mesh):
    edges = set()
    for tri in mesh.tris:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            edges.add((min(a, b), max(a, b)))
    used_nodes = np.unique(mesh.tris.ravel())
    return len(used_nodes) - len(edges) + mesh.n_tris


class TestSquareBenchmark:
    def test_counts_n8(self):
        mesh = generate_square_benchmark(8)
        assert mesh.n_tris == 2 * 8 ** 2 == 128
        assert mesh.n_nodes == 9 ** 2 == 81

    def test_uniform_areas(self):
        n = 16
        mesh = generate_square_benchmark(n)
        np.testing.assert_allclose(mesh.areas, 1.0 / (2 * n ** 2), rtol=1e-12)

    def test_partition_of_unity(self):
        mesh = generate_square_benchmark(32)
        assert abs(mesh.areas.sum() - 1.0) < 1e-12

    def test_too_coarse_rejected(self):
        with pytest.raises(ValueError):
            generate_square_benchmark(7)

    def test_all_regions_assigned(self):
        mesh = generate_square_benchmark(32)
        present = {Region(int(r)) for r in np.unique(mesh.region)}
        assert {Region.FERRO_FIXED, Region.AIR_FIXED, Region.DESIGN,
                Region.COIL, Region.MAGNET, Region.AIRGAP} <= present

    def test_design_simply_connected(self):
        mesh = generate_square_benchmark(32)
        design = np.flatnonzero(mesh.region == Region.DESIGN)
        # flood fill over shared edges
        edge_map = {}
        for e in design:
            tri = mesh.tris[e]
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                edge_map.setdefault((min(a, b), max(a, b)), []).append(e)
        adj = {e: [] for e in design}
        for elems in edge_map.values():
            if len(elems) == 2:
                adj[elems[0]].append(elems[1])
                adj[elems[1]].append(elems[0])
        seen = {design[0]}
        stack = [design[0]]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        assert len(seen) == len(design)

    def test_edge_conformity(self):
        mesh = generate_square_benchmark(16)
        counts = mesh.edge_use_counts()
        assert max(counts.values()) == 2
        n_boundary = sum(1 for c in counts.values() if c == 1)
        n_dirichlet = int((mesh.btags == Boundary.DIRICHLET_OUTER).sum())
        assert n_boundary == n_dirichlet

    def test_euler_relation(self):
        assert euler_characteristic(generate_square_benchmark(16)) == 1

    def test_probe_curve_single_polyline(self):
        mesh = generate_square_benchmark(32)
        g = mesh.gap_probe_edges()
        assert len(g) > 0
        # ordered chain: consecutive edges share a node
        for (a, b), (c, d) in zip(g[:-1], g[1:]):
            assert b == c
        # straight horizontal segment
        ys = mesh.nodes[np.unique(g.ravel())][:, 1]
        assert np.ptp(ys) == 0.0


class TestDiscMesh:
    def test_inclusion_ring_exact(self):
        mesh = generate_disc_mesh(50.0, 1.0, 1.15, h0=0.1, n_theta=64)
        r = np.hypot(mesh.nodes[:, 0], mesh.nodes[:, 1])
        ring = np.isclose(r, 1.0, atol=1e-12)
        assert ring.sum() == 64

    def test_total_area_close_to_disc(self):
        mesh = generate_disc_mesh(10.0, 1.0, 1.2, h0=0.2, n_theta=64)
        assert abs(mesh.areas.sum() - np.pi * 100.0) <= 0.01 * np.pi * 100.0

    def test_inclusion_area(self):
        mesh = generate_disc_mesh(10.0, 1.0, 1.2, h0=0.2, n_theta=64)
        incl = mesh.region == Region.DESIGN
        assert abs(mesh.areas[incl].sum() - np.pi) <= 0.01 * np.pi

    def test_invalid_radii(self):
        with pytest.raises(ValueError):
            generate_disc_mesh(1.0, 2.0)
        with pytest.raises(ValueError):
            generate_disc_mesh(10.0, 1.0, grading=0.9)

    def test_euler_relation(self):
        mesh = generate_disc_mesh(10.0, 1.0, 1.3, h0=0.25, n_theta=32)
        assert euler_characteristic(mesh) == 1


@pytest.fixture(scope="module")
def bench8():
    return generate_square_benchmark(8)


@pytest.fixture(scope="module")
def motor64():
    return generate_mini_motor(64)


class TestLocatePoint:
    @pytest.fixture()
    def mesh(self, bench8):
        return bench8

    def test_centroid(self, mesh):
        e = 17
        idx, lam = mesh.locate_point(mesh.centroids[e])
        assert idx == e
        np.testing.assert_allclose(lam, 1.0 / 3.0, atol=1e-12)

    def test_node(self, mesh):
        node = 40
        idx, lam = mesh.locate_point(mesh.nodes[node])
        assert node in mesh.tris[idx]
        assert lam.max() == pytest.approx(1.0, abs=1e-12)

    def test_roundtrip_random_points(self, mesh):
        for _ in range(20):
            x = RNG.uniform(0.05, 0.95, size=2)
            idx, lam = mesh.locate_point(x)
            assert np.all(lam >= -1e-12)
            back = lam @ mesh.nodes[mesh.tris[idx]]
            np.testing.assert_allclose(back, x, atol=1e-12)

    def test_outside_hull(self, mesh):
        with pytest.raises(PointNotFound):
            mesh.locate_point(np.array([2.0, 2.0]))


class TestAsciiIO:
    def test_roundtrip_exact(self, tmp_path):
        mesh = generate_square_benchmark(8)
        p = tmp_path / "mesh.txt"
        save_mesh(p, mesh)
        back = load_mesh(p)
        np.testing.assert_array_equal(back.nodes, mesh.nodes)
        np.testing.assert_array_equal(back.tris, mesh.tris)
        np.testing.assert_array_equal(back.region, mesh.region)
        np.testing.assert_array_equal(back.bedges, mesh.bedges)
        np.testing.assert_array_equal(back.btags, mesh.btags)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("meshv2\nnodes 0\n")
        with pytest.raises(MeshError):
            load_mesh(p)


class TestMiniMotor:
    @pytest.fixture()
    def mesh(self, motor64):
        return motor64

    def test_regions_present(self, mesh):
        present = {Region(int(r)) for r in np.unique(mesh.region)}
        assert {Region.FERRO_FIXED, Region.DESIGN, Region.MAGNET,
                Region.AIRGAP} <= present

    def test_probe_curve_closed_loop(self, mesh):
        g = mesh.gap_probe_edges()
        for (a, b), (c, d) in zip(g[:-1], g[1:]):
            assert b == c
        assert g[-1, 1] == g[0, 0]

    def test_probe_curve_radius_inside_gap(self, mesh):
        g = np.unique(mesh.gap_probe_edges().ravel())
        r = np.hypot(mesh.nodes[g, 0], mesh.nodes[g, 1])
        assert np.allclose(r, MINI_MOTOR_PROBE_RADIUS, atol=1e-12)
        assert MINI_MOTOR_RADII["magnet"] < MINI_MOTOR_PROBE_RADIUS < MINI_MOTOR_RADII["gap_outer"]

    def test_conformity(self, mesh):
        assert max(mesh.edge_use_counts().values()) == 2


class TestDegenerateGeometry:
    def test_flat_triangle_rejected(self):
        nodes = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        tris = np.array([[0, 1, 2]])
        m = TriMesh(nodes, tris, np.zeros(1, np.int8),
                    np.empty((0, 2), np.int64), np.empty(0, np.int8))
        with pytest.raises(MeshError):
            m.areas
