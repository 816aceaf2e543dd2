import numpy as np
import pytest
import torch

from handmesh.geometry import PART_IDS, CameraIntrinsics, HandMesh, HandTopology
from handmesh.renderer import (
    PartColorMap,
    colorize_labels,
    overlay_render,
    rasterize_hard,
    rasterize_soft,
    save_png,
)

from fdcheck import check_gradients

CAM = CameraIntrinsics(fx=32.0, fy=32.0, cx=16.0, cy=16.0, width=32, height=32)
COLORS = PartColorMap()


def tri_mesh(verts, labels=("palm",), faces=None):
    verts = torch.as_tensor(verts, dtype=torch.float64)
    if faces is None:
        faces = np.arange(len(verts)).reshape(-1, 3)
    part = np.array([PART_IDS[labels[i % len(labels)]] for i in range(len(verts))])
    return HandMesh(verts, HandTopology(np.asarray(faces), part, len(verts)))


def big_triangle(z, label="palm"):
    # projected corners far outside the image: covers every pixel
    s = 10.0 * z
    return [[-s, -s, z], [3 * s, -s, z], [-s, 3 * s, z]]


class TestHardRasterizer:
    def test_mesh_behind_camera_gives_background(self):
        mesh = tri_mesh([[0, 0, -1.0], [1, 0, -1.0], [0, 1, -1.0]])
        labels, depth = rasterize_hard(mesh, CAM, (32, 32))
        assert (labels == 0).all() and np.isinf(depth).all()

    def test_fullscreen_triangle_covers_everything(self):
        mesh = tri_mesh(big_triangle(0.5, "index"), labels=("index",))
        labels, depth = rasterize_hard(mesh, CAM, (32, 32))
        assert (labels == PART_IDS["index"]).all()
        assert np.allclose(depth, 0.5)

    def test_zbuffer_prefers_nearer_triangle(self):
        mesh = tri_mesh(big_triangle(0.5, "index") + big_triangle(1.0, "ring"),
                        labels=("index",) * 3 + ("ring",) * 3)
        labels, _ = rasterize_hard(mesh, CAM, (32, 32))
        assert (labels == PART_IDS["index"]).all()

    def test_binary_mode(self):
        mesh = tri_mesh(big_triangle(0.5))
        labels, _ = rasterize_hard(mesh, CAM, (32, 32), binary=True)
        assert set(np.unique(labels)) <= {0, 1} and labels.any()

    def test_principal_point_shift_shifts_render(self):
        verts = [[-0.1, -0.1, 0.5], [0.15, -0.05, 0.5], [0.0, 0.12, 0.6]]
        mesh = tri_mesh(verts)
        base, _ = rasterize_hard(mesh, CAM, (32, 32))
        cam2 = CameraIntrinsics(CAM.fx, CAM.fy, CAM.cx + 3, CAM.cy + 2, 32, 32)
        shifted, _ = rasterize_hard(mesh, cam2, (32, 32))
        assert (shifted[2:, 3:] == base[:-2, :-3]).all()


class TestSoftRasterizer:
    def test_far_pixels_are_background(self):
        # small triangle in the center; corners are >10 px from any edge
        verts = [[-0.02, -0.02, 0.5], [0.02, -0.02, 0.5], [0.0, 0.02, 0.5]]
        img = rasterize_soft(tri_mesh(verts, ("middle",)), CAM, (32, 32), COLORS)
        corner = img[:, 0, 0]
        assert (corner - torch.tensor(COLORS.background, dtype=corner.dtype)).abs().max() <= 1e-3

    def test_interior_pixel_gets_face_color(self):
        mesh = tri_mesh(big_triangle(0.5, "index"), labels=("index",))
        img = rasterize_soft(mesh, CAM, (32, 32), COLORS)
        expected = torch.tensor(COLORS.colors[PART_IDS["index"]], dtype=img.dtype)
        assert (img[:, 16, 16] - expected).abs().max() <= 1e-3

    def test_matches_hard_rasterizer_at_default_sharpness(self):
        verts = ([[-0.1, -0.1, 0.5], [0.12, -0.08, 0.5], [0.0, 0.1, 0.55]]
                 + [[-0.05, -0.12, 0.45], [0.1, 0.05, 0.7], [-0.09, 0.11, 0.6]])
        mesh = tri_mesh(verts, ("index", "ring"))
        soft = rasterize_soft(mesh, CAM, (32, 32), COLORS).numpy()
        hard = colorize_labels(rasterize_hard(mesh, CAM, (32, 32))[0], COLORS)
        assert np.abs(soft - hard).mean() <= 0.02

    def test_vertex_gradients_match_finite_differences(self):
        # probed at a smoother sharpness so the 1e-4 m step stays inside the
        # sigmoid's locally-linear regime (sigma is a free parameter)
        rng = np.random.default_rng(0)
        verts = np.array([[-0.08, -0.06, 0.5], [0.1, -0.05, 0.5], [0.0, 0.09, 0.55],
                          [-0.04, -0.1, 0.45], [0.09, 0.04, 0.65], [-0.07, 0.1, 0.6]])
        mesh = tri_mesh(verts, ("index", "ring"))
        w = torch.from_numpy(rng.normal(size=(3, 32, 32)))

        def render_scalar(x):
            img = rasterize_soft(mesh.with_vertices(x), CAM, (32, 32), COLORS,
                                 sigma=2e-3, gamma=2e-3)
            return (img * w).sum()

        check_gradients(render_scalar, torch.from_numpy(verts), step=1e-4, tol=1e-2, floor=1e-3)

    def test_continuity_under_tiny_perturbation(self):
        verts = torch.tensor([[-0.08, -0.06, 0.5], [0.1, -0.05, 0.5], [0.0, 0.09, 0.55]],
                             dtype=torch.float64)
        mesh = tri_mesh(verts)
        base = rasterize_soft(mesh, CAM, (32, 32), COLORS)
        bumped = verts.clone()
        bumped[1, 0] += 1e-6
        out = rasterize_soft(mesh.with_vertices(bumped), CAM, (32, 32), COLORS)
        assert (out - base).abs().max() <= 1e-3

    def test_empty_scene_is_background(self):
        mesh = tri_mesh([[0, 0, -1.0], [1, 0, -1.0], [0, 1, -1.0]])
        img = rasterize_soft(mesh, CAM, (32, 32), COLORS)
        assert torch.allclose(img, torch.zeros(3, 32, 32, dtype=img.dtype))


class TestColorMap:
    def test_default_satisfies_separation(self):
        PartColorMap()  # validates in __post_init__

    def test_close_colors_rejected(self):
        bad = dict(PartColorMap().colors)
        bad[PART_IDS["index"]] = (0.95, 0.05, 0.05)  # too close to thumb red
        with pytest.raises(ValueError):
            PartColorMap(colors=bad)


class TestExports:
    def test_png_roundtrip(self, tmp_path):
        from PIL import Image
        img = np.zeros((3, 8, 8))
        img[0] = 1.0
        save_png(tmp_path / "r.png", img)
        back = np.asarray(Image.open(tmp_path / "r.png"))
        assert back.shape == (8, 8, 3) and (back[..., 0] == 255).all()

    def test_overlay_blend(self):
        a = np.zeros((3, 4, 4))
        b = np.ones((3, 4, 4))
        assert np.allclose(overlay_render(a, b, alpha=0.5), 0.5)
