"""Hand-mesh rasterization.

Two modes share the same projection conventions (pixel centers at i + 0.5):

* `rasterize_index` / `rasterize_hard`: plain z-buffered coverage used for
  ground-truth masks and evaluation silhouettes. A pixel belongs to a face
  when its center lies inside the projected triangle; depth is interpolated
  with barycentric weights and the nearest face wins.
* `rasterize_soft`: differentiable rendering for the part-color supervision.
  Per-face coverage is a sigmoid of the signed pixel-to-edge distance
  (scale `sigma`, in normalized screen units where 1.0 = max(H, W) pixels)
  and faces are blended with a depth softmax (temperature `gamma`). As
  sigma, gamma -> 0 this converges to the hard rasterizer.

Faces are rendered double-sided. Faces with any vertex at z <= 1e-6 m are
culled whole; there is no near-plane clipping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

from .geometry import BACKGROUND, PART_IDS, CameraIntrinsics, HandMesh, HandTopology

Z_CULL = 1e-6


@dataclass(frozen=True)
class PartColorMap:
    """Part label -> RGB in [0, 1]; all 7 colors pairwise well separated."""

    colors: dict = field(default_factory=lambda: {
        PART_IDS["thumb"]: (1.0, 0.0, 0.0),
        PART_IDS["index"]: (0.0, 1.0, 0.0),
        PART_IDS["middle"]: (0.0, 0.0, 1.0),
        PART_IDS["ring"]: (1.0, 1.0, 0.0),
        PART_IDS["pinky"]: (1.0, 0.0, 1.0),
        PART_IDS["palm"]: (0.0, 1.0, 1.0),
    })
    background: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        rgb = list(self.colors.values()) + [self.background]
        if len(rgb) != 7:
            raise ValueError("need 6 part colors plus background")
        for i in range(len(rgb)):
            for j in range(i + 1, len(rgb)):
                d = np.linalg.norm(np.subtract(rgb[i], rgb[j]))
                if d < 0.3:
                    raise ValueError(f"colors {rgb[i]} and {rgb[j]} too close (|d|={d:.2f})")

    def face_colors(self, topology: HandTopology, binary: bool = False) -> np.ndarray:
        """(F, 3) flat color per face from the majority vertex part label."""
        if binary:
            return np.ones((topology.n_faces, 3))
        lut = np.zeros((max(self.colors) + 1, 3))
        for lab, c in self.colors.items():
            lut[lab] = c
        return lut[topology.face_part_labels]


def rasterize_index(vertices: np.ndarray, faces: np.ndarray, cam: CameraIntrinsics,
                    resolution: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Z-buffer pass. Returns (face index image (H, W) int64 with -1 for
    background, depth buffer (H, W) float64 with +inf for background)."""
    h, w = resolution
    cam_r = cam.scaled(w, h)
    verts = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces)
    z = verts[:, 2]
    u = cam_r.fx * verts[:, 0] / np.where(z > 0, z, 1.0) + cam_r.cx
    v = cam_r.fy * verts[:, 1] / np.where(z > 0, z, 1.0) + cam_r.cy

    index = np.full((h, w), -1, dtype=np.int64)
    depth = np.full((h, w), np.inf)
    keep = (z[faces] > Z_CULL).all(axis=1)
    for fi in np.nonzero(keep)[0]:
        ia, ib, ic = faces[fi]
        ax, ay, az = u[ia], v[ia], z[ia]
        bx, by, bz = u[ib], v[ib], z[ib]
        cx_, cy_, cz = u[ic], v[ic], z[ic]
        x0 = max(0, int(np.ceil(min(ax, bx, cx_) - 0.5)))
        x1 = min(w - 1, int(np.floor(max(ax, bx, cx_) - 0.5)))
        y0 = max(0, int(np.ceil(min(ay, by, cy_) - 0.5)))
        y1 = min(h - 1, int(np.floor(max(ay, by, cy_) - 0.5)))
        if x0 > x1 or y0 > y1:
            continue
        px = np.arange(x0, x1 + 1) + 0.5
        py = np.arange(y0, y1 + 1) + 0.5
        gx, gy = np.meshgrid(px, py)
        area = (bx - ax) * (cy_ - ay) - (by - ay) * (cx_ - ax)
        if area == 0.0:
            continue
        la = ((cx_ - bx) * (gy - by) - (cy_ - by) * (gx - bx)) / area
        lb = ((ax - cx_) * (gy - cy_) - (ay - cy_) * (gx - cx_)) / area
        lc = ((bx - ax) * (gy - ay) - (by - ay) * (gx - ax)) / area
        inside = (la >= 0) & (lb >= 0) & (lc >= 0)  # double-sided via signed area
        if not inside.any():
            continue
        zpix = la * az + lb * bz + lc * cz
        block = depth[y0:y1 + 1, x0:x1 + 1]
        win = inside & (zpix < block)
        block[win] = zpix[win]
        index[y0:y1 + 1, x0:x1 + 1][win] = fi
    return index, depth


def rasterize_hard(mesh: HandMesh, cam: CameraIntrinsics, resolution: tuple[int, int],
                   binary: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Label image + depth buffer. Labels are part ids (BACKGROUND where
    empty), or {0, 1} in binary mode."""
    verts = mesh.vertices.detach().cpu().numpy()
    index, depth = rasterize_index(verts, mesh.topology.faces, cam, resolution)
    covered = index >= 0
    if binary:
        return covered.astype(np.int64), depth
    labels = np.where(covered, mesh.topology.face_part_labels[np.where(covered, index, 0)],
                      BACKGROUND)
    return labels.astype(np.int64), depth


def colorize_labels(labels: np.ndarray, colors: PartColorMap) -> np.ndarray:
    """(H, W) label image -> (3, H, W) float RGB."""
    lut = np.zeros((max(colors.colors) + 1, 3))
    lut[BACKGROUND] = colors.background
    for lab, c in colors.colors.items():
        lut[lab] = c
    return np.moveaxis(lut[labels], -1, 0)


def _candidate_pairs(u: np.ndarray, v: np.ndarray, faces: np.ndarray, keep: np.ndarray,
                     h: int, w: int, margin: float):
    """Sparse (face, pixel) candidates: pixels within `margin` px of each
    face's bbox. Everything farther receives exactly the background color."""
    fa = faces[keep]
    if len(fa) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    ux, vy = u[fa], v[fa]
    x0 = np.clip(np.floor(ux.min(axis=1) - margin).astype(np.int64), 0, w - 1)
    x1 = np.clip(np.ceil(ux.max(axis=1) + margin).astype(np.int64), 0, w - 1)
    y0 = np.clip(np.floor(vy.min(axis=1) - margin).astype(np.int64), 0, h - 1)
    y1 = np.clip(np.ceil(vy.max(axis=1) + margin).astype(np.int64), 0, h - 1)
    off = (ux.max(axis=1) < -margin) | (ux.min(axis=1) > w + margin) \
        | (vy.max(axis=1) < -margin) | (vy.min(axis=1) > h + margin)
    bw = np.where(off, 0, x1 - x0 + 1)
    bh = np.where(off, 0, y1 - y0 + 1)
    areas = bw * bh
    total = int(areas.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    face_of = np.repeat(np.arange(len(fa)), areas)
    starts = np.concatenate([[0], np.cumsum(areas)[:-1]])
    local = np.arange(total) - np.repeat(starts, areas)
    px = x0[face_of] + local % np.maximum(bw[face_of], 1)
    py = y0[face_of] + local // np.maximum(bw[face_of], 1)
    return face_of, px, py


def rasterize_soft(mesh: HandMesh, cam: CameraIntrinsics, resolution: tuple[int, int],
                   colors: PartColorMap, sigma: float = 1e-4, gamma: float = 1e-4,
                   z_near: float = 0.05, z_far: float = 2.0, binary: bool = False) -> Tensor:
    """Differentiable render -> (3, H, W) in [0, 1], gradients w.r.t. vertices."""
    h, w = resolution
    cam_r = cam.scaled(w, h)
    verts = mesh.vertices
    dtype = verts.dtype
    faces_np = mesh.topology.faces
    scale = float(max(h, w))

    z = verts[:, 2]
    zsafe = z.clamp(min=Z_CULL)
    u = cam_r.fx * verts[:, 0] / zsafe + cam_r.cx
    v = cam_r.fy * verts[:, 1] / zsafe + cam_r.cy

    with torch.no_grad():
        keep = (z[torch.from_numpy(faces_np)] > Z_CULL).all(dim=1).numpy()
        # sigmoid(d / sigma) is indistinguishable from 0/1 beyond ~45 sigma;
        # +2 px guards finite-difference probes of the vertex positions
        margin = 45.0 * sigma * scale + 2.0
        face_of, px, py = _candidate_pairs(u.detach().cpu().numpy(), v.detach().cpu().numpy(),
                                           faces_np, keep, h, w, margin)

    background = torch.tensor(colors.background, dtype=dtype)
    out = background.reshape(3, 1, 1).repeat(1, h, w).clone()
    if len(face_of) == 0:
        return out

    kept_faces = torch.from_numpy(faces_np[keep][face_of])       # (K, 3)
    tri2d = torch.stack([u, v], dim=-1)[kept_faces] / scale      # (K, 3, 2)
    tri_z = z[kept_faces]                                        # (K, 3)
    pix = torch.stack([torch.from_numpy(px).to(dtype) + 0.5,
                       torch.from_numpy(py).to(dtype) + 0.5], dim=-1) / scale  # (K, 2)

    # signed distance: min point-to-edge distance, positive inside
    d2_min = None
    cross_signs = []
    for i in range(3):
        p0 = tri2d[:, i]
        p1 = tri2d[:, (i + 1) % 3]
        e = p1 - p0
        r = pix - p0
        t = ((r * e).sum(-1) / (e * e).sum(-1).clamp(min=1e-18)).clamp(0, 1)
        diff = r - t.unsqueeze(-1) * e
        d2 = (diff * diff).sum(-1)
        d2_min = d2 if d2_min is None else torch.minimum(d2_min, d2)
        cross_signs.append(e[:, 0] * r[:, 1] - e[:, 1] * r[:, 0])
    s = torch.stack(cross_signs, dim=-1)
    inside = (s >= 0).all(dim=-1) | (s <= 0).all(dim=-1)
    dist = torch.sqrt(d2_min + 1e-24)
    signed = torch.where(inside, dist, -dist)
    log_cov = F.logsigmoid(signed / sigma)                       # log D_f
    log_miss = F.logsigmoid(-signed / sigma)                     # log(1 - D_f)

    # depth via clamped, renormalized barycentrics (exact inside the face)
    a, b, c = tri2d[:, 0], tri2d[:, 1], tri2d[:, 2]
    area = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    area = torch.where(area.abs() < 1e-18, torch.full_like(area, 1e-18), area)
    la = ((c[:, 0] - b[:, 0]) * (pix[:, 1] - b[:, 1]) - (c[:, 1] - b[:, 1]) * (pix[:, 0] - b[:, 0])) / area
    lb = ((a[:, 0] - c[:, 0]) * (pix[:, 1] - c[:, 1]) - (a[:, 1] - c[:, 1]) * (pix[:, 0] - c[:, 0])) / area
    lc = 1.0 - la - lb
    bary = torch.stack([la, lb, lc], dim=-1).clamp(min=0)
    bary = bary / bary.sum(-1, keepdim=True).clamp(min=1e-12)
    z_pix = (bary * tri_z).sum(-1).clamp(z_near, z_far)
    z_score = (z_far - z_pix) / (z_far - z_near)                 # nearer -> larger

    pid = torch.from_numpy(py * w + px)

    # foreground coverage: probabilistic union 1 - prod_f (1 - D_f), so the
    # background competes on coverage only and depth cannot leak past edges
    union_miss = torch.zeros(h * w, dtype=dtype).index_add_(0, pid, log_miss)
    coverage = 1.0 - torch.exp(union_miss)

    # face color mixture: depth softmax gated by coverage, faces only
    score = log_cov + z_score / gamma
    m = torch.full((h * w,), -1e30, dtype=dtype)
    m.scatter_reduce_(0, pid, score.detach(), reduce="amax")
    wexp = torch.exp(score - m[pid])
    denom = torch.zeros(h * w, dtype=dtype).index_add_(0, pid, wexp)

    fcol = torch.from_numpy(colors.face_colors(mesh.topology, binary=binary)[keep][face_of]).to(dtype)
    numer = torch.zeros(h * w, 3, dtype=dtype).index_add_(0, pid, wexp.unsqueeze(-1) * fcol)
    mix = numer / denom.clamp(min=1e-30).unsqueeze(-1)           # (H*W, 3)

    has_pair = torch.zeros(h * w, dtype=torch.bool)
    has_pair[pid] = True
    rgb = torch.where(has_pair.unsqueeze(-1),
                      coverage.unsqueeze(-1) * mix + (1.0 - coverage).unsqueeze(-1) * background,
                      background.expand(h * w, 3))
    return rgb.transpose(0, 1).reshape(3, h, w)


def overlay_render(image: np.ndarray, render: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """50/50 blend of an input image with a render, both (3, H, W) in [0, 1]."""
    return (1 - alpha) * image + alpha * render


def save_png(path, image) -> None:
    """(3, H, W) or (H, W) array in [0, 1] -> 8-bit PNG."""
    from PIL import Image
    arr = np.asarray(torch.as_tensor(image).detach().cpu())
    if arr.ndim == 3:
        arr = np.moveaxis(arr, 0, -1)
    Image.fromarray((np.clip(arr, 0, 1) * 255).round().astype(np.uint8)).save(path)
