"""Simplified parametric articulated hand and synthetic sample generation.

The template is a closed manifold triangle mesh built procedurally: a
flattened box for the palm, with five finger tubes extruded from wall quads
(four from the knuckle edge, the thumb from the +x side). Default grid
settings give V = 389 vertices, F = 774 faces, Euler characteristic 2.

The skeleton has 21 joints: wrist root plus MCP/PIP/DIP/TIP per finger.
Posing is linear blend skinning over per-joint rotations expressed as
(flexion, abduction, twist) components in each joint's local axis frame,
followed by a global scale / rotation / translation about the wrist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import torch
from torch import Tensor

from .geometry import (
    BACKGROUND,
    PART_IDS,
    CameraIntrinsics,
    HandMesh,
    HandTopology,
    project_points,
)
from .renderer import rasterize_index

FINGER_ORDER = ("thumb", "index", "middle", "ring", "pinky")
JOINT_NAMES = ["wrist"] + [f"{f}_{j}" for f in FINGER_ORDER for j in ("mcp", "pip", "dip", "tip")]
# finger parameter t of each joint along the extrusion (mcp, pip, dip, tip)
JOINT_T = (0.0, 0.4, 0.7, 1.0)


class FrustumMissError(RuntimeError):
    """The posed hand projects entirely outside the image: resample."""


@dataclass
class HandTemplate:
    rest_vertices: np.ndarray        # (V, 3) meters, wrist near origin
    topology: HandTopology
    parents: np.ndarray              # (21,) int, parents[0] == -1
    rest_joints: np.ndarray          # (21, 3) meters
    skinning_weights: np.ndarray     # (V, 21) rows sum to 1
    joint_regressor: np.ndarray      # (21, V) rows sum to 1
    joint_axes: np.ndarray           # (21, 3, 3) rows: flexion/abduction/twist axes

    @property
    def n_vertices(self) -> int:
        return len(self.rest_vertices)

    def validate(self) -> None:
        v = self.n_vertices
        assert v >= 200, "template too coarse for finger-level parts"
        assert self.skinning_weights.shape == (v, 21)
        assert (self.skinning_weights >= 0).all()
        assert np.abs(self.skinning_weights.sum(axis=1) - 1).max() <= 1e-6
        assert self.joint_regressor.shape == (21, v)
        assert (self.joint_regressor >= 0).all()
        assert np.abs(self.joint_regressor.sum(axis=1) - 1).max() <= 1e-6
        assert self.parents[0] == -1 and (self.parents[1:] < np.arange(1, 21)).all()
        self.topology.validate_manifold()


@dataclass
class HandPose:
    """Axis-angle pose; joint_rotations holds (flexion, abduction, twist)
    components in each non-root joint's local frame, in radians."""

    global_rotation: Tensor = field(default_factory=lambda: torch.zeros(3))
    global_translation: Tensor = field(default_factory=lambda: torch.zeros(3))
    joint_rotations: Tensor = field(default_factory=lambda: torch.zeros(20, 3))
    shape_scale: Tensor = field(default_factory=lambda: torch.ones(()))

    def __post_init__(self):
        self.global_rotation = torch.as_tensor(self.global_rotation)
        self.global_translation = torch.as_tensor(self.global_translation)
        self.joint_rotations = torch.as_tensor(self.joint_rotations)
        self.shape_scale = torch.as_tensor(self.shape_scale)


@dataclass
class PoseLimits:
    """Per-joint (flexion, abduction, twist) ranges plus global ranges."""

    flexion: tuple = (-math.radians(10), math.radians(100))
    abduction: tuple = (-math.radians(20), math.radians(20))
    twist: tuple = (-math.radians(10), math.radians(10))
    global_rotation: tuple = ((-0.45, 0.45), (-0.45, 0.45), (-1.2, 1.2))
    translation: tuple = ((-0.04, 0.04), (-0.13, -0.02), (0.30, 0.46))
    scale: tuple = (0.9, 1.1)

    @classmethod
    def zero(cls) -> "PoseLimits":
        z = (0.0, 0.0)
        return cls(z, z, z, (z, z, z), (z, z, z), (1.0, 1.0))


@dataclass
class DatasetSample:
    image: np.ndarray        # (3, H, W) float32 in [0, 1]
    mask: np.ndarray         # (H, W) uint8 {0, 1}
    part_mask: np.ndarray    # (H, W) int64, BACKGROUND + part ids
    joints: np.ndarray       # (21, 3) meters camera space, G @ mesh vertices
    mesh: HandMesh           # ground-truth mesh, camera space
    cam: CameraIntrinsics
    meta: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# template construction
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TemplateConfig:
    palm_width: float = 0.080
    palm_length: float = 0.095
    palm_thickness: float = 0.024
    grid_x: int = 11            # palm cells across the knuckle line
    grid_y: int = 10            # palm cells wrist -> knuckles
    finger_rings: int = 6       # new vertex rings per finger
    finger_lengths: tuple = (0.052, 0.067, 0.072, 0.066, 0.052)  # FINGER_ORDER
    finger_cells: tuple = (8, 6, 4, 2)   # knuckle-wall cells: index..pinky
    thumb_cell: int = 2                  # +x wall cell (y index)
    tip_taper: float = 0.62
    blend_halfwidth: float = 0.08        # skin-weight blend zone around joints


def _rodrigues_np(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    kx, ky, kz = axis
    K = np.array([[0, -kz, ky], [kz, 0, -kx], [-ky, kx, 0]])
    return np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * (K @ K)


def build_template(cfg: TemplateConfig = TemplateConfig()) -> HandTemplate:
    nx, ny = cfg.grid_x, cfg.grid_y
    xs = np.linspace(-cfg.palm_width / 2, cfg.palm_width / 2, nx + 1)
    ys = np.linspace(0.0, cfg.palm_length, ny + 1)
    zt, zb = cfg.palm_thickness / 2, -cfg.palm_thickness / 2

    verts: list[np.ndarray] = []
    labels: list[int] = []

    def add_vertex(p, part) -> int:
        verts.append(np.asarray(p, dtype=np.float64))
        labels.append(PART_IDS[part])
        return len(verts) - 1

    top = np.empty((nx + 1, ny + 1), dtype=np.int64)
    bot = np.empty((nx + 1, ny + 1), dtype=np.int64)
    for j in range(ny + 1):
        for i in range(nx + 1):
            top[i, j] = add_vertex((xs[i], ys[j], zt), "palm")
    for j in range(ny + 1):
        for i in range(nx + 1):
            bot[i, j] = add_vertex((xs[i], ys[j], zb), "palm")

    quads: list[tuple[int, int, int, int]] = []
    for j in range(ny):                                   # top, outward +z
        for i in range(nx):
            quads.append((top[i, j], top[i + 1, j], top[i + 1, j + 1], top[i, j + 1]))
    for j in range(ny):                                   # bottom, outward -z
        for i in range(nx):
            quads.append((bot[i, j], bot[i, j + 1], bot[i + 1, j + 1], bot[i + 1, j]))
    for i in range(nx):                                   # wrist wall, outward -y
        quads.append((bot[i, 0], bot[i + 1, 0], top[i + 1, 0], top[i, 0]))
    distal = {}
    for i in range(nx):                                   # knuckle wall, outward +y
        distal[i] = (top[i, ny], top[i + 1, ny], bot[i + 1, ny], bot[i, ny])
        quads.append(distal[i])
    for j in range(ny):                                   # -x wall
        quads.append((top[0, j], top[0, j + 1], bot[0, j + 1], bot[0, j]))
    side_px = {}
    for j in range(ny):                                   # +x wall
        side_px[j] = (bot[nx, j], bot[nx, j + 1], top[nx, j + 1], top[nx, j])
        quads.append(side_px[j])

    # fingers: (name, base quad, extrusion direction, length)
    d_thumb = np.array([1.0, 0.7, 0.0])
    d_thumb /= np.linalg.norm(d_thumb)
    fingers = [("thumb", side_px[cfg.thumb_cell], d_thumb, cfg.finger_lengths[0])]
    for name, cell, length in zip(FINGER_ORDER[1:], cfg.finger_cells, cfg.finger_lengths[1:]):
        fingers.append((name, distal[cell], np.array([0.0, 1.0, 0.0]), length))

    rest_joints = np.zeros((21, 3))
    rest_joints[0] = (0.0, 0.008, 0.0)                    # wrist
    joint_axes = np.zeros((21, 3, 3))
    finger_vertex_t: dict[int, tuple[int, float]] = {}    # vert -> (finger idx, t)

    for f_idx, (name, base_quad, d, length) in enumerate(fingers):
        base_pts = np.array([verts[k] for k in base_quad])
        center = base_pts.mean(axis=0)
        # rotate base-quad offsets so they stay perpendicular to d
        normal = np.array([1.0, 0, 0]) if name == "thumb" else np.array([0, 1.0, 0])
        cosang = float(np.clip(normal @ d, -1, 1))
        if abs(cosang - 1) < 1e-12:
            R = np.eye(3)
        else:
            axis = np.cross(normal, d)
            R = _rodrigues_np(axis, math.acos(cosang))
        offsets = (base_pts - center) @ R.T

        quads.remove(base_quad)
        ring = list(base_quad)
        for r in range(1, cfg.finger_rings + 1):
            t = r / cfg.finger_rings
            taper = 1.0 - (1.0 - cfg.tip_taper) * t
            c = center + d * (length * t)
            new_ring = [add_vertex(c + taper * offsets[k], name) for k in range(4)]
            for k in range(4):
                quads.append((ring[k], ring[(k + 1) % 4], new_ring[(k + 1) % 4], new_ring[k]))
            for k in new_ring:
                finger_vertex_t[k] = (f_idx, t)
            ring = new_ring
        tip = add_vertex(center + d * (length * 1.05), name)
        finger_vertex_t[tip] = (f_idx, 1.05)
        tris_cap = [(ring[k], ring[(k + 1) % 4], tip) for k in range(4)]

        base_joint = 1 + f_idx * 4
        for jj, t in enumerate(JOINT_T):
            rest_joints[base_joint + jj] = center + d * (length * t)
        flex = np.cross([0.0, 0.0, 1.0], d)
        flex /= np.linalg.norm(flex)
        for jj in range(4):
            joint_axes[base_joint + jj] = np.stack([flex, [0.0, 0.0, 1.0], d])

        if f_idx == 0:
            cap_faces_all = list(tris_cap)
        else:
            cap_faces_all += tris_cap

    faces = []
    for a, b, c, dq in quads:
        faces.append((a, b, c))
        faces.append((a, c, dq))
    faces.extend(cap_faces_all)
    faces = np.asarray(faces, dtype=np.int64)

    V = len(verts)
    rest_vertices = np.asarray(verts)
    part_labels = np.asarray(labels, dtype=np.int64)
    topology = HandTopology(faces, part_labels, V)

    # skinning weights: palm rigid with the wrist; finger rings blend between
    # consecutive joints around each internal joint boundary
    weights = np.zeros((V, 21))
    h = cfg.blend_halfwidth
    for vi in range(V):
        if vi not in finger_vertex_t:
            weights[vi, 0] = 1.0
            continue
        f_idx, t = finger_vertex_t[vi]
        base_joint = 1 + f_idx * 4
        bones = [base_joint, base_joint + 1, base_joint + 2]   # mcp, pip, dip
        bounds = [JOINT_T[1], JOINT_T[2]]                      # pip, dip pivots
        seg = sum(t >= b + h for b in bounds)
        w = np.zeros(21)
        blended = False
        for bi, b in enumerate(bounds):
            if b - h <= t < b + h:
                alpha = (t - (b - h)) / (2 * h)
                w[bones[bi]] = 1 - alpha
                w[bones[bi + 1]] = alpha
                blended = True
                break
        if not blended:
            w[bones[min(seg, 2)]] = 1.0
        weights[vi] = w

    # joint regressor: each joint averages its 8 nearest rest vertices
    regressor = np.zeros((21, V))
    for k in range(21):
        d2 = ((rest_vertices - rest_joints[k]) ** 2).sum(axis=1)
        nearest = np.argsort(d2)[:8]
        regressor[k, nearest] = 1.0 / 8.0

    parents = np.full(21, -1, dtype=np.int64)
    for f_idx in range(5):
        base = 1 + f_idx * 4
        parents[base] = 0
        parents[base + 1] = base
        parents[base + 2] = base + 1
        parents[base + 3] = base + 2

    tpl = HandTemplate(rest_vertices, topology, parents, rest_joints, weights,
                       regressor, joint_axes)
    tpl.validate()
    return tpl


_DEFAULT_TEMPLATE: HandTemplate | None = None


def default_template() -> HandTemplate:
    global _DEFAULT_TEMPLATE
    if _DEFAULT_TEMPLATE is None:
        _DEFAULT_TEMPLATE = build_template()
    return _DEFAULT_TEMPLATE


# --------------------------------------------------------------------------
# posing
# --------------------------------------------------------------------------

def _rodrigues(rotvec: Tensor) -> Tensor:
    """Batch axis-angle (..., 3) -> rotation matrices (..., 3, 3)."""
    theta = rotvec.norm(dim=-1, keepdim=True).clamp(min=0)
    small = theta < 1e-8
    # sin(t)/t and (1-cos t)/t^2 with stable small-angle limits
    s = torch.where(small, 1 - theta ** 2 / 6, torch.sin(theta) / theta.clamp(min=1e-30))
    c = torch.where(small, 0.5 - theta ** 2 / 24,
                    (1 - torch.cos(theta)) / (theta ** 2).clamp(min=1e-30))
    x, y, z = rotvec[..., 0], rotvec[..., 1], rotvec[..., 2]
    zero = torch.zeros_like(x)
    K = torch.stack([torch.stack([zero, -z, y], -1),
                     torch.stack([z, zero, -x], -1),
                     torch.stack([-y, x, zero], -1)], -2)
    eye = torch.eye(3, dtype=rotvec.dtype).expand(K.shape)
    return eye + s.unsqueeze(-1) * K + c.unsqueeze(-1) * (K @ K)


def check_pose_limits(pose: HandPose, limits: PoseLimits = PoseLimits()) -> None:
    """Raise naming the first joint whose local components leave the limits."""
    comps = pose.joint_rotations.detach()
    ranges = [limits.flexion, limits.abduction, limits.twist]
    tol = 1e-9
    for j in range(20):
        for a, (lo, hi) in enumerate(ranges):
            val = float(comps[j, a])
            if val < lo - tol or val > hi + tol:
                name = JOINT_NAMES[1 + j]
                kind = ("flexion", "abduction", "twist")[a]
                raise ValueError(f"pose outside limits: joint {name} {kind}={val:.4f} "
                                 f"not in [{lo:.4f}, {hi:.4f}]")


def skin(template: HandTemplate, pose: HandPose, limits: PoseLimits | None = PoseLimits()) -> HandMesh:
    """Pose the template: FK down the tree, blend per-joint rigid transforms,
    then apply global scale/rotation/translation. Differentiable in the pose."""
    if limits is not None:
        check_pose_limits(pose, limits)
    dtype = pose.joint_rotations.dtype
    rest_j = torch.from_numpy(template.rest_joints).to(dtype)
    axes = torch.from_numpy(template.joint_axes).to(dtype)        # (21, 3, 3)
    W = torch.from_numpy(template.skinning_weights).to(dtype)
    v_rest = torch.from_numpy(template.rest_vertices).to(dtype)

    # local rotation matrices; root has none (global rotation is separate)
    rotvecs = (pose.joint_rotations.unsqueeze(-2) @ axes[1:]).squeeze(-2)  # (20, 3)
    R_local = _rodrigues(rotvecs)

    G_list: list[Tensor] = [None] * 21
    eye = torch.eye(4, dtype=dtype)
    root = eye.clone()
    root[:3, 3] = rest_j[0]
    G_list[0] = root
    for k in range(1, 21):
        p = int(template.parents[k])
        L = torch.cat([torch.cat([R_local[k - 1], (rest_j[k] - rest_j[p]).unsqueeze(-1)], dim=1),
                       torch.tensor([[0.0, 0, 0, 1]], dtype=dtype)], dim=0)
        G_list[k] = G_list[p] @ L
    G = torch.stack(G_list)                                       # (21, 4, 4)

    # remove rest pose: T_k = G_k @ translate(-rest_j[k])
    offs = -(G[:, :3, :3] @ rest_j.unsqueeze(-1)).squeeze(-1) + G[:, :3, 3]
    rot_blend = torch.einsum("vk,kij->vij", W, G[:, :3, :3])
    off_blend = W @ offs
    posed = (rot_blend @ v_rest.unsqueeze(-1)).squeeze(-1) + off_blend

    Rg = _rodrigues(pose.global_rotation.to(dtype))
    out = (pose.shape_scale.to(dtype) * posed) @ Rg.T + pose.global_translation.to(dtype)
    return HandMesh(out, template.topology)


def regress_joints(G, mesh_vertices) -> Tensor:
    """Joints = G @ vertices; accepts (V, 3) or (B, V, 3)."""
    verts = mesh_vertices.vertices if isinstance(mesh_vertices, HandMesh) else mesh_vertices
    G = torch.as_tensor(G, dtype=verts.dtype)
    if G.shape[1] != verts.shape[-2]:
        raise ValueError(f"regressor expects {G.shape[1]} vertices, mesh has {verts.shape[-2]}")
    return G @ verts


def fk_joint_positions(template: HandTemplate, pose: HandPose) -> Tensor:
    """Posed joint positions (21, 3) through the same kinematic chain."""
    dtype = pose.joint_rotations.dtype
    rest_j = torch.from_numpy(template.rest_joints).to(dtype)
    axes = torch.from_numpy(template.joint_axes).to(dtype)
    rotvecs = (pose.joint_rotations.unsqueeze(-2) @ axes[1:]).squeeze(-2)
    R_local = _rodrigues(rotvecs)
    G_list: list[Tensor] = [None] * 21
    root = torch.eye(4, dtype=dtype)
    root[:3, 3] = rest_j[0]
    G_list[0] = root
    for k in range(1, 21):
        p = int(template.parents[k])
        L = torch.cat([torch.cat([R_local[k - 1], (rest_j[k] - rest_j[p]).unsqueeze(-1)], dim=1),
                       torch.tensor([[0.0, 0, 0, 1]], dtype=dtype)], dim=0)
        G_list[k] = G_list[p] @ L
    pos = torch.stack([g[:3, 3] for g in G_list])
    Rg = _rodrigues(pose.global_rotation.to(dtype))
    return (pose.shape_scale.to(dtype) * pos) @ Rg.T + pose.global_translation.to(dtype)


# --------------------------------------------------------------------------
# sampling and synthesis
# --------------------------------------------------------------------------

def sample_pose(rng: np.random.Generator, limits: PoseLimits = PoseLimits()) -> HandPose:
    """Uniform pose within per-joint and global limits; deterministic in rng."""
    def u(lo, hi, n=None):
        return rng.uniform(lo, hi) if n is None else rng.uniform(lo, hi, n)

    joint = np.stack([u(*limits.flexion, 20), u(*limits.abduction, 20),
                      u(*limits.twist, 20)], axis=1)
    grot = np.array([u(*r) for r in limits.global_rotation])
    trans = np.array([u(*r) for r in limits.translation])
    scale = u(*limits.scale)
    return HandPose(torch.from_numpy(grot), torch.from_numpy(trans),
                    torch.from_numpy(joint), torch.tensor(scale, dtype=torch.float64))


def _background_image(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Uniform random color or a random two-color gradient, (3, H, W)."""
    c0 = rng.uniform(0, 1, 3)
    if rng.uniform() < 0.5:
        return np.broadcast_to(c0[:, None, None], (3, h, w)).copy()
    c1 = rng.uniform(0, 1, 3)
    axis = rng.integers(0, 2)
    ramp = np.linspace(0, 1, h if axis == 0 else w)
    ramp = ramp[:, None] if axis == 0 else ramp[None, :]
    grad = c0[:, None, None] * (1 - ramp) + c1[:, None, None] * ramp
    return np.broadcast_to(grad, (3, h, w)).copy()


def synthesize_sample(template: HandTemplate, pose: HandPose, cam: CameraIntrinsics,
                      appearance_seed: int) -> DatasetSample:
    """Skin, rasterize, and shade one labeled sample over a random background."""
    mesh = skin(template, pose)
    verts = mesh.vertices.detach().numpy()
    if (verts[:, 2] <= 0).all():
        raise FrustumMissError("hand entirely behind the camera")
    index, _ = rasterize_index(verts, template.topology.faces, cam,
                               (cam.height, cam.width))
    covered = index >= 0
    if not covered.any():
        raise FrustumMissError("hand projects entirely outside the image")

    part_mask = np.where(covered,
                         template.topology.face_part_labels[np.where(covered, index, 0)],
                         BACKGROUND).astype(np.int64)
    mask = covered.astype(np.uint8)

    rng = np.random.default_rng(appearance_seed)
    image = _background_image(rng, cam.height, cam.width)
    # flat Lambert shading per face, skin-tone albedo with a small jitter
    fnorm = np.cross(verts[template.topology.faces[:, 1]] - verts[template.topology.faces[:, 0]],
                     verts[template.topology.faces[:, 2]] - verts[template.topology.faces[:, 0]])
    fnorm /= np.maximum(np.linalg.norm(fnorm, axis=1, keepdims=True), 1e-12)
    light = rng.normal(size=3)
    light[2] = -abs(light[2]) - 0.5          # light roughly from the camera side
    light /= np.linalg.norm(light)
    albedo = np.array([0.85, 0.62, 0.50]) * rng.uniform(0.85, 1.15, 3)
    shade = 0.45 + 0.55 * np.clip(-(fnorm @ light), 0, 1)
    face_rgb = np.clip(albedo[None, :] * shade[:, None], 0, 1)
    ys, xs = np.nonzero(covered)
    image[:, ys, xs] = face_rgb[index[ys, xs]].T

    joints = template.joint_regressor @ verts
    return DatasetSample(image.astype(np.float32), mask, part_mask, joints, mesh, cam,
                         meta={"appearance_seed": int(appearance_seed)})


# --------------------------------------------------------------------------
# augmentation
# --------------------------------------------------------------------------

@dataclass
class AugmentParams:
    angle: float = 0.0        # in-plane rotation, radians
    scale: float = 1.0
    brightness: float = 1.0
    contrast: float = 1.0
    hue: float = 0.0          # rotation about the gray axis, radians


def draw_augment_params(rng: np.random.Generator,
                        max_angle: float = math.radians(45),
                        scale_range: tuple = (0.85, 1.15),
                        jitter: float = 0.2) -> AugmentParams:
    return AugmentParams(
        angle=rng.uniform(-max_angle, max_angle),
        scale=rng.uniform(*scale_range),
        brightness=rng.uniform(1 - jitter, 1 + jitter),
        contrast=rng.uniform(1 - jitter, 1 + jitter),
        hue=rng.uniform(-jitter, jitter) * 2 * math.pi * 0.2,
    )


def _warp_image(image: np.ndarray, cam: CameraIntrinsics, angle: float, scale: float) -> np.ndarray:
    """Inverse-map resample about the principal point (bilinear, border clamp)."""
    _, h, w = image.shape
    py, px = np.meshgrid(np.arange(h) + 0.5, np.arange(w) + 0.5, indexing="ij")
    ca, sa = math.cos(-angle), math.sin(-angle)
    dx, dy = (px - cam.cx) / scale, (py - cam.cy) / scale
    sx = ca * dx - sa * dy + cam.cx - 0.5
    sy = sa * dx + ca * dy + cam.cy - 0.5
    sx = np.clip(sx, 0, w - 1)
    sy = np.clip(sy, 0, h - 1)
    x0 = np.clip(np.floor(sx).astype(int), 0, w - 2)
    y0 = np.clip(np.floor(sy).astype(int), 0, h - 2)
    fx, fy = sx - x0, sy - y0
    out = (image[:, y0, x0] * (1 - fx) * (1 - fy) + image[:, y0, x0 + 1] * fx * (1 - fy)
           + image[:, y0 + 1, x0] * (1 - fx) * fy + image[:, y0 + 1, x0 + 1] * fx * fy)
    return out.astype(image.dtype)


def _hue_rotate(image: np.ndarray, angle: float) -> np.ndarray:
    axis = np.ones(3) / math.sqrt(3)
    R = _rodrigues_np(axis, angle)
    return np.einsum("ij,jhw->ihw", R, image)


def augment(sample: DatasetSample, rng: np.random.Generator,
            params: AugmentParams | None = None) -> DatasetSample:
    """In-plane rotation/scale applied consistently to image, masks, joints,
    mesh, and camera (masks are re-rasterized from the transformed mesh so the
    mask == rasterize(mesh) invariant holds exactly), plus image color jitter."""
    if params is None:
        params = draw_augment_params(rng)
    cam = sample.cam
    if cam.fx != cam.fy:
        raise ValueError("in-plane rotation augmentation requires fx == fy")

    geo_identity = params.angle == 0.0 and params.scale == 1.0
    if geo_identity:
        image = sample.image
        mask, part_mask = sample.mask, sample.part_mask
        mesh, joints, new_cam = sample.mesh, sample.joints, cam
    else:
        # rotating the scene about the optical axis rotates projections about
        # the principal point; zoom goes into the focal lengths
        Rz = _rodrigues_np(np.array([0.0, 0.0, 1.0]), params.angle)
        new_verts = sample.mesh.vertices.numpy() @ Rz.T
        joints = sample.joints @ Rz.T
        mesh = HandMesh(torch.from_numpy(new_verts), sample.mesh.topology)
        new_cam = CameraIntrinsics(cam.fx * params.scale, cam.fy * params.scale,
                                   cam.cx, cam.cy, cam.width, cam.height)
        index, _ = rasterize_index(new_verts, mesh.topology.faces, new_cam,
                                   (cam.height, cam.width))
        covered = index >= 0
        part_mask = np.where(covered,
                             mesh.topology.face_part_labels[np.where(covered, index, 0)],
                             BACKGROUND).astype(np.int64)
        mask = covered.astype(np.uint8)
        image = _warp_image(sample.image, cam, params.angle, params.scale)

    if params.brightness != 1.0 or params.contrast != 1.0:
        image = (image - 0.5) * params.contrast + 0.5
        image = image * params.brightness
    if params.hue != 0.0:
        image = _hue_rotate(image, params.hue)
    if not (params.brightness == 1.0 and params.contrast == 1.0 and params.hue == 0.0):
        image = np.clip(image, 0, 1).astype(np.float32)

    return DatasetSample(image, mask, part_mask, joints, mesh, new_cam,
                         meta=dict(sample.meta))
