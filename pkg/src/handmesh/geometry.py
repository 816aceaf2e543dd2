"""Camera projection, feature sampling, and mesh differential quantities.

Conventions used throughout the package:

* Camera space is right-handed with +z pointing away from the camera;
  everything visible has z > 0. Units are meters.
* Pixel-center convention: integer pixel (i, j) of an image or feature map
  covers the continuous square [i, i+1) x [j, j+1) and has its center at
  (i + 0.5, j + 0.5). All projection and sampling code uses this.
* Edge endpoint order is canonical: (min index, max index). Edge vectors are
  always v[max] - v[min] so they are comparable across meshes sharing a
  topology.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import Tensor

# Vertex/pixel part labels. 0 is reserved for background in label images.
BACKGROUND = 0
PART_NAMES = ("thumb", "index", "middle", "ring", "pinky", "palm")
PART_IDS = {name: i + 1 for i, name in enumerate(PART_NAMES)}

# Faces with less area than this (in m^2) get a zero normal instead of NaN.
DEGENERATE_FACE_AREA = 1e-12


class BehindCameraError(ValueError):
    """A point with z <= 0 was passed to the projector."""


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera: focal lengths, principal point, image size (pixels)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(f"principal point ({self.cx}, {self.cy}) outside image "
                             f"{self.width}x{self.height}")

    def scaled(self, width: int, height: int) -> "CameraIntrinsics":
        """Intrinsics of the same view resampled to a new resolution."""
        sx = width / self.width
        sy = height / self.height
        return CameraIntrinsics(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy,
                                width, height)


class HandTopology:
    """Fixed mesh connectivity: faces, deduplicated edges, vertex neighbors,
    and one part label per vertex.

    `faces` is (F, 3) int64, `part_labels` is (V,) int64 with values from
    PART_IDS. Edges and neighbor sets are derived from the faces.
    """

    def __init__(self, faces: np.ndarray, part_labels: np.ndarray, n_vertices: int | None = None):
        faces = np.asarray(faces, dtype=np.int64)
        part_labels = np.asarray(part_labels, dtype=np.int64)
        if n_vertices is None:
            n_vertices = len(part_labels)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValueError(f"faces must be (F, 3), got {faces.shape}")
        if faces.min() < 0 or faces.max() >= n_vertices:
            raise ValueError("face vertex index out of range")
        if part_labels.shape != (n_vertices,):
            raise ValueError("need exactly one part label per vertex")
        if not np.isin(part_labels, list(PART_IDS.values())).all():
            raise ValueError("part labels must come from PART_IDS")
        self.n_vertices = n_vertices
        self.faces = faces
        self.part_labels = part_labels
        self.edges = build_edges(faces)                      # (E, 2), e[0] < e[1]
        self.neighbors = build_neighbors(faces, n_vertices)  # tuple of sorted tuples
        self.face_part_labels = _majority_face_labels(faces, part_labels)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def validate_manifold(self) -> None:
        """Raise unless the mesh is a closed manifold with one component."""
        # every undirected edge must be shared by exactly two faces
        directed = {}
        for tri in self.faces:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (int(a), int(b))
                if key in directed:
                    raise ValueError(f"directed edge {key} repeated; inconsistent winding")
                directed[key] = True
        for a, b in self.edges:
            if (int(a), int(b)) not in directed or (int(b), int(a)) not in directed:
                raise ValueError(f"edge ({a}, {b}) not shared by two consistently wound faces")
        # single connected component via BFS over neighbors
        seen = np.zeros(self.n_vertices, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            i = stack.pop()
            for j in self.neighbors[i]:
                if not seen[j]:
                    seen[j] = True
                    stack.append(j)
        if not seen.all():
            raise ValueError(f"mesh has {self.n_vertices - seen.sum()} unreachable vertices")

    def adjacency_matrix(self, dtype=torch.float32) -> Tensor:
        """Dense symmetric (V, V) 0/1 adjacency, no self loops."""
        adj = torch.zeros(self.n_vertices, self.n_vertices, dtype=dtype)
        e = torch.from_numpy(self.edges)
        adj[e[:, 0], e[:, 1]] = 1
        adj[e[:, 1], e[:, 0]] = 1
        return adj


@dataclass
class HandMesh:
    """V x 3 vertex coordinates (meters, camera space) over a shared topology."""

    vertices: Tensor
    topology: HandTopology

    def __post_init__(self):
        self.vertices = torch.as_tensor(self.vertices)
        if self.vertices.shape != (self.topology.n_vertices, 3):
            raise ValueError(f"vertices {tuple(self.vertices.shape)} do not match topology "
                             f"V={self.topology.n_vertices}")
        if not torch.isfinite(self.vertices).all():
            raise ValueError("mesh has non-finite coordinates")

    def with_vertices(self, vertices: Tensor) -> "HandMesh":
        return HandMesh(vertices, self.topology)


def _majority_face_labels(faces: np.ndarray, part_labels: np.ndarray) -> np.ndarray:
    """Per-face label = majority of the 3 vertex labels (lowest id on ties)."""
    out = np.empty(len(faces), dtype=np.int64)
    for k, tri in enumerate(faces):
        out[k] = np.bincount(part_labels[tri]).argmax()
    return out


def project_points(points: Tensor, cam: CameraIntrinsics) -> Tensor:
    """Pinhole projection of (..., 3) camera-space points to (..., 2) pixels.

    (u, v) = (fx*x/z + cx, fy*y/z + cy). Differentiable in `points`.
    Raises BehindCameraError naming the first offending index if any z <= 0.
    """
    z = points[..., 2]
    if (z <= 0).any():
        bad = int((z <= 0).reshape(-1).nonzero()[0])
        raise BehindCameraError(f"point {bad} is behind the camera (z <= 0)")
    u = cam.fx * points[..., 0] / z + cam.cx
    v = cam.fy * points[..., 1] / z + cam.cy
    return torch.stack([u, v], dim=-1)


def unproject_points(pixels: Tensor, z: Tensor, cam: CameraIntrinsics) -> Tensor:
    """Inverse of project_points given per-point depth z (meters)."""
    x = (pixels[..., 0] - cam.cx) * z / cam.fx
    y = (pixels[..., 1] - cam.cy) * z / cam.fy
    return torch.stack([x, y, z], dim=-1)


def bilinear_sample(fmap: Tensor, locations: Tensor) -> Tensor:
    """Sample a (C, H, W) map at (N, 2) pixel locations -> (N, C).

    Standard 4-cell bilinear weights on the pixel-center grid; locations
    outside the image are clamped to the border, so values and gradients
    stay finite everywhere. Differentiable in both arguments.
    """
    c, h, w = fmap.shape
    gx = (locations[..., 0] - 0.5).clamp(0, w - 1)
    gy = (locations[..., 1] - 0.5).clamp(0, h - 1)
    x0 = gx.floor().long().clamp(0, w - 2) if w > 1 else gx.long() * 0
    y0 = gy.floor().long().clamp(0, h - 2) if h > 1 else gy.long() * 0
    x1 = (x0 + 1).clamp(0, w - 1)
    y1 = (y0 + 1).clamp(0, h - 1)
    fx = (gx - x0).clamp(0, 1)
    fy = (gy - y0).clamp(0, 1)

    flat = fmap.reshape(c, -1)                     # (C, H*W)
    def gather(yy, xx):
        return flat[:, yy * w + xx].transpose(0, 1)  # (N, C)

    w00 = ((1 - fx) * (1 - fy)).unsqueeze(-1)
    w10 = (fx * (1 - fy)).unsqueeze(-1)
    w01 = ((1 - fx) * fy).unsqueeze(-1)
    w11 = (fx * fy).unsqueeze(-1)
    return (w00 * gather(y0, x0) + w10 * gather(y0, x1)
            + w01 * gather(y1, x0) + w11 * gather(y1, x1))


def face_normals(vertices: Tensor, faces: np.ndarray,
                 return_degenerate: bool = False):
    """Unit normals (F, 3) from face winding; degenerate faces get zeros.

    A face is degenerate when its area falls below DEGENERATE_FACE_AREA.
    With return_degenerate=True also returns the (F,) bool flag mask.
    """
    f = torch.from_numpy(np.asarray(faces))
    v0, v1, v2 = vertices[f[:, 0]], vertices[f[:, 1]], vertices[f[:, 2]]
    n = torch.cross(v1 - v0, v2 - v0, dim=-1)
    norm = n.norm(dim=-1, keepdim=True)
    degenerate = (norm.squeeze(-1) * 0.5) < DEGENERATE_FACE_AREA
    safe = torch.where(degenerate.unsqueeze(-1), torch.ones_like(norm), norm)
    n = torch.where(degenerate.unsqueeze(-1), torch.zeros_like(n), n / safe)
    if return_degenerate:
        return n, degenerate
    return n


def face_edge_vectors(vertices: Tensor, faces: np.ndarray) -> Tensor:
    """(F, 3, 3) edge vectors, 3 per face, canonical (min, max) endpoint order."""
    f = np.asarray(faces)
    pairs = np.stack([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=1)  # (F, 3, 2)
    lo = torch.from_numpy(pairs.min(axis=2))
    hi = torch.from_numpy(pairs.max(axis=2))
    return vertices[hi] - vertices[lo]


def edge_lengths(vertices: Tensor, edges: np.ndarray) -> Tensor:
    """(E,) lengths of the deduplicated edge list."""
    e = torch.from_numpy(np.asarray(edges))
    return (vertices[e[:, 1]] - vertices[e[:, 0]]).norm(dim=-1)


def build_edges(faces: np.ndarray) -> np.ndarray:
    """Deduplicated undirected edges (E, 2) with e[0] < e[1], sorted."""
    f = np.asarray(faces, dtype=np.int64)
    pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)
    pairs.sort(axis=1)
    return np.unique(pairs, axis=0)


def build_neighbors(faces: np.ndarray, n_vertices: int) -> tuple[tuple[int, ...], ...]:
    """Per-vertex neighbor index sets N(i), symmetric, no self loops."""
    f = np.asarray(faces, dtype=np.int64)
    if len(f) and (f.min() < 0 or f.max() >= n_vertices):
        raise ValueError("face vertex index out of range")
    sets: list[set[int]] = [set() for _ in range(n_vertices)]
    for a, b in build_edges(f):
        if a != b:
            sets[a].add(int(b))
            sets[b].add(int(a))
    return tuple(tuple(sorted(s)) for s in sets)


# --- plain-text mesh files ("v x y z" / "f i j k", 1-based) -----------------

def save_mesh(path, vertices, faces) -> None:
    vertices = np.asarray(torch.as_tensor(vertices).detach().cpu(), dtype=np.float64)
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in vertices]
    lines += [f"f {i + 1} {j + 1} {k + 1}" for i, j, k in np.asarray(faces)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path) -> tuple[np.ndarray, np.ndarray]:
    """Returns (vertices float64 (V, 3), faces int64 (F, 3))."""
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            tok = line.split()
            if not tok or tok[0].startswith("#"):
                continue
            if tok[0] == "v":
                verts.append([float(t) for t in tok[1:4]])
            elif tok[0] == "f":
                faces.append([int(t.split("/")[0]) - 1 for t in tok[1:4]])
    return np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int64)


def save_part_labels(path, part_labels: np.ndarray) -> None:
    """Sidecar: one "index part_name" pair per line, 0-based indices."""
    names = {v: k for k, v in PART_IDS.items()}
    with open(path, "w") as fh:
        for i, lab in enumerate(np.asarray(part_labels)):
            fh.write(f"{i} {names[int(lab)]}\n")


def load_part_labels(path, n_vertices: int) -> np.ndarray:
    labels = np.full(n_vertices, -1, dtype=np.int64)
    with open(path) as fh:
        for line in fh:
            tok = line.split()
            if len(tok) == 2:
                labels[int(tok[0])] = PART_IDS[tok[1]]
    if (labels < 0).any():
        raise ValueError("part-label file does not cover every vertex")
    return labels
