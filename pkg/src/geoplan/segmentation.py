"""Select-then-process parsing of part point clouds from masks and depth.

A provider proposes candidate masks, a selector picks the one matching a
component description, a fixed per-geometry operation post-processes it and
the result is back-projected through a pinhole camera.

Raster fixtures use binary PGM: 8-bit for masks and label images, 16-bit
for depth in millimeters (0 marks an invalid pixel).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence

import numpy as np

from .constraints import GeometricComponentRef
from .errors import EmptyProcessedMask, InsufficientDepth, NoCandidates, UncompilableRelation
from .geometry import RigidTransform

SIDES = ("left", "right", "top", "bottom")
EDGE_SHIFT = 3


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")


def as_mask(mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"mask must be a non-empty 2-D raster, got shape {m.shape}")
    return m.astype(bool)


# --------------------------------------------------------------------------
# mask processing

def boundary(mask) -> np.ndarray:
    """True pixels with at least one false 4-neighbour (off-grid counts as false)."""
    m = as_mask(mask)
    padded = np.pad(m, 1, constant_values=False)
    interior = padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    return m & ~interior


def find_edges(mask) -> np.ndarray:
    """Mask boundary moved down by three rows; the top three rows are always empty."""
    b = boundary(mask)
    out = np.zeros_like(b)
    if b.shape[0] > EDGE_SHIFT:
        out[EDGE_SHIFT:] = b[:-EDGE_SHIFT]
    return out


def side_extreme(mask, side: str) -> np.ndarray:
    """Keep only the extreme true pixel of every scanline towards ``side``."""
    m = as_mask(mask)
    side = side.lower()
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}")
    grid = m if side in ("left", "right") else m.T
    out = np.zeros_like(grid)
    rows = np.flatnonzero(grid.any(axis=1))
    if side in ("left", "top"):
        cols = grid[rows].argmax(axis=1)
    else:
        cols = grid.shape[1] - 1 - grid[rows, ::-1].argmax(axis=1)
    out[rows, cols] = True
    return out if side in ("left", "right") else out.T


def centroid_region(mask, radius: float = 2.0) -> np.ndarray:
    """Mask pixels within ``radius`` of the mask's pixel centroid (nearest pixel if none)."""
    m = as_mask(mask)
    rows, cols = np.nonzero(m)
    out = np.zeros_like(m)
    if rows.size == 0:
        return out
    r0, c0 = rows.mean(), cols.mean()
    d2 = (rows - r0) ** 2 + (cols - c0) ** 2
    keep = d2 <= radius * radius
    if not keep.any():
        keep = d2 == d2.min()
    out[rows[keep], cols[keep]] = True
    return out


def _identity(mask) -> np.ndarray:
    return as_mask(mask).copy()


PROCESSORS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    **{g: _identity for g in ("area", "plane", "surface", "face", "axis", "heading", "heading direction",
                              "normal", "direction", "binormal")},
    "edge": find_edges,
    **{f"{s} edge": (lambda m, s=s: side_extreme(m, s)) for s in SIDES},
    **{g: centroid_region for g in ("center", "centre", "center point", "point")},
}


def process_mask(mask, geometry: str) -> np.ndarray:
    word = geometry[4:] if geometry.startswith("the ") else geometry
    fn = PROCESSORS.get(word)
    if fn is None:
        raise UncompilableRelation(f"no mask processing for geometry {geometry!r}")
    return fn(mask)


def back_project(mask, depth, K: CameraIntrinsics) -> np.ndarray:
    """Camera-frame points for true pixels with finite positive depth, row-major order."""
    m = as_mask(mask)
    d = np.asarray(depth, dtype=float)
    if d.shape != m.shape:
        raise ValueError(f"mask {m.shape} and depth {d.shape} differ in shape")
    valid = m & np.isfinite(d) & (d > 0)
    v, u = np.nonzero(valid)
    z = d[v, u]
    pts = np.column_stack([(u - K.cx) * z / K.fx, (v - K.cy) * z / K.fy, z])
    if pts.shape[0] < 3:
        raise InsufficientDepth(f"only {pts.shape[0]} pixels with valid depth")
    return pts


# --------------------------------------------------------------------------
# select-process

class MaskProvider(Protocol):
    def propose(self, image: Any) -> list[np.ndarray]: ...


class MaskSelector(Protocol):
    def select(self, image: Any, candidates: Sequence[np.ndarray], description: str) -> int: ...


class StaticProvider:
    def __init__(self, masks: Sequence[np.ndarray]):
        self.masks = [as_mask(m) for m in masks]

    def propose(self, image: Any) -> list[np.ndarray]:
        return list(self.masks)


class CropProvider:
    """Pre-crop stage in front of another provider; a pass-through in simulation."""

    def __init__(self, inner: MaskProvider, crop: Callable[[Any], Any] | None = None):
        self.inner = inner
        self.crop = crop

    def propose(self, image: Any) -> list[np.ndarray]:
        return self.inner.propose(image if self.crop is None else self.crop(image))


class ScriptedSelector:
    """Returns pre-recorded indices in order, one per query."""

    def __init__(self, indices: Sequence[int]):
        self.indices = list(indices)
        self.calls = 0

    @classmethod
    def from_file(cls, path) -> "ScriptedSelector":
        return cls(json.loads(Path(path).read_text()))

    def select(self, image: Any, candidates: Sequence[np.ndarray], description: str) -> int:
        if self.calls >= len(self.indices):
            raise NoCandidates("scripted selector has no more answers")
        idx = self.indices[self.calls]
        self.calls += 1
        return idx


class LabelSelector:
    """Picks the candidate whose label matches the component's ``(object, part)``.

    ``labels[i]`` names the part candidate ``i`` was generated from.
    """

    def __init__(self, labels: Sequence[tuple[str, str]]):
        self.labels = [tuple(x) for x in labels]

    def select(self, image: Any, candidates: Sequence[np.ndarray], description: str) -> int:
        from .constraints import parse_ref

        key = parse_ref(description).key
        try:
            return self.labels.index(key)
        except ValueError:
            raise NoCandidates(f"no candidate labeled {key}") from None


def parse_component(image: Any, depth, intrinsics: CameraIntrinsics, ref: GeometricComponentRef,
                    provider: MaskProvider, selector: MaskSelector) -> np.ndarray:
    candidates = provider.propose(image)
    if not candidates:
        raise NoCandidates("mask provider returned no candidates")
    idx = selector.select(image, candidates, ref.text())
    if not 0 <= idx < len(candidates):
        raise NoCandidates(f"selector chose {idx} out of {len(candidates)} candidates")
    processed = process_mask(candidates[idx], ref.geometry)
    if not processed.any():
        raise EmptyProcessedMask(f"processing {ref.geometry!r} left an empty mask")
    return back_project(processed, depth, intrinsics)


# --------------------------------------------------------------------------
# synthetic rendering

@dataclass(frozen=True)
class Camera:
    intrinsics: CameraIntrinsics
    pose: RigidTransform  # camera-to-world; camera looks along +z, x right, y down
    width: int
    height: int

    @classmethod
    def look_at(cls, eye, target, width: int = 320, height: int = 240, fov_deg: float = 60.0) -> "Camera":
        eye, target = np.asarray(eye, float), np.asarray(target, float)
        z = target - eye
        z /= np.linalg.norm(z)
        x = np.cross(z, [0.0, 0.0, 1.0])
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        f = 0.5 * width / math.tan(math.radians(fov_deg) / 2)
        K = CameraIntrinsics(f, f, (width - 1) / 2, (height - 1) / 2)
        return cls(K, RigidTransform(np.column_stack([x, y, z]), eye), width, height)


DEFAULT_CAMERA = dict(eye=(0.0, -0.9, 0.75), target=(0.0, 0.1, 0.1))


@dataclass
class Rendering:
    depth: np.ndarray
    labels: np.ndarray  # 0 = background, i + 1 = part_keys[i]
    part_keys: list[tuple[str, str]]
    camera: Camera
    part_clouds: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)

    @property
    def image(self) -> np.ndarray:
        """8-bit grayscale shading by depth; stands in for the RGB frame."""
        d = self.depth
        out = np.zeros(d.shape, dtype=np.uint8)
        valid = np.isfinite(d) & (d > 0)
        if valid.any():
            lo, hi = d[valid].min(), d[valid].max()
            out[valid] = (255 - 200 * (d[valid] - lo) / max(hi - lo, 1e-9)).astype(np.uint8)
        return out

    def masks(self) -> list[np.ndarray]:
        return [self.labels == i + 1 for i in range(len(self.part_keys))]

    def visible_keys(self, min_pixels: int = 3) -> list[tuple[str, str]]:
        return [k for i, k in enumerate(self.part_keys) if int((self.labels == i + 1).sum()) >= min_pixels]


def _ray_box(o, d, half):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (-half - o) * inv
        t2 = (half - o) * inv
    tmin = np.nanmax(np.minimum(t1, t2), axis=1)
    tmax = np.nanmin(np.maximum(t1, t2), axis=1)
    hit = (tmax >= tmin) & (tmax > 0)
    t = np.where(tmin > 0, tmin, tmax)
    return np.where(hit, t, np.inf)


def _ray_cylinder(o, d, r, h):
    best = np.full(o.shape[0], np.inf)
    a = d[:, 0] ** 2 + d[:, 1] ** 2
    b = 2 * (o[:, 0] * d[:, 0] + o[:, 1] * d[:, 1])
    c = o[:, 0] ** 2 + o[:, 1] ** 2 - r * r
    disc = b * b - 4 * a * c
    ok = (a > 1e-15) & (disc >= 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    for sign in (-1.0, 1.0):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (-b + sign * sq) / (2 * a)
        z = o[:, 2] + t * d[:, 2]
        good = ok & (t > 0) & (np.abs(z) <= h / 2)
        best = np.where(good & (t < best), t, best)
    for zc in (-h / 2, h / 2):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (zc - o[:, 2]) / d[:, 2]
        x = o[:, 0] + t * d[:, 0]
        y = o[:, 1] + t * d[:, 1]
        good = np.isfinite(t) & (t > 0) & (x * x + y * y <= r * r)
        best = np.where(good & (t < best), t, best)
    return best


def _ray_plane(o, d, sx, sy):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -o[:, 2] / d[:, 2]
    x = o[:, 0] + t * d[:, 0]
    y = o[:, 1] + t * d[:, 1]
    good = np.isfinite(t) & (t > 0) & (np.abs(x) <= sx / 2) & (np.abs(y) <= sy / 2)
    return np.where(good, t, np.inf)


def render(scene, camera: Camera | None = None) -> Rendering:
    """Ray-cast the scene's primitives (segments are not rendered).

    Rays are ``t * ((u - cx)/fx, (v - cy)/fy, 1)`` in the camera frame, so the
    hit parameter ``t`` is the depth and the ground-truth part clouds are
    exactly what :func:`back_project` recovers from the labels.
    """
    camera = camera or Camera.look_at(**DEFAULT_CAMERA)
    K = camera.intrinsics
    v, u = np.mgrid[0:camera.height, 0:camera.width]
    dirs = np.column_stack([((u - K.cx) / K.fx).ravel(), ((v - K.cy) / K.fy).ravel(), np.ones(u.size)])
    depth = np.full(u.size, np.inf)
    labels = np.zeros(u.size, dtype=np.int32)
    keys: list[tuple[str, str]] = []
    for obj in scene.objects.values():
        joint = scene.joints.get(obj.name)
        J = joint.transform(joint.value) if joint is not None else RigidTransform.identity()
        for part in obj.parts.values():
            if part.shape == "segment":
                continue
            keys.append((obj.name, part.name))
            frame = J.compose(obj.pose.compose(part.pose))
            to_local = frame.inverse().compose(camera.pose)
            o = np.broadcast_to(to_local.translation, dirs.shape)
            dl = dirs @ to_local.rotation.T
            if part.shape == "box":
                t = _ray_box(o, dl, 0.5 * np.asarray(part.size))
            elif part.shape == "cylinder":
                t = _ray_cylinder(o, dl, *part.size)
            else:
                t = _ray_plane(o, dl, *part.size)
            closer = t < depth
            depth = np.where(closer, t, depth)
            labels = np.where(closer, len(keys), labels)
    depth[~np.isfinite(depth)] = 0.0
    depth = depth.reshape(camera.height, camera.width)
    labels = labels.reshape(camera.height, camera.width)
    result = Rendering(depth, labels, keys, camera)
    d_flat, l_flat = depth.ravel(), labels.ravel()
    for i, key in enumerate(keys):
        sel = l_flat == i + 1
        result.part_clouds[key] = dirs[sel] * d_flat[sel, None]
    return result


# --------------------------------------------------------------------------
# raster files

def write_pgm(path, array) -> Path:
    a = np.asarray(array)
    if a.dtype == bool:
        a = a.astype(np.uint8) * 255
    maxval = 65535 if a.dtype == np.uint16 or a.max(initial=0) > 255 else 255
    a = a.astype(">u2" if maxval > 255 else np.uint8)
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(f"P5\n{a.shape[1]} {a.shape[0]}\n{maxval}\n".encode())
        fh.write(a.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise ValueError(f"{path} is not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    dtype = np.dtype(">u2" if maxval > 255 else np.uint8)
    return np.frombuffer(data[pos + 1:pos + 1 + w * h * dtype.itemsize], dtype=dtype).reshape(h, w).astype(
        np.uint16 if maxval > 255 else np.uint8)


def write_depth_mm(path, depth_m) -> Path:
    d = np.asarray(depth_m, dtype=float)
    mm = np.where(np.isfinite(d) & (d > 0), np.round(d * 1000.0), 0).clip(0, 65535).astype(np.uint16)
    return write_pgm(path, mm)


def read_depth_mm(path) -> np.ndarray:
    return read_pgm(path).astype(float) / 1000.0


def read_mask(path) -> np.ndarray:
    return read_pgm(path) > 0
