"""Observation model: point clouds, shift estimation, and the Gram matrix.

n noisy copies of a latent d x m cloud A are observed as
A_i = O_i (A - mu_i 1^T) + sigma W_i.  After centering, recovering the O_i
reduces to maximizing <C, S S^T> over stacks of orthogonal blocks, where
C_ij = A_i A_j^T is the blockwise cross covariance.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linops import RotationStack


@dataclass(frozen=True)
class PointCloud:
    """A d x m real matrix whose columns are samples in R^d (m >= d+1)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=float))
        if pts.ndim != 2:
            raise ValueError(f"expected a d x m matrix, got shape {pts.shape}")
        d, m = pts.shape
        if d < 1 or m < d + 1:
            raise ValueError(f"need d >= 1 and m >= d+1, got d={d}, m={m}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud entries must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def d(self) -> int:
        return self.points.shape[0]

    @property
    def m(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class PointCloudSet:
    """n point clouds sharing the same (d, m)."""

    clouds: tuple

    def __post_init__(self):
        clouds = tuple(self.clouds)
        if len(clouds) < 2:
            raise ValueError("a cloud set needs n >= 2 clouds")
        d, m = clouds[0].d, clouds[0].m
        for i, c in enumerate(clouds):
            if (c.d, c.m) != (d, m):
                raise ValueError(
                    f"cloud {i} has shape ({c.d}, {c.m}), expected ({d}, {m})"
                )
        object.__setattr__(self, "clouds", clouds)

    @property
    def n(self) -> int:
        return len(self.clouds)

    @property
    def d(self) -> int:
        return self.clouds[0].d

    @property
    def m(self) -> int:
        return self.clouds[0].m


@dataclass(frozen=True)
class SyntheticInstance:
    """A generated instance with its ground truth retained.

    observed.clouds[i] = O_i (A - mu_i 1^T) + sigma * W_i, with the noise
    draws W_i stored so the instance reconstructs exactly from the seed.
    """

    truth: PointCloud
    rotations: RotationStack  # ground-truth blocks O_i
    shifts: tuple  # n vectors mu_i in R^d
    sigma: float
    observed: PointCloudSet
    seed: int
    noise: np.ndarray = field(repr=False)  # (n, d, m) standard draws W_i
    cloud_model: str = "uniform_cube"

    @property
    def n(self) -> int:
        return self.observed.n

    @property
    def d(self) -> int:
        return self.truth.d

    @property
    def m(self) -> int:
        return self.truth.m

    def noise_blocks(self) -> np.ndarray:
        """The realized noise Delta_i = observed_i - O_i (A - mu_i 1^T)."""
        return self.sigma * self.noise


@dataclass(frozen=True)
class GramMatrix:
    """The nd x nd block matrix C with C_ij the cross covariance of clouds i, j."""

    data: np.ndarray
    n: int
    d: int

    def __post_init__(self):
        data = np.ascontiguousarray(np.asarray(self.data, dtype=float))
        nd = self.n * self.d
        if data.shape != (nd, nd):
            raise ValueError(f"expected shape ({nd}, {nd}), got {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    def block(self, i: int, j: int) -> np.ndarray:
        d = self.d
        return self.data[i * d : (i + 1) * d, j * d : (j + 1) * d]


def center(cloud: PointCloud) -> PointCloud:
    """Remove the per-coordinate column mean: right-multiply by I - (1/m) 11^T."""
    pts = cloud.points
    return PointCloud(pts - pts.mean(axis=1, keepdims=True))


def estimate_shifts(clouds: PointCloudSet, rotations: RotationStack) -> list[np.ndarray]:
    """Per-cloud shift estimates given candidate rotations.

    Uses the joint closed form: the consensus cloud is the average of the
    de-rotated centered observations (which fixes the translation gauge at
    zero column mean), and mu_hat_i = (1/m)(A_hat - O_i^T A_i) 1.
    """
    if rotations.n != clouds.n or rotations.d != clouds.d or rotations.p != clouds.d:
        raise ValueError(
            f"rotation stack ({rotations.n} blocks of {rotations.d}x{rotations.p}) "
            f"does not match cloud set (n={clouds.n}, d={clouds.d})"
        )
    m = clouds.m
    derotated = [
        rotations.blocks[i].T @ clouds.clouds[i].points for i in range(clouds.n)
    ]
    consensus = sum(a - a.mean(axis=1, keepdims=True) for a in derotated) / clouds.n
    ones = np.ones(m)
    return [(consensus - derotated[i]) @ ones / m for i in range(clouds.n)]


def build_data_matrix(clouds: PointCloudSet) -> np.ndarray:
    """Stack the n clouds vertically into the nd x m matrix D."""
    return np.vstack([c.points for c in clouds.clouds])


def build_gram(clouds: PointCloudSet, center_first: bool = True) -> GramMatrix:
    """C = D D^T with D the (optionally centered) stacked data matrix.

    Centering realizes the cross covariance of centered clouds and is the
    right choice for registration inputs with unknown shifts; pre-centered
    synthetic benchmarks turn it off.
    """
    if center_first:
        mats = [center(c).points for c in clouds.clouds]
    else:
        mats = [c.points for c in clouds.clouds]
    d_mat = np.vstack(mats)
    data = d_mat @ d_mat.T
    data = 0.5 * (data + data.T)
    return GramMatrix(data=data, n=clouds.n, d=clouds.d)


# ---------------------------------------------------------------------------
# Text file format.
#
# Cloud record: first line "d m", then d lines of m space-separated decimals.
# Cloud-set file: header line "n", then n cloud records.  Values are written
# with shortest round-trip decimal formatting, so write -> read is exact.
# ---------------------------------------------------------------------------


def _format_matrix(mat: np.ndarray) -> list[str]:
    return [" ".join(repr(float(v)) for v in row) for row in mat]


def write_cloud(path, cloud: PointCloud) -> None:
    lines = [f"{cloud.d} {cloud.m}"] + _format_matrix(cloud.points)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_cloud(lines: list[str], pos: int) -> tuple[PointCloud, int]:
    header = lines[pos].split()
    if len(header) != 2:
        raise ValueError(f"line {pos + 1}: expected 'd m' header, got {lines[pos]!r}")
    d, m = int(header[0]), int(header[1])
    rows = []
    for r in range(d):
        vals = lines[pos + 1 + r].split()
        if len(vals) != m:
            raise ValueError(
                f"line {pos + 2 + r}: expected {m} values, got {len(vals)}"
            )
        rows.append([float(v) for v in vals])
    return PointCloud(np.array(rows)), pos + 1 + d


def read_cloud(path) -> PointCloud:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    cloud, _ = _parse_cloud(lines, 0)
    return cloud


def write_cloud_set(path, clouds: PointCloudSet) -> None:
    lines = [str(clouds.n)]
    for c in clouds.clouds:
        lines.append(f"{c.d} {c.m}")
        lines.extend(_format_matrix(c.points))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_cloud_set(path) -> PointCloudSet:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    n = int(lines[0])
    clouds = []
    pos = 1
    for _ in range(n):
        cloud, pos = _parse_cloud(lines, pos)
        clouds.append(cloud)
    return PointCloudSet(tuple(clouds))
