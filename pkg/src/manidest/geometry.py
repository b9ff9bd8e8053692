"""Ball covers of the working domain and the smooth partition of unity."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CoverGap

# chi(t) = exp(-1/t) underflows below the smallest positive normal; the
# cutoff keeps the evaluated function monotone within machine precision.
_CHI_CUTOFF = 1.0 / -np.log(np.finfo(np.float64).tiny)


def mollifier(t):
    """exp(-1/t) for t > 0 (with underflow cutoff), 0 for t <= 0."""
    t = np.asarray(t, dtype=np.float64)
    safe = np.where(t > _CHI_CUTOFF, t, 1.0)
    out = np.where(t > _CHI_CUTOFF, np.exp(-1.0 / safe), 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Cover:
    """Finite open ball cover of the closed working ball of radius L."""

    centers: np.ndarray
    radii: np.ndarray
    L: float

    def __post_init__(self):
        object.__setattr__(self, "centers", np.atleast_2d(np.asarray(self.centers, float)))
        object.__setattr__(self, "radii", np.asarray(self.radii, float))
        if len(self.centers) != len(self.radii) or len(self.radii) < 1:
            raise ValueError("need matching nonempty centers and radii")
        if np.any(self.radii <= 0):
            raise ValueError("radii must be positive")

    @property
    def M(self) -> int:
        return len(self.radii)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def distances(self, x: np.ndarray) -> np.ndarray:
        """(n, M) distances from points to ball centers."""
        x = np.atleast_2d(x)
        return np.linalg.norm(x[:, None, :] - self.centers[None, :, :], axis=2)

    def verify(self, spacing: float | None = None) -> None:
        """Grid check that the open balls jointly cover the closed ball B_L.

        Every grid point of B_L must lie strictly inside at least one ball.
        """
        spacing = spacing if spacing is not None else float(self.radii.min()) / 10.0
        n1 = int(np.ceil(2 * self.L / spacing)) + 1
        axes = [np.linspace(-self.L, self.L, n1)] * self.dim
        grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        grid = grid[np.linalg.norm(grid, axis=1) <= self.L]
        dist = self.distances(grid)
        uncovered = np.all(dist >= self.radii[None, :], axis=1)
        if np.any(uncovered):
            bad = grid[uncovered][0]
            raise CoverGap(f"grid point {bad} of B_L is not inside any ball")


class PartitionOfUnity:
    """Smooth weights subordinate to a ball cover, built from the mollifier.

    The unnormalized weight of ball m equals 1 on the half-radius ball and
    vanishes outside the full ball; normalization makes the weights sum to
    one wherever at least one ball is active.
    """

    def __init__(self, cover: Cover):
        self.cover = cover

    @property
    def M(self) -> int:
        return self.cover.M

    def raw_weights(self, x) -> np.ndarray:
        d = self.cover.distances(np.atleast_2d(x))
        r = self.cover.radii[None, :]
        num = mollifier(r - d)
        den = num + mollifier(d - r / 2.0)
        with np.errstate(invalid="ignore"):
            out = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), 0.0)
        return out

    def weights(self, x) -> np.ndarray:
        """(n, M) normalized weights; raises CoverGap off the covered set."""
        raw = self.raw_weights(x)
        total = raw.sum(axis=1)
        if np.any(total <= 0.0):
            bad = np.atleast_2d(x)[total <= 0.0][0]
            raise CoverGap(f"point {bad} carries zero total partition weight")
        return raw / total[:, None]

    def component(self, m: int, x) -> np.ndarray:
        return self.weights(x)[:, m]


def trivial_partition(dim: int, L: float) -> PartitionOfUnity:
    """Single-ball partition: weight identically 1 on the working domain."""
    return PartitionOfUnity(Cover(np.zeros((1, dim)), np.array([4.0 * max(L, 1.0)]), L))


def build_partition(cover: Cover, spacing: float | None = None) -> PartitionOfUnity:
    """Validate the cover on a probe grid and return its partition of unity."""
    cover.verify(spacing)
    return PartitionOfUnity(cover)


def sphere_cover(d: int, D: int, radius_factor: float = 1.6) -> Cover:
    """Two-ball north/south cover of the working ball containing the
    radius-sqrt(2) sphere used by the ground-truth models."""
    L = float(np.sqrt(2.0))
    pole = np.zeros(D)
    pole[d] = L
    centers = np.stack([pole, -pole])
    radii = np.full(2, radius_factor * L)
    return Cover(centers, radii, L)


def hex_cover(L: float, dim: int, spacing: float) -> Cover:
    """Overlapping grid cover of B_L with radius twice the grid spacing."""
    n1 = int(np.ceil(2 * L / spacing)) + 1
    axes = [np.linspace(-L, L, n1)] * dim
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    keep = np.linalg.norm(grid, axis=1) <= L + spacing
    return Cover(grid[keep], np.full(int(keep.sum()), 2.0 * spacing), L)
