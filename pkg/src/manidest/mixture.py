"""Rejection-sampling mixtures of local generative models, and the exact
ground-truth models built from them.

A mixture draws a component from its weights, pushes a latent draw through
that component's map, and accepts with the partition weight at the output
point, retrying within the component until acceptance. Ground-truth models
additionally carry chart-based quadrature oracles so experiments can
compare estimators against exact expectations rather than reference
samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimError, RejectionStall
from .geometry import PartitionOfUnity, trivial_partition
from .maps import (
    BandLatent,
    PolarCapLatent,
    PolarCapMap,
    SphereChartMap,
    band_chart_mass,
    _sphere_area,
)
from .rng import child_seed, generator
from .wavelets import BasisTable, WaveletFamily, cloud_table

DEFAULT_MAX_TRIES = 10 ** 6


@dataclass
class RejectionMixture:
    """Weighted components (map, latent density) with acceptance weights.

    acceptance=None means every proposal is accepted (trivial partition).
    """

    weights: np.ndarray
    components: list
    acceptance: PartitionOfUnity | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be nonnegative and sum to one")
        dims_out = {m.dim_out for m, _ in self.components}
        if len(dims_out) != 1:
            raise DimError("components must share the ambient dimension")
        for m, lat in self.components:
            if m.dim_in != lat.dim:
                raise DimError("map input dim must match latent dim")
        if self.acceptance is not None and self.acceptance.M != len(self.components):
            raise DimError("acceptance partition must have one weight per component")

    @property
    def dim_out(self) -> int:
        return self.components[0][0].dim_out

    @property
    def dim_in(self) -> int:
        return self.components[0][0].dim_in

    def accept_prob(self, m: int, x: np.ndarray) -> np.ndarray:
        if self.acceptance is None:
            return np.ones(len(x))
        return self.acceptance.weights(x)[:, m]

    def sample_with_stats(self, n: int, seed: int, max_tries: int = DEFAULT_MAX_TRIES):
        """n i.i.d. draws plus (proposals, accepts) counters."""
        rng = generator(child_seed(seed, "cat"))
        counts = rng.multinomial(n, self.weights)
        out = np.empty((n, self.dim_out))
        proposals = accepts = 0
        pos = 0
        for m, need_total in enumerate(counts):
            need = int(need_total)
            if need == 0:
                continue
            gmap, latent = self.components[m]
            coin = generator(child_seed(seed, "accept", m))
            stall = 0
            batch_id = 0
            while need > 0:
                batch = max(128, min(2 * need, 1 << 16))
                batch_id += 1
                z = latent.sample(batch, child_seed(seed, "lat", m, batch_id))
                x = gmap(z)
                p = self.accept_prob(m, x)
                keep = coin.uniform(size=batch) < p
                got = int(keep.sum())
                proposals += batch
                accepts += got
                if got == 0:
                    stall += batch
                    if stall >= max_tries:
                        raise RejectionStall(f"component {m} accepted nothing in {stall} proposals")
                else:
                    stall = 0
                take = min(got, need)
                out[pos : pos + take] = x[keep][:take]
                pos += take
                need -= take
        return out, (proposals, accepts)

    def sample(self, n: int, seed: int, max_tries: int = DEFAULT_MAX_TRIES) -> np.ndarray:
        return self.sample_with_stats(n, seed, max_tries)[0]


def sample_mixture(model: RejectionMixture, n: int, seed: int,
                   max_tries: int = DEFAULT_MAX_TRIES) -> np.ndarray:
    """Draw n points from the mixture; deterministic given the seed."""
    if n < 1:
        raise ValueError("need n >= 1")
    return model.sample(n, seed, max_tries)


# ---------------------------------------------------------------------------
# chart-based quadrature oracles
# ---------------------------------------------------------------------------

def _gauss_panels(lo: float, hi: float, n_panels: int, order: int):
    nodes, wts = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    x = (mid[:, None] + half * nodes[None, :]).ravel()
    w = np.tile(half * wts, n_panels)
    return x, w


class ChartPiece:
    """One chart of a ground-truth measure: mass * (map push of density)."""

    def __init__(self, gmap, latent, mass: float, lipschitz: float):
        self.map = gmap
        self.latent = latent
        self.mass = mass
        self.lipschitz = lipschitz

    def quad_cloud(self, scale: float, order: int = 4, per_wavelength: float = 2.0,
                   min_panels: int = 8):
        """Ambient-weighted point cloud integrating this piece.

        Panel density resolves the ambient oscillation wavelength 1/scale
        mapped through the chart's Lipschitz constant.
        """
        d = self.latent.dim
        per_unit = max(min_panels, int(np.ceil(per_wavelength * self.lipschitz * scale)))
        if d == 1:
            z, w = _gauss_panels(-1.0, 1.0, 2 * per_unit, order)
            zz = z.reshape(-1, 1)
            wts = w * self.latent.density(zz)
        elif d == 2:
            # polar parametrization keeps the integrand smooth at the rim
            r, wr = _gauss_panels(0.0, 1.0, per_unit, order)
            a, wa = _gauss_panels(0.0, 2.0 * np.pi, int(np.ceil(np.pi * per_unit)), order)
            R, A = np.meshgrid(r, a, indexing="ij")
            zz = np.stack([(R * np.cos(A)).ravel(), (R * np.sin(A)).ravel()], axis=1)
            wts = (np.outer(wr, wa).ravel()) * R.ravel() * self.latent.density(zz)
        else:
            raise DimError("quadrature charts support latent dim <= 2")
        pts = self.map(zz)
        return pts, wts * self.mass


class ChartMeasure:
    """Ground-truth measure represented as a list of chart pieces, with an
    adaptive expectation oracle and dictionary-table support."""

    def __init__(self, pieces: list[ChartPiece], dim_out: int):
        self.pieces = pieces
        self.dim_out = dim_out
        self._table_cache: dict = {}

    def expect(self, f, tol: float = 1e-9, max_refine: int = 8) -> float:
        """E[f] for smooth f by panel-doubling quadrature to tolerance."""
        total_prev = None
        scale = 2.0
        for _ in range(max_refine):
            total = 0.0
            for piece in self.pieces:
                pts, wts = piece.quad_cloud(scale, order=6)
                total += float(np.dot(np.asarray(f(pts), dtype=np.float64), wts))
            if total_prev is not None and abs(total - total_prev) <= tol:
                return total
            total_prev = total
            scale *= 2.0
        return total_prev

    def _level_table(self, fam: WaveletFamily, j: int) -> BasisTable:
        key = (id(fam), "level", j)
        if key not in self._table_cache:
            from .wavelets import _accumulate_levels
            scale = 1.0 if j == 0 else float(1 << (j - 1))
            clouds = [p.quad_cloud(scale) for p in self.pieces]
            pts = np.concatenate([c[0] for c in clouds])
            wts = np.concatenate([c[1] for c in clouds])
            tab = BasisTable(self.dim_out, j)
            _accumulate_levels(fam, pts, wts, j, 1.0, tab, deriv_axis=None, levels=[j])
            self._table_cache[key] = tab
        return self._table_cache[key]

    def basis_table(self, fam: WaveletFamily, max_level: int) -> BasisTable:
        """Expectations of every dictionary function up to max_level.

        Levels are computed and cached independently, so budgets of
        different depths share the work.
        """
        out = BasisTable(self.dim_out, max_level)
        for j in range(max_level + 1):
            out.data.update(self._level_table(fam, j).data)
        return out


class SphereTruth:
    """Uniform distribution on a radius-sqrt(2) d-sphere embedded in R^D.

    Provides the exact Gaussian-normalization sampler, a chart quadrature
    oracle, and the two-chart mixture representation (middle band + caps).
    """

    def __init__(self, d: int, D: int):
        if not 1 <= d < D:
            raise DimError("need 1 <= d < D")
        self.d = d
        self.D = D
        area_total = (2.0 ** (d / 2.0)) * _sphere_area(d + 1)
        band_mass = band_chart_mass(d) / area_total
        self.w_band = band_mass
        self.w_caps = 1.0 - band_mass
        self.band_map = SphereChartMap(d, D)
        self.band_latent = BandLatent(d)
        self.cap_map = PolarCapMap(d, D)
        self.cap_latent = PolarCapLatent(d)
        self.mixture = RejectionMixture(
            np.array([self.w_band, self.w_caps]),
            [(self.band_map, self.band_latent), (self.cap_map, self.cap_latent)],
            acceptance=None,
        )
        lip = np.sqrt(2.0) * 3.0 * np.pi / 4.0
        self.measure = ChartMeasure(
            [
                ChartPiece(self.band_map, self.band_latent, self.w_band, np.sqrt(2.0)),
                ChartPiece(self.cap_map, self.cap_latent, self.w_caps, lip),
            ],
            dim_out=D,
        )

    def sample(self, n: int, seed: int) -> np.ndarray:
        """Exact sampler: normalize a (d+1)-dim Gaussian, scale, zero-pad."""
        rng = generator(seed)
        g = rng.standard_normal((n, self.d + 1))
        g *= np.sqrt(2.0) / np.linalg.norm(g, axis=1, keepdims=True)
        out = np.zeros((n, self.D))
        out[:, : self.d + 1] = g
        return out

    def expect(self, f, tol: float = 1e-9) -> float:
        return self.measure.expect(f, tol)

    def basis_table(self, fam: WaveletFamily, max_level: int) -> BasisTable:
        return self.measure.basis_table(fam, max_level)

    def coordinate_second_moment(self) -> float:
        """Exact E[x_i^2] for live coordinates: radius^2 / (d+1)."""
        return 2.0 / (self.d + 1)


def sphere_truth(d: int, D: int) -> SphereTruth:
    return SphereTruth(d, D)
