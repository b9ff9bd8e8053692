"""Hard-instance families from the minimax lower-bound constructions.

Three families over the radius-sqrt(2) sphere: manifold perturbation (MP)
adds height bumps to the middle-band chart; density perturbation (DP) adds
zero-mean bumps to the band latent density; the Le Cam pair (LM) tilts the
latent density by a separable odd bump with amplitude c/sqrt(n).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AmplitudeError, PackingFail
from .maps import BandLatent, PerturbedLatent, SphereChartMap
from .mixture import ChartMeasure, ChartPiece, RejectionMixture, SphereTruth, sphere_truth
from .rng import generator

__all__ = ["bump_kernels", "packing_codes", "PackingCodes", "hard_instance", "HardInstance"]


# ---------------------------------------------------------------------------
# bump kernels
# ---------------------------------------------------------------------------

class _PQTerms:
    """Sum of c * t^p * (1-t)^q on (0,1); closed under differentiation."""

    def __init__(self, terms):
        self.terms = list(terms)

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        inside = (t > 0.0) & (t < 1.0)
        ts = np.where(inside, t, 0.5)
        out = np.zeros_like(ts)
        for c, p, q in self.terms:
            out += c * ts ** p * (1.0 - ts) ** q
        return np.where(inside, out, 0.0)

    def diff(self):
        new = []
        for c, p, q in self.terms:
            if p != 0:
                new.append((c * p, p - 1.0, q))
            if q != 0:
                new.append((-c * q, p, q - 1.0))
        return _PQTerms(new)


def bump_kernel_terms(smoothness: float) -> _PQTerms:
    """(1-t)^(s+1) t^(s+1) as a differentiable term sum."""
    return _PQTerms([(1.0, smoothness + 1.0, smoothness + 1.0)])


def bump_kernels(kind: str, smoothness: float, t, halfwidth: float | None = None):
    """Localized bump kernels of the lower-bound constructions.

    kind="k": (1-t)^(s+1) t^(s+1) on (0,1).
    kind="ktilde": (1-t)^(s+1) t^(s+1) (t - 1/2) on (0,1); integrates to 0.
    kind="kbar": (h-z)^(s+1) (z+h)^(s+1) z on [-h, h] with h = halfwidth
    (default sqrt(1/2), i.e. d = 1); odd, so it integrates to 0.
    """
    if smoothness <= 0:
        raise ValueError("smoothness parameter must be positive")
    t = np.asarray(t, dtype=np.float64)
    s = smoothness
    if kind == "k":
        inside = (t > 0.0) & (t < 1.0)
        ts = np.where(inside, t, 0.5)
        out = (1.0 - ts) ** (s + 1.0) * ts ** (s + 1.0)
        res = np.where(inside, out, 0.0)
    elif kind == "ktilde":
        inside = (t > 0.0) & (t < 1.0)
        ts = np.where(inside, t, 0.5)
        out = (1.0 - ts) ** (s + 1.0) * ts ** (s + 1.0) * (ts - 0.5)
        res = np.where(inside, out, 0.0)
    elif kind == "kbar":
        h = halfwidth if halfwidth is not None else np.sqrt(0.5)
        inside = (t > -h) & (t < h)
        ts = np.where(inside, t, 0.0)
        out = (h - ts) ** (s + 1.0) * (ts + h) ** (s + 1.0) * ts
        res = np.where(inside, out, 0.0)
    else:
        raise ValueError(f"unknown kernel kind {kind!r}")
    return res if res.ndim else float(res)


# ---------------------------------------------------------------------------
# two-sided packing codes
# ---------------------------------------------------------------------------

@dataclass
class PackingCodes:
    """Two-sided packing family plus its complement expansion.

    base: codes with pairwise Hamming distance in [cells/4, 3 cells/4] and
    log(len(base)) >= cells/8 - log 2 (capped at max_codes for large cells;
    the cap is recorded). codes: base plus elementwise complements, so each
    fixed cell carries a 1 in exactly half of them. Complement pairs sit at
    distance cells, so only the lower distance side holds on `codes`.
    """

    cells: int
    base: np.ndarray
    codes: np.ndarray
    target: int
    cap: int

    def __iter__(self):
        return iter(self.codes)


def packing_codes(cells: int, seed: int, max_codes: int = 2048,
                  max_proposals: int | None = None) -> PackingCodes:
    """Randomized greedy search for a two-sided Varshamov-Gilbert family."""
    if cells < 8:
        raise ValueError("need cells >= 8")
    target_exact = np.exp(cells / 8.0) / 2.0
    target = int(min(np.ceil(target_exact), max_codes))
    lo, hi = cells / 4.0, 3.0 * cells / 4.0
    rng = generator(seed)
    kept = np.zeros((0, cells), dtype=np.int8)
    budget = max_proposals if max_proposals is not None else 2000 + 400 * target
    used = 0
    while len(kept) < target and used < budget:
        batch = min(256, budget - used)
        cand = (rng.uniform(size=(batch, cells)) < 0.5).astype(np.int8)
        used += batch
        if len(kept):
            ones_k = kept.sum(axis=1)
            ones_c = cand.sum(axis=1)
            agree = cand @ kept.T
            dist = ones_c[:, None] + ones_k[None, :] - 2 * agree
            ok = np.all((dist >= lo) & (dist <= hi), axis=1)
            cand = cand[ok]
        for row in cand:
            if len(kept) >= target:
                break
            if len(kept):
                d = np.sum(row[None, :] != kept, axis=1)
                if np.any((d < lo) | (d > hi)):
                    continue
            kept = np.vstack([kept, row[None, :]])
    if len(kept) < target:
        raise PackingFail(
            f"greedy packing reached {len(kept)} of {target} codes in {used} proposals",
            achieved=len(kept),
        )
    expanded = np.vstack([kept, 1 - kept])
    return PackingCodes(cells=cells, base=kept, codes=expanded, target=target, cap=max_codes)


# ---------------------------------------------------------------------------
# bump fields over the band chart
# ---------------------------------------------------------------------------

class BumpField:
    """sum over grid cells of code_xi * prod_i k(m sqrt(d/2) z_i + m/2 - xi_i).

    Cells live on the d-dimensional grid [1, m]^d; the support of each bump
    is a cube of width (1/m) sqrt(2/d) inside the ball of radius 3/4.
    """

    def __init__(self, d: int, m: int, code: np.ndarray, kernel: _PQTerms):
        self.d = d
        self.m = m
        self.code = np.asarray(code).reshape((m,) * d)
        self.kernel = kernel
        self.slope = m * np.sqrt(d / 2.0)
        self.shift = m / 2.0

    def _cell_frac(self, z: np.ndarray):
        """Map points to (cell index xi per axis, kernel argument)."""
        u = self.slope * np.atleast_2d(z) + self.shift  # bump xi covers u in (xi, xi+1)
        xi = np.floor(u).astype(np.int64)
        frac = u - xi
        return xi, frac

    def __call__(self, z, kernel: _PQTerms | None = None) -> np.ndarray:
        ker = kernel or self.kernel
        z = np.atleast_2d(z)
        xi, frac = self._cell_frac(z)
        inside = np.all((xi >= 1) & (xi <= self.m), axis=1)
        out = np.zeros(len(z))
        if np.any(inside):
            idx = tuple((xi[inside, ax] - 1) for ax in range(self.d))
            w = self.code[idx].astype(np.float64)
            val = np.ones(inside.sum())
            for ax in range(self.d):
                val = val * ker(frac[inside, ax])
            out[inside] = w * val
        return out

    def partial(self, multi_index) -> callable:
        """Exact partial derivative (chain rule brings slope^|a| factors)."""
        kers = []
        factor = 1.0
        for ax, order in enumerate(multi_index):
            ker = self.kernel
            for _ in range(int(order)):
                ker = ker.diff()
                factor *= self.slope
            kers.append(ker)

        def deriv(z):
            z = np.atleast_2d(z)
            xi, frac = self._cell_frac(z)
            inside = np.all((xi >= 1) & (xi <= self.m), axis=1)
            out = np.zeros(len(z))
            if np.any(inside):
                idx = tuple((xi[inside, ax] - 1) for ax in range(self.d))
                w = self.code[idx].astype(np.float64)
                val = np.full(inside.sum(), factor)
                for ax in range(self.d):
                    val = val * kers[ax](frac[inside, ax])
                out[inside] = w * val
            return out

        return deriv


class PerturbedSphereChart:
    """Middle-band chart with a height perturbation m^(-beta) * bump field."""

    def __init__(self, d: int, D: int, beta: float, field: BumpField):
        self.dim_in = d
        self.dim_out = D
        self.smoothness = beta
        self.holder_radius = None
        self.base = SphereChartMap(d, D)
        self.field = field
        self.amp = float(field.m) ** (-beta)

    def __call__(self, z) -> np.ndarray:
        out = self.base(z)
        out[:, self.dim_in] += self.amp * self.field(z)
        return out

    def partial(self, multi_index):
        base_d = self.base.partial(multi_index)
        bump_d = self.field.partial(multi_index)

        def deriv(z):
            out = base_d(z)
            out[:, self.dim_in] = out[:, self.dim_in] + self.amp * bump_d(z)
            return out

        return deriv


# ---------------------------------------------------------------------------
# instance assembly
# ---------------------------------------------------------------------------

@dataclass
class HardInstance:
    """A constructed hard instance with sampler and quadrature oracle."""

    family: str
    code: np.ndarray | None
    m: int
    params: dict
    mixture: RejectionMixture
    measure: ChartMeasure
    null_mixture: RejectionMixture | None = None
    null_measure: ChartMeasure | None = None

    def code_rows(self):
        return [] if self.code is None else [int(v) for v in np.asarray(self.code).ravel()]


def _amplitude_ladder(base_density, perturbation_at, start: float,
                      probe: np.ndarray, floor: float = 1e-6,
                      extra_ok=None) -> float:
    """Largest start * 2^-k keeping density >= floor on the probe grid."""
    dens0 = base_density(probe)
    shape = perturbation_at(probe)
    amp = start
    for _ in range(60):
        if np.min(dens0 + amp * shape) >= floor and (extra_ok is None or extra_ok(amp)):
            return amp
        amp *= 0.5
    raise AmplitudeError("no admissible amplitude on the ladder")


def _band_pieces(truth: SphereTruth, band_map, band_latent, lip_extra: float = 0.0):
    lip_cap = np.sqrt(2.0) * 3.0 * np.pi / 4.0
    return [
        ChartPiece(band_map, band_latent, truth.w_band, np.sqrt(2.0) + lip_extra),
        ChartPiece(truth.cap_map, truth.cap_latent, truth.w_caps, lip_cap),
    ]


def hard_instance(family: str, **params) -> HardInstance:
    """Build an MP, DP, or LM hard instance over the sphere truth.

    MP(code, beta, n, d, D, b=9): height bumps m^(-beta) psi_xi on the band
    chart, m = floor(b n^(1/d)).
    DP(code, alpha, n, d, D, b=9, b0=None): latent density perturbation
    b0 mtilde^(-alpha) sum_xi omega_xi psi~_xi, mtilde = floor(b n^(1/(2 alpha + d))).
    LM(n, d, D, gamma, alpha, c=None): the Le Cam pair; chi-square distance
    from the tilted to the uniform model is at most 1/n.
    """
    fam = family.upper()
    d = int(params.get("d", 1))
    D = int(params.get("D", d + 2))
    truth = sphere_truth(d, D)
    if fam == "MP":
        beta = float(params["beta"])
        n = int(params["n"])
        b = float(params.get("b", 9.0))
        m = int(np.floor(b * n ** (1.0 / d)))
        code = np.asarray(params["code"], dtype=np.int8).reshape((m,) * d)
        field = BumpField(d, m, code, bump_kernel_terms(beta))
        chart = PerturbedSphereChart(d, D, beta, field)
        mix = RejectionMixture(
            np.array([truth.w_band, truth.w_caps]),
            [(chart, truth.band_latent), (truth.cap_map, truth.cap_latent)],
        )
        # height bumps raise the chart Lipschitz constant by amp * m * |k'|
        lip_extra = float(m ** (1.0 - beta)) * 2.0 * np.sqrt(d / 2.0)
        meas = ChartMeasure(_band_pieces(truth, chart, truth.band_latent, lip_extra), D)
        return HardInstance(fam, code, m, params, mix, meas,
                            truth.mixture, truth.measure)
    if fam == "DP":
        alpha = float(params["alpha"])
        gamma = float(params.get("gamma", 0.0))
        n = int(params["n"])
        b = float(params.get("b", 9.0))
        mt = int(np.floor(b * n ** (1.0 / (2.0 * alpha + d))))
        code = np.asarray(params["code"], dtype=np.int8).reshape((mt,) * d)
        s = max(alpha, gamma)
        ktilde = _PQTerms([(1.0, s + 2.0, s + 1.0), (-0.5, s + 1.0, s + 1.0)])
        field = BumpField(d, mt, code, ktilde)
        shape_amp = float(mt) ** (-alpha)
        probe = _probe_grid(d)
        if params.get("b0") is None:
            b0 = _amplitude_ladder(
                truth.band_latent.density, lambda z: shape_amp * field(z), 1.0, probe
            )
        else:
            b0 = float(params["b0"])
            if np.min(truth.band_latent.density(probe) + b0 * shape_amp * field(probe)) < 0.0:
                raise AmplitudeError("b0 makes the latent density negative")
        ratio = float(np.max(np.abs(b0 * shape_amp * field(probe)) / truth.band_latent.density(probe)))
        latent = PerturbedLatent(
            truth.band_latent, lambda z: b0 * shape_amp * field(z),
            ratio_bound=min(ratio * 1.02, 0.999), smoothness=alpha,
        )
        mix = RejectionMixture(
            np.array([truth.w_band, truth.w_caps]),
            [(truth.band_map, latent), (truth.cap_map, truth.cap_latent)],
        )
        meas = ChartMeasure(_band_pieces(truth, truth.band_map, latent), D)
        inst = HardInstance(fam, code, mt, dict(params, b0=b0), mix, meas,
                            truth.mixture, truth.measure)
        return inst
    if fam == "LM":
        n = int(params["n"])
        alpha = float(params.get("alpha", 1.0))
        gamma = float(params.get("gamma", 1.0))
        s = max(alpha, gamma)
        h = np.sqrt(1.0 / (2.0 * d))

        def shape(z):
            z = np.atleast_2d(z)
            out = np.ones(len(z))
            for ax in range(d):
                out = out * bump_kernels("kbar", s, z[:, ax], halfwidth=h)
            return out

        probe = _probe_grid(d)
        if params.get("c") is None:
            c = _amplitude_ladder(
                truth.band_latent.density, lambda z: shape(z) / np.sqrt(n), 1.0, probe,
                extra_ok=lambda amp: lm_chi_square(truth, shape, amp / np.sqrt(n), d) <= 1.0 / n,
            )
        else:
            c = float(params["c"])
            if np.min(truth.band_latent.density(probe) + (c / np.sqrt(n)) * shape(probe)) < 0.0:
                raise AmplitudeError("c makes the latent density negative")
        amp = c / np.sqrt(n)
        ratio = float(np.max(np.abs(amp * shape(probe)) / truth.band_latent.density(probe)))
        latent = PerturbedLatent(
            truth.band_latent, lambda z: amp * shape(z),
            ratio_bound=min(ratio * 1.02, 0.999), smoothness=alpha,
        )
        mix = RejectionMixture(
            np.array([truth.w_band, truth.w_caps]),
            [(truth.band_map, latent), (truth.cap_map, truth.cap_latent)],
        )
        meas = ChartMeasure(_band_pieces(truth, truth.band_map, latent), D)
        return HardInstance(fam, None, 0, dict(params, c=c), mix, meas,
                            truth.mixture, truth.measure)
    raise ValueError(f"unknown hard-instance family {family!r}")


def _probe_grid(d: int, per_axis: int = 241) -> np.ndarray:
    axes = [np.linspace(-1.0, 1.0, per_axis)] * d
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    return grid[np.linalg.norm(grid, axis=1) < 1.0]


def lm_chi_square(truth: SphereTruth, shape, amp: float, d: int, panels: int = 400) -> float:
    """Exact-quadrature chi-square distance between the LM pair.

    d_chi2(mu1, mu0) = w_band * int (amp shape)^2 / nu0 over the bump cube.
    """
    h = np.sqrt(1.0 / (2.0 * d))
    nodes, wts = np.polynomial.legendre.leggauss(8)
    edges = np.linspace(-h, h, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    x1 = (mid[:, None] + half * nodes[None, :]).ravel()
    w1 = np.tile(half * wts, panels)
    if d == 1:
        pts = x1.reshape(-1, 1)
        ww = w1
    elif d == 2:
        pts = np.stack([np.repeat(x1, len(x1)), np.tile(x1, len(x1))], axis=1)
        ww = np.outer(w1, w1).ravel()
    else:
        raise ValueError("chi-square quadrature supports d <= 2")
    dens = truth.band_latent.density(pts)
    val = (amp * shape(pts)) ** 2 / dens
    return float(truth.w_band * np.dot(val, ww))
