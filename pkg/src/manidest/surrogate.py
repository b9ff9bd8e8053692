"""The three-part surrogate functional for localized expectations.

Per active component: a low-frequency piece (projected discriminator
averaged at chart-reconstructed sample points), a high-frequency piece
(integral of the projection complement against the truncated latent
density pushed through the chart), and a smoothness correction (Taylor
terms in the reconstruction displacement up to the discriminator's
integer smoothness). Components below the activity threshold contribute
exactly zero.

Two evaluation routes exist: a generic one for arbitrary function oracles
with derivative callbacks, and a table route that evaluates the surrogate
on an entire discriminator dictionary in a few vectorized passes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .charts import FittedChart, PolyChartClass, active_set, fit_chart, split
from .density import TruncatedDensity, build_truncated_density, truncation_level
from .errors import MissingDerivatives
from .geometry import Cover, PartitionOfUnity, build_partition, sphere_cover
from .ipm import DiscriminatorBudget, pick_family
from .maps import monomial_exponents
from .rng import child_seed
from .wavelets import (
    BasisTable,
    WaveletFamily,
    _accumulate_levels,
    cloud_table,
    family,
    project,
)

__all__ = ["SurrogateConfig", "Surrogate", "build_surrogate",
           "j_low", "j_high", "j_smooth", "j_total", "DictionaryFunction"]


@dataclass
class SurrogateConfig:
    """Problem smoothness, geometry, and optimization budgets."""

    alpha: float
    beta: float
    gamma: float
    d: int
    D: int
    L: float = 10.0
    cover: Cover | None = None
    seed: int = 0
    fit_iters: int = 50
    fit_restarts: int = 5
    latent_order: int = 6
    ambient_order: int | None = None
    validate_cover: bool = True
    quad_per_wavelength: float = 2.0
    quad_order: int = 5

    def __post_init__(self):
        if not (0.0 <= self.alpha <= self.beta - 1.0):
            raise ValueError("need 0 <= alpha <= beta - 1")
        if self.beta <= 1.0 or self.gamma < 0.0 or self.d >= self.D:
            raise ValueError("need beta > 1, gamma >= 0, d < D")
        if self.cover is None:
            self.cover = sphere_cover(self.d, self.D)

    def chart_class(self) -> PolyChartClass:
        return PolyChartClass(int(np.floor(self.beta)), self.L, self.d, self.D)

    def ambient_family(self) -> WaveletFamily:
        if self.ambient_order is not None:
            return family(self.ambient_order)
        return pick_family(self.gamma, self.D,
                           needs_derivative=int(np.floor(self.gamma)) >= 1)

    def latent_family(self) -> WaveletFamily:
        fam = family(self.latent_order)
        fam.check_admissible(self.alpha, self.d)
        return fam


class Surrogate:
    """Fitted surrogate state over the active components."""

    def __init__(self, cfg: SurrogateConfig, n: int, pou: PartitionOfUnity,
                 split_idx, active, p_hat, charts, latents, X2, rho2):
        self.cfg = cfg
        self.n = n
        self.pou = pou
        self.split = split_idx
        self.active = list(active)
        self.p_hat = p_hat
        self.charts: dict[int, FittedChart] = charts
        self.latents: dict[int, TruncatedDensity] = latents
        self.X2 = X2
        self.rho2 = rho2
        self.J = truncation_level(n, cfg.alpha, cfg.d)
        self.J_of = {m: latents[m].J for m in self.active}
        self._recon: dict[int, np.ndarray] = {}
        self._keep: dict[int, np.ndarray] = {}
        self._zbox: dict[int, tuple] = {}
        self._zrange: dict[int, tuple] = {}
        self._lip: dict[int, float] = {}
        for m in self.active:
            keep = rho2[:, m] > 0.0
            recon = charts[m].reconstruct(X2[keep])
            ok = np.all(np.abs(recon) < 64.0, axis=1)
            keep_idx = np.where(keep)[0][ok]
            self._keep[m] = keep_idx
            self._recon[m] = recon[ok]
            z = charts[m].Q(X2[keep_idx])
            self._zrange[m] = (z.min(axis=0), z.max(axis=0))
            self._zbox[m] = (z.min(axis=0) - 1.0, z.max(axis=0) + 1.0)

    @property
    def n2(self) -> int:
        return len(self.X2)

    def displacement(self, m: int) -> np.ndarray:
        return self._recon[m] - self.X2[self._keep[m]]

    def latent_box(self, m: int):
        """Integration domain for the high-frequency piece: the observed
        latent range with a two-lattice-unit pad (the truncated density's
        scaling tails beyond carry negligible rho-weighted mass, and the
        polynomial chart is meaningless there)."""
        return self._zbox[m]

    def chart_lipschitz(self, m: int) -> float:
        """Chart derivative bound over the observed latent range (the
        polynomial extrapolates arbitrarily beyond it)."""
        if m not in self._lip:
            lo, hi = self._zrange[m]
            grid = np.linspace(0, 1, 33)[:, None] * (hi - lo)[None, :] + lo[None, :]
            total = np.zeros(len(grid))
            G = self.charts[m].G
            for ax in range(self.cfg.d):
                e = np.zeros(self.cfg.d, dtype=np.int64)
                e[ax] = 1
                dv = G.partial(e)(grid)
                total += np.sum(dv * dv, axis=1)
            self._lip[m] = float(np.sqrt(total.max()))
        return self._lip[m]


def build_surrogate(X: np.ndarray, cfg: SurrogateConfig, charts: dict | None = None,
                    presplit=None, latent_J: dict | None = None) -> Surrogate:
    """Split, select active components, fit charts, estimate latents.

    Pre-fitted charts, a fixed split, or per-component latent truncation
    levels can be injected (the adaptive wrapper reuses chart fits across
    its smoothness grid this way).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = len(X)
    pou = build_partition(cfg.cover) if cfg.validate_cover else PartitionOfUnity(cfg.cover)
    spl = presplit if presplit is not None else split(n, child_seed(cfg.seed, "split"))
    X1, X2 = X[spl.I1], X[spl.I2]
    active, p_hat = active_set(X1, cfg.cover, n, cfg.L)
    rho2 = pou.raw_weights(X2)
    total = rho2.sum(axis=1, keepdims=True)
    rho2 = np.divide(rho2, total, out=np.zeros_like(rho2), where=total > 0)
    chart_class = cfg.chart_class()
    fitted, latents = {}, {}
    dist1 = cfg.cover.distances(X1)
    J_default = truncation_level(n, cfg.alpha, cfg.d)
    lat_fam = cfg.latent_family()
    for m in active:
        if charts is not None and m in charts:
            fitted[m] = charts[m]
        else:
            mask = dist1[:, m] <= cfg.cover.radii[m] + 0.5 / cfg.L
            fitted[m] = fit_chart(X1[mask], chart_class, child_seed(cfg.seed, "fit", m),
                                  iters=cfg.fit_iters, restarts=cfg.fit_restarts)
        zi = fitted[m].Q(X2)
        Jm = latent_J.get(m, J_default) if latent_J else J_default
        latents[m] = build_truncated_density(zi, rho2[:, m], Jm, lat_fam,
                                             weight_id=f"rho[{m}]")
    return Surrogate(cfg, n, pou, spl, active, p_hat, fitted, latents, X2, rho2)


# ---------------------------------------------------------------------------
# generic function-oracle route
# ---------------------------------------------------------------------------

class DictionaryFunction:
    """A single budget dictionary function as a discriminator oracle."""

    def __init__(self, fam: WaveletFamily, index):
        from .wavelets import eval_basis
        self.fam = fam
        self.index = index
        self._eval = eval_basis

    def __call__(self, x):
        return self._eval(self.fam, self.index, np.atleast_2d(x))

    def partial(self, multi_index):
        a = np.asarray(multi_index, dtype=np.int64)
        if a.sum() != 1:
            raise MissingDerivatives("dictionary oracles expose first-order partials")
        ax = int(np.argmax(a))
        idx = self.index

        def deriv(x):
            pts = np.atleast_2d(x)
            s = idx.scale()
            norm = 1.0 if idx.j == 0 else 2.0 ** (idx.dim * (idx.j - 1) / 2.0)
            out = np.full(len(pts), norm)
            for axis in range(idx.dim):
                u = s * pts[:, axis] - idx.k[axis]
                mother = idx.j >= 1 and (idx.l >> axis) & 1
                if axis == ax:
                    out = out * (self.fam.dpsi(u) if mother else self.fam.dphi(u)) * s
                else:
                    out = out * (self.fam.psi(u) if mother else self.fam.phi(u))
            return out

        return deriv


def _ambient_box(surr: Surrogate):
    L = surr.cfg.cover.L
    pad = 1.0
    return (np.full(surr.cfg.D, -L - pad), np.full(surr.cfg.D, L + pad))


def _split_projection(surr: Surrogate, f, J: int):
    """(Pi_J f, Pi_J^perp f) for a generic oracle, or the exact split for a
    dictionary function."""
    if isinstance(f, DictionaryFunction):
        if f.index.j <= J:
            return f, (lambda pts: np.zeros(len(np.atleast_2d(pts))))
        return (lambda pts: np.zeros(len(np.atleast_2d(pts)))), f
    fam = surr.cfg.ambient_family()
    pi, perp, _exp = project(f, J, _ambient_box(surr), fam, dim=surr.cfg.D,
                             resolution=5 if surr.cfg.D > 1 else 8)
    return pi, perp


def j_low(surr: Surrogate, f, m: int) -> float:
    """Average of the projected discriminator at reconstructed points."""
    if m not in surr.active:
        return 0.0
    pi, _ = _split_projection(surr, f, surr.J_of[m])
    keep = surr._keep[m]
    vals = np.asarray(pi(surr._recon[m]), dtype=np.float64)
    return float(np.dot(vals, surr.rho2[keep, m]) / surr.n2)


def _latent_quad(surr: Surrogate, m: int, oscillation: float, order: int | None = None):
    lo, hi = surr.latent_box(m)
    lip = max(surr.chart_lipschitz(m), 1e-6)
    per_unit = max(4, int(np.ceil(surr.cfg.quad_per_wavelength * lip * oscillation)))
    order = order if order is not None else surr.cfg.quad_order
    nodes, wts = np.polynomial.legendre.leggauss(order)
    axes = []
    for ax in range(surr.cfg.d):
        panels = min(max(1, int(np.ceil((hi[ax] - lo[ax]) * per_unit))), 8192)
        edges = np.linspace(lo[ax], hi[ax], panels + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * (edges[1] - edges[0])
        axes.append(((mid[:, None] + half * nodes[None, :]).ravel(), np.tile(half * wts, panels)))
    if surr.cfg.d == 1:
        z = axes[0][0][:, None]
        w = axes[0][1]
    elif surr.cfg.d == 2:
        Z0, Z1 = np.meshgrid(axes[0][0], axes[1][0], indexing="ij")
        z = np.stack([Z0.ravel(), Z1.ravel()], axis=1)
        w = np.outer(axes[0][1], axes[1][1]).ravel()
    else:
        raise NotImplementedError("latent quadrature supports d <= 2")
    dens = surr.latents[m](z)
    return z, w * dens


def j_high(surr: Surrogate, f, m: int) -> float:
    """Integral of the projection complement through the chart against the
    truncated latent density."""
    if m not in surr.active:
        return 0.0
    _, perp = _split_projection(surr, f, surr.J_of[m])
    osc = 2.0 ** max(getattr(getattr(f, "index", None), "j", 6), 6)
    z, w = _latent_quad(surr, m, oscillation=float(osc))
    vals = np.asarray(perp(surr.charts[m].G(z)), dtype=np.float64)
    return float(np.dot(vals, w))


def j_smooth(surr: Surrogate, f, m: int) -> float:
    """Taylor correction in the reconstruction displacement, orders
    1..floor(gamma)."""
    if m not in surr.active:
        return 0.0
    top = int(np.floor(surr.cfg.gamma))
    if top < 1:
        return 0.0
    if not hasattr(f, "partial"):
        raise MissingDerivatives("smoothness correction needs derivative oracles")
    keep = surr._keep[m]
    Xk = surr.X2[keep]
    disp = surr.displacement(m)
    rho = surr.rho2[keep, m]
    total = 0.0
    for order in range(1, top + 1):
        for a in monomial_exponents(surr.cfg.D, order):
            if a.sum() != order:
                continue
            fac = 1.0
            for v in a:
                fac *= factorial(int(v))
            dv = np.asarray(f.partial(a)(Xk), dtype=np.float64)
            mono = np.prod(disp ** a[None, :], axis=1)
            total += float(np.dot(dv * mono, rho)) / fac
    return -total / surr.n2


def j_total(surr: Surrogate, f) -> float:
    """Sum of the per-component functional triples over the active set."""
    return float(sum(j_low(surr, f, m) + j_high(surr, f, m) + j_smooth(surr, f, m)
                     for m in surr.active))


# ---------------------------------------------------------------------------
# dictionary table route
# ---------------------------------------------------------------------------

def surrogate_table(surr: Surrogate, budget: DiscriminatorBudget,
                    components: list | None = None,
                    include_smooth: bool = True) -> BasisTable:
    """Evaluate the surrogate on the entire budget dictionary.

    Low-frequency levels come from reconstructed-point clouds, high levels
    from per-level latent quadrature, and the smoothness correction from
    derivative passes at the original points. Only first-order corrections
    are supported on this route (floor(gamma) <= 1); higher orders use the
    generic route.
    """
    fam = budget.family
    top = int(np.floor(surr.cfg.gamma))
    if top > 1:
        raise NotImplementedError("table route supports floor(gamma) <= 1")
    out = BasisTable(surr.cfg.D, budget.J_dict)
    comps = components if components is not None else surr.active
    # each component splits the dictionary at its own truncation level;
    # group components by level so every group costs one pass
    by_J: dict[int, list] = {}
    for m in comps:
        by_J.setdefault(surr.J_of[m], []).append(m)
    tabs = []
    for Jm, group in by_J.items():
        low = list(range(0, min(Jm, budget.J_dict) + 1))
        pts = np.concatenate([surr._recon[m] for m in group])
        rho = np.concatenate([surr.rho2[surr._keep[m], m] for m in group])
        tab = BasisTable(surr.cfg.D, budget.J_dict)
        _accumulate_levels(fam, pts, rho, budget.J_dict, float(surr.n2),
                           tab, deriv_axis=None, levels=low)
        tabs.append(tab)
        if Jm < budget.J_dict:
            # one quadrature cloud per component at the finest level's
            # resolution serves every high level
            clouds = []
            for m in group:
                z, w = _latent_quad(surr, m, oscillation=float(1 << (budget.J_dict - 1)))
                clouds.append((surr.charts[m].G(z), w))
            qpts = np.concatenate([c[0] for c in clouds])
            qwts = np.concatenate([c[1] for c in clouds])
            tab = BasisTable(surr.cfg.D, budget.J_dict)
            _accumulate_levels(fam, qpts, qwts, budget.J_dict, 1.0, tab,
                               deriv_axis=None, levels=list(range(Jm + 1, budget.J_dict + 1)))
            tabs.append(tab)
    if include_smooth and top >= 1:
        Xk = np.concatenate([surr.X2[surr._keep[m]] for m in comps])
        disp = np.concatenate([surr.displacement(m) for m in comps])
        rho = np.concatenate([surr.rho2[surr._keep[m], m] for m in comps])
        for ax in range(surr.cfg.D):
            tab = BasisTable(surr.cfg.D, budget.J_dict)
            _accumulate_levels(fam, Xk, -disp[:, ax] * rho, budget.J_dict,
                               float(surr.n2), tab, deriv_axis=ax)
            tabs.append(tab)
    for tab in tabs:
        out = out.add(tab)
    return out
