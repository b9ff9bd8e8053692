"""Generative maps and latent densities.

Maps expose a partial-derivative oracle up to their declared smoothness
order. Polynomial maps differentiate exactly through their monomial
exponents; the sphere charts differentiate through a tiny closed-under-
differentiation term calculus c * z^a * (q - |z|^2)^p.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .rng import generator

__all__ = [
    "monomial_exponents",
    "poly_features",
    "PolynomialMap",
    "SphereChartMap",
    "PolarCapMap",
    "UniformBall",
    "BandLatent",
    "PolarCapLatent",
    "PerturbedLatent",
    "ProductDensity",
]


def monomial_exponents(dim: int, degree: int) -> np.ndarray:
    """Exponent rows of all monomials in dim variables up to total degree."""
    rows = [np.zeros(dim, dtype=np.int64)]
    for k in range(1, degree + 1):
        for comb in combinations_with_replacement(range(dim), k):
            e = np.zeros(dim, dtype=np.int64)
            for j in comb:
                e[j] += 1
            rows.append(e)
    return np.stack(rows)


def poly_features(x: np.ndarray, exponents: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    out = np.ones((len(x), len(exponents)))
    for ax in range(x.shape[1]):
        col = x[:, ax]
        emax = int(exponents[:, ax].max())
        pows = np.ones((len(x), emax + 1))
        for p in range(1, emax + 1):
            pows[:, p] = pows[:, p - 1] * col
        out *= pows[:, exponents[:, ax]]
    return out


class PolynomialMap:
    """Polynomial map R^dim_in -> R^dim_out with exact derivative oracle."""

    def __init__(self, coeffs: np.ndarray, dim_in: int, dim_out: int, degree: int,
                 smoothness: float | None = None, holder_radius: float | None = None):
        self.exponents = monomial_exponents(dim_in, degree)
        self.coeffs = np.asarray(coeffs, dtype=np.float64).reshape(len(self.exponents), dim_out)
        self.dim_in = dim_in
        self.dim_out = dim_out
        self.degree = degree
        self.smoothness = smoothness if smoothness is not None else float(degree)
        self.holder_radius = holder_radius

    def __call__(self, z) -> np.ndarray:
        return poly_features(np.atleast_2d(z), self.exponents) @ self.coeffs

    def partial(self, multi_index) -> "PolynomialMap":
        a = np.asarray(multi_index, dtype=np.int64)
        exps = self.exponents
        factor = np.ones(len(exps))
        new_exps = exps - a[None, :]
        for ax in range(self.dim_in):
            e = exps[:, ax].astype(np.float64)
            for step in range(int(a[ax])):
                factor *= np.maximum(e - step, 0.0)
        valid = np.all(new_exps >= 0, axis=1)
        out = PolynomialMap.__new__(PolynomialMap)
        out.exponents = np.where(valid[:, None], new_exps, 0)
        out.coeffs = self.coeffs * np.where(valid, factor, 0.0)[:, None]
        out.dim_in = self.dim_in
        out.dim_out = self.dim_out
        out.degree = self.degree
        out.smoothness = self.smoothness
        out.holder_radius = self.holder_radius
        return out

    def coeff_norm(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    @classmethod
    def identity_like(cls, dim_in: int, dim_out: int, degree: int) -> "PolynomialMap":
        exps = monomial_exponents(dim_in, degree)
        C = np.zeros((len(exps), dim_out))
        for ax in range(min(dim_in, dim_out)):
            e = np.zeros(dim_in, dtype=np.int64)
            e[ax] = 1
            row = np.where(np.all(exps == e, axis=1))[0][0]
            C[row, ax] = 1.0
        return cls(C, dim_in, dim_out, degree)


class _RadialTerms:
    """Sum of terms c * z^a * (q - |z|^2)^p, closed under differentiation."""

    def __init__(self, terms, q: float):
        self.terms = list(terms)  # (c, a tuple, p)
        self.q = q

    def __call__(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z)
        rad = self.q - np.sum(z * z, axis=1)
        rad = np.maximum(rad, 0.0)
        out = np.zeros(len(z))
        for c, a, p in self.terms:
            v = np.full(len(z), c)
            for ax, e in enumerate(a):
                if e:
                    v = v * z[:, ax] ** e
            if p:
                v = v * rad ** p
            out += v
        return out

    def diff(self, axis: int) -> "_RadialTerms":
        new = []
        for c, a, p in self.terms:
            if a[axis] > 0:
                a2 = list(a)
                a2[axis] -= 1
                new.append((c * a[axis], tuple(a2), p))
            if p != 0:
                a2 = list(a)
                a2[axis] += 1
                new.append((-2.0 * c * p, tuple(a2), p - 1))
        return _RadialTerms(new, self.q)


class SphereChartMap:
    """Middle-band chart z -> (z, sqrt(2 - |z|^2), 0...) of the radius-
    sqrt(2) sphere, with exact partial derivatives of any requested order."""

    def __init__(self, d: int, D: int, smoothness: float = 3.0, holder_radius: float | None = None):
        self.dim_in = d
        self.dim_out = D
        self.smoothness = smoothness
        self.holder_radius = holder_radius
        self._height = _RadialTerms([(1.0, (0,) * d, 0.5)], q=2.0)

    def __call__(self, z) -> np.ndarray:
        z = np.atleast_2d(z)
        out = np.zeros((len(z), self.dim_out))
        out[:, : self.dim_in] = z
        out[:, self.dim_in] = self._height(z)
        return out

    def partial(self, multi_index):
        a = tuple(int(v) for v in multi_index)
        order = sum(a)
        h = self._height
        for ax, e in enumerate(a):
            for _ in range(e):
                h = h.diff(ax)

        def deriv(z):
            z = np.atleast_2d(z)
            out = np.zeros((len(z), self.dim_out))
            if order == 1:
                ax = a.index(1)
                out[:, ax] = 1.0
            out[:, self.dim_in] = h(z)
            return out

        return deriv


class PolarCapMap:
    """Chart of the complement cap region around the opposite pole.

    Maps the unit d-ball to the part of the radius-sqrt(2) sphere with
    polar angle (from the band pole) above pi/4, i.e. everything the
    middle-band chart does not carry.
    """

    def __init__(self, d: int, D: int, omega_max: float = 3.0 * np.pi / 4.0):
        self.dim_in = d
        self.dim_out = D
        self.omega_max = omega_max
        self.smoothness = 3.0
        self.holder_radius = None

    def __call__(self, z) -> np.ndarray:
        z = np.atleast_2d(z)
        t = np.linalg.norm(z, axis=1)
        w = self.omega_max * t
        # sin(w)/t -> omega_max as t -> 0
        sinc = np.where(t > 1e-12, np.sin(w) / np.where(t > 1e-12, t, 1.0), self.omega_max)
        out = np.zeros((len(z), self.dim_out))
        out[:, : self.dim_in] = np.sqrt(2.0) * sinc[:, None] * z
        out[:, self.dim_in] = -np.sqrt(2.0) * np.cos(w)
        return out

    partial = None  # sampling/quadrature chart only


# ---------------------------------------------------------------------------
# latent densities
# ---------------------------------------------------------------------------

def _ball_volume(d: int) -> float:
    from math import gamma, pi
    return pi ** (d / 2.0) / gamma(d / 2.0 + 1.0)


def _sphere_area(d: int) -> float:
    """Surface area of the unit sphere S^(d-1) in R^d."""
    from math import gamma, pi
    return 2.0 * pi ** (d / 2.0) / gamma(d / 2.0)


class UniformBall:
    """Uniform distribution on the closed unit ball of R^d."""

    def __init__(self, d: int, smoothness: float = np.inf):
        self.dim = d
        self.smoothness = smoothness
        self._dens = 1.0 / _ball_volume(d)

    def density(self, z) -> np.ndarray:
        z = np.atleast_2d(z)
        return np.where(np.linalg.norm(z, axis=1) <= 1.0, self._dens, 0.0)

    def sample(self, n: int, seed: int) -> np.ndarray:
        rng = generator(seed)
        u = rng.standard_normal((n, self.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = rng.uniform(0.0, 1.0, n) ** (1.0 / self.dim)
        return u * r[:, None]


class _RadialTableSampler:
    """Deterministic inverse-CDF radial sampler from a dense table."""

    def __init__(self, radial_pdf, d: int, grid: int = 4096):
        r = np.linspace(0.0, 1.0, grid + 1)
        w = radial_pdf(r) * r ** (d - 1)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(r))])
        self.r = r
        self.cdf = cdf / cdf[-1]
        self.d = d

    def sample_radius(self, u: np.ndarray) -> np.ndarray:
        return np.interp(u, self.cdf, self.r)


class BandLatent:
    """Latent density of the uniform sphere measure through the band chart:
    proportional to sqrt(2) / sqrt(2 - |z|^2) on the unit ball."""

    def __init__(self, d: int, smoothness: float = np.inf):
        self.dim = d
        self.smoothness = smoothness
        self.norm = band_chart_mass(d)
        self._radial = _RadialTableSampler(
            lambda r: np.sqrt(2.0) / np.sqrt(2.0 - np.clip(r, 0, 1.0) ** 2), d
        ) if d > 1 else None

    def density(self, z) -> np.ndarray:
        z = np.atleast_2d(z)
        r2 = np.sum(z * z, axis=1)
        inside = r2 <= 1.0
        val = np.sqrt(2.0) / np.sqrt(np.maximum(2.0 - r2, 1.0e-12)) / self.norm
        return np.where(inside, val, 0.0)

    def sample(self, n: int, seed: int) -> np.ndarray:
        rng = generator(seed)
        if self.dim == 1:
            # analytic inverse CDF: z = sqrt(2) sin(theta)
            a = np.arcsin(1.0 / np.sqrt(2.0))
            u = rng.uniform(-a, a, n)
            return (np.sqrt(2.0) * np.sin(u)).reshape(-1, 1)
        u = rng.standard_normal((n, self.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = self._radial.sample_radius(rng.uniform(0.0, 1.0, n))
        return u * r[:, None]


def band_chart_mass(d: int) -> float:
    """Integral of sqrt(2)/sqrt(2-|z|^2) over the unit ball of R^d."""
    r = np.linspace(0.0, 1.0, 20001)
    w = np.sqrt(2.0) / np.sqrt(2.0 - r ** 2) * r ** (d - 1)
    from scipy.integrate import simpson
    return float(_sphere_area(d) * simpson(w, x=r)) if d > 1 else float(2.0 * np.sqrt(2.0) * np.arcsin(1.0 / np.sqrt(2.0)))


class PolarCapLatent:
    """Latent density of the uniform sphere measure through the cap chart:
    proportional to (sin(w t)/t)^(d-1) * w with w = omega_max."""

    def __init__(self, d: int, omega_max: float = 3.0 * np.pi / 4.0):
        self.dim = d
        self.smoothness = np.inf
        self.omega_max = omega_max
        area = _sphere_area(d) if d > 1 else 2.0

        def radial(t):
            t = np.asarray(t, dtype=np.float64)
            w = omega_max * t
            sinc = np.where(t > 1e-12, np.sin(w) / np.where(t > 1e-12, t, 1.0), omega_max)
            return sinc ** (d - 1) * omega_max

        self._radial_fn = radial
        r = np.linspace(0.0, 1.0, 20001)
        from scipy.integrate import simpson
        vals = radial(r) * r ** (d - 1)
        self._norm_flat = float(simpson(vals, x=r) * (area if d > 1 else 2.0))
        self._radial = _RadialTableSampler(radial, d)

    def density(self, z) -> np.ndarray:
        z = np.atleast_2d(z)
        t = np.linalg.norm(z, axis=1)
        return np.where(t <= 1.0, self._radial_fn(t) / self._norm_flat, 0.0)

    def sample(self, n: int, seed: int) -> np.ndarray:
        rng = generator(seed)
        if self.dim == 1:
            sgn = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
            r = self._radial.sample_radius(rng.uniform(0.0, 1.0, n))
            return (sgn * r).reshape(-1, 1)
        u = rng.standard_normal((n, self.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = self._radial.sample_radius(rng.uniform(0.0, 1.0, n))
        return u * r[:, None]


class PerturbedLatent:
    """Base latent density plus a bounded perturbation, sampled by exact
    rejection from the base proposal."""

    def __init__(self, base, perturbation, ratio_bound: float, smoothness: float):
        self.dim = base.dim
        self.smoothness = smoothness
        self.base = base
        self.perturbation = perturbation
        if ratio_bound >= 1.0:
            raise ValueError("perturbation must stay below the base density")
        self.ceiling = 1.0 + ratio_bound

    def density(self, z) -> np.ndarray:
        z = np.atleast_2d(z)
        return self.base.density(z) + np.where(
            np.linalg.norm(z, axis=1) <= 1.0, self.perturbation(z), 0.0
        )

    def sample(self, n: int, seed: int) -> np.ndarray:
        rng = generator(seed)
        out = np.empty((n, self.dim))
        got = 0
        batch_seed = 0
        while got < n:
            m = max(64, int(1.3 * (n - got)))
            batch_seed += 1
            z = self.base.sample(m, seed * 1000003 + batch_seed)
            ratio = self.density(z) / (self.ceiling * self.base.density(z))
            keep = rng.uniform(size=m) < ratio
            take = min(int(keep.sum()), n - got)
            out[got : got + take] = z[keep][:take]
            got += take
        return out


class ProductDensity:
    """Density given by an explicit callable with a rejection sampler from
    the uniform ball proposal; used for planted truths."""

    def __init__(self, d: int, density_fn, ceiling: float, smoothness: float):
        self.dim = d
        self.smoothness = smoothness
        self._fn = density_fn
        self.ceiling = ceiling
        self._prop = UniformBall(d)

    def density(self, z) -> np.ndarray:
        z = np.atleast_2d(z)
        return np.where(np.linalg.norm(z, axis=1) <= 1.0, self._fn(z), 0.0)

    def sample(self, n: int, seed: int) -> np.ndarray:
        rng = generator(seed)
        out = np.empty((n, self.dim))
        got = 0
        k = 0
        while got < n:
            m = max(64, int(1.5 * (n - got)))
            k += 1
            z = self._prop.sample(m, seed * 999331 + k)
            ratio = self.density(z) / (self.ceiling * self._prop.density(z))
            keep = rng.uniform(size=m) < ratio
            take = min(int(keep.sum()), n - got)
            out[got : got + take] = z[keep][:take]
            got += take
        return out
