"""Data splitting, active-component selection, and local chart fitting.

Charts are bounded-coefficient polynomial map pairs (G, Q) fitted by
alternating regularized least squares with free latent coordinates: the
G-step is linear, the latent step is per-point Gauss-Newton, and the
Q-step projects the latents onto the polynomial class so the reported
objective is the true composed reconstruction loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IllPosed, TooFewSamples
from .geometry import Cover
from .maps import PolynomialMap, monomial_exponents, poly_features
from .rng import child_seed, generator

__all__ = ["SplitIndices", "split", "active_set", "PolyChartClass", "FittedChart", "fit_chart"]


@dataclass(frozen=True)
class SplitIndices:
    I1: np.ndarray
    I2: np.ndarray

    def __post_init__(self):
        if len(np.intersect1d(self.I1, self.I2)):
            raise ValueError("split halves must be disjoint")


def split(n: int, seed: int) -> SplitIndices:
    """Deterministic shuffled split with |I1| = ceil(n/2)."""
    if n < 2:
        raise TooFewSamples("need at least two samples to split")
    perm = generator(child_seed(seed, "split")).permutation(n)
    half = (n + 1) // 2
    return SplitIndices(np.sort(perm[:half]), np.sort(perm[half:]))


def active_set(samples: np.ndarray, cover: Cover, n: int, L: float):
    """Sample frequencies over the enlarged balls and the active set.

    p_m is the fraction of samples within radius r_m + 0.5/L of center m;
    components pass when p_m >= sqrt(log n / n).
    """
    pts = np.atleast_2d(samples)
    if n < 2:
        raise TooFewSamples("need n >= 2")
    dist = cover.distances(pts)
    enlarged = cover.radii[None, :] + 0.5 / L
    p_hat = (dist <= enlarged).mean(axis=0)
    thresh = np.sqrt(np.log(n) / n)
    active = [m for m in range(cover.M) if p_hat[m] >= thresh]
    return active, p_hat


@dataclass(frozen=True)
class PolyChartClass:
    """Bounded-coefficient polynomial chart class of total degree floor(beta)."""

    degree: int
    bound: float
    dim_in: int
    dim_out: int

    def __post_init__(self):
        if self.degree < 1 or self.bound <= 0:
            raise ValueError("need degree >= 1 and positive coefficient bound")


@dataclass
class FittedChart:
    G: PolynomialMap
    Q: PolynomialMap
    loss: float
    iterations: int
    restarts_used: int
    nondecrease: bool = False

    def reconstruct(self, X: np.ndarray) -> np.ndarray:
        return self.G(self.Q(X))


def _membership(pts, dist_col, radius):
    return dist_col <= radius


def _gauss_newton_latents(z, X, coeffs, exps, steps: int = 3):
    """Per-point latent refinement of ||X - G(z)||^2 for latent dim <= 2."""
    d = z.shape[1]
    for _ in range(steps):
        F = poly_features(z, exps)
        G = F @ coeffs
        R = X - G
        # gradient features: dF/dz_ax
        grads = []
        for ax in range(d):
            e = np.zeros(d, dtype=np.int64)
            e[ax] = 1
            dexp = exps - e
            ok = np.all(dexp >= 0, axis=1)
            fac = np.where(ok, exps[:, ax], 0).astype(np.float64)
            dF = np.zeros_like(F)
            if np.any(ok):
                dF[:, ok] = poly_features(z, np.maximum(dexp[ok], 0)) * fac[ok][None, :]
            grads.append(dF @ coeffs)  # (n, D)
        if d == 1:
            g = grads[0]
            num = np.sum(R * g, axis=1)
            den = np.sum(g * g, axis=1) + 1e-12
            z = z + (num / den)[:, None]
        else:
            # solve the dxd normal equations pointwise
            A = np.empty((len(z), d, d))
            b = np.empty((len(z), d))
            for i in range(d):
                b[:, i] = np.sum(R * grads[i], axis=1)
                for j in range(d):
                    A[:, i, j] = np.sum(grads[i] * grads[j], axis=1)
            A += 1e-12 * np.eye(d)[None, :, :]
            z = z + np.linalg.solve(A, b[..., None])[..., 0]
    return z


def _ridge_lstsq(F, Y, ridge: float):
    A = F.T @ F + ridge * np.eye(F.shape[1])
    return np.linalg.solve(A, F.T @ Y)


def fit_chart(samples: np.ndarray, chart_class: PolyChartClass, seed: int,
              iters: int = 50, restarts: int = 5, ridge: float = 1e-8) -> FittedChart:
    """Minimize the squared reconstruction loss over the polynomial class.

    Alternating scheme per restart: linear G-step, Gauss-Newton latent
    step, then a Q-projection so latents equal Q(X) when the objective is
    scored. Coefficients are clipped to the class bound after each linear
    solve. Returns the best restart; a nondecrease flag marks runs where
    an outer iteration failed to improve (best iterate is still returned).
    """
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n, D = X.shape
    d = chart_class.dim_in
    deg = chart_class.degree
    exps_g = monomial_exponents(d, deg)
    exps_q = monomial_exponents(D, deg)
    n_params = len(exps_g) * D + len(exps_q) * d
    if n < max(len(exps_g), len(exps_q)) or n < n_params / max(D, 1):
        raise IllPosed(f"{n} samples cannot determine {n_params} chart parameters")

    center = X.mean(axis=0)
    Xc = X - center
    FQ = poly_features(X, exps_q)
    clip = chart_class.bound
    best = None
    for r in range(restarts):
        rng = generator(child_seed(seed, "chart", r))
        if r == 0:
            # leading principal directions
            _, _, Vt = np.linalg.svd(Xc, full_matrices=False)
            proj = Vt[:d].T
        else:
            proj = rng.standard_normal((D, d))
            proj /= np.linalg.norm(proj, axis=0, keepdims=True)
        z = Xc @ proj
        z = (z - z.mean(axis=0)) / (z.std(axis=0) + 1e-12)
        polish = max(3, iters // 5)
        nondecrease = False
        best_local = None
        prev_obj = np.inf
        for it in range(iters):
            # free-latent phase: linear G-step plus Gauss-Newton latents
            F = poly_features(z, exps_g)
            coeffs = np.clip(_ridge_lstsq(F, X, ridge), -clip, clip)
            z = _gauss_newton_latents(z, X, coeffs, exps_g)
            z = (z - z.mean(axis=0)) / (z.std(axis=0) + 1e-12)
            if it < iters - polish:
                continue
            # polish phase: project latents onto the Q class and score the
            # true composed objective
            qc = np.clip(_ridge_lstsq(FQ, z, ridge), -clip, clip)
            zq = FQ @ qc
            F = poly_features(zq, exps_g)
            coeffs = np.clip(_ridge_lstsq(F, X, ridge), -clip, clip)
            obj = float(np.mean(np.sum((X - F @ coeffs) ** 2, axis=1)))
            if best_local is None or obj < best_local[0]:
                best_local = (obj, coeffs.copy(), qc.copy(), it + 1)
            if obj > prev_obj + 1e-15:
                nondecrease = True
            prev_obj = obj
            z = zq
        obj, coeffs, qc, its = best_local
        if best is None or obj < best[0]:
            best = (obj, coeffs, qc, its, r, nondecrease)

    obj, coeffs, qc, its, r_used, nondec = best
    G = PolynomialMap(coeffs, d, D, deg, smoothness=float(deg), holder_radius=chart_class.bound)
    Q = PolynomialMap(qc, D, d, deg, smoothness=float(deg), holder_radius=chart_class.bound)
    return FittedChart(G, Q, loss=obj, iterations=its, restarts_used=r_used + 1,
                       nondecrease=nondec)
