"""Smoothness-regularized density estimation on the latent space.

The primary regularizer truncates the empirical wavelet expansion at a
level tied to the sample budget; truncation can leave negative lobes and
those are kept as-is, since every downstream consumer is a linear
functional. The alternative is a product KDE built from a compactly
supported kernel with vanishing moments up to the smoothness ceiling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySample, SingularMoments
from .hardness import bump_kernel_terms
from .wavelets import Expansion, PointBasis, WaveletFamily, empirical_coeffs, family

__all__ = ["TruncatedDensity", "MomentKernel", "build_truncated_density",
           "make_moment_kernel", "kde", "truncation_level"]


def truncation_level(n: int, alpha: float, d: int) -> int:
    """Largest J with 2^J <= (n / log n)^(1 / (2 alpha + d)); at least 0."""
    if n < 3:
        return 0
    ratio = n / np.log(n)
    return max(0, int(np.floor(np.log2(ratio) / (2.0 * alpha + d))))


@dataclass
class TruncatedDensity:
    """Level-J truncated empirical density; may be negative in lobes."""

    expansion: Expansion
    family: WaveletFamily
    sample_count: int
    weight_id: str = ""

    @property
    def dim(self) -> int:
        return self.expansion.dim

    @property
    def J(self) -> int:
        return self.expansion.J

    def __call__(self, z) -> np.ndarray:
        return self.expansion(np.atleast_2d(z), self.family)

    def mass(self) -> float:
        return self.expansion.mass()


def build_truncated_density(points, weights, J: int,
                            fam: WaveletFamily | None = None,
                            weight_id: str = "") -> TruncatedDensity:
    fam = fam or family()
    exp = empirical_coeffs(points, weights, J, fam)
    return TruncatedDensity(exp, fam, sample_count=len(np.atleast_2d(points)), weight_id=weight_id)


class MomentKernel:
    """Compact kernel on [0, 1] with unit mass and p vanishing moments.

    k(t) = envelope(t) * poly(t), envelope = (1-t)^(s+1) t^(s+1) with
    s = 1 + alpha so the kernel is C^(1+alpha); the polynomial solves the
    (p+1)-equation moment system int t^j k = delta_{j0}, j = 0..p.
    """

    def __init__(self, alpha: float):
        self.alpha = float(alpha)
        self.order = int(np.ceil(self.alpha))
        self._envelope = bump_kernel_terms(1.0 + self.alpha)
        p = self.order
        # Gram of envelope-weighted monomials by Gauss-Legendre (exact for
        # the polynomial factor, envelope smooth)
        nodes, wts = np.polynomial.legendre.leggauss(120)
        t = 0.5 * (nodes + 1.0)
        w = 0.5 * wts * self._envelope(t)
        G = np.empty((p + 1, p + 1))
        for j in range(p + 1):
            for i in range(p + 1):
                G[j, i] = np.sum(w * t ** (i + j))
        rhs = np.zeros(p + 1)
        rhs[0] = 1.0
        if np.linalg.cond(G) > 1e12:
            raise SingularMoments(f"moment Gram condition {np.linalg.cond(G):.2e}")
        self.poly = np.linalg.solve(G, rhs)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        val = self._envelope(t) * np.polyval(self.poly[::-1], t)
        return val if val.ndim else float(val)

    def moment(self, j: int, order: int = 200) -> float:
        nodes, wts = np.polynomial.legendre.leggauss(order)
        t = 0.5 * (nodes + 1.0)
        return float(np.sum(0.5 * wts * t ** j * self(t)))


def make_moment_kernel(alpha: float) -> MomentKernel:
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    return MomentKernel(alpha)


def kde(points, weights, alpha: float, n: int, kernel: MomentKernel | None = None):
    """Product-kernel density estimator with rate-matched bandwidth.

    Returns an evaluator z -> (1/(h^d n_pts)) sum_i w_i prod_j
    kbar((x_ij - z_j)/h) with h = (log n / n)^(1/(2 alpha + d)).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    w = np.asarray(weights, dtype=np.float64)
    if len(pts) == 0:
        raise EmptySample("kde needs at least one point")
    if np.all(w == 0.0):
        raise EmptySample("all weights are zero")
    d = pts.shape[1]
    h = (np.log(n) / n) ** (1.0 / (2.0 * alpha + d))
    ker = kernel or make_moment_kernel(alpha)
    denom = float(len(pts)) * h ** d

    def evaluate(z) -> np.ndarray:
        zz = np.atleast_2d(np.asarray(z, dtype=np.float64))
        out = np.empty(len(zz))
        for i, row in enumerate(zz):
            prod = np.ones(len(pts))
            for ax in range(d):
                prod = prod * ker((pts[:, ax] - row[ax]) / h)
            out[i] = np.dot(prod, w) / denom
        return out

    evaluate.bandwidth = h
    evaluate.dim = d
    return evaluate
