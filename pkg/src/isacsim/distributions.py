"""Seedable samplers and closed-form densities used by the channel generator.

All randomness flows through :class:`numpy.random.Generator` objects backed by
PCG64 (``numpy.random.PCG64``), seeded from a 64-bit integer via
``numpy.random.SeedSequence``. The bit stream of PCG64 and the transforms used
here (``standard_normal``, ``gamma``, ``random``) are fixed by numpy, so equal
seeds reproduce equal draws across runs and platforms.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtri

from .params import CountPmf, DualSlope, GevParams

Rng = np.random.Generator

GUMBEL_EPS = 1e-9
TWO_PI = 2.0 * math.pi


def make_rng(seed: int) -> Rng:
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def spawn_rngs(seed: int, n: int) -> list[Rng]:
    """Independent child streams derived from one seed."""
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n)]


def lognormal_from_moments(mean: float, std: float) -> tuple[float, float]:
    """Log-domain (mu, sigma) of the log-normal with arithmetic ``mean`` and ``std``."""
    if not (mean > 0 and std > 0):
        raise ValueError(f"log-normal moments must be positive (mean={mean}, std={std})")
    var_log = math.log1p((std / mean) ** 2)
    return math.log(mean) - 0.5 * var_log, math.sqrt(var_log)


def lognormal_quantile(log_mu: float, log_sigma: float, q: float) -> float:
    return math.exp(log_mu + float(ndtri(q)) * log_sigma)


def sample_lognormal(rng: Rng, log_mu: float, log_sigma: float, size=None):
    if not log_sigma > 0:
        raise ValueError(f"log_sigma must be > 0, got {log_sigma}")
    return np.exp(log_mu + log_sigma * rng.standard_normal(size))


def sample_normal(rng: Rng, mu: float, sigma: float, size=None):
    """Normal draw; ``sigma == 0`` yields ``mu`` exactly but still advances the stream."""
    if sigma < 0 or not math.isfinite(sigma):
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    return mu + sigma * rng.standard_normal(size)


def sample_gamma(rng: Rng, shape: float, scale: float, size=None):
    # numpy uses Marsaglia-Tsang rejection, exact for non-integer shape
    if not (shape > 0 and scale > 0):
        raise ValueError(f"gamma shape and scale must be > 0 (shape={shape}, scale={scale})")
    return rng.gamma(shape, scale, size)


def sample_phase(rng: Rng, size=None):
    return TWO_PI * rng.random(size)


def gev_quantile(g: GevParams, u):
    """Inverse CDF of the GEV at probability ``u`` in (0, 1)."""
    e = -np.log(u)
    if abs(g.shape) < GUMBEL_EPS:
        return g.location - g.scale * np.log(e)
    return g.location + g.scale * (e ** (-g.shape) - 1.0) / g.shape


def sample_gev(rng: Rng, g: GevParams, size=None):
    if not g.scale > 0:
        raise ValueError(f"GEV scale must be > 0, got {g.scale}")
    u = rng.random(size)
    # random() is on [0, 1); map an exact 0 to the smallest positive double
    u = np.where(u == 0.0, np.finfo(float).tiny, u) if size is not None else (u or np.finfo(float).tiny)
    x = gev_quantile(g, u)
    return float(x) if size is None else x


def _gev_t(x, g: GevParams):
    z = (np.asarray(x, dtype=float) - g.location) / g.scale
    if abs(g.shape) < GUMBEL_EPS:
        return np.exp(-z), np.ones_like(z, dtype=bool)
    base = 1.0 + g.shape * z
    inside = base > 0
    safe = np.where(inside, base, 1.0)
    return np.where(inside, safe ** (-1.0 / g.shape), np.nan), inside


def gev_pdf(x, g: GevParams):
    """Density (1/sigma) t^(xi+1) exp(-t) with t = [1 + xi (x-mu)/sigma]^(-1/xi); 0 off-support."""
    t, inside = _gev_t(x, g)
    with np.errstate(invalid="ignore", over="ignore"):
        dens = np.where(inside, np.power(t, g.shape + 1.0) * np.exp(-t) / g.scale, 0.0)
    return dens if np.ndim(dens) else float(dens)


def gev_cdf(x, g: GevParams):
    t, inside = _gev_t(x, g)
    # off-support: below the lower endpoint (xi > 0) -> 0, above the upper endpoint (xi < 0) -> 1
    off = 0.0 if g.shape > 0 else 1.0
    with np.errstate(invalid="ignore"):
        cdf = np.where(inside, np.exp(-np.where(inside, t, 0.0)), off)
    return cdf if np.ndim(cdf) else float(cdf)


def gev_mean(g: GevParams) -> float:
    if g.shape >= 1:
        return math.inf
    if abs(g.shape) < GUMBEL_EPS:
        return g.location + g.scale * np.euler_gamma
    return g.location + g.scale * (math.gamma(1.0 - g.shape) - 1.0) / g.shape


def gev_var(g: GevParams) -> float:
    if g.shape >= 0.5:
        return math.inf
    if abs(g.shape) < GUMBEL_EPS:
        return g.scale**2 * math.pi**2 / 6.0
    g1 = math.gamma(1.0 - g.shape)
    g2 = math.gamma(1.0 - 2.0 * g.shape)
    return g.scale**2 * (g2 - g1**2) / g.shape**2


def gev_support(g: GevParams) -> tuple[float, float]:
    if abs(g.shape) < GUMBEL_EPS:
        return -math.inf, math.inf
    edge = g.location - g.scale / g.shape
    return (edge, math.inf) if g.shape > 0 else (-math.inf, edge)


def pmf_cdf(pmf: CountPmf) -> np.ndarray:
    c = np.cumsum(pmf.probabilities)
    c[-1] = 1.0
    return c


def sample_pmf(rng: Rng, pmf: CountPmf, size=None, cdf: np.ndarray | None = None):
    """Inverse-CDF draw over ascending counts."""
    c = pmf_cdf(pmf) if cdf is None else cdf
    u = rng.random(size)
    idx = np.searchsorted(c, u, side="right")
    idx = np.minimum(idx, len(c) - 1)
    out = pmf.support_start + idx
    return int(out) if size is None else out


def dual_slope_eval(tau, d: DualSlope):
    """slope*tau + intercept on the segment holding tau (tau <= breakpoint is the low segment)."""
    t = np.asarray(tau, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise ValueError("delay must be >= 0")
    out = np.where(
        t <= d.breakpoint,
        d.slope_low * t + d.intercept_low,
        d.slope_high * t + d.intercept_high,
    )
    return out if np.ndim(out) else float(out)
