"""Bessel-process side of the collision comparison.

``kappa(T; y, delta)`` is the tail of the first time a Bessel process started
at ``y`` reaches the origin. Two exponent conventions are supported:

``paper_delta``
    ``int_T^inf (1/(t Gamma(delta))) (y^2/2t)^delta exp(-y^2/2t) dt``, which
    equals the regularized lower incomplete gamma ``P(delta, y^2/2T)``.
``classical_index``
    the same integral with exponent ``1 - delta/2``. This is the law of the
    hitting time of BES(delta), ``T_0 = y^2 / (2 G)`` with
    ``G ~ Gamma(1 - delta/2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .core import ParameterOutOfRange
from .rng import map_blocks, path_normals

PAPER = "paper_delta"
CLASSICAL = "classical_index"
CONVENTIONS = (PAPER, CLASSICAL)
_ALIASES = {"paper": PAPER, "classical": CLASSICAL, PAPER: PAPER, CLASSICAL: CLASSICAL}


def normalize_convention(name: str) -> str:
    try:
        return _ALIASES[name]
    except KeyError:
        raise ParameterOutOfRange(f"unknown convention {name!r}; use one of {CONVENTIONS}") from None


@dataclass(frozen=True)
class KappaQuery:
    T: float
    y: float
    exponent: float
    convention: str = PAPER

    def __post_init__(self):
        object.__setattr__(self, "convention", normalize_convention(self.convention))
        if not (self.T >= 0 and math.isfinite(self.T) or self.T == math.inf):
            raise ParameterOutOfRange(f"T must be >= 0, got {self.T}")
        if not self.y > 0:
            raise ParameterOutOfRange(f"y must be > 0, got {self.y}")
        if not (0 < self.exponent < 2):
            raise ParameterOutOfRange(f"delta must lie in (0, 2), got {self.exponent}")

    @property
    def shape(self) -> float:
        """Gamma shape used by the tail integral."""
        return self.exponent if self.convention == PAPER else 1.0 - self.exponent / 2.0

    @property
    def z(self) -> float:
        return math.inf if self.T == 0 else self.y**2 / (2.0 * self.T)


def kappa(q: KappaQuery) -> float:
    return float(special.gammainc(q.shape, q.z))


def kappa_value(T: float, y: float, delta: float, convention: str = PAPER) -> float:
    return kappa(KappaQuery(T, y, delta, convention))


def kappa_quadrature(q: KappaQuery, form: str = "substituted") -> float:
    """Adaptive quadrature of the tail integral; independent of ``gammainc``.

    ``form="substituted"`` integrates ``u^(a-1) e^(-u) / Gamma(a)`` on
    ``[0, y^2/2T]`` with the algebraic end-point weight; ``form="direct"``
    integrates the ``t``-integrand on ``[T, inf)``.
    """
    a = q.shape
    if form == "substituted":
        if q.T == 0:
            return 1.0
        val, _ = integrate.quad(
            lambda u: math.exp(-u), 0.0, q.z, weight="alg", wvar=(a - 1.0, 0.0), epsabs=1e-10, epsrel=1e-12, limit=200
        )
        return val / math.gamma(a)
    if form == "direct":
        c = q.y**2 / 2.0
        lg = math.lgamma(a)

        def f(t):
            return math.exp(a * math.log(c / t) - c / t - lg) / t

        # split at the mode of the integrand to help the adaptive rule
        mid = max(q.T, c / (a + 1.0))
        head = integrate.quad(f, q.T, mid, epsabs=1e-12, epsrel=1e-12, limit=200)[0] if mid > q.T else 0.0
        tail = integrate.quad(f, mid, math.inf, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
        return head + tail
    raise ValueError(form)


def kappa_loglog_slope(y: float, delta: float, T_lo: float, T_hi: float, convention: str = PAPER) -> float:
    """Slope of ``log kappa`` against ``log T`` between two horizons."""
    k_lo = kappa_value(T_lo, y, delta, convention)
    k_hi = kappa_value(T_hi, y, delta, convention)
    return (math.log(k_hi) - math.log(k_lo)) / (math.log(T_hi) - math.log(T_lo))


def collision_bound(T: float, s0: float, delta0: float, c0: float, convention: str = PAPER) -> float:
    """Lower bound ``1 - kappa(c0 T; s0, delta0)`` on the collision probability by ``T``."""
    if not (0 < delta0 < 2):
        raise ParameterOutOfRange(f"delta0 must lie in (0, 2), got {delta0}")
    if not c0 > 0:
        raise ParameterOutOfRange(f"c0 must be positive, got {c0}")
    if not s0 > 0:
        raise ParameterOutOfRange(f"s0 must be positive, got {s0}")
    if T < 0:
        raise ParameterOutOfRange("T must be nonnegative")
    val = 1.0 - kappa_value(c0 * T, s0, delta0, convention)
    return float(min(1.0, max(0.0, val)))


# ----------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class BesselSimConfig:
    dimension: float
    y: float = 1.0
    dt: float = 1e-3
    T: float = 1.0
    paths: int = 10_000
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterOutOfRange("dt must be positive")
        if self.paths < 1:
            raise ParameterOutOfRange("paths must be >= 1")
        if not self.y > 0 or not self.T > 0 or not self.dimension > 0:
            raise ParameterOutOfRange("y, T and dimension must be positive")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass(frozen=True)
class BesselTail:
    tail: float
    stderr: float
    paths: int
    absorbed: int

    def to_dict(self) -> dict:
        return {"tail": self.tail, "stderr": self.stderr, "paths": self.paths, "absorbed": self.absorbed}


def _bessel_block(cfg: BesselSimConfig, idx: range) -> np.ndarray:
    steps = cfg.steps
    dB = path_normals(cfg.seed, idx, steps, 1)[:, :, 0] * math.sqrt(cfg.dt)
    Z = np.full(len(idx), cfg.y**2)
    alive = np.ones(len(idx), dtype=bool)
    for k in range(steps):
        Z = Z + cfg.dimension * cfg.dt + 2.0 * np.sqrt(np.maximum(Z, 0.0)) * dB[:, k]
        alive &= Z > 0.0
        Z = np.where(alive, Z, 0.0)
    return alive


def simulate_bessel_hitting_tail(cfg: BesselSimConfig) -> BesselTail:
    """Monte Carlo ``P(T_0 > T)`` from squared-Bessel Euler paths absorbed at 0."""
    parts = map_blocks(lambda idx: _bessel_block(cfg, idx), cfg.paths, cfg.threads)
    alive = np.concatenate(parts)
    p = float(alive.mean())
    return BesselTail(p, math.sqrt(max(p * (1 - p), 0.0) / cfg.paths), cfg.paths, int((~alive).sum()))


def reflected_bm_tail(T: float, y: float) -> float:
    """``P(BM from y stays positive up to T) = 2 Phi(y / sqrt T) - 1``."""
    return float(math.erf(y / math.sqrt(2.0 * T)))


def compare_conventions(cfg: BesselSimConfig) -> dict:
    """Monte Carlo tail against ``kappa`` under both conventions.

    ``match`` names the convention whose value is closer in standard-error
    units.
    """
    mc = simulate_bessel_hitting_tail(cfg)
    out = {"dimension": cfg.dimension, "y": cfg.y, "T": cfg.T, "dt": cfg.dt, **mc.to_dict()}
    se = max(mc.stderr, 1.0 / cfg.paths)
    z = {}
    for conv in CONVENTIONS:
        k = kappa_value(cfg.T, cfg.y, cfg.dimension, conv)
        out[conv] = k
        z[conv] = (mc.tail - k) / se
    out["z_scores"] = z
    out["match"] = min(z, key=lambda c: abs(z[c]))
    return out
