"""Exponentially correlated multivariate Nakagami-m channel model.

The joint law of the per-round channel powers is a gamma mixture: a shared
Gamma(m, 1) latent variable drives one Poisson mixture index per round, and
conditioned on those indices the round powers are independent gamma variates
with inflated shapes.  Round iota couples to the shared variable through the
decay factor rho**(2*(iota + delta - 1)), so the dependence fades with the
round index and with the feedback delay.  Everything analytical in this
module (mixture weights, correlation matrix, the high-SNR correlation
penalty) derives from those decay factors; the sampler implements the same
mixture exactly, so sampled statistics and closed-form quantities agree by
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "ChannelParams",
    "correlation_factor",
    "correlation_matrix",
    "correlation_weight",
    "mixture_weight",
    "sample_amplitudes",
]


@dataclass(frozen=True)
class ChannelParams:
    """Statistical parameters of the correlated Nakagami-m channel.

    m       integer fading order (>= 1)
    omegas  per-round mean channel powers, linear scale, one entry per round
    rho     time-correlation coefficient, 0 <= rho < 1
    delta   feedback delay, enters only as an exponent offset
    """

    m: int
    omegas: tuple[float, ...]
    rho: float
    delta: float = 1.0

    def __post_init__(self) -> None:
        if not float(self.m).is_integer() or int(self.m) < 1:
            raise ValueError(f"fading order m must be a positive integer, got {self.m}")
        object.__setattr__(self, "m", int(self.m))
        omegas = tuple(float(w) for w in np.atleast_1d(self.omegas))
        if len(omegas) == 0:
            raise ValueError("omegas must contain at least one round")
        if not all(math.isfinite(w) and w > 0 for w in omegas):
            raise ValueError(f"every mean power must be positive and finite, got {omegas}")
        object.__setattr__(self, "omegas", omegas)
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"correlation rho must satisfy 0 <= rho < 1, got {self.rho}")
        if self.delta < 0:
            raise ValueError(f"feedback delay must be non-negative, got {self.delta}")
        if self.rho > 0 and self.delta == 0:
            # The first-round decay exponent 2*(1 + delta - 1) collapses to zero,
            # which makes the joint density degenerate for any rho > 0.
            raise ValueError("delta = 0 is only meaningful for rho = 0")

    @property
    def rounds(self) -> int:
        return len(self.omegas)

    @classmethod
    def uniform(cls, m: int, omega: float, rho: float, delta: float = 1.0,
                rounds: int = 1) -> "ChannelParams":
        """Broadcast a scalar mean power across ``rounds`` rounds."""
        return cls(m=m, omegas=(float(omega),) * rounds, rho=rho, delta=delta)


def _decay(iota: int, params: ChannelParams) -> float:
    """Round-iota correlation decay rho**(2*(iota + delta - 1)), in [0, 1)."""
    if params.rho == 0.0:
        return 0.0
    return params.rho ** (2.0 * (iota + params.delta - 1.0))


def correlation_weight(iota: int, params: ChannelParams) -> float:
    """Poisson intensity weight of round ``iota`` against the shared variable.

    Equals r / (1 - r) with r the round's decay factor; zero for rho = 0 and
    strictly decreasing in the round index for 0 < rho < 1.
    """
    if iota < 1:
        raise ValueError(f"round index must be >= 1, got {iota}")
    r = _decay(iota, params)
    return r / (1.0 - r)


def _log_correlation_factor(l: int, params: ChannelParams) -> float:
    if l < 1:
        raise ValueError(f"round count must be >= 1, got {l}")
    if l == 1 or params.rho == 0.0:
        # (1 + w1) * (1 - r1) == 1 identically; keep the single-round value exact.
        return 0.0
    total = sum(correlation_weight(i, params) for i in range(1, l + 1))
    log_prod = sum(math.log1p(-_decay(i, params)) for i in range(1, l + 1))
    return -params.m * (math.log1p(total) + log_prod)


def correlation_factor(l: int, params: ChannelParams) -> float:
    """Correlation penalty of the high-SNR outage laws.

    ((1 + sum_i w_i) * prod_i (1 - r_i)) ** -m over rounds 1..l.  Equals 1
    for independent rounds and for a single round, and grows with rho.
    """
    return math.exp(_log_correlation_factor(l, params))


def mixture_weight(n: Sequence[int], params: ChannelParams) -> float:
    """Probability mass of the mixture index vector ``n``.

    The index vector follows a negative multinomial law with shape m and
    per-round success probabilities w_i / (1 + sum w); the masses sum to one
    over all non-negative index vectors.
    """
    n = [int(k) for k in n]
    if len(n) < 1:
        raise ValueError("mixture index must cover at least one round")
    if any(k < 0 for k in n):
        raise ValueError(f"mixture indices must be non-negative, got {n}")
    weights = [correlation_weight(i, params) for i in range(1, len(n) + 1)]
    total = sum(weights)
    t = sum(n)
    log_w = (
        math.lgamma(params.m + t)
        - math.lgamma(params.m)
        - params.m * math.log1p(total)
    )
    for k, w in zip(n, weights):
        if k == 0:
            continue
        if w == 0.0:
            return 0.0
        log_w += k * (math.log(w) - math.log1p(total)) - math.lgamma(k + 1)
    return math.exp(log_w)


def correlation_matrix(l: int, params: ChannelParams) -> np.ndarray:
    """Underlying l-by-l correlation matrix of the gamma construction.

    Entry (i, k) is rho**(i + k + 2*delta - 2) off the unit diagonal; the
    squared entries are the Pearson correlations of the round powers.
    Positive definite for 0 <= rho < 1.
    """
    if l < 1:
        raise ValueError(f"round count must be >= 1, got {l}")
    mat = np.eye(l)
    for i in range(1, l + 1):
        for k in range(i + 1, l + 1):
            val = params.rho ** (i + k + 2.0 * params.delta - 2.0)
            mat[i - 1, k - 1] = val
            mat[k - 1, i - 1] = val
    return mat


def _component_scales(l: int, params: ChannelParams) -> np.ndarray:
    """Gamma scales omega_i * (1 - r_i) / m of the conditional components."""
    return np.array(
        [params.omegas[i - 1] * (1.0 - _decay(i, params)) / params.m for i in range(1, l + 1)]
    )


def _sample_powers(l: int, params: ChannelParams, rng: np.random.Generator,
                   size: int) -> np.ndarray:
    """Draw ``size`` joint samples of the squared amplitudes, shape (size, l)."""
    if l < 1 or l > params.rounds:
        raise ValueError(f"need 1 <= l <= {params.rounds}, got {l}")
    scales = _component_scales(l, params)
    out = np.empty((size, l))
    if params.rho == 0.0:
        for i in range(l):
            out[:, i] = rng.gamma(params.m, scales[i], size=size)
        return out
    t = rng.gamma(params.m, 1.0, size=size)
    for i in range(l):
        w = correlation_weight(i + 1, params)
        counts = rng.poisson(w * t)
        out[:, i] = rng.gamma(params.m + counts, scales[i])
    return out


def sample_amplitudes(l: int, params: ChannelParams, rng: np.random.Generator,
                      size: int | None = None) -> np.ndarray:
    """Draw channel amplitude vectors |h_1|..|h_l| from the exact mixture.

    Marginally |h_i|^2 ~ Gamma(m, omega_i / m), so E|h_i|^2 = omega_i; joint
    dependence comes from the shared latent gamma variable.  Returns shape
    (l,) when ``size`` is None, else (size, l).  Same generator state gives
    bit-identical output.
    """
    n = 1 if size is None else int(size)
    if n < 1:
        raise ValueError(f"size must be >= 1, got {size}")
    amps = np.sqrt(_sample_powers(l, params, rng, n))
    return amps[0] if size is None else amps
