"""Exact and high-SNR outage probabilities for the three HARQ schemes.

Type I outage is a weighted series of products of regularized incomplete
gamma factors, truncated by total mixture degree with an exact bound on the
omitted mass.  Chase combining and the incremental-redundancy lower bound
reduce to the CDF of a weighted sum of correlated gamma variates, evaluated
through the poles of its moment generating function.  The partial-fraction
form of that CDF cancels catastrophically deep in the lower tail, so the
evaluation switches automatically to a Maclaurin expansion there; both forms
are carried in log-magnitude/sign arithmetic so extreme pole spreads do not
overflow.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln
from scipy.stats import nbinom

from .channel import (
    ChannelParams,
    _decay,
    _log_correlation_factor,
    correlation_matrix,
    correlation_weight,
)

__all__ = [
    "HarqConfig",
    "PoleDecomposition",
    "PoleClusterWarning",
    "Scheme",
    "TruncatedSeriesResult",
    "TruncationError",
    "combined_snr_cdf",
    "high_snr_coefficient",
    "mgf_poles",
    "outage_asymptotic",
    "outage_cc",
    "outage_ir_lower",
    "outage_type1",
    "partial_fraction_coefficients",
]

_LN2 = math.log(2.0)

#: hard cap on the Type I truncation order
MAX_TRUNCATION_ORDER = 200

#: eigenvalues closer than this relative gap are merged into one pole
POLE_CLUSTER_RTOL = 1e-8

#: switch the combined-SNR CDF to the series path once the partial-fraction
#: sum has lost this many orders of magnitude to cancellation
_CANCELLATION_GUARD = 1e6


class Scheme(enum.Enum):
    """Retransmission scheme selector."""

    TYPE1 = "type1"
    CC = "cc"
    IR = "ir"


class TruncationError(RuntimeError):
    """Raised when the truncated series cannot meet the requested tolerance."""


class PoleClusterWarning(UserWarning):
    """Nearly coincident but unequal MGF poles were merged; results may lose accuracy."""


@dataclass(frozen=True)
class HarqConfig:
    """Scheme, round budget, target rate and per-round transmit powers."""

    scheme: Scheme
    max_rounds: int
    rate: float
    powers: tuple[float, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.scheme, Scheme):
            raise ValueError(f"scheme must be a Scheme member, got {self.scheme!r}")
        if int(self.max_rounds) < 1:
            raise ValueError(f"max_rounds must be >= 1, got {self.max_rounds}")
        object.__setattr__(self, "max_rounds", int(self.max_rounds))
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ValueError(f"rate must be positive, got {self.rate}")
        powers = tuple(float(p) for p in np.atleast_1d(self.powers))
        if len(powers) != self.max_rounds:
            raise ValueError(
                f"need one power per round: {self.max_rounds} rounds, {len(powers)} powers"
            )
        if not all(math.isfinite(p) and p > 0 for p in powers):
            raise ValueError(f"powers must be positive and finite, got {powers}")
        object.__setattr__(self, "powers", powers)


@dataclass(frozen=True)
class TruncatedSeriesResult:
    """Truncated-series probability plus an upper bound on the omitted mass."""

    value: float
    truncation_order: int
    tail_bound: float


@dataclass(frozen=True)
class PoleDecomposition:
    """Distinct MGF poles of the combined SNR with expansion coefficients.

    The partial-fraction coefficients span many orders of magnitude, so they
    are stored as (sign, log magnitude) pairs; ``coefficients`` materializes
    them as floats where representable.
    """

    poles: tuple[float, ...]
    multiplicities: tuple[int, ...]
    coefficient_signs: tuple[tuple[float, ...], ...]
    coefficient_logs: tuple[tuple[float, ...], ...]
    log_prefactor: float
    fading_order: int

    @property
    def rounds(self) -> int:
        return sum(self.multiplicities)

    @property
    def total_shape(self) -> int:
        """Order of the lower-tail zero of the CDF (fading order times rounds)."""
        return self.fading_order * self.rounds

    @property
    def prefactor(self) -> float:
        return float(np.exp(self.log_prefactor))

    @property
    def coefficients(self) -> list[np.ndarray]:
        return [
            np.asarray(s) * np.exp(np.asarray(L))
            for s, L in zip(self.coefficient_signs, self.coefficient_logs)
        ]


def _snr_gap(rate: float) -> float:
    """Decoding threshold 2**rate - 1 on the combined SNR."""
    return math.expm1(rate * _LN2)


# ---------------------------------------------------------------------------
# regularized lower incomplete gamma, integer shape
# ---------------------------------------------------------------------------

def _reg_gamma_p(a: int, x: float) -> float:
    """P(a, x) for integer a >= 1, accurate relative to the value in both tails."""
    if x < 0:
        raise ValueError(f"argument must be non-negative, got {x}")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        # ascending series keeps full relative precision in the left tail
        log_lead = a * math.log(x) - x - math.lgamma(a + 1)
        if log_lead < -745.0:
            return 0.0
        term = 1.0
        total = 1.0
        denom = float(a)
        while True:
            denom += 1.0
            term *= x / denom
            total += term
            if term < total * 1e-17:
                break
        return min(math.exp(log_lead) * total, 1.0)
    # here P >= ~0.4, so the finite complement sum loses nothing
    q = 0.0
    logx = math.log(x)
    for k in range(a):
        q += math.exp(k * logx - x - math.lgamma(k + 1))
    return min(max(1.0 - q, 0.0), 1.0)


def _reg_gamma_p_row(m: int, kmax: int, x: float) -> np.ndarray:
    """P(m + k, x) for k = 0..kmax via the downward one-step recurrence.

    Each step adds a positive Poisson mass, so relative accuracy from the
    top entry propagates to the whole row.
    """
    if x == 0.0:
        return np.zeros(kmax + 1)
    out = np.empty(kmax + 1)
    out[kmax] = _reg_gamma_p(m + kmax, x)
    if kmax:
        orders = np.arange(m, m + kmax, dtype=float)
        pmf = np.exp(orders * math.log(x) - x - gammaln(orders + 1.0))
        out[:kmax] = out[kmax] + np.cumsum(pmf[::-1])[::-1]
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Type I HARQ
# ---------------------------------------------------------------------------

def outage_type1(config: HarqConfig, params: ChannelParams, l: int | None = None,
                 N: int | None = None, tol: float = 1e-10) -> TruncatedSeriesResult:
    """Type I outage after ``l`` rounds: every round's mutual information below rate.

    The joint CDF is expanded over mixture index vectors grouped by total
    degree; with ``N`` unset the order is chosen so the omitted mass stays
    below ``tol`` and a :class:`TruncationError` is raised if that needs more
    than ``MAX_TRUNCATION_ORDER`` terms.  ``tail_bound`` is the exact mass of
    the dropped index vectors, which dominates the truncation error because
    every CDF factor is at most one.
    """
    l = config.max_rounds if l is None else int(l)
    if not 1 <= l <= config.max_rounds:
        raise ValueError(f"need 1 <= l <= {config.max_rounds}, got {l}")
    if l > params.rounds:
        raise ValueError(f"channel model covers {params.rounds} rounds, requested {l}")
    gap = _snr_gap(config.rate)
    m = params.m
    # per-round thresholds of the conditional gamma components
    x = np.array(
        [
            m * (gap / config.powers[i]) / (params.omegas[i] * (1.0 - _decay(i + 1, params)))
            for i in range(l)
        ]
    )

    if params.rho == 0.0:
        value = 1.0
        for xi in x:
            value *= _reg_gamma_p(m, xi)
        return TruncatedSeriesResult(value=value, truncation_order=0, tail_bound=0.0)

    weights = np.array([correlation_weight(i, params) for i in range(1, l + 1)])
    total_w = float(weights.sum())
    p_zero = 1.0 / (1.0 + total_w)  # mass parameter of the degree marginal
    shares = weights / total_w

    if N is None:
        start = float(nbinom.ppf(1.0 - max(tol, 1e-12), m, p_zero))
        N = int(start) if math.isfinite(start) else MAX_TRUNCATION_ORDER
        N = min(max(N, 0), MAX_TRUNCATION_ORDER)
        while N < MAX_TRUNCATION_ORDER and nbinom.sf(N, m, p_zero) > tol:
            N += 1
        if nbinom.sf(N, m, p_zero) > tol:
            raise TruncationError(
                f"tail bound {float(nbinom.sf(N, m, p_zero)):.3e} above tolerance {tol:.3e} "
                f"at the maximum order {MAX_TRUNCATION_ORDER}"
            )
    else:
        N = int(N)
        if N < 0:
            raise ValueError(f"truncation order must be >= 0, got {N}")
        if N > MAX_TRUNCATION_ORDER:
            raise ValueError(f"truncation order capped at {MAX_TRUNCATION_ORDER}, got {N}")

    ks = np.arange(N + 1)
    binom = np.zeros((N + 1, N + 1))
    for t in range(N + 1):
        for k in range(t + 1):
            binom[t, k] = math.comb(t, k)

    # degree-t coefficient of the l-fold product, normalized so entries stay in [0, 1]
    conv = shares[0] ** ks * _reg_gamma_p_row(m, N, x[0])
    for j in range(1, l):
        row = shares[j] ** ks * _reg_gamma_p_row(m, N, x[j])
        nxt = np.empty(N + 1)
        for t in range(N + 1):
            nxt[t] = np.dot(binom[t, : t + 1] * row[: t + 1], conv[t::-1])
        conv = nxt

    masses = nbinom.pmf(ks, m, p_zero)
    value = float(np.dot(masses, conv))
    tail = float(nbinom.sf(N, m, p_zero))
    return TruncatedSeriesResult(
        value=min(max(value, 0.0), 1.0), truncation_order=N, tail_bound=tail
    )


# ---------------------------------------------------------------------------
# signed-log scalar arithmetic
# ---------------------------------------------------------------------------

def _sl_mul(a: tuple[float, float], b: tuple[float, float]) -> tuple[float, float]:
    if a[0] == 0.0 or b[0] == 0.0:
        return (0.0, -math.inf)
    return (a[0] * b[0], a[1] + b[1])


def _sl_add(a: tuple[float, float], b: tuple[float, float]) -> tuple[float, float]:
    if a[0] == 0.0:
        return b
    if b[0] == 0.0:
        return a
    if b[1] > a[1]:
        a, b = b, a
    x = a[0] * b[0] * math.exp(b[1] - a[1])  # in [-1, 1]
    if x == -1.0:
        return (0.0, -math.inf)
    return (a[0], a[1] + math.log1p(x))


def _log_binom(n: int, j: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(j + 1) - math.lgamma(n - j + 1)


# ---------------------------------------------------------------------------
# MGF pole decomposition
# ---------------------------------------------------------------------------

def _phi_table(poles: Sequence[float], multiplicities: Sequence[int],
               m: int) -> tuple[tuple[tuple[float, ...], ...], tuple[tuple[float, ...], ...]]:
    """Partial-fraction coefficient table in signed-log form.

    For pole kappa the entries are the derivatives, up to order
    m*q_kappa - 1, of g(s) = s**-1 * prod_{tau != kappa} (s + lam_tau)**(-m q_tau)
    evaluated at s = -lam_kappa.  Derivatives come from the exact Leibniz
    recurrence on g' = g * h with h the logarithmic derivative, never from
    finite differences.
    """
    signs_all: list[tuple[float, ...]] = []
    logs_all: list[tuple[float, ...]] = []
    for kap, lam_k in enumerate(poles):
        order = m * multiplicities[kap]
        diffs: list[tuple[float, int]] = []
        sign = -1.0  # 1/s at s = -lam_kappa
        logmag = -math.log(lam_k)
        for tau, lam_t in enumerate(poles):
            if tau == kap:
                continue
            d = lam_t - lam_k
            a = m * multiplicities[tau]
            diffs.append((d, a))
            if d < 0:
                sign *= (-1.0) ** a
            logmag -= a * math.log(abs(d))
        g: list[tuple[float, float]] = [(sign, logmag)]
        if order > 1:
            h: list[tuple[float, float]] = []
            for i in range(order - 1):
                # B_i = s**-(i+1) + sum_tau a_tau (s + lam_tau)**-(i+1) at s = -lam_kappa
                acc = ((-1.0) ** (i + 1), -(i + 1) * math.log(lam_k))
                for d, a in diffs:
                    s_t = 1.0 if d > 0 else (-1.0) ** (i + 1)
                    acc = _sl_add(acc, (s_t, math.log(a) - (i + 1) * math.log(abs(d))))
                h.append(((-1.0) ** (i + 1) * acc[0], acc[1] + math.lgamma(i + 1)))
            for n in range(order - 1):
                acc = (0.0, -math.inf)
                for j in range(n + 1):
                    prod = _sl_mul(g[j], h[n - j])
                    acc = _sl_add(acc, (prod[0], prod[1] + _log_binom(n, j)))
                g.append(acc)
        signs_all.append(tuple(s for s, _ in g))
        logs_all.append(tuple(v for _, v in g))
    return tuple(signs_all), tuple(logs_all)


def partial_fraction_coefficients(poles: Sequence[float], multiplicities: Sequence[int],
                                  m: int) -> list[np.ndarray]:
    """Materialize the partial-fraction coefficient table as float arrays.

    Entries outside float range come back as +-inf; the CDF evaluation works
    on the log-form table instead and is not affected.
    """
    signs, logs = _phi_table(tuple(poles), tuple(multiplicities), m)
    with np.errstate(over="ignore"):
        return [np.asarray(s) * np.exp(np.asarray(v)) for s, v in zip(signs, logs)]


def mgf_poles(l: int, config: HarqConfig, params: ChannelParams) -> PoleDecomposition:
    """Poles of the combined-SNR MGF after ``l`` rounds, with multiplicities.

    The poles are the reciprocal eigenvalues of the symmetric positive
    definite matrix sqrt(F) E sqrt(F), F = diag(omega_i P_i / m), E the
    underlying correlation matrix.  Eigenvalues with relative gaps below
    ``POLE_CLUSTER_RTOL`` merge into a single pole with summed multiplicity,
    because the expansion coefficients diverge in the confluent limit while
    the merged evaluation stays exact.
    """
    l = config.max_rounds if l is None else int(l)
    if not 1 <= l <= config.max_rounds:
        raise ValueError(f"need 1 <= l <= {config.max_rounds}, got {l}")
    if l > params.rounds:
        raise ValueError(f"channel model covers {params.rounds} rounds, requested {l}")
    scales = np.array(
        [params.omegas[i] * config.powers[i] / params.m for i in range(l)]
    )
    root = np.sqrt(scales)
    mat = correlation_matrix(l, params) * np.outer(root, root)
    eig = np.linalg.eigvalsh(mat)
    if eig[0] <= 0.0:
        raise np.linalg.LinAlgError("combined-SNR matrix is not positive definite")
    lam = np.sort(1.0 / eig)

    groups: list[list[float]] = [[float(lam[0])]]
    for v in lam[1:]:
        if v - groups[-1][-1] <= POLE_CLUSTER_RTOL * v:
            groups[-1].append(float(v))
        else:
            groups.append([float(v)])
    for g in groups:
        if len(g) > 1 and (g[-1] - g[0]) > 1e3 * np.finfo(float).eps * g[-1]:
            warnings.warn(
                "nearly confluent MGF poles merged; partial-fraction expansion "
                "is ill-conditioned for this power/correlation combination",
                PoleClusterWarning,
                stacklevel=2,
            )
            break
    poles = tuple(float(np.mean(g)) for g in groups)
    mults = tuple(len(g) for g in groups)

    signs, logs = _phi_table(poles, mults, params.m)
    log_prefactor = (
        params.m * l * math.log(params.m)
        + _log_correlation_factor(l, params)
        - params.m * sum(math.log(s) + math.log(params.m) for s in scales)
    )
    return PoleDecomposition(
        poles=poles,
        multiplicities=mults,
        coefficient_signs=signs,
        coefficient_logs=logs,
        log_prefactor=log_prefactor,
        fading_order=params.m,
    )


# ---------------------------------------------------------------------------
# CDF of the combined SNR
# ---------------------------------------------------------------------------

def _cdf_series(y: float, dec: PoleDecomposition) -> float | None:
    """Maclaurin evaluation of the combined-SNR CDF, exact in the lower tail.

    Expands prefactor * sum_j c_j y**(shape+j) / (shape+j)! where the c_j are
    the power-series coefficients of prod (1 + lam x)**(-m q).  Terms are
    rescaled by the largest pole so intermediates stay in range; an
    all-positive majorant series drives the stopping rule.  Returns None when
    the largest scaled argument makes the series impractical.
    """
    shape = dec.total_shape
    lam = []
    mult_shape = []
    for pole, q in zip(dec.poles, dec.multiplicities):
        lam.append(pole)
        mult_shape.append(dec.fading_order * q)
    z_max = max(lam) * y
    if z_max > 200.0:
        return None
    u = [p * y / z_max for p in lam]

    theta = [1.0]
    theta_hat = [1.0]
    eps: list[float] = []
    eps_hat: list[float] = []
    upow = list(u)
    ratio = 1.0
    total = 1.0
    total_hat = 1.0
    calm = 0
    j = 0
    while j < 20000:
        s = sum(a * up for a, up in zip(mult_shape, upow))
        eps_hat.append(s)
        eps.append(-s if (j % 2 == 0) else s)  # (-1)**(j+1) * s
        upow = [up * ui for up, ui in zip(upow, u)]
        nxt = sum(eps[i] * theta[j - i] for i in range(j + 1)) / (j + 1)
        nxt_hat = sum(eps_hat[i] * theta_hat[j - i] for i in range(j + 1)) / (j + 1)
        theta.append(nxt)
        theta_hat.append(nxt_hat)
        ratio *= z_max / (shape + j + 1)
        j += 1
        total += theta[j] * ratio
        term_hat = theta_hat[j] * ratio
        total_hat += term_hat
        if j > z_max and term_hat < 1e-17 * max(total_hat, 1.0):
            calm += 1
            if calm >= 4:
                break
        else:
            calm = 0
    if total <= 0.0:
        return 0.0
    log_val = dec.log_prefactor + shape * math.log(y) - math.lgamma(shape + 1) + math.log(total)
    if log_val < -745.0:
        return 0.0
    return min(math.exp(log_val), 1.0)


def combined_snr_cdf(y: float, dec: PoleDecomposition) -> float:
    """CDF of the weighted sum of round SNRs at threshold ``y``.

    Uses the partial-fraction expansion over the MGF poles; when that form
    has cancelled away more than six significant digits (the deep lower
    tail), the evaluation transparently switches to the Maclaurin series.
    """
    if y < 0:
        raise ValueError(f"threshold must be non-negative, got {y}")
    if y == 0.0:
        return 0.0
    m = dec.fading_order
    logy = math.log(y)
    logs: list[float] = []
    signs: list[float] = []
    for kap, (lam, q) in enumerate(zip(dec.poles, dec.multiplicities)):
        mq = m * q
        for idx in range(1, mq + 1):
            s = dec.coefficient_signs[kap][idx - 1]
            if s == 0.0:
                continue
            logs.append(
                dec.log_prefactor
                + dec.coefficient_logs[kap][idx - 1]
                - math.lgamma(mq - idx + 1)
                - math.lgamma(idx)
                + (mq - idx) * logy
                - lam * y
            )
            signs.append(s)

    crossover = False
    result = 1.0
    if logs:
        peak = max(logs)
        if peak == -math.inf:
            result = 1.0
        else:
            scaled = sum(s * math.exp(v - peak) for s, v in zip(signs, logs))
            scaled_abs = sum(math.exp(v - peak) for v in logs)
            log_abs_sum = peak + math.log(scaled_abs)
            if scaled == 0.0 or peak + math.log(abs(scaled)) > 700.0:
                crossover = True
            else:
                result = 1.0 + math.copysign(math.exp(peak + math.log(abs(scaled))), scaled)
                if result <= 0.0 or log_abs_sum > math.log(_CANCELLATION_GUARD * result):
                    crossover = True
    if crossover:
        series = _cdf_series(y, dec)
        if series is not None:
            return series
        warnings.warn(
            "combined-SNR CDF lost precision to cancellation and the series "
            "fallback is out of range; returning the clamped pole-form value",
            PoleClusterWarning,
            stacklevel=2,
        )
        if not math.isfinite(result):
            return 0.0
    return min(max(result, 0.0), 1.0)


# ---------------------------------------------------------------------------
# scheme-level outage
# ---------------------------------------------------------------------------

def outage_cc(config: HarqConfig, params: ChannelParams, l: int | None = None) -> float:
    """Chase-combining outage after ``l`` rounds: combined SNR below 2**R - 1."""
    l = config.max_rounds if l is None else int(l)
    dec = mgf_poles(l, config, params)
    return combined_snr_cdf(_snr_gap(config.rate), dec)


def outage_ir_lower(config: HarqConfig, params: ChannelParams, l: int | None = None) -> float:
    """Lower bound on incremental-redundancy outage after ``l`` rounds.

    Bounds the accumulated mutual information through the concavity of the
    log, which turns the event into the combined SNR falling below
    l * (2**(R/l) - 1).  Coincides with the other schemes at l = 1.
    """
    l = config.max_rounds if l is None else int(l)
    dec = mgf_poles(l, config, params)
    threshold = l * math.expm1(config.rate / l * _LN2)
    return combined_snr_cdf(threshold, dec)


def _log_high_snr_coefficient(scheme: Scheme, l: int, rate: float,
                              params: ChannelParams) -> float:
    if l < 0:
        raise ValueError(f"round count must be >= 0, got {l}")
    if l == 0:
        return 0.0
    if l > params.rounds:
        raise ValueError(f"channel model covers {params.rounds} rounds, requested {l}")
    m = params.m
    log_ell = _log_correlation_factor(l, params)
    sum_log_om = sum(math.log(params.omegas[i]) for i in range(l))
    if scheme is Scheme.TYPE1:
        return (
            m * l * math.log(m)
            + log_ell
            + m * l * math.log(_snr_gap(rate))
            - l * math.lgamma(m + 1)
            - m * sum_log_om
        )
    if scheme is Scheme.CC:
        return (
            m * l * math.log(m)
            + log_ell
            + m * l * math.log(_snr_gap(rate))
            - math.lgamma(m * l + 1)
            - m * sum_log_om
        )
    if scheme is Scheme.IR:
        return (
            m * l * math.log(m * l)
            + log_ell
            + m * l * math.log(math.expm1(rate / l * _LN2))
            - math.lgamma(m * l + 1)
            - m * sum_log_om
        )
    raise ValueError(f"unknown scheme {scheme!r}")


def high_snr_coefficient(scheme: Scheme, l: int, rate: float,
                         params: ChannelParams) -> float:
    """Scheme-dependent coefficient of the unified high-SNR outage law.

    The asymptotic outage after l rounds is this coefficient divided by the
    product of the first l powers raised to the fading order; l = 0 returns 1
    (the first transmission always happens).
    """
    return math.exp(_log_high_snr_coefficient(scheme, l, rate, params))


def outage_asymptotic(scheme: Scheme, l: int, config: HarqConfig,
                      params: ChannelParams) -> float:
    """High-SNR outage approximation after ``l`` rounds for the given scheme."""
    if l == 0:
        return 1.0
    if not 1 <= l <= config.max_rounds:
        raise ValueError(f"need 0 <= l <= {config.max_rounds}, got {l}")
    log_phi = _log_high_snr_coefficient(scheme, l, config.rate, params)
    log_pow = sum(math.log(config.powers[k]) for k in range(l))
    return math.exp(log_phi - params.m * log_pow)
