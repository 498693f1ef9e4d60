"""Monte Carlo outage estimation, the ground truth for the analytical paths.

Plain indicator-mean estimation over exact draws from the correlated channel
mixture; no variance reduction, so the estimator is trivially unbiased.
Trials are partitioned into fixed-size batches and every batch gets its own
seed-derived substream, which makes estimates bit-reproducible for a given
(seed, trials) regardless of how batches would be scheduled across workers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .channel import ChannelParams, _sample_powers
from .outage import Scheme

__all__ = [
    "OutageEstimate",
    "estimate_all_schemes",
    "estimate_outage",
    "estimate_outage_sequence",
]

#: trials per RNG substream; fixed so the trial-to-stream mapping never changes
BATCH_TRIALS = 1_000_000

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class OutageEstimate:
    """Indicator-mean outage estimate with a 95% normal-approximation interval."""

    p_hat: float
    trials: int
    half_width: float
    seed: int


def _finalize(count: int, trials: int, seed: int) -> OutageEstimate:
    p = count / trials
    half = 1.96 * math.sqrt(p * (1.0 - p) / trials)
    if count < 100:
        warnings.warn(
            f"only {count} outage events in {trials} trials; the estimate is "
            "unreliable at this probability scale",
            UserWarning,
            stacklevel=3,
        )
    return OutageEstimate(p_hat=p, trials=trials, half_width=half, seed=seed)


def _scheme_counts(schemes: tuple[Scheme, ...], max_rounds: int,
                   powers: np.ndarray, rate: float, params: ChannelParams,
                   trials: int, seed: int) -> dict[Scheme, np.ndarray]:
    """Outage event counts per scheme and per round count 1..max_rounds.

    All schemes are evaluated on the same channel draws (common random
    numbers), so cross-scheme comparisons hold per seed, not just on average.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    gap = math.expm1(rate * _LN2)
    counts = {s: np.zeros(max_rounds, dtype=np.int64) for s in schemes}
    done = 0
    batch = 0
    while done < trials:
        n = min(BATCH_TRIALS, trials - done)
        rng = np.random.default_rng([seed, batch])
        gains = _sample_powers(max_rounds, params, rng, n) * powers
        for scheme in schemes:
            if scheme is Scheme.TYPE1:
                events = np.logical_and.accumulate(gains < gap, axis=1)
            elif scheme is Scheme.CC:
                events = np.cumsum(gains, axis=1) < gap
            else:
                info = np.cumsum(np.log1p(gains) / _LN2, axis=1)
                events = info < rate
            counts[scheme] += events.sum(axis=0, dtype=np.int64)
        done += n
        batch += 1
    return counts


def estimate_outage(scheme: Scheme, l: int, powers, rate: float,
                    params: ChannelParams, trials: int, seed: int) -> OutageEstimate:
    """Estimate the outage probability after ``l`` rounds by direct simulation.

    Type I counts trials where every round's mutual information missed the
    rate; chase combining compares the summed round SNRs against 2**R - 1;
    incremental redundancy accumulates the per-round mutual information
    (its exact outage event, not the analytic lower bound).
    """
    powers = np.asarray([float(p) for p in powers])[:l]
    if len(powers) < l:
        raise ValueError(f"need {l} powers, got {len(powers)}")
    counts = _scheme_counts((scheme,), l, powers, rate, params, trials, seed)
    return _finalize(int(counts[scheme][l - 1]), trials, seed)


def estimate_outage_sequence(scheme: Scheme, max_rounds: int, powers, rate: float,
                             params: ChannelParams, trials: int,
                             seed: int) -> list[OutageEstimate]:
    """Estimates after l = 1..max_rounds rounds from a single simulation pass.

    The per-round events are nested (Type I) or accumulate evidence (CC, IR),
    so the estimates are non-increasing in l trial by trial.
    """
    powers = np.asarray([float(p) for p in powers])[:max_rounds]
    if len(powers) < max_rounds:
        raise ValueError(f"need {max_rounds} powers, got {len(powers)}")
    counts = _scheme_counts((scheme,), max_rounds, powers, rate, params, trials, seed)
    return [_finalize(int(c), trials, seed) for c in counts[scheme]]


def estimate_all_schemes(max_rounds: int, powers, rate: float, params: ChannelParams,
                         trials: int, seed: int) -> dict[Scheme, list[OutageEstimate]]:
    """Per-scheme estimate sequences sharing one set of channel draws."""
    powers = np.asarray([float(p) for p in powers])[:max_rounds]
    if len(powers) < max_rounds:
        raise ValueError(f"need {max_rounds} powers, got {len(powers)}")
    schemes = (Scheme.TYPE1, Scheme.CC, Scheme.IR)
    counts = _scheme_counts(schemes, max_rounds, powers, rate, params, trials, seed)
    return {
        s: [_finalize(int(c), trials, seed) for c in counts[s]] for s in schemes
    }
