"""Closed-form ergodic secrecy rates and secrecy outage probabilities.

All public entry points accept rate thresholds in bits and report rates in
both nats and bits; everything internal is in nats. The secrecy rate of a
wiretap pair is the positive part of the legitimate-link rate minus the
eavesdropper rate; with artificial noise the four-term combination

    [I_B(P_U) - I_B(P_V)] - [I_E(P_U) - I_E(P_V)],   P_U = P_W + P_V,

is used instead. Outage probabilities follow from the Gaussian fluctuation
approximation: P(secrecy rate < R) ~ Phi((R - mean) / sqrt(V)) with the
variance assembled from the joint fluctuation covariance of the per-term
mutual informations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import ndtr

from .cltcov import joint_cov, solve_all
from .errors import InvalidCovarianceError, ModelError
from .fixedpoint import (MiDescriptor, an_descriptors, mean_rate,
                         precoder_map, wiretap_descriptors)
from .scenario import ChannelStatistics, trial_rng

LN2 = math.log(2.0)

ArrayLike = Union[float, Sequence[float], np.ndarray]


def nats_to_bits(x: ArrayLike) -> ArrayLike:
    return np.asarray(x, dtype=float) / LN2 if np.ndim(x) else float(x) / LN2


def bits_to_nats(x: ArrayLike) -> ArrayLike:
    return np.asarray(x, dtype=float) * LN2 if np.ndim(x) else float(x) * LN2


@dataclass(frozen=True)
class SecrecyReport:
    """Ergodic secrecy rate plus the Gaussian outage description.

    ``mean_nats`` is the signed deterministic secrecy mean (before the
    positive part); ``esr_nats``/``esr_bits`` carry the positive part.
    """

    esr_nats: float
    esr_bits: float
    mean_nats: float
    variance: float
    model_kind: str
    an_enabled: bool

    def sop(self, r_bits: ArrayLike):
        """Outage probability at threshold(s) given in bits."""
        if self.variance <= 0.0:
            raise InvalidCovarianceError(
                f"secrecy-rate variance {self.variance:.3e} is not positive")
        r_nats = np.asarray(r_bits, dtype=float) * LN2
        out = ndtr((r_nats - self.mean_nats) / math.sqrt(self.variance))
        return float(out) if out.ndim == 0 else out


def _eve_tag(stats: ChannelStatistics, eve: Optional[str]) -> str:
    """Normalize an eavesdropper tag ('E', 'E1', ..., or None for the first)."""
    if eve is None:
        eve = "E1"
    return f"E{stats._eve_index(eve) + 1}"


def _selector_wiretap(descriptors: Sequence[MiDescriptor], eve: str) -> np.ndarray:
    u = np.zeros(len(descriptors))
    for i, d in enumerate(descriptors):
        if d.user == "B":
            u[i] = 1.0
        elif d.user == eve:
            u[i] = -1.0
    return u


def _selector_an(descriptors: Sequence[MiDescriptor], eve: str) -> np.ndarray:
    u = np.zeros(len(descriptors))
    for i, d in enumerate(descriptors):
        sign = {"U": 1.0, "V": -1.0}[d.precoder]
        if d.user == "B":
            u[i] = sign
        elif d.user == eve:
            u[i] = -sign
    return u


def _report(stats: ChannelStatistics, descriptors: Sequence[MiDescriptor],
            precoders: Dict[str, np.ndarray], u: np.ndarray,
            an_enabled: bool) -> SecrecyReport:
    sols = solve_all(stats, descriptors, precoders)
    # Noise floors cancel inside each same-user U/V pair but not across users,
    # so combine full per-term rates (floor subtracted) throughout.
    rates = np.array([mean_rate(stats, d, precoders, solution=sol)
                      for d, sol in zip(descriptors, sols)])
    mean_nats = float(u @ rates)
    cov = joint_cov(stats, descriptors, precoders, solutions=sols)
    variance = cov.quad_form(u)
    esr_nats = max(0.0, mean_nats)
    return SecrecyReport(
        esr_nats=esr_nats, esr_bits=esr_nats / LN2, mean_nats=mean_nats,
        variance=variance, model_kind=stats.model_kind, an_enabled=an_enabled,
    )


def esr_wiretap(stats: ChannelStatistics, P_W: np.ndarray,
                eve: Optional[str] = None) -> SecrecyReport:
    """Ergodic secrecy rate of the plain wiretap system (one eavesdropper)."""
    eve = _eve_tag(stats, eve)
    descriptors = wiretap_descriptors(stats, eves=[eve])
    u = _selector_wiretap(descriptors, eve)
    return _report(stats, descriptors, precoder_map(P_W), u, an_enabled=False)


def esr_an(stats: ChannelStatistics, P_W: np.ndarray, P_V: np.ndarray,
           eve: Optional[str] = None) -> SecrecyReport:
    """Ergodic secrecy rate with artificial noise of covariance P_V."""
    eve = _eve_tag(stats, eve)
    descriptors = an_descriptors(stats, eves=[eve])
    u = _selector_an(descriptors, eve)
    return _report(stats, descriptors, precoder_map(P_W, P_V), u, an_enabled=True)


def sop_wiretap(stats: ChannelStatistics, P_W: np.ndarray, r_bits: ArrayLike,
                eve: Optional[str] = None):
    """Secrecy outage probability of the plain wiretap system at threshold(s)
    in bits; vectorized over r_bits."""
    return esr_wiretap(stats, P_W, eve=eve).sop(r_bits)


def sop_an(stats: ChannelStatistics, P_W: np.ndarray, P_V: np.ndarray,
           r_bits: ArrayLike, eve: Optional[str] = None):
    """Secrecy outage probability with artificial noise at threshold(s) in
    bits; vectorized over r_bits."""
    return esr_an(stats, P_W, P_V, eve=eve).sop(r_bits)


@dataclass(frozen=True)
class MultiEveModel:
    """Joint Gaussian description of the per-eavesdropper secrecy rates.

    ``mu`` holds the signed per-Eve secrecy means (nats) and ``Q`` their
    fluctuation covariance; ``selectors`` records the per-Eve contraction of
    the underlying per-term covariance (rows align with ``labels``).
    """

    mu: np.ndarray
    Q: np.ndarray
    labels: Tuple[str, ...]
    selectors: np.ndarray

    @property
    def n_eves(self) -> int:
        return self.mu.shape[0]


def build_multi_eve_model(stats: ChannelStatistics, P_W: np.ndarray,
                          P_V: Optional[np.ndarray] = None) -> MultiEveModel:
    """Assemble the joint normal model over all eavesdroppers' secrecy rates.

    With P_V given the artificial-noise combination is used per Eve;
    otherwise the plain wiretap difference.
    """
    eves = [u for u in stats.users() if u != "B"]
    if P_V is None:
        descriptors = wiretap_descriptors(stats)
        precoders = precoder_map(P_W)
        selectors = np.stack([_selector_wiretap(descriptors, e) for e in eves])
    else:
        descriptors = an_descriptors(stats)
        precoders = precoder_map(P_W, P_V)
        selectors = np.stack([_selector_an(descriptors, e) for e in eves])

    sols = solve_all(stats, descriptors, precoders)
    rates = np.array([mean_rate(stats, d, precoders, solution=sol)
                      for d, sol in zip(descriptors, sols)])
    cov = joint_cov(stats, descriptors, precoders, solutions=sols)
    mu = selectors @ rates
    Q = selectors @ cov.matrix @ selectors.T
    Q = 0.5 * (Q + Q.T)
    return MultiEveModel(mu=mu, Q=Q, labels=tuple(eves), selectors=selectors)


_MVN_JITTER = 1e-10
_MVN_CHUNK = 65_536


def sop_multi_eve(model: MultiEveModel, r_bits,
                  n_samples: int = 10**6, seed: int = 0):
    """Probability that the worst per-Eve secrecy rate falls below the
    threshold, i.e. 1 - P(all rates > R) under N(mu, Q).

    Estimated by Cholesky-based Monte-Carlo with independent per-chunk
    substreams and an exact integer reduction; returns (estimate, stderr).
    ``r_bits`` may be a scalar or an array of thresholds; all thresholds are
    evaluated on the same sample set, so an array call yields a monotone
    curve. Output shapes follow the input.
    """
    if n_samples <= 0:
        raise ModelError("n_samples must be positive")
    k = model.n_eves
    try:
        chol = np.linalg.cholesky(model.Q + _MVN_JITTER * np.eye(k))
    except np.linalg.LinAlgError as exc:
        raise ModelError("per-Eve covariance is not positive semidefinite "
                         "within jitter") from exc
    r_arr = np.atleast_1d(np.asarray(r_bits, dtype=float))
    r_nats = r_arr * LN2
    below = np.zeros(r_nats.shape, dtype=np.int64)
    done = 0
    chunk_id = 0
    while done < n_samples:
        size = min(_MVN_CHUNK, n_samples - done)
        rng = trial_rng(seed, chunk_id)
        z = rng.standard_normal((size, k))
        worst = np.sort((model.mu + z @ chol.T).min(axis=1))
        below += np.searchsorted(worst, r_nats, side="left")
        done += size
        chunk_id += 1
    p = below / n_samples
    stderr = np.sqrt(np.clip(p * (1.0 - p), 0.0, None) / n_samples)
    if np.isscalar(r_bits) or np.ndim(r_bits) == 0:
        return float(p[0]), float(stderr[0])
    return p, stderr
