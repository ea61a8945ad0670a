"""Ground-truth Monte-Carlo engine.

Samples channel realizations with the exact shared-factor semantics of the
joint analyses (one middle matrix Y per trial for the double model, one
user-side factor X per shared-X group), computes exact per-trial mutual
informations, and aggregates streaming moments plus per-trial secrecy rates.

Determinism contract: results are bit-for-bit reproducible for a fixed
(seed, scenario, descriptor list), independent of chunk size and thread
count. Every trial draws from its own counter-based stream keyed on
(master seed, trial index), and chunk partials are reduced in chunk order.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ModelError
from .fixedpoint import MiDescriptor
from .scenario import ChannelStatistics, assemble_channel, draw_x, draw_y, trial_rng

DEFAULT_CHUNK = 512


def thread_budget() -> int:
    """Worker count for trial chunks, capped by IRS_SECRECY_THREADS."""
    env = os.environ.get("IRS_SECRECY_THREADS")
    if env is not None:
        try:
            cap = int(env)
        except ValueError as exc:
            raise ModelError(f"IRS_SECRECY_THREADS must be an integer, got {env!r}") from exc
        return max(1, cap)
    return min(4, os.cpu_count() or 1)


def mi_exact(z: float, H: np.ndarray, P: np.ndarray) -> float:
    """Exact mutual-information term logdet(z I + H P H^H) in nats.

    Computed from the Hermitian eigenvalues of the Gram matrix; every
    eigenvalue of z I + H P H^H is >= z > 0 so the log is safe.
    """
    if z <= 0:
        raise ModelError(f"noise power must be positive, got {z}")
    gram = H @ P @ H.conj().T
    gram = 0.5 * (gram + gram.conj().T)
    lam = np.linalg.eigvalsh(gram)
    if not np.all(np.isfinite(lam)):
        raise ModelError("non-finite channel entries in mutual-information evaluation")
    return float(np.sum(np.log(z + np.clip(lam, 0.0, None))))


def _mi_batch(z: float, H_stack: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Vectorized mi_exact over a stack of channels (n, N, M)."""
    gram = H_stack @ P @ H_stack.conj().transpose(0, 2, 1)
    gram = 0.5 * (gram + gram.conj().transpose(0, 2, 1))
    lam = np.linalg.eigvalsh(gram)
    return np.sum(np.log(z + np.clip(lam, 0.0, None)), axis=1).real


@dataclass(frozen=True)
class McRun:
    """Summary of one Monte-Carlo run.

    mi_mean / mi_cov are the empirical mean vector and covariance matrix of
    the per-trial mutual-information vector (nats), in descriptor order.
    secrecy holds the per-trial combined secrecy rate when a combiner was
    supplied (u-weighted rates, noise floors subtracted), else None.
    """

    n_trials: int
    seed: int
    labels: tuple
    mi_mean: np.ndarray
    mi_cov: np.ndarray
    secrecy: Optional[np.ndarray]
    mi_samples: Optional[np.ndarray]

    def mean_stderr(self) -> np.ndarray:
        """Standard error of each mi_mean entry."""
        return np.sqrt(np.diag(self.mi_cov) / self.n_trials)

    def secrecy_cdf(self, grid_nats: np.ndarray) -> np.ndarray:
        """Empirical CDF of the per-trial secrecy rate on a threshold grid."""
        if self.secrecy is None:
            raise ModelError("this run was made without a secrecy combiner")
        sorted_vals = np.sort(self.secrecy)
        return np.searchsorted(sorted_vals, np.asarray(grid_nats), side="left") / len(sorted_vals)


def _validate_groups(stats: ChannelStatistics, descriptors: Sequence[MiDescriptor]) -> dict:
    """Group ids map to exactly one user each (an X draw has one shape)."""
    group_user = {}
    for d in descriptors:
        seen = group_user.get(d.shared_x_group)
        if seen is None:
            group_user[d.shared_x_group] = d.user
        elif seen != d.user:
            raise ModelError(
                f"shared_x_group {d.shared_x_group} mixes users {seen!r} and {d.user!r}"
            )
        stats.user_r(d.user)  # raises on unknown tags
    return group_user


def _chunk_mis(
    stats: ChannelStatistics,
    descriptors: Sequence[MiDescriptor],
    precoders: dict,
    seed: int,
    start: int,
    count: int,
    group_user: dict,
) -> np.ndarray:
    """Per-trial MI matrix (count, K) for trials [start, start+count)."""
    groups = sorted(group_user)
    h_stacks = {
        i: np.empty((count, stats.user_n(d.user), stats.M), dtype=complex)
        for i, d in enumerate(descriptors)
    }
    for t in range(count):
        rng = trial_rng(seed, start + t)
        Y = draw_y(rng, stats.L, stats.M) if stats.model_kind == "double" else None
        xs = {g: draw_x(rng, stats.user_n(group_user[g]), stats.L) for g in groups}
        for i, d in enumerate(descriptors):
            h_stacks[i][t] = assemble_channel(stats, d.user, xs[d.shared_x_group], Y)
    out = np.empty((count, len(descriptors)))
    for i, d in enumerate(descriptors):
        out[:, i] = _mi_batch(d.noise, h_stacks[i], precoders[d.precoder])
    return out


def run_mc(
    stats: ChannelStatistics,
    descriptors: Sequence[MiDescriptor],
    precoders: dict,
    n_trials: int,
    seed: int,
    combiner: Optional[np.ndarray] = None,
    keep_samples: bool = False,
    chunk: int = DEFAULT_CHUNK,
    dump_csv: Optional[str] = None,
) -> McRun:
    """Monte-Carlo joint mutual-information statistics.

    combiner: optional weight vector u of length K; the per-trial secrecy
    rate is sum_i u_i (mi_i - N_i log z_i) in nats.
    dump_csv: optional path; writes rows `trial, mi_<label>..., secrecy_rate_nats`.
    """
    if n_trials < 1:
        raise ModelError("n_trials must be >= 1")
    descriptors = list(descriptors)
    group_user = _validate_groups(stats, descriptors)
    k = len(descriptors)
    labels = tuple(d.label for d in descriptors)
    floors = np.array([stats.user_n(d.user) * math.log(d.noise) for d in descriptors])

    starts = list(range(0, n_trials, chunk))
    sizes = [min(chunk, n_trials - s) for s in starts]
    parts: list = [None] * len(starts)

    def work(i: int) -> None:
        parts[i] = _chunk_mis(stats, descriptors, precoders, seed, starts[i], sizes[i], group_user)

    workers = min(thread_budget(), len(starts))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, range(len(starts))))
    else:
        for i in range(len(starts)):
            work(i)

    # merge exactly in chunk order: deterministic float reduction
    n_acc = 0
    mean_acc = np.zeros(k)
    m2_acc = np.zeros((k, k))
    secrecy = [] if combiner is not None else None
    store = [] if (keep_samples or dump_csv) else None
    for mis in parts:
        n_c = mis.shape[0]
        mean_c = mis.mean(axis=0)
        centered = mis - mean_c
        m2_c = centered.T @ centered
        if n_acc == 0:
            n_acc, mean_acc, m2_acc = n_c, mean_c, m2_c
        else:
            delta = mean_c - mean_acc
            total = n_acc + n_c
            m2_acc = m2_acc + m2_c + np.outer(delta, delta) * (n_acc * n_c / total)
            mean_acc = mean_acc + delta * (n_c / total)
            n_acc = total
        if secrecy is not None:
            secrecy.append((mis - floors) @ np.asarray(combiner))
        if store is not None:
            store.append(mis)

    cov = m2_acc / (n_acc - 1) if n_acc > 1 else np.zeros((k, k))
    cov = 0.5 * (cov + cov.T)
    secrecy_arr = np.concatenate(secrecy) if secrecy is not None else None
    samples = np.concatenate(store, axis=0) if store is not None else None

    if dump_csv is not None:
        _write_trials_csv(dump_csv, labels, samples, secrecy_arr)
    if not keep_samples:
        samples = None
    return McRun(
        n_trials=n_trials, seed=seed, labels=labels,
        mi_mean=mean_acc, mi_cov=cov, secrecy=secrecy_arr, mi_samples=samples,
    )


def _write_trials_csv(path: str, labels: tuple, samples: np.ndarray,
                      secrecy: Optional[np.ndarray]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["trial"] + [f"mi_{lab}" for lab in labels]
        if secrecy is not None:
            header.append("secrecy_rate_nats")
        writer.writerow(header)
        for t in range(samples.shape[0]):
            row = [str(t)] + [f"{v:.12e}" for v in samples[t]]
            if secrecy is not None:
                row.append(f"{secrecy[t]:.12e}")
            writer.writerow(row)
