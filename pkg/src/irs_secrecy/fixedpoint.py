"""Coupled fixed-point systems and deterministic mutual-information means.

Two systems are solved by damped fixed-point iteration:

- ``lbi`` (single correlated Rayleigh hop, N x M channel through an L-element
  deterministic aperture):

      alpha     = (1/M) Tr[ R (z I + alpha_bar R)^{-1} ]
      alpha_bar = (1/M) Tr[ T_eff (I + alpha T_eff)^{-1} ]

  with mean mutual information (natural log of det(z I + H P H^H))

      D = logdet(z I + alpha_bar R) + logdet(I + alpha T_eff) - M alpha alpha_bar.

- ``double`` (two correlated Rayleigh hops sharing a middle matrix):

      delta     = (1/L) Tr[ R G_R ],  G_R = (z I + (M omega omega_bar / (L delta)) R)^{-1}
      omega     = (1/M) Tr[ S G_S ],  G_S = ((1/delta) I + omega_bar S)^{-1}
      omega_bar = (1/M) Tr[ T G_T ],  G_T = (I + omega T)^{-1}

  with mean

      C = logdet(z I + (M omega omega_bar / (L delta)) R)
          + logdet(I + delta omega_bar S) + logdet(I + omega T)
          - 2 M omega omega_bar.

Each solver diagonalizes its input matrices once, so one iteration costs
O(N + L + M); the resolvent-style matrices are materialized after
convergence. Residuals are absolute direct-substitution gaps (the largest
change when the right-hand sides are re-evaluated at the solution); the
same measure is exposed by ``residual_lbi`` / ``residual_ds`` so converged
points can be re-checked independently of the solver loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConvergenceError, ModelError
from .scenario import ChannelStatistics

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000
DEFAULT_DAMPING = 0.5
_TINY = 1e-300


# ---------------------------------------------------------------------------
# descriptors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MiDescriptor:
    """One mutual-information term of a joint analysis.

    user: receiver tag, 'B' or 'E<i>'.
    precoder: which transmit covariance the term sees, 'W' (information),
        'V' (noise injection) or 'U' (their sum).
    noise: receiver noise power z in linear watts.
    shared_x_group: terms with equal group ids are evaluated on the same
        realization of the user-side Gaussian factor X.
    """

    user: str
    precoder: str
    noise: float
    shared_x_group: int

    def __post_init__(self):
        if self.precoder not in ("W", "V", "U"):
            raise ModelError(f"precoder tag must be 'W', 'V' or 'U', got {self.precoder!r}")
        if self.noise <= 0:
            raise ModelError(f"noise power must be positive, got {self.noise}")

    @property
    def label(self) -> str:
        return f"{self.user}{self.precoder}"


def wiretap_descriptors(stats: ChannelStatistics, eves: Optional[list] = None) -> list:
    """Descriptors (B,W), (E1,W), ... with independent X groups."""
    users = ["B"] + (eves if eves is not None else [f"E{i+1}" for i in range(stats.K_eves)])
    return [
        MiDescriptor(user=u, precoder="W", noise=stats.user_sigma2(u), shared_x_group=g)
        for g, u in enumerate(users)
    ]


def an_descriptors(stats: ChannelStatistics, eves: Optional[list] = None) -> list:
    """Descriptors (B,U), (B,V), (E1,U), (E1,V), ... where both terms of one
    user share that user's X realization."""
    users = ["B"] + (eves if eves is not None else [f"E{i+1}" for i in range(stats.K_eves)])
    descs = []
    for g, u in enumerate(users):
        z = stats.user_sigma2(u)
        descs.append(MiDescriptor(user=u, precoder="U", noise=z, shared_x_group=g))
        descs.append(MiDescriptor(user=u, precoder="V", noise=z, shared_x_group=g))
    return descs


def precoder_map(P_W: np.ndarray, P_V: Optional[np.ndarray] = None) -> dict:
    """Tag-to-matrix map used everywhere a descriptor selects its covariance."""
    if P_V is None:
        P_V = np.zeros_like(P_W)
    return {"W": P_W, "V": P_V, "U": P_W + P_V}


# ---------------------------------------------------------------------------
# solutions
# ---------------------------------------------------------------------------

def _herm_eig(mat: np.ndarray, name: str) -> tuple:
    mat = np.asarray(mat, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ModelError(f"{name} must be square, got {mat.shape}")
    lam, u = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    scale = max(abs(lam[-1]), 1.0) if lam.size else 1.0
    if lam.size and lam[0] < -1e-10 * scale:
        raise ModelError(f"{name} is not PSD (min eigenvalue {lam[0]:.3e})")
    return np.clip(lam, 0.0, None), u


@dataclass(frozen=True)
class LbiSolution:
    """Converged single-hop system: scalars, resolvent-style matrices and the
    inputs they were computed from."""

    alpha: float
    alpha_bar: float
    L_R: np.ndarray  # (z I + alpha_bar R)^{-1}
    L_T: np.ndarray  # (I + alpha T_eff)^{-1}
    z: float
    R: np.ndarray
    T_eff: np.ndarray
    m_dim: int
    n_iter: int
    residual: float


@dataclass(frozen=True)
class DsSolution:
    """Converged double-hop system: scalars, resolvents and inputs."""

    delta: float
    omega: float
    omega_bar: float
    G_R: np.ndarray  # (z I + (M omega omega_bar/(L delta)) R)^{-1}
    G_S: np.ndarray  # ((1/delta) I + omega_bar S)^{-1}
    F_S: np.ndarray  # (I + delta omega_bar S)^{-1} = G_S / delta
    G_T: np.ndarray  # (I + omega T)^{-1}
    z: float
    R: np.ndarray
    S: np.ndarray
    T_eff: np.ndarray
    m_dim: int
    l_dim: int
    n_iter: int
    residual: float

    @property
    def kappa(self) -> float:
        """The receive-side loading M omega omega_bar / (L delta)."""
        return self.m_dim * self.omega * self.omega_bar / (self.l_dim * self.delta)


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def solve_lbi(
    R: np.ndarray,
    T_eff: np.ndarray,
    z: float,
    m_dim: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    damping: float = DEFAULT_DAMPING,
    init: tuple = (1.0, 1.0),
) -> LbiSolution:
    """Solve the single-hop system to a direct-substitution residual < tol."""
    if z <= 0:
        raise ModelError(f"noise power must be positive, got {z}")
    lam_r, u_r = _herm_eig(R, "R")
    lam_t, u_t = _herm_eig(T_eff, "T_eff")
    m = float(m_dim)

    def step(a: float, ab: float) -> tuple:
        a_new = float(np.sum(lam_r / (z + ab * lam_r)) / m)
        ab_new = float(np.sum(lam_t / (1.0 + a * lam_t)) / m)
        return a_new, ab_new

    a, ab = float(init[0]), float(init[1])
    residual = math.inf
    for it in range(1, max_iter + 1):
        a_new, ab_new = step(a, ab)
        residual = max(abs(a_new - a), abs(ab_new - ab))
        if residual < tol:
            break  # the current point already satisfies the substitution test
        a = (1.0 - damping) * a + damping * a_new
        ab = (1.0 - damping) * ab + damping * ab_new
    else:
        raise ConvergenceError("single-hop fixed point did not converge", residual)

    L_R = (u_r / (z + ab * lam_r)) @ u_r.conj().T
    L_T = (u_t / (1.0 + a * lam_t)) @ u_t.conj().T
    return LbiSolution(
        alpha=a, alpha_bar=ab, L_R=L_R, L_T=L_T, z=float(z),
        R=np.asarray(R, dtype=complex), T_eff=np.asarray(T_eff, dtype=complex),
        m_dim=m_dim, n_iter=it, residual=residual,
    )


def residual_lbi_scalars(lam_r, lam_t, z, m, a, ab) -> float:
    a_new = float(np.sum(lam_r / (z + ab * lam_r)) / m)
    ab_new = float(np.sum(lam_t / (1.0 + a * lam_t)) / m)
    return max(abs(a_new - a), abs(ab_new - ab))


def residual_lbi(sol: LbiSolution) -> float:
    """Absolute direct-substitution residual of the converged point."""
    lam_r, _ = _herm_eig(sol.R, "R")
    lam_t, _ = _herm_eig(sol.T_eff, "T_eff")
    return residual_lbi_scalars(lam_r, lam_t, sol.z, float(sol.m_dim), sol.alpha, sol.alpha_bar)


def solve_ds(
    R: np.ndarray,
    S: np.ndarray,
    T_eff: np.ndarray,
    z: float,
    m_dim: int,
    l_dim: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    damping: float = DEFAULT_DAMPING,
    init: tuple = (1.0, 1.0, 1.0),
) -> DsSolution:
    """Solve the double-hop system to a direct-substitution residual < tol."""
    if z <= 0:
        raise ModelError(f"noise power must be positive, got {z}")
    lam_r, u_r = _herm_eig(R, "R")
    lam_s, u_s = _herm_eig(S, "S")
    lam_t, u_t = _herm_eig(T_eff, "T_eff")
    m, ell = float(m_dim), float(l_dim)
    if np.sum(lam_r) <= 0:
        raise ModelError("degenerate receive correlation: the double-hop system needs Tr R > 0")

    def step(d: float, o: float, ob: float) -> tuple:
        kappa = m * o * ob / (ell * d)
        d_new = float(np.sum(lam_r / (z + kappa * lam_r)) / ell)
        o_new = float(np.sum(lam_s / (1.0 / d + ob * lam_s)) / m)
        ob_new = float(np.sum(lam_t / (1.0 + o * lam_t)) / m)
        return d_new, o_new, ob_new

    d, o, ob = (float(x) for x in init)
    residual = math.inf
    for it in range(1, max_iter + 1):
        d_new, o_new, ob_new = step(d, o, ob)
        residual = max(abs(d_new - d), abs(o_new - o), abs(ob_new - ob))
        if residual < tol:
            break
        d = (1.0 - damping) * d + damping * d_new
        o = (1.0 - damping) * o + damping * o_new
        ob = (1.0 - damping) * ob + damping * ob_new
        if d <= 0:
            raise ModelError("double-hop system hit delta <= 0 (degenerate regime)")
    else:
        raise ConvergenceError("double-hop fixed point did not converge", residual)

    kappa = m * o * ob / (ell * d)
    G_R = (u_r / (z + kappa * lam_r)) @ u_r.conj().T
    G_S = (u_s / (1.0 / d + ob * lam_s)) @ u_s.conj().T
    F_S = (u_s / (1.0 + d * ob * lam_s)) @ u_s.conj().T
    G_T = (u_t / (1.0 + o * lam_t)) @ u_t.conj().T
    return DsSolution(
        delta=d, omega=o, omega_bar=ob, G_R=G_R, G_S=G_S, F_S=F_S, G_T=G_T,
        z=float(z), R=np.asarray(R, dtype=complex), S=np.asarray(S, dtype=complex),
        T_eff=np.asarray(T_eff, dtype=complex), m_dim=m_dim, l_dim=l_dim, n_iter=it,
        residual=residual,
    )


def residual_ds_scalars(lam_r, lam_s, lam_t, z, m, ell, d, o, ob) -> float:
    kappa = m * o * ob / (ell * d)
    d_new = float(np.sum(lam_r / (z + kappa * lam_r)) / ell)
    o_new = float(np.sum(lam_s / (1.0 / d + ob * lam_s)) / m)
    ob_new = float(np.sum(lam_t / (1.0 + o * lam_t)) / m)
    return max(abs(d_new - d), abs(o_new - o), abs(ob_new - ob))


def residual_ds(sol: DsSolution) -> float:
    """Absolute direct-substitution residual of the converged double-hop point."""
    lam_r, _ = _herm_eig(sol.R, "R")
    lam_s, _ = _herm_eig(sol.S, "S")
    lam_t, _ = _herm_eig(sol.T_eff, "T_eff")
    return residual_ds_scalars(
        lam_r, lam_s, lam_t, sol.z, float(sol.m_dim), float(sol.l_dim),
        sol.delta, sol.omega, sol.omega_bar,
    )


# ---------------------------------------------------------------------------
# deterministic equivalents
# ---------------------------------------------------------------------------

def _logdet_psd(mat: np.ndarray) -> float:
    sign, val = np.linalg.slogdet(mat)
    if sign.real <= 0:
        raise ModelError("logdet argument is not positive definite")
    return float(val)


def det_equiv_lbi(sol: LbiSolution) -> float:
    """Deterministic mean of logdet(z I + H P H^H) for the single-hop model
    (nats)."""
    n = sol.R.shape[0]
    d = _logdet_psd(sol.z * np.eye(n) + sol.alpha_bar * sol.R)
    d += _logdet_psd(np.eye(sol.T_eff.shape[0]) + sol.alpha * sol.T_eff)
    return d - sol.m_dim * sol.alpha * sol.alpha_bar


def det_equiv_ds(sol: DsSolution) -> float:
    """Deterministic mean of logdet(z I + H P H^H) for the double-hop model
    (nats)."""
    n = sol.R.shape[0]
    c = _logdet_psd(sol.z * np.eye(n) + sol.kappa * sol.R)
    c += _logdet_psd(np.eye(sol.S.shape[0]) + sol.delta * sol.omega_bar * sol.S)
    c += _logdet_psd(np.eye(sol.T_eff.shape[0]) + sol.omega * sol.T_eff)
    return c - 2.0 * sol.m_dim * sol.omega * sol.omega_bar


# ---------------------------------------------------------------------------
# effective transmit correlations and descriptor-level wrappers
# ---------------------------------------------------------------------------

def effective_transmit_corr(stats: ChannelStatistics, user: str, P: np.ndarray) -> np.ndarray:
    """Transmit-side correlation seen by the solvers once the precoder P is
    absorbed.

    double: T^{1/2} P T^{1/2} (M x M).
    lbi:    (M/L) A P A^H with A the deterministic aperture (L x L). The M/L
            factor rescales the solver's unit-variance trace convention to the
            per-column 1/L variance of the sampled Gaussian factor; without it
            the closed forms and the sampled channel describe different
            ensembles.
    """
    P = np.asarray(P, dtype=complex)
    if P.shape != (stats.M, stats.M):
        raise ModelError(f"precoder must be {stats.M}x{stats.M}, got {P.shape}")
    if stats.model_kind == "lbi":
        A = stats.lbi_aperture(user)
        out = (stats.M / stats.L) * (A @ P @ A.conj().T)
    else:
        out = stats.T_sqrt @ P @ stats.T_sqrt
    return 0.5 * (out + out.conj().T)


def solve_descriptor(stats: ChannelStatistics, desc: MiDescriptor, precoders: dict,
                     **solver_kwargs):
    """Solve the model-appropriate fixed point for one descriptor."""
    P = precoders[desc.precoder]
    T_eff = effective_transmit_corr(stats, desc.user, P)
    R = stats.user_r(desc.user)
    if stats.model_kind == "lbi":
        return solve_lbi(R, T_eff, desc.noise, stats.M, **solver_kwargs)
    return solve_ds(R, stats.ds_gram(desc.user), T_eff, desc.noise, stats.M, stats.L,
                    **solver_kwargs)


def mean_mi(stats: ChannelStatistics, desc: MiDescriptor, precoders: dict,
            solution=None) -> float:
    """Deterministic mean of the descriptor's logdet term (nats)."""
    sol = solution if solution is not None else solve_descriptor(stats, desc, precoders)
    return det_equiv_lbi(sol) if stats.model_kind == "lbi" else det_equiv_ds(sol)


def mean_rate(stats: ChannelStatistics, desc: MiDescriptor, precoders: dict,
              solution=None) -> float:
    """Deterministic mean rate: mean logdet minus the N log z noise floor."""
    n = stats.user_n(desc.user)
    return mean_mi(stats, desc, precoders, solution=solution) - n * math.log(desc.noise)
