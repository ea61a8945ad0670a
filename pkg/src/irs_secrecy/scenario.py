"""Deterministic model objects and channel sampling.

Builds everything that defines one statistical channel state: antenna
correlation matrices from a truncated-Gaussian angular power spectrum, the
deterministic line-of-sight link between the transmitter and the reflecting
surface, distance-based path gains, the diagonal phase-shift matrix, and the
random channel realizations used by the Monte-Carlo oracle.

Two channel factorizations are supported:

- ``lbi``: a deterministic (line-of-sight) transmitter-to-surface link, so the
  end-to-end channel is a single correlated Rayleigh hop
  ``H_k = R_k^{1/2} X_k T_{S,k}^{1/2} Theta H_0 T^{1/2}``.
- ``double``: two correlated Rayleigh hops sharing the middle matrix ``Y``,
  ``H_k = R_k^{1/2} X_k S_k^{+/2} Y T^{1/2}`` with
  ``S_k^{+/2} = T_{S,k}^{1/2} Theta R_S^{1/2}``.

Entries of ``X_k`` are CN(0, 1/L) and entries of ``Y`` are CN(0, 1/M); these
sampling conventions are load-bearing for every closed form downstream.
All angles in configuration are degrees; all internal math is radians.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, ModelError

HERMITIAN_TOL = 1e-12
PSD_CLIP_TOL = 1e-10


# ---------------------------------------------------------------------------
# correlation matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorrelationSpec:
    """Angular spectrum of a uniform linear array.

    d_r: antenna spacing in wavelengths (> 0).
    eta: mean angle of arrival/departure in degrees.
    delta: angular spread (standard deviation) in degrees (> 0).
    n: number of array elements (>= 1).
    """

    d_r: float
    eta: float
    delta: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ModelError(f"correlation dimension must be >= 1, got {self.n}")
        if self.d_r <= 0:
            raise ModelError(f"antenna spacing must be positive, got {self.d_r}")
        if self.delta <= 0:
            raise ModelError(f"angle spread must be positive, got {self.delta}")


def build_correlation_matrix(spec: CorrelationSpec, step_deg: float = 0.01) -> np.ndarray:
    """Correlation matrix of a uniform linear array under a truncated-Gaussian
    angular density.

    Entry (m, n) is the trapezoid quadrature over phi in [-180, 180] degrees of

        (1 / sqrt(2 pi delta^2)) *
        exp(j 2 pi d_r (m - n) sin(pi phi / 180) - (phi - eta)^2 / (2 delta^2)).

    The matrix depends on (m - n) only, so a single pass over the 2n-1 offsets
    fills a Hermitian Toeplitz matrix. The result is symmetrized exactly.
    """
    if step_deg <= 0 or step_deg > 1.0:
        raise ConfigError(f"quadrature step must be in (0, 1] degrees, got {step_deg}")
    phi = np.arange(-180.0, 180.0 + 0.5 * step_deg, step_deg)
    # trapezoid weights for a uniform grid
    w = np.full(phi.shape, step_deg)
    w[0] *= 0.5
    w[-1] *= 0.5
    density = np.exp(-((phi - spec.eta) ** 2) / (2.0 * spec.delta**2))
    density /= math.sqrt(2.0 * math.pi * spec.delta**2)
    weighted = density * w

    offsets = np.arange(spec.n)
    # (n, n_phi) phase table for the non-negative offsets; negatives conjugate
    phase = np.exp(1j * 2.0 * math.pi * spec.d_r * np.outer(offsets, np.sin(np.pi * phi / 180.0)))
    col = phase @ weighted  # entry for offset m - n = +k

    idx = np.subtract.outer(offsets, offsets)  # m - n
    mat = np.where(idx >= 0, col[np.abs(idx)], np.conj(col[np.abs(idx)]))
    return 0.5 * (mat + mat.conj().T)


def check_correlation(mat: np.ndarray, name: str = "correlation") -> None:
    """Validate the structural invariants of a correlation matrix: Hermitian
    to 1e-12 and eigenvalues >= -1e-10 (relative to the spectral norm)."""
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ModelError(f"{name} must be square, got shape {mat.shape}")
    if np.max(np.abs(mat - mat.conj().T)) >= HERMITIAN_TOL:
        raise ModelError(f"{name} is not Hermitian to {HERMITIAN_TOL:g}")
    eig = np.linalg.eigvalsh(mat)
    scale = max(eig[-1], 1.0)
    if eig[0] < -PSD_CLIP_TOL * scale:
        raise ModelError(f"{name} has eigenvalue {eig[0]:.3e} below the PSD clip tolerance")


# ---------------------------------------------------------------------------
# deterministic link, path loss, phases
# ---------------------------------------------------------------------------

def build_los_channel(M: int, L: int, d_bs: float = 1.0, d_irs: float = 1.0) -> np.ndarray:
    """Deterministic unit-modulus L x M line-of-sight link matrix.

    Built from two fixed uniform angle grids, theta1(l) = pi (l-1) / L over
    [0, pi) and phi2(m) = 2 pi (m-1) / M over [0, 2 pi):

        [H0]_{l,m} = exp{ j 2 pi [ d_irs (l-1) sin(phi2(m))
                                   + d_bs (m-1) sin(theta1(l)) ] }

    Spacings are in wavelengths. Coupling each row index with the column
    grid (and vice versa) makes the matrix numerically full rank; a plain
    outer sum of per-row and per-column phases would be rank one.
    """
    if M < 1 or L < 1:
        raise ModelError(f"dimensions must be >= 1, got M={M}, L={L}")
    ls = np.arange(L)
    ms = np.arange(M)
    theta1 = math.pi * ls / L
    phi2 = 2.0 * math.pi * ms / M
    phase = d_irs * np.outer(ls, np.sin(phi2)) + d_bs * np.outer(np.sin(theta1), ms)
    return np.exp(1j * 2.0 * math.pi * phase)


def path_loss(c_ref: float, d: float, alpha: float) -> float:
    """Distance-based power gain ``c_ref / d**alpha``.

    c_ref is the linear reference gain at 1 m and d is in meters (> 0).
    """
    if d <= 0:
        raise ModelError(f"distance must be positive, got {d}")
    return c_ref / d**alpha


def phase_matrix(theta: np.ndarray) -> np.ndarray:
    """Diagonal unit-modulus matrix diag(exp(j theta_1), ..., exp(j theta_L))."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1:
        raise ModelError(f"phase vector must be 1-D, got shape {theta.shape}")
    return np.diag(np.exp(1j * theta))


def psd_sqrt(mat: np.ndarray, clip_tol: float = PSD_CLIP_TOL) -> np.ndarray:
    """Hermitian square root via eigendecomposition.

    Eigenvalues below zero are clipped at zero; an eigenvalue below
    ``-clip_tol * max(1, spectral norm)`` means the input is not a
    correlation matrix and raises instead of being silently repaired.
    """
    mat = np.asarray(mat)
    lam, u = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    scale = max(abs(lam[-1]), 1.0)
    if lam[0] < -clip_tol * scale:
        raise ModelError(f"matrix eigenvalue {lam[0]:.3e} below -{clip_tol:g} * scale; not PSD")
    lam = np.clip(lam, 0.0, None)
    return (u * np.sqrt(lam)) @ u.conj().T


# ---------------------------------------------------------------------------
# channel statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelStatistics:
    """All deterministic matrices defining one statistical channel state.

    Path gains are already folded multiplicatively into the receive-side
    correlations ``R_B`` / ``R_E_list``, so downstream formulas see a single
    matrix per side. ``R_S`` is None for the ``lbi`` model (that link is
    deterministic). Square roots of the theta-independent matrices are
    precomputed; everything that depends on ``theta`` is assembled on demand.
    """

    model_kind: str  # "lbi" | "double"
    R_B: np.ndarray
    R_E_list: tuple
    T_S_B: np.ndarray
    T_S_E_list: tuple
    T: np.ndarray
    H_T0: np.ndarray
    theta: np.ndarray
    sigma2_B: float
    sigma2_E_list: tuple
    R_S: Optional[np.ndarray] = None
    # precomputed square roots (filled by build_channel_statistics)
    R_B_sqrt: np.ndarray = field(default=None, repr=False)
    R_E_sqrt_list: tuple = field(default=None, repr=False)
    T_S_B_sqrt: np.ndarray = field(default=None, repr=False)
    T_S_E_sqrt_list: tuple = field(default=None, repr=False)
    T_sqrt: np.ndarray = field(default=None, repr=False)
    R_S_sqrt: Optional[np.ndarray] = field(default=None, repr=False)

    # -- dimensions ---------------------------------------------------------

    @property
    def M(self) -> int:
        return self.T.shape[0]

    @property
    def L(self) -> int:
        return self.H_T0.shape[0]

    @property
    def K_eves(self) -> int:
        return len(self.R_E_list)

    def users(self) -> list:
        return ["B"] + [f"E{i + 1}" for i in range(self.K_eves)]

    # -- per-user accessors -------------------------------------------------

    def _eve_index(self, user: str) -> int:
        if user == "E":
            return 0
        if user.startswith("E") and user[1:].isdigit():
            idx = int(user[1:]) - 1
            if 0 <= idx < self.K_eves:
                return idx
        raise ModelError(f"unknown user tag {user!r}; expected 'B' or 'E1'..'E{self.K_eves}'")

    def user_r(self, user: str) -> np.ndarray:
        return self.R_B if user == "B" else self.R_E_list[self._eve_index(user)]

    def user_r_sqrt(self, user: str) -> np.ndarray:
        return self.R_B_sqrt if user == "B" else self.R_E_sqrt_list[self._eve_index(user)]

    def user_ts_sqrt(self, user: str) -> np.ndarray:
        return self.T_S_B_sqrt if user == "B" else self.T_S_E_sqrt_list[self._eve_index(user)]

    def user_sigma2(self, user: str) -> float:
        return self.sigma2_B if user == "B" else self.sigma2_E_list[self._eve_index(user)]

    def user_n(self, user: str) -> int:
        return self.user_r(user).shape[0]

    # -- theta-dependent assemblies ------------------------------------------

    def theta_matrix(self) -> np.ndarray:
        return phase_matrix(self.theta)

    def with_theta(self, theta: np.ndarray) -> "ChannelStatistics":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.L,):
            raise ModelError(f"theta must have shape ({self.L},), got {theta.shape}")
        return replace(self, theta=theta)

    def lbi_aperture(self, user: str) -> np.ndarray:
        """Deterministic L x M factor ``T_{S,k}^{1/2} Theta H_0 T^{1/2}`` of
        the lbi channel. Only valid for model_kind == 'lbi'."""
        if self.model_kind != "lbi":
            raise ModelError("lbi_aperture is only defined for the lbi model")
        phases = np.exp(1j * self.theta)
        return self.user_ts_sqrt(user) @ (phases[:, None] * self.H_T0) @ self.T_sqrt

    def ds_plus_half(self, user: str) -> np.ndarray:
        """Half factor ``S_k^{+/2} = T_{S,k}^{1/2} Theta R_S^{1/2}`` (L x L)."""
        if self.model_kind != "double":
            raise ModelError("ds_plus_half is only defined for the double model")
        phases = np.exp(1j * self.theta)
        return self.user_ts_sqrt(user) @ (phases[:, None] * self.R_S_sqrt)

    def ds_gram(self, user: str) -> np.ndarray:
        """Surface Gram matrix ``S_k = S_k^{-/2} S_k^{+/2}`` (L x L, PSD)."""
        plus = self.ds_plus_half(user)
        gram = plus.conj().T @ plus
        return 0.5 * (gram + gram.conj().T)


def build_channel_statistics(
    model_kind: str,
    R_B: np.ndarray,
    R_E_list: Sequence[np.ndarray],
    T_S_B: np.ndarray,
    T_S_E_list: Sequence[np.ndarray],
    T: np.ndarray,
    H_T0: np.ndarray,
    theta: np.ndarray,
    sigma2_B: float,
    sigma2_E_list: Sequence[float],
    R_S: Optional[np.ndarray] = None,
) -> ChannelStatistics:
    """Validate inputs, precompute square roots and freeze the statistics."""
    if model_kind not in ("lbi", "double"):
        raise ConfigError(f"model.kind must be 'lbi' or 'double', got {model_kind!r}")
    if model_kind == "double" and R_S is None:
        raise ConfigError("the double-scattering model requires R_S")
    if len(R_E_list) != len(T_S_E_list) or len(R_E_list) != len(sigma2_E_list):
        raise ConfigError("R_E, T_S_E and sigma2_E lists must have equal length")
    if len(R_E_list) < 1:
        raise ConfigError("at least one eavesdropper is required")

    L, M = H_T0.shape
    if not np.allclose(np.abs(H_T0), 1.0, atol=1e-9):
        raise ModelError("line-of-sight matrix entries must be unit modulus")
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (L,):
        raise ModelError(f"theta must have shape ({L},), got {theta.shape}")

    named = {"R_B": R_B, "T_S_B": T_S_B, "T": T}
    for i, (re, tse) in enumerate(zip(R_E_list, T_S_E_list)):
        named[f"R_E{i + 1}"] = re
        named[f"T_S_E{i + 1}"] = tse
    if R_S is not None:
        named["R_S"] = R_S
    for name, mat in named.items():
        check_correlation(np.asarray(mat), name)
    if T_S_B.shape != (L, L):
        raise ModelError(f"T_S_B must be {L}x{L}, got {T_S_B.shape}")
    for i, tse in enumerate(T_S_E_list):
        if tse.shape != (L, L):
            raise ModelError(f"T_S_E{i + 1} must be {L}x{L}, got {tse.shape}")
    if T.shape != (M, M):
        raise ModelError(f"T must be {M}x{M}, got {T.shape}")
    if R_S is not None and R_S.shape != (L, L):
        raise ModelError(f"R_S must be {L}x{L}, got {R_S.shape}")
    if sigma2_B <= 0 or any(s <= 0 for s in sigma2_E_list):
        raise ModelError("noise powers must be positive")

    return ChannelStatistics(
        model_kind=model_kind,
        R_B=np.asarray(R_B, dtype=complex),
        R_E_list=tuple(np.asarray(m, dtype=complex) for m in R_E_list),
        T_S_B=np.asarray(T_S_B, dtype=complex),
        T_S_E_list=tuple(np.asarray(m, dtype=complex) for m in T_S_E_list),
        T=np.asarray(T, dtype=complex),
        H_T0=np.asarray(H_T0, dtype=complex),
        theta=theta,
        sigma2_B=float(sigma2_B),
        sigma2_E_list=tuple(float(s) for s in sigma2_E_list),
        R_S=None if R_S is None else np.asarray(R_S, dtype=complex),
        R_B_sqrt=psd_sqrt(R_B),
        R_E_sqrt_list=tuple(psd_sqrt(m) for m in R_E_list),
        T_S_B_sqrt=psd_sqrt(T_S_B),
        T_S_E_sqrt_list=tuple(psd_sqrt(m) for m in T_S_E_list),
        T_sqrt=psd_sqrt(T),
        R_S_sqrt=None if R_S is None else psd_sqrt(R_S),
    )


# ---------------------------------------------------------------------------
# channel sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelSample:
    """One random realization of a user's channel.

    H: the end-to-end N_k x M channel.
    X: the user-side Gaussian factor (N_k x L, entries CN(0, 1/L)).
    Y: the shared middle factor (L x M, entries CN(0, 1/M)); None for lbi.
    seed: the seed the sample was drawn from (None when an external
    generator supplied the randomness).
    """

    H: np.ndarray
    X: np.ndarray
    Y: Optional[np.ndarray]
    seed: Optional[int]


def complex_gaussian(rng: np.random.Generator, rows: int, cols: int, var: float) -> np.ndarray:
    """Matrix with i.i.d. circularly-symmetric complex Gaussian entries of
    variance ``var`` (real and imaginary parts each carry var/2)."""
    scale = math.sqrt(var / 2.0)
    return scale * (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols)))


def draw_x(rng: np.random.Generator, n: int, L: int) -> np.ndarray:
    return complex_gaussian(rng, n, L, 1.0 / L)


def draw_y(rng: np.random.Generator, L: int, M: int) -> np.ndarray:
    return complex_gaussian(rng, L, M, 1.0 / M)


def assemble_channel(
    stats: ChannelStatistics, user: str, X: np.ndarray, Y: Optional[np.ndarray]
) -> np.ndarray:
    """End-to-end channel from the Gaussian factors, per the model kind."""
    if stats.model_kind == "lbi":
        return stats.user_r_sqrt(user) @ X @ stats.lbi_aperture(user)
    if Y is None:
        raise ModelError("the double-scattering model needs the shared Y factor")
    return stats.user_r_sqrt(user) @ X @ stats.ds_plus_half(user) @ Y @ stats.T_sqrt


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Counter-based per-trial stream keyed on (master seed, trial index)."""
    return np.random.Generator(np.random.Philox(key=np.array([seed, trial], dtype=np.uint64)))


def sample_channel(stats: ChannelStatistics, user: str, seed: int) -> ChannelSample:
    """Draw one channel realization for ``user`` from a counter-based stream.

    Draw order is fixed (Y first for the double model, then X) so that
    samples sharing a seed share their common factors.
    """
    rng = trial_rng(seed, 0)
    Y = draw_y(rng, stats.L, stats.M) if stats.model_kind == "double" else None
    X = draw_x(rng, stats.user_n(user), stats.L)
    return ChannelSample(H=assemble_channel(stats, user, X, Y), X=X, Y=Y, seed=seed)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Parsed and validated scenario configuration (see README for the full
    key reference). Dimensions, model kind, correlation specs, path loss,
    noise and power are exactly the file contents; derived linear quantities
    are exposed as properties."""

    M: int
    L: int
    N_B: int
    N_E: tuple
    K_eves: int
    model_kind: str
    correlations: dict
    C1: float
    C2: float
    alpha1: float
    alpha2: float
    d_bs_irs: float
    d_irs_b: float
    d_irs_e: tuple
    sigma2_dbm: float
    P_dbm: float
    split_w: float
    split_v: float
    theta_init: str
    theta_file: Optional[str] = None

    @property
    def sigma2_watts(self) -> float:
        return dbm_to_watts(self.sigma2_dbm)

    @property
    def p_watts(self) -> float:
        return dbm_to_watts(self.P_dbm)


def _require(section: dict, key: str, path: str):
    if key not in section:
        raise ConfigError(f"{path}.{key}: missing required key")
    return section[key]


def _corr_entry(entry, n: int, path: str):
    """Parse one correlation entry: a gaussian spec dict or an identity tag."""
    if entry is None:
        return ("identity", None)
    if not isinstance(entry, dict):
        raise ConfigError(f"{path}: expected an object or null")
    kind = entry.get("kind", "gaussian")
    if kind == "identity":
        return ("identity", None)
    if kind != "gaussian":
        raise ConfigError(f"{path}.kind: expected 'gaussian' or 'identity', got {kind!r}")
    try:
        spec = CorrelationSpec(
            d_r=float(_require(entry, "d_r", path)),
            eta=float(_require(entry, "eta", path)),
            delta=float(_require(entry, "delta", path)),
            n=n,
        )
    except ModelError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return ("gaussian", spec)


def load_config(path: str) -> ScenarioConfig:
    """Read and validate a JSON scenario configuration file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return parse_config(raw)


def parse_config(raw: dict) -> ScenarioConfig:
    dims = _require(raw, "dimensions", "config")
    model = _require(raw, "model", "config")
    corr = _require(raw, "correlations", "config")
    ploss = _require(raw, "pathloss", "config")
    noise = _require(raw, "noise", "config")
    power = _require(raw, "power", "config")
    theta = raw.get("theta", {"init": "zeros"})

    M = int(_require(dims, "M", "dimensions"))
    L = int(_require(dims, "L", "dimensions"))
    N_B = int(_require(dims, "N_B", "dimensions"))
    N_E = _require(dims, "N_E", "dimensions")
    K = int(dims.get("K_eves", len(N_E) if isinstance(N_E, list) else 1))
    if not isinstance(N_E, list) or len(N_E) != K:
        raise ConfigError("dimensions.N_E: expected a list of length K_eves")
    if min(M, L, N_B, *N_E) < 1:
        raise ConfigError("dimensions: all dimensions must be >= 1")

    kind = _require(model, "kind", "model")
    if kind not in ("lbi", "double"):
        raise ConfigError(f"model.kind: expected 'lbi' or 'double', got {kind!r}")

    parsed_corr = {
        "R_B": _corr_entry(corr.get("R_B"), N_B, "correlations.R_B"),
        "T_S_B": _corr_entry(corr.get("T_S_B"), L, "correlations.T_S_B"),
        "T": _corr_entry(corr.get("T"), M, "correlations.T"),
    }
    r_e_raw = corr.get("R_E")
    ts_e_raw = corr.get("T_S_E")
    if not isinstance(r_e_raw, list) or len(r_e_raw) != K:
        raise ConfigError("correlations.R_E: expected a list of length K_eves")
    if not isinstance(ts_e_raw, list) or len(ts_e_raw) != K:
        raise ConfigError("correlations.T_S_E: expected a list of length K_eves")
    parsed_corr["R_E"] = tuple(
        _corr_entry(e, n, f"correlations.R_E[{i}]") for i, (e, n) in enumerate(zip(r_e_raw, N_E))
    )
    parsed_corr["T_S_E"] = tuple(
        _corr_entry(e, L, f"correlations.T_S_E[{i}]") for i, e in enumerate(ts_e_raw)
    )
    if kind == "double":
        parsed_corr["R_S"] = _corr_entry(corr.get("R_S"), L, "correlations.R_S")

    d_irs_e = _require(ploss, "d_irs_e", "pathloss")
    if not isinstance(d_irs_e, list) or len(d_irs_e) != K:
        raise ConfigError("pathloss.d_irs_e: expected a list of length K_eves")
    for key in ("C1", "C2", "alpha1", "alpha2", "d_bs_irs", "d_irs_b"):
        _require(ploss, key, "pathloss")
    if float(ploss["d_bs_irs"]) <= 0 or float(ploss["d_irs_b"]) <= 0 or any(
        float(d) <= 0 for d in d_irs_e
    ):
        raise ConfigError("pathloss: all distances must be positive")

    split_w = float(power.get("split_w", 1.0))
    split_v = float(power.get("split_v", 0.0))
    if split_w < 0 or split_v < 0 or split_w + split_v > 1.0 + 1e-12:
        raise ConfigError("power: split_w and split_v must be nonnegative with sum <= 1")

    init = theta.get("init", "zeros")
    if init not in ("zeros", "uniform", "file"):
        raise ConfigError(f"theta.init: expected 'zeros', 'uniform' or 'file', got {init!r}")
    theta_file = theta.get("file")
    if init == "file" and not theta_file:
        raise ConfigError("theta.file: required when theta.init is 'file'")

    return ScenarioConfig(
        M=M,
        L=L,
        N_B=N_B,
        N_E=tuple(int(n) for n in N_E),
        K_eves=K,
        model_kind=kind,
        correlations=parsed_corr,
        C1=float(ploss["C1"]),
        C2=float(ploss["C2"]),
        alpha1=float(ploss["alpha1"]),
        alpha2=float(ploss["alpha2"]),
        d_bs_irs=float(ploss["d_bs_irs"]),
        d_irs_b=float(ploss["d_irs_b"]),
        d_irs_e=tuple(float(d) for d in d_irs_e),
        sigma2_dbm=float(_require(noise, "sigma2_dbm", "noise")),
        P_dbm=float(_require(power, "P_dbm", "power")),
        split_w=split_w,
        split_v=split_v,
        theta_init=init,
        theta_file=theta_file,
    )


@dataclass(frozen=True)
class Scenario:
    """A built experiment: channel statistics plus the power bookkeeping the
    optimizers and the CLI need."""

    stats: ChannelStatistics
    config: ScenarioConfig

    @property
    def p_budget(self) -> float:
        """Total transmit power budget M * P in watts."""
        return self.config.M * self.config.p_watts

    def initial_precoders(self) -> tuple:
        """Uniform initial covariances P_W = split_w * P * I, P_V = split_v * P * I."""
        eye = np.eye(self.config.M, dtype=complex)
        return (
            self.config.split_w * self.config.p_watts * eye,
            self.config.split_v * self.config.p_watts * eye,
        )


def _built_corr(parsed, n: int) -> np.ndarray:
    kind, spec = parsed
    if kind == "identity":
        return np.eye(n, dtype=complex)
    return build_correlation_matrix(spec)


def build_scenario(config: ScenarioConfig, seed: Optional[int] = None) -> Scenario:
    """Assemble channel statistics from a validated configuration.

    Path gains (two multiplicative distance terms) are folded into the
    receive-side correlations. ``seed`` feeds the 'uniform' theta init only.
    """
    corr = config.correlations
    R_B = _built_corr(corr["R_B"], config.N_B)
    T_S_B = _built_corr(corr["T_S_B"], config.L)
    T = _built_corr(corr["T"], config.M)
    R_E = [_built_corr(c, n) for c, n in zip(corr["R_E"], config.N_E)]
    T_S_E = [_built_corr(c, config.L) for c in corr["T_S_E"]]
    R_S = _built_corr(corr["R_S"], config.L) if config.model_kind == "double" else None

    g_bs_irs = path_loss(config.C1, config.d_bs_irs, config.alpha1)
    g_b = g_bs_irs * path_loss(config.C2, config.d_irs_b, config.alpha2)
    g_e = [g_bs_irs * path_loss(config.C2, d, config.alpha2) for d in config.d_irs_e]
    R_B = g_b * R_B
    R_E = [g * m for g, m in zip(g_e, R_E)]

    if config.theta_init == "zeros":
        theta = np.zeros(config.L)
    elif config.theta_init == "uniform":
        rng = np.random.default_rng(seed)
        theta = rng.uniform(0.0, 2.0 * math.pi, config.L)
    else:
        with open(config.theta_file, "r", encoding="utf-8") as fh:
            theta = np.asarray(json.load(fh), dtype=float)
        if theta.shape != (config.L,):
            raise ConfigError(f"theta.file: expected {config.L} phases, got shape {theta.shape}")

    stats = build_channel_statistics(
        model_kind=config.model_kind,
        R_B=R_B,
        R_E_list=R_E,
        T_S_B=T_S_B,
        T_S_E_list=T_S_E,
        T=T,
        H_T0=build_los_channel(config.M, config.L),
        theta=theta,
        sigma2_B=config.sigma2_watts,
        sigma2_E_list=[config.sigma2_watts] * config.K_eves,
        R_S=R_S,
    )
    return Scenario(stats=stats, config=config)
