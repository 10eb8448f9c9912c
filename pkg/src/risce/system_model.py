"""Scenario configuration, channel/imperfection generators and received-signal synthesis."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .tensor_core import parafac3_reconstruct, parafac4_reconstruct

__all__ = [
    "SystemConfig",
    "ChannelPair",
    "Imperfection",
    "RxTensor",
    "design_ris_patterns",
    "gen_rayleigh_channels",
    "gen_mmwave_channels",
    "gen_channels",
    "gen_imperfections",
    "synthesize_rx",
    "make_rng",
    "num_impaired",
    "ula_response",
    "ura_response",
    "ris_grid",
]

CHANNEL_MODELS = ("rayleigh", "mmwave")


@dataclass(frozen=True)
class SystemConfig:
    """All dimensions and noise/imperfection parameters of one scenario.

    The pilot matrix is fixed to the identity, so the pilot length per block
    equals ``M``.
    """

    M: int = 3
    L: int = 2
    N: int = 8
    K: int = 20
    P: int = 1
    snr_db: float = 20.0
    r_b: float = 0.5
    delta: float = 1e-6
    max_iters: int = 500
    omega: int = 200
    channel_model: str = "rayleigh"
    seed: int = 0

    def __post_init__(self):
        for name in ("M", "L", "N", "K", "P", "max_iters", "omega"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {value!r}")
        if not 0.0 <= self.r_b <= 1.0:
            raise ValueError(f"r_b must lie in [0, 1], got {self.r_b!r}")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta!r}")
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError(f"snr_db must be a number or +inf, got {self.snr_db!r}")
        if self.channel_model not in CHANNEL_MODELS:
            raise ValueError(f"channel_model must be one of {CHANNEL_MODELS}, got {self.channel_model!r}")

    @property
    def T(self) -> int:
        return self.M

    @property
    def noiseless(self) -> bool:
        return self.snr_db == math.inf

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class ChannelPair:
    H: np.ndarray  # M x N, Tx -> RIS
    G: np.ndarray  # L x N, RIS -> Rx


@dataclass(frozen=True)
class Imperfection:
    """Per-element RIS perturbations.

    ``values`` is an ``N`` vector for ``kind == "lti"`` and a ``P x N`` matrix
    for ``kind == "sti"``.  ``mask`` flags the impaired elements.
    """

    kind: str
    values: np.ndarray
    mask: np.ndarray

    @property
    def E(self) -> np.ndarray:
        """Imperfections as a ``P x N`` matrix (``P == 1`` for LTI)."""
        return np.atleast_2d(self.values)


@dataclass(frozen=True)
class RxTensor:
    Y: np.ndarray
    noiseless: np.ndarray
    noise_var: float = 0.0


def make_rng(seed, *key) -> np.random.Generator:
    """Counter-based generator for stream ``key`` under ``seed``.

    Streams with different keys are statistically independent, which lets
    Monte Carlo runs be executed in any order or process.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _crandn(rng, shape, var=1.0):
    scale = math.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def design_ris_patterns(cfg: SystemConfig) -> np.ndarray:
    """Truncated DFT activation patterns ``S`` (``K x N``, unit modulus).

    For ``K >= N`` the first ``N`` columns of the ``K x K`` DFT matrix are used,
    so ``S^H S = K I``.  Otherwise the first ``K`` rows of the ``N x N`` DFT
    matrix (a Vandermonde matrix with distinct nodes).
    """
    K, N = cfg.K, cfg.N
    size = K if K >= N else N
    # exact integer reduction keeps the roots of unity on the same grid
    exponent = np.outer(np.arange(K), np.arange(N)) % size
    return np.exp(-2j * np.pi * exponent / size)


def gen_rayleigh_channels(cfg: SystemConfig, rng: np.random.Generator) -> ChannelPair:
    H = _crandn(rng, (cfg.M, cfg.N))
    G = _crandn(rng, (cfg.L, cfg.N))
    return ChannelPair(H=H, G=G)


def ris_grid(N: int) -> tuple[int, int]:
    """Factor ``N = N1 * N2`` with ``N1 <= N2`` as close to square as possible."""
    n1 = int(math.isqrt(N))
    while N % n1:
        n1 -= 1
    return n1, N // n1


def ula_response(size: int, angle: float) -> np.ndarray:
    """Half-wavelength ULA steering vector ``exp(j pi m sin(angle))``."""
    return np.exp(1j * np.pi * np.arange(size) * np.sin(angle))


def ura_response(n1: int, n2: int, azimuth: float, elevation: float) -> np.ndarray:
    """Half-wavelength URA steering vector of length ``n1 * n2``.

    Spatial frequencies are ``sin(az) cos(el)`` along the first axis and
    ``sin(el)`` along the second; index ``i1 * n2 + i2``.
    """
    a1 = np.exp(1j * np.pi * np.arange(n1) * np.sin(azimuth) * np.cos(elevation))
    a2 = np.exp(1j * np.pi * np.arange(n2) * np.sin(elevation))
    return np.kron(a1, a2)


def _geometric_link(rng, n_ant, n1, n2, n_paths):
    """``n_ant x N`` channel ``sum_p gain_p a_ant a_RIS^T / sqrt(n_paths)``."""
    out = np.zeros((n_ant, n1 * n2), dtype=complex)
    for _ in range(n_paths):
        ant_angle = rng.uniform(-np.pi / 2, np.pi / 2)
        az = rng.uniform(-np.pi / 2, np.pi / 2)
        el = rng.uniform(0.0, np.pi / 2)
        gain = np.exp(1j * rng.uniform(0.0, 2 * np.pi))
        out += gain * np.outer(ula_response(n_ant, ant_angle), ura_response(n1, n2, az, el))
    return out / math.sqrt(n_paths)


def gen_mmwave_channels(cfg: SystemConfig, rng: np.random.Generator) -> ChannelPair:
    """Geometric channels: one Tx-RIS path and two RIS-Rx paths."""
    n1, n2 = ris_grid(cfg.N)
    H = _geometric_link(rng, cfg.M, n1, n2, 1)
    G = _geometric_link(rng, cfg.L, n1, n2, 2)
    return ChannelPair(H=H, G=G)


def gen_channels(cfg: SystemConfig, rng: np.random.Generator) -> ChannelPair:
    if cfg.channel_model == "mmwave":
        return gen_mmwave_channels(cfg, rng)
    return gen_rayleigh_channels(cfg, rng)


def num_impaired(N: int, r_b: float) -> int:
    # half-up rounding, independent of Python's banker's rounding
    return min(N, int(math.floor(N * r_b + 0.5)))


def gen_imperfections(cfg: SystemConfig, rng: np.random.Generator, kind: str = "lti") -> Imperfection:
    """Draw the impaired element positions and their perturbations.

    LTI: impaired ``e_n = exp(j theta_n)``.  STI: impaired
    ``e_{p,n} = alpha exp(j theta)`` drawn independently per frame, with
    ``alpha ~ U[0, 1]`` and ``theta ~ U[0, 2 pi)``.  Non-impaired entries are 1.
    """
    N = cfg.N
    n_b = num_impaired(N, cfg.r_b)
    mask = np.zeros(N, dtype=bool)
    mask[rng.choice(N, size=n_b, replace=False)] = True
    if kind == "lti":
        values = np.ones(N, dtype=complex)
        values[mask] = np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=n_b))
    elif kind == "sti":
        values = np.ones((cfg.P, N), dtype=complex)
        alpha = rng.uniform(0.0, 1.0, size=(cfg.P, n_b))
        theta = rng.uniform(0.0, 2 * np.pi, size=(cfg.P, n_b))
        values[:, mask] = alpha * np.exp(1j * theta)
    else:
        raise ValueError(f"imperfection kind must be 'lti' or 'sti', got {kind!r}")
    return Imperfection(kind=kind, values=values, mask=mask)


def synthesize_rx(
    cfg: SystemConfig,
    channels: ChannelPair,
    patterns: np.ndarray,
    imperfection: Imperfection,
    rng: np.random.Generator | None = None,
) -> RxTensor:
    """Noisy received tensor: ``L x M x K`` (LTI) or ``L x M x K x P`` (STI).

    Noise is circular complex Gaussian with per-entry variance
    ``||Y0||^2 / (Y0.size * 10^(snr_db / 10))``.  ``snr_db = inf`` disables it.
    """
    H, G, S = channels.H, channels.G, np.asarray(patterns)
    N = cfg.N
    if H.shape != (cfg.M, N) or G.shape != (cfg.L, N) or S.shape != (cfg.K, N):
        raise ValueError(
            f"dimension mismatch: H {H.shape}, G {G.shape}, S {S.shape} for config "
            f"M={cfg.M}, L={cfg.L}, K={cfg.K}, N={N}"
        )
    if imperfection.kind == "lti":
        e = imperfection.values
        if e.shape != (N,):
            raise ValueError(f"LTI imperfection must have shape ({N},), got {e.shape}")
        Y0 = parafac3_reconstruct(G, H, S * e[None, :])
    else:
        E = imperfection.values
        if E.shape != (cfg.P, N):
            raise ValueError(f"STI imperfection must have shape ({cfg.P}, {N}), got {E.shape}")
        Y0 = parafac4_reconstruct(G, H, S, E)

    if cfg.noiseless:
        return RxTensor(Y=Y0, noiseless=Y0, noise_var=0.0)
    if rng is None:
        raise ValueError("an RNG is required for finite SNR")
    energy = float(np.vdot(Y0, Y0).real)
    noise_var = energy / (Y0.size * 10.0 ** (cfg.snr_db / 10.0))
    Y = Y0 + _crandn(rng, Y0.shape, noise_var)
    return RxTensor(Y=Y, noiseless=Y0, noise_var=noise_var)
