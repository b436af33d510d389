"""Network model for a multi-cell MISO downlink with coordinated beamforming.

One base station (BS) per cell serves one single-antenna mobile station (MS).
``h[j][k]`` denotes the complex channel vector from BS ``j`` to MS ``k`` and
has length ``M_j`` (the antenna count of BS ``j``).  All powers are Watts,
rates are bits/s/Hz, and link energy efficiencies are therefore bits/Hz per
Joule; a reporting layer may scale them by the system bandwidth to obtain
bits per Joule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

LN2 = math.log(2.0)

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-10
RANK_ONE_TOL = 1e-8


class ConfigurationError(ValueError):
    """A scenario or run parameter is outside its valid range."""


class DimensionMismatchError(ValueError):
    """A matrix or vector does not match the owning BS antenna count."""


def _as_complex_vector(v, length: int, what: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.complex128)
    if arr.ndim != 1 or arr.shape[0] != length:
        raise DimensionMismatchError(
            f"{what}: expected length-{length} vector, got shape {arr.shape}"
        )
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Scenario:
    """Immutable description of one K-cell downlink.

    Parameters
    ----------
    num_links : int
        Number of BS/MS pairs, K >= 2.
    antennas : tuple of int
        Per-BS antenna counts M_j >= 1.
    channels : nested sequence
        ``channels[j][k]`` is the length-``M_j`` vector from BS j to MS k.
    noise : tuple of float
        Per-MS noise power sigma_k^2 in Watts, > 0.
    power_caps : tuple of float
        Per-BS transmit power caps in Watts; 0 and +inf are allowed.
    circuit_power : float
        Static per-BS circuit power P_c >= 0, Watts.
    amp_efficiency : float
        Power amplifier efficiency eta in (0, 1].
    bandwidth : float
        System bandwidth in Hz, > 0.  Only reporting layers use it.
    """

    num_links: int
    antennas: tuple
    channels: tuple
    noise: tuple
    power_caps: tuple
    circuit_power: float
    amp_efficiency: float
    bandwidth: float = 1.0

    def __post_init__(self):
        K = self.num_links
        if K < 2:
            raise ConfigurationError(f"need at least two links, got {K}")
        M = tuple(int(m) for m in self.antennas)
        if len(M) != K or any(m < 1 for m in M):
            raise ConfigurationError(f"antennas must be K positive ints, got {M}")
        rows = []
        for j in range(K):
            row = tuple(
                _as_complex_vector(self.channels[j][k], M[j], f"channel ({j},{k})")
                for k in range(K)
            )
            rows.append(row)
        noise = tuple(float(s) for s in self.noise)
        if len(noise) != K or any(not (s > 0.0) or not math.isfinite(s) for s in noise):
            raise ConfigurationError(f"noise powers must be K positive finite values, got {noise}")
        caps = tuple(float(p) for p in self.power_caps)
        if len(caps) != K or any(p < 0.0 or math.isnan(p) for p in caps):
            raise ConfigurationError(f"power caps must be K values >= 0 (or inf), got {caps}")
        if not (self.circuit_power >= 0.0) or math.isnan(self.circuit_power):
            raise ConfigurationError(f"circuit power must be >= 0, got {self.circuit_power}")
        if not (0.0 < self.amp_efficiency <= 1.0):
            raise ConfigurationError(f"amplifier efficiency must lie in (0, 1], got {self.amp_efficiency}")
        if not (self.bandwidth > 0.0):
            raise ConfigurationError(f"bandwidth must be > 0, got {self.bandwidth}")
        object.__setattr__(self, "antennas", M)
        object.__setattr__(self, "channels", tuple(rows))
        object.__setattr__(self, "noise", noise)
        object.__setattr__(self, "power_caps", caps)
        object.__setattr__(self, "circuit_power", float(self.circuit_power))
        object.__setattr__(self, "amp_efficiency", float(self.amp_efficiency))
        object.__setattr__(self, "bandwidth", float(self.bandwidth))

    def channel(self, j: int, k: int) -> np.ndarray:
        """Channel vector from BS j to MS k."""
        return self.channels[j][k]

    def links(self):
        return range(self.num_links)


@dataclass(frozen=True)
class Covariance:
    """Hermitian PSD transmit covariance of one BS."""

    matrix: np.ndarray

    def __post_init__(self):
        S = np.asarray(self.matrix, dtype=np.complex128)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise DimensionMismatchError(f"covariance must be square, got shape {S.shape}")
        scale = max(1.0, float(np.max(np.abs(S))) if S.size else 1.0)
        if float(np.max(np.abs(S - S.conj().T))) > HERMITIAN_TOL * scale:
            raise ConfigurationError("covariance is not Hermitian within tolerance")
        S = 0.5 * (S + S.conj().T)
        if float(np.min(np.linalg.eigvalsh(S))) < -PSD_TOL * scale:
            raise ConfigurationError("covariance is not PSD within tolerance")
        S = S.copy()
        S.flags.writeable = False
        object.__setattr__(self, "matrix", S)

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def quadratic(self, h: np.ndarray) -> float:
        """Real value of h^H S h (clipped at 0 against fp dust)."""
        if h.shape[0] != self.matrix.shape[0]:
            raise DimensionMismatchError(
                f"vector length {h.shape[0]} vs covariance size {self.matrix.shape[0]}"
            )
        return max(0.0, float(np.real(h.conj() @ (self.matrix @ h))))

    def rank_one_residual(self) -> float:
        """Second-largest eigenvalue over largest, 0.0 for the zero matrix."""
        ev = np.linalg.eigvalsh(self.matrix)
        top = float(ev[-1])
        if top <= 0.0:
            return 0.0
        return max(0.0, float(ev[-2])) / top if ev.shape[0] > 1 else 0.0

    @classmethod
    def zeros(cls, m: int) -> "Covariance":
        return cls(np.zeros((m, m), dtype=np.complex128))

    @classmethod
    def from_beamformer(cls, w: np.ndarray) -> "Covariance":
        w = np.asarray(w, dtype=np.complex128)
        return cls(np.outer(w, w.conj()))


@dataclass(frozen=True)
class Beamformer:
    """Rank-one transmit strategy w (sqrt-Watt amplitudes) with power p = |w|^2."""

    w: np.ndarray
    p: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.complex128).copy()
        w.flags.writeable = False
        nrm = float(np.real(w.conj() @ w))
        p = float(self.p)
        if p < 0.0:
            raise ConfigurationError(f"beamformer power must be >= 0, got {p}")
        if abs(nrm - p) > 1e-10 * max(1.0, p):
            raise ConfigurationError(f"|w|^2 = {nrm} does not match declared power {p}")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "p", p)

    @property
    def direction(self) -> np.ndarray:
        if self.p == 0.0:
            return np.zeros_like(self.w)
        return self.w / math.sqrt(self.p)

    def covariance(self) -> Covariance:
        return Covariance.from_beamformer(self.w)

    @classmethod
    def zero(cls, m: int) -> "Beamformer":
        return cls(np.zeros(m, dtype=np.complex128), 0.0)


@dataclass(frozen=True)
class EEPoint:
    """Tuple of per-link energy efficiencies (bits/Hz/J)."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if any(math.isnan(v) or v < 0.0 for v in vals):
            raise ConfigurationError(f"EE values must be >= 0 and not NaN, got {vals}")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


def generate_channels(
    seed: int,
    num_links: int,
    antennas,
    cross_gain: float = 1.0,
    *,
    noise=1.0,
    power_caps=math.inf,
    circuit_power: float = 1.0,
    amp_efficiency: float = 0.38,
    bandwidth: float = 1.0,
) -> Scenario:
    """Draw a scenario with CSCG channels, deterministically from ``seed``.

    Direct channels ``h[k][k]`` have i.i.d. unit-variance complex Gaussian
    entries; cross channels ``h[j][k]`` (j != k) are scaled by
    ``sqrt(cross_gain)``.  Scalars given for ``antennas``, ``noise`` or
    ``power_caps`` are broadcast to all links.
    """
    K = int(num_links)
    if np.isscalar(antennas):
        M = tuple([int(antennas)] * K)
    else:
        M = tuple(int(m) for m in antennas)
    if cross_gain < 0.0:
        raise ConfigurationError(f"cross_gain must be >= 0, got {cross_gain}")
    noise_t = tuple([float(noise)] * K) if np.isscalar(noise) else tuple(float(s) for s in noise)
    caps_t = (
        tuple([float(power_caps)] * K)
        if np.isscalar(power_caps)
        else tuple(float(p) for p in power_caps)
    )
    rng = np.random.default_rng(int(seed))
    rows = []
    for j in range(K):
        row = []
        for k in range(K):
            h = (rng.standard_normal(M[j]) + 1j * rng.standard_normal(M[j])) / math.sqrt(2.0)
            if j != k:
                h = h * math.sqrt(cross_gain)
            row.append(h)
        rows.append(tuple(row))
    return Scenario(
        num_links=K,
        antennas=M,
        channels=tuple(rows),
        noise=noise_t,
        power_caps=caps_t,
        circuit_power=circuit_power,
        amp_efficiency=amp_efficiency,
        bandwidth=bandwidth,
    )


def _check_covariances(scenario: Scenario, covariances) -> list:
    covs = list(covariances)
    if len(covs) != scenario.num_links:
        raise DimensionMismatchError(
            f"expected {scenario.num_links} covariances, got {len(covs)}"
        )
    for j, cov in enumerate(covs):
        if cov.matrix.shape[0] != scenario.antennas[j]:
            raise DimensionMismatchError(
                f"covariance {j} is {cov.matrix.shape[0]}x{cov.matrix.shape[0]}, "
                f"BS {j} has {scenario.antennas[j]} antennas"
            )
    return covs


def achievable_rate(scenario: Scenario, covariances: Sequence[Covariance], k: int) -> float:
    """Rate of link k in bits/s/Hz under the given transmit covariances.

    rate_k = log2(1 + h_kk^H S_k h_kk / (sum_{j != k} h_jk^H S_j h_jk + sigma_k^2))
    """
    covs = _check_covariances(scenario, covariances)
    signal = covs[k].quadratic(scenario.channel(k, k))
    interference = sum(
        covs[j].quadratic(scenario.channel(j, k)) for j in scenario.links() if j != k
    )
    return math.log2(1.0 + signal / (interference + scenario.noise[k]))


def total_power(scenario: Scenario, covariance: Covariance, k: int) -> float:
    """Total power drawn by BS k in Watts: Tr(S_k)/eta + P_c."""
    if covariance.matrix.shape[0] != scenario.antennas[k]:
        raise DimensionMismatchError(
            f"covariance is {covariance.matrix.shape[0]}x{covariance.matrix.shape[0]}, "
            f"BS {k} has {scenario.antennas[k]} antennas"
        )
    return covariance.trace / scenario.amp_efficiency + scenario.circuit_power


def link_ee(scenario: Scenario, covariances: Sequence[Covariance], k: int) -> float:
    """Energy efficiency of link k in bits/Hz/J; the 0/0 case returns 0."""
    rate = achievable_rate(scenario, covariances, k)
    power = total_power(scenario, covariances[k], k)
    if power == 0.0:
        return 0.0 if rate == 0.0 else math.inf
    return rate / power


def is_pareto_dominated(candidate, others: Iterable, tol: float = 0.0) -> bool:
    """True iff some point in ``others`` dominates ``candidate``.

    Domination with slack ``tol`` (absolute, EE units): every component of the
    other point is >= the candidate's minus ``tol`` and at least one component
    is > the candidate's plus ``tol``.
    """
    cand = np.asarray(getattr(candidate, "values", candidate), dtype=float)
    for other in others:
        o = np.asarray(getattr(other, "values", other), dtype=float)
        if o.shape != cand.shape:
            raise DimensionMismatchError("EE points of different lengths are not comparable")
        if np.all(o >= cand - tol) and np.any(o > cand + tol):
            return True
    return False
