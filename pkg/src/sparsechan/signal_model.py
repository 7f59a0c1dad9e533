"""OFDM grid model: pilot patterns and the partial Fourier observation operator.

A frequency-selective channel is represented by a length-d vector ``theta`` of
complex delay-domain taps.  The transfer function sampled at subcarrier p is

    c[p] = sum_k theta[k] * exp(-2j * pi * p * k / d)

and a pilot observation collects ``c`` at N chosen subcarriers plus circular
complex Gaussian noise.  Everything downstream (baseline interpolators, greedy
sparse recovery, detection) is built on the two primitives defined here: the
forward projection onto a pilot pattern and its adjoint, the matched filter.
Both are evaluated with FFTs rather than explicit matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "SystemConfig",
    "PilotPattern",
    "Observation",
    "ObservationSet",
    "partial_fourier_apply",
    "partial_fourier_matrix",
    "matched_filter",
    "synthesize_observation",
]


def as_rng(seed: int | Sequence[int] | np.random.Generator | None) -> np.random.Generator:
    """Return ``seed`` unchanged if it is already a Generator, else seed a fresh one."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class SystemConfig:
    """Dimensions of the OFDM grid.

    d is both the number of subcarriers and the number of delay bins the
    channel is resolved into; n_pilots is the number of observed subcarriers.
    The subcarrier spacing only matters when delays are mapped to physical
    time, via ``bin_width_s``.
    """

    d: int
    n_pilots: int
    subcarrier_spacing_hz: float = 15e3

    def __post_init__(self) -> None:
        if self.d < 2:
            raise ValueError(f"d must be at least 2, got {self.d}")
        if not 1 <= self.n_pilots <= self.d:
            raise ValueError(
                f"n_pilots must lie in [1, d={self.d}], got {self.n_pilots}"
            )
        if self.subcarrier_spacing_hz <= 0:
            raise ValueError("subcarrier spacing must be positive")

    @property
    def bin_width_s(self) -> float:
        """Delay resolution of the grid in seconds (1 / total bandwidth)."""
        return 1.0 / (self.d * self.subcarrier_spacing_hz)


@dataclass(frozen=True)
class PilotPattern:
    """A set of observed subcarrier indices on a grid of size d.

    Patterns are value objects: indices are stored sorted and must be distinct
    and in range.  Use the ``uniform`` and ``pseudo_random`` constructors; the
    latter draws without replacement from a seeded PCG64 generator so a given
    (d, n, seed) triple always yields the same pattern.
    """

    indices: np.ndarray
    d: int
    kind: str = "custom"
    spacing: int | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        idx = np.sort(np.asarray(self.indices, dtype=np.int64))
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("pattern needs a non-empty 1-d index vector")
        if idx[0] < 0 or idx[-1] >= self.d:
            raise ValueError(f"pilot indices must lie in [0, {self.d})")
        if np.any(np.diff(idx) == 0):
            raise ValueError("pilot indices must be distinct")
        object.__setattr__(self, "indices", idx)

    @property
    def n(self) -> int:
        return int(self.indices.size)

    @classmethod
    def uniform(cls, config: SystemConfig, spacing: int) -> "PilotPattern":
        """Evenly spaced pilots 0, spacing, 2*spacing, ... (n_pilots of them)."""
        if spacing < 1:
            raise ValueError("spacing must be a positive integer")
        last = (config.n_pilots - 1) * spacing
        if last >= config.d:
            raise ValueError(
                f"{config.n_pilots} pilots at spacing {spacing} overrun d={config.d}"
            )
        idx = np.arange(config.n_pilots, dtype=np.int64) * spacing
        return cls(indices=idx, d=config.d, kind="uniform", spacing=spacing)

    @classmethod
    def pseudo_random(cls, config: SystemConfig, seed: int) -> "PilotPattern":
        """n_pilots distinct subcarriers drawn uniformly without replacement."""
        rng = np.random.default_rng(seed)
        idx = rng.choice(config.d, size=config.n_pilots, replace=False)
        return cls(indices=idx, d=config.d, kind="pseudo_random", seed=int(seed))


@dataclass(frozen=True)
class Observation:
    """Received pilot values for one OFDM symbol: y = c[pattern] + noise."""

    y: np.ndarray
    pattern: PilotPattern
    noise_var: float

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=np.complex128)
        if y.shape != (self.pattern.n,):
            raise ValueError(
                f"y has shape {y.shape}, pattern has {self.pattern.n} pilots"
            )
        if self.noise_var < 0:
            raise ValueError("noise variance cannot be negative")
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class ObservationSet:
    """A bundle of observations that share one grid size.

    ``correlated=True`` declares that all member observations saw the same
    channel realization, which permits coherent averaging downstream;
    the default treats them as independent draws from a common prior.
    """

    observations: tuple[Observation, ...]
    correlated: bool = False

    def __post_init__(self) -> None:
        obs = tuple(self.observations)
        if not obs:
            raise ValueError("an observation set needs at least one observation")
        d = obs[0].pattern.d
        n = obs[0].pattern.n
        for o in obs:
            if o.pattern.d != d or o.pattern.n != n:
                raise ValueError("all observations must share d and pilot count")
        object.__setattr__(self, "observations", obs)

    @property
    def n_sets(self) -> int:
        return len(self.observations)

    @property
    def d(self) -> int:
        return self.observations[0].pattern.d

    @property
    def n_pilots(self) -> int:
        return self.observations[0].pattern.n


def _check_pattern(config: SystemConfig, pattern: PilotPattern) -> None:
    if pattern.d != config.d:
        raise ValueError(f"pattern built for d={pattern.d}, config has d={config.d}")


def partial_fourier_apply(
    config: SystemConfig, pattern: PilotPattern, theta: np.ndarray
) -> np.ndarray:
    """Project delay taps onto the pilot subcarriers: (H theta)[p] for p in the pattern.

    Computed as a length-d FFT sampled at the pilot indices, never as an
    explicit matrix product.
    """
    _check_pattern(config, pattern)
    theta = np.asarray(theta, dtype=np.complex128)
    if theta.shape != (config.d,):
        raise ValueError(f"theta must have shape ({config.d},), got {theta.shape}")
    return np.fft.fft(theta)[pattern.indices]


def partial_fourier_matrix(
    config: SystemConfig, pattern: PilotPattern, bins: np.ndarray | None = None
) -> np.ndarray:
    """Explicit observation matrix restricted to the given delay bins.

    Returns the n x m array with entries exp(-2j pi p k / d) for pilot
    subcarriers p and delay bins k.  Intended for small supports; the full
    operator should be applied with ``partial_fourier_apply`` instead.
    """
    _check_pattern(config, pattern)
    if bins is None:
        bins = np.arange(config.d)
    bins = np.asarray(bins, dtype=np.int64)
    phase = -2j * np.pi / config.d
    return np.exp(phase * np.outer(pattern.indices, bins))


def matched_filter(
    config: SystemConfig, pattern: PilotPattern, y: np.ndarray
) -> np.ndarray:
    """Adjoint of the partial Fourier operator: (H^H y)[k] for every delay bin k.

    A single column h_k has squared norm n_pilots, so the output at a tap's
    true bin grows like n_pilots while leakage elsewhere has mean power
    n_pilots; dividing by n_pilots gives the unbiased per-bin amplitude.
    """
    _check_pattern(config, pattern)
    y = np.asarray(y, dtype=np.complex128)
    if y.shape != (pattern.n,):
        raise ValueError(f"y must have shape ({pattern.n},), got {y.shape}")
    z = np.zeros(config.d, dtype=np.complex128)
    z[pattern.indices] = y
    return config.d * np.fft.ifft(z)


def synthesize_observation(
    config: SystemConfig,
    pattern: PilotPattern,
    theta: np.ndarray,
    noise_var: float,
    rng: int | np.random.Generator | None = None,
) -> Observation:
    """Observe ``theta`` through the pattern with circular complex Gaussian noise.

    Each pilot receives independent noise of total variance ``noise_var``
    (noise_var / 2 per real component).  With noise_var = 0 the projection is
    returned exactly; the generator is still advanced so call sequences stay
    aligned across noise settings.
    """
    if noise_var < 0:
        raise ValueError("noise variance cannot be negative")
    clean = partial_fourier_apply(config, pattern, theta)
    gen = as_rng(rng)
    scale = np.sqrt(noise_var / 2.0)
    noise = scale * (
        gen.standard_normal(pattern.n) + 1j * gen.standard_normal(pattern.n)
    )
    return Observation(y=clean + noise, pattern=pattern, noise_var=float(noise_var))
