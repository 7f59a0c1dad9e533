"""Greedy sparse recovery of delay-domain taps, with optional prior knowledge.

The estimators here share one engine: an orthogonal matching pursuit that
keeps an incremental Cholesky factorization of the selected columns' Gram
matrix, so each iteration costs one FFT-based matched filter plus a rank-one
factor update.  Around the engine sit three ways of using side information
gathered from extra pilot observations:

* ``algorithm_a1``  detect occupied bins from an averaged sample PDP, then
                    least squares on the detected support only
* ``algorithm_a2``  run the pursuit with selection scores reweighted by an
                    MMSE-style gain built from the prior sample PDP
* ``algorithm_a3``  seed the pursuit's support with the detected bins, then
                    continue plain greedy selection
* ``ex_omp``        run pursuits on all observation sets in lockstep with one
                    shared support, admitting every bin whose combined
                    residual spectrum clears a chi-square detection threshold

Detection treats each sample-PDP bin as an averaged squared magnitude of
circular Gaussian noise: bin values are compared against a scaled chi-square
quantile with two degrees of freedom per averaged set.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import brentq
from scipy.special import gammainc

from .baseline import SupportSet
from .signal_model import (
    Observation,
    ObservationSet,
    PilotPattern,
    SystemConfig,
    matched_filter,
)

__all__ = [
    "SamplePdp",
    "DetectionConfig",
    "OmpConfig",
    "SparseEstimate",
    "chi2_inv_cdf",
    "sample_pdp",
    "detection_threshold",
    "detect_support",
    "omp",
    "algorithm_a1",
    "algorithm_a2",
    "algorithm_a3",
    "ex_omp",
]


def chi2_inv_cdf(prob: float, dof: int) -> float:
    """Inverse CDF of the chi-square distribution with ``dof`` degrees of freedom.

    Inverts the regularized lower incomplete gamma function by bracketed root
    finding.  For dof = 2 this reduces to -2 ln(1 - prob), which tests use as
    a closed-form cross-check.
    """
    if not 0.0 < prob < 1.0:
        raise ValueError(f"prob must lie strictly inside (0, 1), got {prob}")
    if dof < 1:
        raise ValueError(f"dof must be a positive integer, got {dof}")
    shape = 0.5 * dof

    def cdf(x: float) -> float:
        return gammainc(shape, 0.5 * x)

    hi = float(max(dof, 2))
    while cdf(hi) < prob:
        hi *= 2.0
    return float(brentq(lambda x: cdf(x) - prob, 0.0, hi, xtol=1e-300, rtol=1e-14))


@dataclass(frozen=True)
class SamplePdp:
    """Averaged squared matched-filter spectrum of one or more observations.

    ``values[k]`` estimates the power in delay bin k; ``scale`` is the mean
    bin level implied by the observations' total energy, which is what noise
    and leakage average to, and is the natural unit for detection thresholds.
    ``n_sets`` is the number of independent averages (it sets the chi-square
    degrees of freedom, 2 per set).
    """

    values: np.ndarray
    n_sets: int
    scale: float
    n_pilots: int

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("values must be a non-empty 1-d vector")
        if np.any(v < 0):
            raise ValueError("sample PDP values cannot be negative")
        if self.n_sets < 1:
            raise ValueError("n_sets must be positive")
        if self.scale < 0:
            raise ValueError("scale cannot be negative")
        if self.n_pilots < 1:
            raise ValueError("n_pilots must be positive")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class DetectionConfig:
    """False-alarm rate per bin, plus the observation noise variance.

    ``noise_var`` splits a sample PDP's mean bin level into its noise floor
    and its signal-leakage part so the threshold can track the level of a
    signal-free bin; leave it at zero when the noise power is unknown and the
    whole mean should be treated as leakage.
    """

    alpha: float = 1e-3
    noise_var: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie strictly inside (0, 1), got {self.alpha}")
        if self.noise_var < 0:
            raise ValueError("noise variance cannot be negative")


@dataclass(frozen=True)
class OmpConfig:
    """Knobs of the greedy pursuit.

    max_iters bounds the number of selection rounds (default: n_pilots / 4,
    rounded up).  The pursuit stops early once the squared residual norm
    drops to residual_gamma * n_pilots * noise_var.  multi_admit lets the
    multi-set pursuit admit every bin above its detection threshold in one
    round instead of only the best one.  fallback_largest_delay switches the
    no-admission fallback from the largest spectrum value to the largest
    remaining bin index (kept for comparison; off by default).
    """

    max_iters: int | None = None
    residual_gamma: float = 1.0
    multi_admit: bool = True
    fallback_largest_delay: bool = False

    def __post_init__(self) -> None:
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be positive when given")
        if self.residual_gamma <= 0:
            raise ValueError("residual_gamma must be positive")


@dataclass(frozen=True)
class SparseEstimate:
    """Recovered taps: full-length vector plus the support bookkeeping."""

    theta: np.ndarray
    support: np.ndarray
    coeffs: np.ndarray
    selection_order: tuple[int, ...]
    residual_sq_history: tuple[float, ...]

    def channel_freq(self) -> np.ndarray:
        """Transfer function on all subcarriers implied by the taps."""
        return np.fft.fft(self.theta)


def sample_pdp(sets: ObservationSet) -> SamplePdp:
    """Average the squared matched-filter spectra of the observations.

    Independent sets (the default) are averaged incoherently, power by power,
    giving 2 * n_sets chi-square degrees of freedom per noise bin.  Sets
    marked correlated saw the same channel, so their matched filters are
    averaged coherently first and squared once; that reduces the noise level
    by the number of sets but leaves only 2 degrees of freedom.
    """
    config = SystemConfig(d=sets.d, n_pilots=sets.n_pilots)
    n = sets.n_pilots
    spectra = [
        matched_filter(config, o.pattern, o.y) / n for o in sets.observations
    ]
    energies = [float(np.vdot(o.y, o.y).real) for o in sets.observations]
    if sets.correlated:
        coherent = np.mean(spectra, axis=0)
        values = np.abs(coherent) ** 2
        scale = float(np.mean(energies)) / (n * n) / sets.n_sets
        return SamplePdp(values=values, n_sets=1, scale=scale, n_pilots=n)
    values = np.mean([np.abs(s) ** 2 for s in spectra], axis=0)
    scale = float(np.mean(energies)) / (n * n)
    return SamplePdp(values=values, n_sets=sets.n_sets, scale=scale, n_pilots=n)


def _null_level(scale: float, n_pilots: int, d: int, noise_var: float) -> float:
    """Mean power of a signal-free spectrum bin, from the all-bin mean.

    ``scale`` is the spectrum's mean bin power, ||y||^2 / N^2 per observation,
    which equals (signal power + noise power) / N.  A signal-free bin sees
    only the noise floor noise_var / N plus leakage from the occupied bins,
    and leakage through a random pilot pattern drawn without replacement is
    attenuated by the finite-population factor (d - N)/(d - 1).  Splitting
    the mean with the known noise variance and shrinking only the signal part
    keeps the detection threshold calibrated on strongly clustered channels,
    where the raw mean can overshoot the signal-free level by half.  The
    signed excess keeps the estimate unbiased on noise-only input; the result
    is a convex combination of two nonnegative terms, so it stays >= 0.
    """
    noise_floor = noise_var / n_pilots
    factor = (d - n_pilots) / (d - 1) if d > 1 else 1.0
    factor = min(max(factor, 0.0), 1.0)
    return (scale - noise_floor) * factor + noise_floor


def detection_threshold(pdp: SamplePdp, det: DetectionConfig) -> float:
    """Per-bin power level that noise alone exceeds with probability alpha.

    A noise-plus-leakage bin averaged over n_sets observations is distributed
    as mean_level / (2 n_sets) times a chi-square with 2 n_sets degrees of
    freedom; the threshold is that distribution's (1 - alpha) quantile.  The
    mean level is the signal-free bin estimate from the data (pdp.scale split
    and corrected via det.noise_var) unless the PDP is empty, in which case
    det.noise_var per pilot is used.
    """
    mu = _null_level(pdp.scale, pdp.n_pilots, pdp.values.size, det.noise_var)
    if mu <= 0.0:
        mu = det.noise_var / pdp.n_pilots
    quantile = chi2_inv_cdf(1.0 - det.alpha, 2 * pdp.n_sets)
    return mu / (2.0 * pdp.n_sets) * quantile


def detect_support(pdp: SamplePdp, det: DetectionConfig) -> SupportSet:
    """Bins of the sample PDP that rise above the chi-square threshold."""
    threshold = detection_threshold(pdp, det)
    return SupportSet(indices=np.flatnonzero(pdp.values > threshold))


class _SupportSolver:
    """Incremental least squares on a growing set of Fourier columns.

    Maintains the Cholesky factor of the selected columns' Gram matrix, so
    adding a column costs O(m * n_pilots) and re-solving for the coefficients
    costs two triangular solves.  Raises a numeric error naming the support
    if a new column is (numerically) dependent on the selected ones.
    """

    __slots__ = (
        "d",
        "pattern",
        "y",
        "cols",
        "chol",
        "proj",
        "support",
        "m",
        "coef",
        "residual",
        "residual_sq",
    )

    def __init__(self, pattern: PilotPattern, y: np.ndarray) -> None:
        cap = min(pattern.n, pattern.d)
        self.d = pattern.d
        self.pattern = pattern
        self.y = np.asarray(y, dtype=np.complex128)
        self.cols = np.empty((pattern.n, cap), dtype=np.complex128)
        self.chol = np.zeros((cap, cap), dtype=np.complex128)
        self.proj = np.empty(cap, dtype=np.complex128)
        self.support: list[int] = []
        self.m = 0
        self.coef = np.empty(0, dtype=np.complex128)
        self.residual = self.y.copy()
        self.residual_sq = float(np.vdot(self.y, self.y).real)

    @property
    def full(self) -> bool:
        return self.m >= self.cols.shape[1]

    def add_bin(self, k: int) -> None:
        m = self.m
        n = float(self.pattern.n)
        h = np.exp((-2j * np.pi * k / self.d) * self.pattern.indices)
        if m:
            g = self.cols[:, :m].conj().T @ h
            w = solve_triangular(self.chol[:m, :m], g, lower=True, check_finite=False)
            gap = n - float(np.vdot(w, w).real)
        else:
            w = None
            gap = n
        if gap <= 1e-12 * n:
            raise np.linalg.LinAlgError(
                f"rank-deficient support {sorted(self.support + [int(k)])}"
            )
        if w is not None:
            self.chol[m, :m] = w.conj()
        self.chol[m, m] = math.sqrt(gap)
        self.cols[:, m] = h
        self.proj[m] = np.vdot(h, self.y)
        self.support.append(int(k))
        self.m = m + 1

    def drop_last(self) -> None:
        self.m -= 1
        self.support.pop()

    def refresh(self) -> None:
        """Recompute coefficients and residual for the current support."""
        m = self.m
        if m == 0:
            self.coef = np.empty(0, dtype=np.complex128)
            self.residual = self.y.copy()
        else:
            chol = self.chol[:m, :m]
            z = solve_triangular(chol, self.proj[:m], lower=True, check_finite=False)
            self.coef = solve_triangular(
                chol.conj().T, z, lower=False, check_finite=False
            )
            self.residual = self.y - self.cols[:, :m] @ self.coef
        self.residual_sq = float(np.vdot(self.residual, self.residual).real)


def _estimate_from(solver: _SupportSolver, history: list[float]) -> SparseEstimate:
    theta = np.zeros(solver.d, dtype=np.complex128)
    sel = np.asarray(solver.support, dtype=np.int64)
    if sel.size:
        theta[sel] = solver.coef
    order = np.argsort(sel)
    return SparseEstimate(
        theta=theta,
        support=sel[order],
        coeffs=solver.coef[order] if sel.size else np.empty(0, dtype=np.complex128),
        selection_order=tuple(solver.support),
        residual_sq_history=tuple(history),
    )


def _residual_target(cfg: OmpConfig, n_pilots: int, noise_var: float, y_sq: float) -> float:
    # The relative floor ends noiseless runs once the residual is at the
    # level of accumulated rounding error.
    return max(cfg.residual_gamma * n_pilots * noise_var, 1e-20 * y_sq)


def _default_iters(cfg: OmpConfig, n_pilots: int) -> int:
    if cfg.max_iters is not None:
        return cfg.max_iters
    return max(1, math.ceil(n_pilots / 4))


def _pursue(
    solver: _SupportSolver,
    cfg: OmpConfig,
    target: float,
    history: list[float],
    weights_fn=None,
) -> None:
    """Greedy selection loop shared by the single-set pursuit variants."""
    config = SystemConfig(d=solver.d, n_pilots=solver.pattern.n)
    n = solver.pattern.n
    max_iters = _default_iters(cfg, n)
    for _ in range(max_iters):
        if solver.residual_sq <= target or solver.full:
            break
        amp = np.abs(matched_filter(config, solver.pattern, solver.residual)) / n
        if weights_fn is None:
            score = amp
        else:
            score = weights_fn(solver.residual_sq) * amp
        if solver.support:
            score = score.copy()
            score[solver.support] = -1.0
        best = int(np.argmax(score))
        if score[best] <= 0:
            break
        # A best correlation at rounding-error level means no remaining column
        # explains the residual; selecting it would only chase noise in the
        # arithmetic, so stop instead.
        if amp[best] <= 1e-10 * math.sqrt(solver.residual_sq / n):
            break
        solver.add_bin(best)
        solver.refresh()
        history.append(solver.residual_sq)


def omp(
    obs: Observation,
    cfg: OmpConfig = OmpConfig(),
    noise_var: float | None = None,
) -> SparseEstimate:
    """Plain orthogonal matching pursuit on one observation.

    Selects the delay bin with the largest residual correlation magnitude,
    re-solves least squares on the grown support, and repeats until the
    residual energy falls to residual_gamma * n_pilots * noise_var or the
    iteration cap is reached.  Exact float ties go to the lowest bin index.
    """
    nv = obs.noise_var if noise_var is None else float(noise_var)
    if nv < 0:
        raise ValueError("noise variance cannot be negative")
    solver = _SupportSolver(obs.pattern, obs.y)
    history = [solver.residual_sq]
    target = _residual_target(cfg, obs.pattern.n, nv, solver.residual_sq)
    _pursue(solver, cfg, target, history)
    return _estimate_from(solver, history)


def _capped_support(sup: SupportSet, pdp: SamplePdp, n_pilots: int) -> np.ndarray:
    """Trim a detected support to at most n_pilots bins, keeping the strongest."""
    idx = sup.indices
    if idx.size > n_pilots:
        warnings.warn(
            f"detected support of {idx.size} bins exceeds {n_pilots} observations; "
            "keeping the strongest bins",
            stacklevel=3,
        )
        strongest = np.argsort(pdp.values[idx])[::-1][:n_pilots]
        idx = np.sort(idx[strongest])
    return idx


def algorithm_a1(
    sets: ObservationSet, det: DetectionConfig = DetectionConfig()
) -> list[SparseEstimate]:
    """Detect occupied bins from the averaged sample PDP, then least squares.

    One shared support is detected from all observations; each observation
    then gets its own least-squares coefficients on that support.  If nothing
    clears the threshold a warning is issued and all-zero estimates are
    returned.
    """
    spdp = sample_pdp(sets)
    sup = detect_support(spdp, det)
    if sup.size == 0:
        warnings.warn(
            "no delay bin cleared the detection threshold; returning zero estimates",
            stacklevel=2,
        )
        empty = np.empty(0, dtype=np.int64)
        return [
            SparseEstimate(
                theta=np.zeros(sets.d, dtype=np.complex128),
                support=empty,
                coeffs=np.empty(0, dtype=np.complex128),
                selection_order=(),
                residual_sq_history=(float(np.vdot(o.y, o.y).real),),
            )
            for o in sets.observations
        ]
    support = _capped_support(sup, spdp, sets.n_pilots)
    estimates = []
    for o in sets.observations:
        solver = _SupportSolver(o.pattern, o.y)
        history = [solver.residual_sq]
        for k in support:
            solver.add_bin(int(k))
        solver.refresh()
        history.append(solver.residual_sq)
        estimates.append(_estimate_from(solver, history))
    return estimates


def algorithm_a2(
    obs: Observation,
    prior_pdp: SamplePdp,
    det: DetectionConfig = DetectionConfig(),
    cfg: OmpConfig = OmpConfig(),
    noise_var: float | None = None,
) -> SparseEstimate:
    """Pursuit with selection scores weighted by a prior sample PDP.

    Bins whose prior value clears the detection threshold keep that value as
    their prior variance; all others fall back to the PDP's mean bin level.
    Each candidate's correlation is scaled by the Wiener gain
    prior / (prior + residual_level), so strong prior bins win ties early
    while the weighting fades as the residual shrinks.  With a flat prior the
    selection order reduces to plain pursuit.  When both levels are zero the
    weighting carries no information and the score falls back to the plain
    correlation.
    """
    nv = obs.noise_var if noise_var is None else float(noise_var)
    if nv < 0:
        raise ValueError("noise variance cannot be negative")
    if prior_pdp.values.size != obs.pattern.d:
        raise ValueError(
            f"prior has {prior_pdp.values.size} bins, observation grid has {obs.pattern.d}"
        )
    threshold = detection_threshold(prior_pdp, det)
    noise_level = _null_level(
        prior_pdp.scale, prior_pdp.n_pilots, prior_pdp.values.size, det.noise_var
    )
    lam_prior = np.where(prior_pdp.values > threshold, prior_pdp.values, noise_level)
    n = obs.pattern.n
    d = obs.pattern.d

    def weights_fn(residual_sq: float) -> np.ndarray:
        lam_res = _null_level(residual_sq / (n * n), n, d, nv)
        denom = lam_prior + lam_res
        return np.where(denom > 0.0, lam_prior / np.where(denom > 0.0, denom, 1.0), 1.0)

    solver = _SupportSolver(obs.pattern, obs.y)
    history = [solver.residual_sq]
    target = _residual_target(cfg, n, nv, solver.residual_sq)
    _pursue(solver, cfg, target, history, weights_fn)
    return _estimate_from(solver, history)


def algorithm_a3(
    sets: ObservationSet,
    det: DetectionConfig = DetectionConfig(),
    cfg: OmpConfig = OmpConfig(),
) -> list[SparseEstimate]:
    """Seed each pursuit with the detected support, then continue greedily.

    The support detected from the averaged sample PDP is least-squares
    modeled up front for every observation; plain pursuit iterations follow
    independently per observation.  An empty detection degenerates to plain
    pursuit on each observation.
    """
    spdp = sample_pdp(sets)
    seed = _capped_support(detect_support(spdp, det), spdp, sets.n_pilots)
    estimates = []
    for o in sets.observations:
        solver = _SupportSolver(o.pattern, o.y)
        history = [solver.residual_sq]
        for k in seed:
            if solver.full:
                break
            try:
                solver.add_bin(int(k))
            except np.linalg.LinAlgError:
                warnings.warn(
                    f"seed bin {int(k)} is linearly dependent on the support; skipped",
                    stacklevel=2,
                )
        if solver.m:
            solver.refresh()
            history.append(solver.residual_sq)
        target = _residual_target(cfg, o.pattern.n, o.noise_var, history[0])
        _pursue(solver, cfg, target, history)
        estimates.append(_estimate_from(solver, history))
    return estimates


def ex_omp(
    sets: ObservationSet,
    det: DetectionConfig = DetectionConfig(),
    cfg: OmpConfig = OmpConfig(),
) -> list[SparseEstimate]:
    """Lockstep pursuit over several observations with one shared support.

    Each round averages the squared residual matched-filter spectra of all
    observations into a combined sample PDP and admits every bin above its
    chi-square detection threshold (strongest first).  If nothing clears the
    threshold, one bin is still taken so the pursuit always progresses: the
    bin with the largest combined value, or the largest unused delay index
    when cfg.fallback_largest_delay is set.  The shared support grows until
    every observation's residual meets the stopping rule, the iteration cap
    is reached, or the support size reaches the pilot count.

    Returns one estimate per observation, all sharing the same support.
    """
    config = SystemConfig(d=sets.d, n_pilots=sets.n_pilots)
    n = sets.n_pilots
    n_sets = sets.n_sets
    nv_bar = float(np.mean([o.noise_var for o in sets.observations]))
    quantile = chi2_inv_cdf(1.0 - det.alpha, 2 * n_sets)
    solvers = [_SupportSolver(o.pattern, o.y) for o in sets.observations]
    histories = [[s.residual_sq] for s in solvers]
    targets = [
        _residual_target(cfg, n, o.noise_var, s.residual_sq)
        for o, s in zip(sets.observations, solvers)
    ]
    blocked: set[int] = set()
    max_iters = _default_iters(cfg, n)
    for _ in range(max_iters):
        if all(s.residual_sq <= t for s, t in zip(solvers, targets)):
            break
        if solvers[0].full:
            break
        spectra = [
            np.abs(matched_filter(config, s.pattern, s.residual)) ** 2 / (n * n)
            for s in solvers
        ]
        combined = np.mean(spectra, axis=0)
        mean_level = float(np.mean([s.residual_sq for s in solvers])) / (n * n)
        mean_level = _null_level(mean_level, n, sets.d, nv_bar)
        masked = solvers[0].support + sorted(blocked)
        if masked:
            combined[masked] = -1.0
        admitted: list[int] = []
        if cfg.multi_admit and mean_level > 0:
            threshold = mean_level / (2.0 * n_sets) * quantile
            above = np.flatnonzero(combined > threshold)
            admitted = list(above[np.argsort(combined[above])[::-1]])
        if not admitted:
            if cfg.fallback_largest_delay:
                unused = (
                    k
                    for k in range(sets.d - 1, -1, -1)
                    if k not in blocked and k not in solvers[0].support
                )
                fallback = next(unused, None)
            else:
                best = int(np.argmax(combined))
                fallback = best if combined[best] > 0 else None
            if fallback is None:
                break
            admitted = [int(fallback)]
        progressed = False
        for k in admitted:
            if solvers[0].full:
                break
            done = []
            try:
                for s in solvers:
                    s.add_bin(k)
                    done.append(s)
            except np.linalg.LinAlgError:
                for s in done:
                    s.drop_last()
                blocked.add(k)
                continue
            progressed = True
        if not progressed:
            break
        for s, hist in zip(solvers, histories):
            s.refresh()
            hist.append(s.residual_sq)
    return [_estimate_from(s, h) for s, h in zip(solvers, histories)]
