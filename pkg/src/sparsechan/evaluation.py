"""Monte Carlo evaluation: NMSE sweeps over SNR, capacity fractions, detector calibration.

The sweep runner scores every requested estimator on the same synthesized
channels.  Per trial it draws one primary channel and observes it through
both a uniform pilot pattern (scored by the interpolation baselines) and a
pseudo-random pattern (scored by the MMSE bound and the greedy recovery
family), plus a
block of independent prior observation sets used by the estimators that
consume side information.  All randomness for a trial derives from
(master_seed, snr_index, trial_index), and every trial synthesizes the full
complement of data in a fixed order, so results are reproducible and do not
depend on which estimators are selected.

NMSE is measured on the data subcarriers only (the complement of the pilot
pattern each estimator actually used) and aggregated across trials as the
ratio of linear-domain sums: sum of per-trial mean squared errors over sum of
per-trial channel energies.  The capacity lower bound plugs the aggregated
NMSE into an effective post-equalization SNR and averages the log term over
the same channel realizations.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .baseline import (
    SupportSet,
    estimate_dft,
    estimate_li_mmse,
    estimate_linear_interp,
    estimate_mmse_oracle,
    estimate_reduced_rank_ls,
    pilot_sample_covariance,
)
from .channel import ImpulseProfile, PowerDelayProfile, realize_channel, to_continuous_pdp
from .signal_model import (
    ObservationSet,
    PilotPattern,
    SystemConfig,
    synthesize_observation,
)
from .sparse_recovery import (
    DetectionConfig,
    OmpConfig,
    SamplePdp,
    algorithm_a1,
    algorithm_a2,
    algorithm_a3,
    detection_threshold,
    ex_omp,
    omp,
    sample_pdp,
)

__all__ = [
    "ESTIMATOR_NAMES",
    "CapacityParams",
    "SweepConfig",
    "SweepRow",
    "SweepResult",
    "nmse_linear",
    "nmse_db",
    "capacity_lower_bound",
    "run_sweep",
    "false_alarm_calibration",
]

NMSE_DB_FLOOR = -100.0

ESTIMATOR_NAMES = (
    "dft",
    "li",
    "li-mmse",
    "mmse",
    "rrls",
    "omp",
    "a1",
    "a2",
    "a3",
    "exomp",
    "ideal",
)


def nmse_linear(
    true_data: np.ndarray, est_data: np.ndarray, theta_norm_sq: float
) -> float:
    """Mean squared reconstruction error on the data subcarriers over the tap energy."""
    true_data = np.asarray(true_data)
    est_data = np.asarray(est_data)
    if true_data.shape != est_data.shape or true_data.ndim != 1 or true_data.size == 0:
        raise ValueError("true and estimated vectors must be equal-length and non-empty")
    if theta_norm_sq <= 0:
        raise ValueError("channel tap energy must be positive")
    err = est_data - true_data
    return float(np.mean(np.abs(err) ** 2)) / float(theta_norm_sq)


def nmse_db(true_data: np.ndarray, est_data: np.ndarray, theta_norm_sq: float) -> float:
    """``nmse_linear`` in decibels, floored at -100 dB so exact fits stay finite."""
    lin = nmse_linear(true_data, est_data, theta_norm_sq)
    return max(10.0 * math.log10(lin) if lin > 0 else -math.inf, NMSE_DB_FLOOR)


@dataclass(frozen=True)
class CapacityParams:
    """Inputs of the achievable-rate lower bound.

    rho is the nominal SNR (linear), sigma_e_sq the normalized channel
    estimation error power, and n_pilots of each n_symbols-symbol coherence
    block is spent on pilots.
    """

    rho: float
    sigma_e_sq: float
    n_symbols: int
    n_pilots: int

    def __post_init__(self) -> None:
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if not 0.0 <= self.sigma_e_sq <= 1.0:
            raise ValueError("sigma_e_sq must lie in [0, 1]")
        if self.n_symbols < 1 or not 0 <= self.n_pilots <= self.n_symbols:
            raise ValueError("need 0 <= n_pilots <= n_symbols with n_symbols >= 1")


def capacity_lower_bound(params: CapacityParams, theta_norm_sq: np.ndarray) -> float:
    """Average achievable rate in bits per symbol given estimation error power.

    Estimation error of relative power sigma_e_sq turns a nominal SNR rho
    into the effective value rho (1 - sigma_e_sq) / (1 + rho sigma_e_sq);
    the log term is averaged over the supplied per-realization channel
    energies and scaled by the fraction of symbols left for data.
    """
    norms = np.asarray(theta_norm_sq, dtype=np.float64)
    if norms.ndim != 1 or norms.size == 0:
        raise ValueError("need at least one channel energy sample")
    if np.any(norms < 0):
        raise ValueError("channel energies cannot be negative")
    effective = (
        params.rho * (1.0 - params.sigma_e_sq) / (1.0 + params.rho * params.sigma_e_sq)
    )
    rate = float(np.mean(np.log2(1.0 + effective * norms)))
    return (1.0 - params.n_pilots / params.n_symbols) * rate


@dataclass(frozen=True)
class SweepConfig:
    """Everything a Monte Carlo NMSE/capacity sweep needs.

    ``n_prior_sets`` is the number of extra independent pilot observation
    sets synthesized per trial for the estimators that use side information.
    ``n_symbols`` is the coherence block length used by the capacity bound
    (defaults to d).  ``uniform_spacing`` defaults to d // n_pilots.
    """

    system: SystemConfig
    profile: ImpulseProfile
    snr_db: tuple[float, ...]
    n_trials: int
    estimators: tuple[str, ...]
    n_prior_sets: int = 8
    master_seed: int = 0
    alpha: float = 1e-3
    cluster_rms_s: float = 1e-7
    omp: OmpConfig = field(default_factory=OmpConfig)
    n_symbols: int | None = None
    uniform_spacing: int | None = None

    def __post_init__(self) -> None:
        if not self.snr_db:
            raise ValueError("need at least one SNR point")
        if self.n_trials < 1:
            raise ValueError("n_trials must be positive")
        if not self.estimators:
            raise ValueError("need at least one estimator")
        unknown = [e for e in self.estimators if e not in ESTIMATOR_NAMES]
        if unknown:
            raise ValueError(
                f"unknown estimators {unknown}; valid names are {list(ESTIMATOR_NAMES)}"
            )
        if len(set(self.estimators)) != len(self.estimators):
            raise ValueError("estimator names must be distinct")
        if self.n_prior_sets < 1:
            raise ValueError("n_prior_sets must be positive")
        if self.system.n_pilots >= self.system.d:
            raise ValueError("sweeps need at least one data subcarrier (n_pilots < d)")
        if self.n_symbols is not None and self.n_symbols < self.system.n_pilots:
            raise ValueError("n_symbols cannot be smaller than the pilot count")
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        object.__setattr__(self, "estimators", tuple(self.estimators))


@dataclass(frozen=True)
class SweepRow:
    estimator: str
    snr_db: float
    nmse_db: float
    capacity_fraction: float
    n_trials: int
    failures: int
    master_seed: int


@dataclass
class SweepResult:
    """Aggregated sweep output plus optional per-trial detail for analysis."""

    rows: list[SweepRow]
    trial_errors: dict[tuple[str, float], np.ndarray] | None = None
    trial_norms: dict[float, np.ndarray] | None = None

    def row(self, estimator: str, snr_db: float) -> SweepRow:
        for r in self.rows:
            if r.estimator == estimator and r.snr_db == snr_db:
                return r
        raise KeyError(f"no row for ({estimator!r}, {snr_db})")

    def to_csv(self, path) -> None:
        """Write rows sorted by estimator name then SNR."""
        ordered = sorted(self.rows, key=lambda r: (r.estimator, r.snr_db))
        with open(path, "w", newline="") as fh:
            fh.write(
                "estimator,snr_db,nmse_db,capacity_fraction,n_trials,failures,master_seed\n"
            )
            for r in ordered:
                fh.write(
                    f"{r.estimator},{r.snr_db:.10g},{r.nmse_db:.10g},"
                    f"{r.capacity_fraction:.10g},{r.n_trials},{r.failures},{r.master_seed}\n"
                )

    def summary(self) -> str:
        lines = [
            f"{'estimator':>10} {'snr_db':>8} {'nmse_db':>9} {'cap_frac':>9} {'fail':>5}"
        ]
        for r in sorted(self.rows, key=lambda r: (r.estimator, r.snr_db)):
            lines.append(
                f"{r.estimator:>10} {r.snr_db:8.1f} {r.nmse_db:9.2f} "
                f"{r.capacity_fraction:9.4f} {r.failures:5d}"
            )
        return "\n".join(lines)


@dataclass(frozen=True)
class _SweepPlan:
    """Pre-resolved, picklable state shared by every trial."""

    system: SystemConfig
    pdp: PowerDelayProfile
    uni_pattern: PilotPattern
    sigma2: tuple[float, ...]
    estimators: tuple[str, ...]
    n_prior_sets: int
    alpha: float
    omp: OmpConfig
    master_seed: int
    rrls_support: np.ndarray


def _data_indices(d: int, pattern: PilotPattern) -> np.ndarray:
    mask = np.ones(d, dtype=bool)
    mask[pattern.indices] = False
    return np.flatnonzero(mask)


def _run_trial(plan: _SweepPlan, snr_idx: int, trial_idx: int):
    """Synthesize one trial and score every estimator on it.

    Returns ({estimator: mean squared data-subcarrier error, or None on
    failure}, channel tap energy).  Synthesis happens unconditionally and in
    a fixed order so the realizations are independent of the estimator list.
    """
    system = plan.system
    sigma2 = plan.sigma2[snr_idx]
    rng = np.random.default_rng([plan.master_seed, snr_idx, trial_idx])

    theta0 = realize_channel(plan.pdp, rng)
    true_freq = np.fft.fft(theta0)
    norm = float(np.vdot(theta0, theta0).real)
    uni_obs = synthesize_observation(system, plan.uni_pattern, theta0, sigma2, rng)
    rand_pattern = PilotPattern.pseudo_random(system, int(rng.integers(0, 2**63)))
    rand_obs = synthesize_observation(system, rand_pattern, theta0, sigma2, rng)
    priors_rand = []
    for _ in range(plan.n_prior_sets):
        th = realize_channel(plan.pdp, rng)
        pat = PilotPattern.pseudo_random(system, int(rng.integers(0, 2**63)))
        priors_rand.append(synthesize_observation(system, pat, th, sigma2, rng))
    priors_uni = []
    for _ in range(plan.n_prior_sets):
        th = realize_channel(plan.pdp, rng)
        priors_uni.append(synthesize_observation(system, plan.uni_pattern, th, sigma2, rng))

    det = DetectionConfig(alpha=plan.alpha, noise_var=sigma2)
    uni_data = _data_indices(system.d, plan.uni_pattern)
    rand_data = _data_indices(system.d, rand_pattern)
    cache: dict[str, object] = {}

    def prior_spdp() -> SamplePdp:
        if "spdp" not in cache:
            cache["spdp"] = sample_pdp(ObservationSet(tuple(priors_rand)))
        return cache["spdp"]

    def full_set() -> ObservationSet:
        if "full" not in cache:
            cache["full"] = ObservationSet(tuple([rand_obs] + priors_rand))
        return cache["full"]

    def score(freq: np.ndarray, data: np.ndarray) -> float:
        err = freq[data] - true_freq[data]
        return float(np.mean(np.abs(err) ** 2))

    results: dict[str, float | None] = {}
    for name in plan.estimators:
        try:
            if name == "dft":
                value = score(estimate_dft(uni_obs, system).channel_freq, uni_data)
            elif name == "li":
                value = score(
                    estimate_linear_interp(uni_obs, system).channel_freq, uni_data
                )
            elif name == "li-mmse":
                cov = pilot_sample_covariance(priors_uni, sigma2)
                value = score(
                    estimate_li_mmse(uni_obs, cov, sigma2, system).channel_freq,
                    uni_data,
                )
            elif name == "mmse":
                value = score(
                    estimate_mmse_oracle(
                        rand_obs, plan.pdp, sigma2, system
                    ).channel_freq,
                    rand_data,
                )
            elif name == "rrls":
                est = estimate_reduced_rank_ls(
                    uni_obs, SupportSet(plan.rrls_support), system
                )
                value = score(est.channel_freq, uni_data)
            elif name == "omp":
                value = score(omp(rand_obs, plan.omp).channel_freq(), rand_data)
            elif name == "a1":
                value = score(
                    algorithm_a1(full_set(), det)[0].channel_freq(), rand_data
                )
            elif name == "a2":
                est = algorithm_a2(rand_obs, prior_spdp(), det, plan.omp)
                value = score(est.channel_freq(), rand_data)
            elif name == "a3":
                value = score(
                    algorithm_a3(full_set(), det, plan.omp)[0].channel_freq(),
                    rand_data,
                )
            elif name == "exomp":
                value = score(
                    ex_omp(full_set(), det, plan.omp)[0].channel_freq(), rand_data
                )
            elif name == "ideal":
                value = 0.0
            else:  # pragma: no cover - guarded by SweepConfig validation
                raise ValueError(f"unknown estimator {name!r}")
        except Exception:
            value = None
        results[name] = value
    return results, norm


def _trial_star(plan: _SweepPlan, idx: tuple[int, int]):
    return _run_trial(plan, idx[0], idx[1])


def run_sweep(
    config: SweepConfig, n_workers: int = 1, keep_trials: bool = False
) -> SweepResult:
    """Run the Monte Carlo sweep and aggregate NMSE and capacity per estimator.

    The aggregate linear NMSE at each SNR point is the sum of per-trial mean
    squared data-subcarrier errors divided by the sum of the same trials'
    channel energies; trials where an estimator raised are excluded from that
    estimator's aggregate and counted in the row's failure column.  With
    ``n_workers > 1`` trials are distributed over processes; results are
    identical to the sequential run.
    """
    system = config.system
    pdp = to_continuous_pdp(
        config.profile, system, cluster_rms_s=config.cluster_rms_s, normalize=True
    )
    spacing = (
        config.uniform_spacing
        if config.uniform_spacing is not None
        else system.d // system.n_pilots
    )
    uni_pattern = PilotPattern.uniform(system, spacing)
    active = np.flatnonzero(pdp.variances > 0)
    if active.size > system.n_pilots:
        strongest = np.argsort(pdp.variances[active])[::-1][: system.n_pilots]
        active = np.sort(active[strongest])
    plan = _SweepPlan(
        system=system,
        pdp=pdp,
        uni_pattern=uni_pattern,
        sigma2=tuple(10.0 ** (-s / 10.0) for s in config.snr_db),
        estimators=config.estimators,
        n_prior_sets=config.n_prior_sets,
        alpha=config.alpha,
        omp=config.omp,
        master_seed=config.master_seed,
        rrls_support=active,
    )
    indices = [
        (si, ti) for si in range(len(config.snr_db)) for ti in range(config.n_trials)
    ]
    if n_workers > 1:
        chunk = max(1, len(indices) // (8 * n_workers))
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            outcomes = list(
                pool.map(partial(_trial_star, plan), indices, chunksize=chunk)
            )
    else:
        outcomes = [_run_trial(plan, si, ti) for si, ti in indices]

    n_symbols = config.n_symbols if config.n_symbols is not None else system.d
    errors = {
        (name, snr): np.full(config.n_trials, np.nan)
        for name in config.estimators
        for snr in config.snr_db
    }
    norms = {snr: np.empty(config.n_trials) for snr in config.snr_db}
    for (si, ti), (res, norm) in zip(indices, outcomes):
        snr = config.snr_db[si]
        norms[snr][ti] = norm
        for name, value in res.items():
            if value is not None:
                errors[(name, snr)][ti] = value

    rows = []
    for name in config.estimators:
        for snr in config.snr_db:
            errs = errors[(name, snr)]
            valid = ~np.isnan(errs)
            failures = int(config.n_trials - valid.sum())
            if valid.any():
                norm_sum = float(norms[snr][valid].sum())
                lin = float(errs[valid].sum()) / norm_sum
                db = max(
                    10.0 * math.log10(lin) if lin > 0 else -math.inf, NMSE_DB_FLOOR
                )
                rho = 10.0 ** (snr / 10.0)
                params = CapacityParams(
                    rho=rho,
                    sigma_e_sq=min(lin, 1.0),
                    n_symbols=n_symbols,
                    n_pilots=system.n_pilots,
                )
                rate = capacity_lower_bound(params, norms[snr][valid])
                ideal_rate = float(np.mean(np.log2(1.0 + rho * norms[snr][valid])))
                fraction = rate / ideal_rate if ideal_rate > 0 else 0.0
            else:
                db = math.nan
                fraction = math.nan
            rows.append(
                SweepRow(
                    estimator=name,
                    snr_db=snr,
                    nmse_db=db,
                    capacity_fraction=fraction,
                    n_trials=config.n_trials,
                    failures=failures,
                    master_seed=config.master_seed,
                )
            )
    result = SweepResult(rows=rows)
    if keep_trials:
        result.trial_errors = errors
        result.trial_norms = norms
    return result


def false_alarm_calibration(
    system: SystemConfig,
    alphas: tuple[float, ...],
    n_sets_list: tuple[int, ...],
    n_bins: int = 200_000,
    master_seed: int = 0,
) -> list[dict]:
    """Empirical per-bin false alarm rates of the detector on pure noise.

    Synthesizes noise-only observation sets on pseudo-random patterns,
    detects against each alpha, and counts threshold crossings until at least
    ``n_bins`` bins have been examined per (alpha, n_sets) combination.
    Returns one dict per combination with the empirical rate and the binomial
    standard error.
    """
    if not alphas or not n_sets_list:
        raise ValueError("need at least one alpha and one set count")
    if n_bins < system.d:
        raise ValueError("n_bins must cover at least one trial")
    rows = []
    zeros = np.zeros(system.d, dtype=np.complex128)
    trials = math.ceil(n_bins / system.d)
    for set_idx, n_sets in enumerate(n_sets_list):
        counts = {alpha: 0 for alpha in alphas}
        for t in range(trials):
            rng = np.random.default_rng([master_seed, set_idx, t])
            obs = []
            for _ in range(n_sets):
                pat = PilotPattern.pseudo_random(system, int(rng.integers(0, 2**63)))
                obs.append(synthesize_observation(system, pat, zeros, 1.0, rng))
            spdp = sample_pdp(ObservationSet(tuple(obs)))
            for alpha in alphas:
                thr = detection_threshold(
                    spdp, DetectionConfig(alpha=alpha, noise_var=1.0)
                )
                counts[alpha] += int(np.count_nonzero(spdp.values > thr))
        total = trials * system.d
        for alpha in alphas:
            rate = counts[alpha] / total
            rows.append(
                {
                    "alpha": alpha,
                    "n_sets": n_sets,
                    "n_bins": total,
                    "false_alarms": counts[alpha],
                    "rate": rate,
                    "stderr": math.sqrt(alpha * (1.0 - alpha) / total),
                }
            )
    return rows
