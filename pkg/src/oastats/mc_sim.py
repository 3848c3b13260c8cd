"""Monte Carlo availability ensembles and the exact enumeration oracle.

``simulate`` reproduces the validation protocol: availability indicators are
redrawn independently per location, per time step and per realization, the
estimator series is formed for each realization, the simulated bias comes
from the ensemble-mean series and the simulated variance is the ensemble
average of each realization's temporal variance.

``enumerate_exact`` computes the same two statistics without sampling error
by summing over all 2^n availability patterns, conditioning on nonempty
support exactly like the resample policy does.  ``enumerate_rs_moments``
brute-forces the unconditioned moments of the numerator/denominator pair,
providing the independent check of the closed-form moment expressions.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data_model import (
    AvailabilityModel,
    ObservationPanel,
    TruthSeries,
    as_beta,
    validate_panel,
)
from .delta_stats import RSMoments
from .errors import AllMissingPatternError, InvalidParameterError, TooManySitesError

MAX_ENUM_SITES = 20
_MASK64 = (1 << 64) - 1
_PATTERN_CHUNK = 4096
_MAX_REDRAWS = 100_000


@dataclass(frozen=True)
class SimConfig:
    """Ensemble size, seeding and policy for availability simulations."""

    n_realizations: int = 5000
    seed: int = 0
    alpha_grid: tuple[float, ...] = ()
    empty_pattern_policy: str = "resample"

    def __post_init__(self):
        object.__setattr__(self, "n_realizations", int(self.n_realizations))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        if self.n_realizations < 1:
            raise InvalidParameterError("n_realizations must be >= 1")
        if any(not (0.0 < a <= 1.0) for a in self.alpha_grid):
            raise InvalidParameterError("alpha grid values must be in (0, 1]")
        if self.empty_pattern_policy not in ("error", "resample"):
            raise InvalidParameterError(
                f"unknown empty_pattern_policy {self.empty_pattern_policy!r}"
            )


@dataclass(frozen=True)
class SimResult:
    """Ensemble statistics of the simulated spatial-average series."""

    sim_bias_sq: float
    sim_variance: float
    ensemble_mean_series: np.ndarray
    mc_stderr_bias: float
    mc_stderr_var: float
    ensemble: np.ndarray | None = None

    def __post_init__(self):
        series = np.array(self.ensemble_mean_series, dtype=float)
        series.setflags(write=False)
        object.__setattr__(self, "ensemble_mean_series", series)
        for name in ("sim_bias_sq", "sim_variance", "mc_stderr_bias", "mc_stderr_var"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.sim_variance < 0.0 or self.mc_stderr_bias < 0.0 or self.mc_stderr_var < 0.0:
            raise InvalidParameterError("simulation statistics must be nonnegative")


def _realization_series(
    values: np.ndarray,
    beta: np.ndarray,
    alpha: float,
    seed: int,
    k: int,
    policy: str,
) -> np.ndarray:
    """Estimator series for realization k, seeded from (seed, k) only."""
    n, n_time = values.shape
    rng = np.random.default_rng([seed & _MASK64, k])
    s = rng.random((n, n_time)) < alpha
    denom = beta @ s
    bad = denom <= 0.0
    redraws = 0
    while bad.any():
        if policy == "error":
            raise AllMissingPatternError(
                f"realization {k} drew an all-missing pattern at a time step"
            )
        redraws += 1
        if redraws > _MAX_REDRAWS:
            raise AllMissingPatternError("resampling failed to find a supported pattern")
        idx = np.flatnonzero(bad)
        s[:, idx] = rng.random((n, idx.size)) < alpha
        denom = beta @ s
        bad = denom <= 0.0
    numer = beta @ (s * values)
    return numer / denom


def simulate(
    panel: ObservationPanel,
    truth: TruthSeries,
    beta,
    avail: AvailabilityModel,
    cfg: SimConfig,
    workers: int = 1,
    collect_ensemble: bool = False,
) -> SimResult:
    """Run the Bernoulli-availability ensemble for one alpha.

    Realization k is driven by a substream derived from (cfg.seed, k), so the
    result is bit-identical for any ``workers`` count; the final reduction
    runs in realization order with compensated summation.
    """
    validate_panel(panel, truth)
    b = as_beta(beta)
    if b.shape[0] != panel.n_locations:
        raise InvalidParameterError("weights do not match the panel size")
    n_real = cfg.n_realizations
    n_time = panel.n_time
    ensemble = np.empty((n_real, n_time))

    def fill(k0: int, k1: int) -> None:
        for k in range(k0, k1):
            ensemble[k] = _realization_series(
                panel.values, b, avail.alpha, cfg.seed, k, cfg.empty_pattern_policy
            )

    if workers <= 1 or n_real < 2:
        fill(0, n_real)
    else:
        chunk = max(1, math.ceil(n_real / (4 * workers)))
        bounds = [(k, min(k + chunk, n_real)) for k in range(0, n_real, chunk)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda kk: fill(*kk), bounds))

    mean_series = np.array(
        [math.fsum(ensemble[:, t]) / n_real for t in range(n_time)]
    )
    sim_bias_sq = float(np.mean((mean_series - truth.values) ** 2))

    temporal_var = ensemble.var(axis=1)  # population (1/N) per realization
    sim_variance = math.fsum(temporal_var) / n_real

    if n_real >= 2:
        mc_stderr_var = float(temporal_var.std(ddof=1) / np.sqrt(n_real))
        var_mean_t = ensemble.var(axis=0, ddof=1) / n_real
        dev = mean_series - truth.values
        var_bias = float(np.sum(4.0 * dev**2 * var_mean_t + 2.0 * var_mean_t**2)) / n_time**2
        mc_stderr_bias = float(np.sqrt(max(var_bias, 0.0)))
    else:
        mc_stderr_var = 0.0
        mc_stderr_bias = 0.0

    return SimResult(
        sim_bias_sq=sim_bias_sq,
        sim_variance=max(sim_variance, 0.0),
        ensemble_mean_series=mean_series,
        mc_stderr_bias=mc_stderr_bias,
        mc_stderr_var=mc_stderr_var,
        ensemble=ensemble if collect_ensemble else None,
    )


def _pattern_chunks(n: int):
    """Yield 0/1 indicator blocks covering all 2^n availability patterns."""
    total = 1 << n
    cols = np.arange(n)
    for start in range(0, total, _PATTERN_CHUNK):
        idx = np.arange(start, min(start + _PATTERN_CHUNK, total), dtype=np.int64)
        bits = (idx[:, None] >> cols) & 1
        yield bits.astype(float)


def enumerate_exact(
    panel: ObservationPanel,
    truth: TruthSeries,
    beta,
    avail: AvailabilityModel,
) -> tuple[np.ndarray, float, float]:
    """Exact per-time mean and ensemble statistics over availability patterns.

    Conditions on nonempty support (the all-missing pattern is excluded and
    probabilities renormalized, matching the simulator's resample policy).
    Returns ``(mean_series, bias_sq, variance)`` where ``variance`` is the
    exact expectation of a realization's population-normalized temporal
    variance: (1 - 1/N) * mean_t Var[f(t)] + popvar_t(E[f(t)]).
    """
    validate_panel(panel, truth)
    b = as_beta(beta)
    n, n_time = panel.values.shape
    if b.shape[0] != n:
        raise InvalidParameterError("weights do not match the panel size")
    if n > MAX_ENUM_SITES:
        raise TooManySitesError(f"enumeration supports n <= {MAX_ENUM_SITES}, got {n}")
    alpha = avail.alpha

    mass = 0.0
    m1 = np.zeros(n_time)
    m2 = np.zeros(n_time)
    for bits in _pattern_chunks(n):
        k = bits.sum(axis=1)
        w = alpha**k * (1.0 - alpha) ** (n - k)
        denom = bits @ b
        keep = denom > 0.0
        if not keep.any():
            continue
        bits, w, denom = bits[keep], w[keep], denom[keep]
        f = (bits * b) @ panel.values / denom[:, None]
        mass += float(w.sum())
        m1 += w @ f
        m2 += w @ f**2
    m1 /= mass
    m2 /= mass
    var_t = np.maximum(m2 - m1**2, 0.0)

    bias_sq = float(np.mean((m1 - truth.values) ** 2))
    variance = (1.0 - 1.0 / n_time) * float(var_t.mean()) + float(m1.var())
    return m1, bias_sq, variance


def enumerate_rs_moments(
    panel: ObservationPanel,
    beta,
    avail: AvailabilityModel,
) -> RSMoments:
    """Brute-force moments of (R, S): all patterns x empirical joint of r.

    No support conditioning here; R and S are plain random variables, so this
    is the direct oracle for the closed-form moment expressions.
    """
    b = as_beta(beta)
    n = panel.n_locations
    if b.shape[0] != n:
        raise InvalidParameterError("weights do not match the panel size")
    if n > MAX_ENUM_SITES:
        raise TooManySitesError(f"enumeration supports n <= {MAX_ENUM_SITES}, got {n}")
    alpha = avail.alpha

    e_r = e_r2 = e_s = e_s2 = e_rs = 0.0
    for bits in _pattern_chunks(n):
        k = bits.sum(axis=1)
        w = alpha**k * (1.0 - alpha) ** (n - k)
        s_val = bits @ b
        r_mat = (bits * b) @ panel.values
        r_mean_t = r_mat.mean(axis=1)
        e_r += float(w @ r_mean_t)
        e_r2 += float(w @ (r_mat**2).mean(axis=1))
        e_s += float(w @ s_val)
        e_s2 += float(w @ s_val**2)
        e_rs += float(w @ (s_val * r_mean_t))
    return RSMoments(
        mu_R=e_r,
        mu_S=e_s,
        var_R=max(e_r2 - e_r**2, 0.0),
        var_S=max(e_s2 - e_s**2, 0.0),
        cov_RS=e_rs - e_r * e_s,
    )
