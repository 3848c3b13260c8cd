"""Ratio-moment ("delta method") estimators of bias, variance, MSE and SE.

The spatial average is the ratio r = R/S of weighted available observations
to available weight.  Truncating its Taylor expansion about the mean yields
closed-form estimators in terms of field moments and the availability alpha:

  var(R)  = alpha * sum_i b_i^2 (zeta_i + eps^2)
            + alpha^2 * (b' Cov b - sum_i b_i^2 Cov_ii)
  var(S)  = alpha (1-alpha) sum_i b_i^2
  cov(RS) = alpha (1-alpha) sum_i b_i^2 E v_i

  bias^2  = (1/N) sum_t (b' d1(t) + c)^2,
            c = ((1-alpha)/alpha) (mu sum b_i^2 - sum b_i^2 E v_i)
  V_r     = var(R)/mu_S^2 + (mu_R^2/mu_S^4) var(S) - 2 (mu_R/mu_S^3) cov(RS)

with mu = sum_i b_i E v_i evaluated at the candidate weights.  The bias uses
the per-time error with the constant missing-data correction applied before
squaring, so the alpha=1 limit collapses exactly to b' D1 b.  All covariances
here are the 1/N empirical ones (``cov_pop``), which makes every formula an
identity under exact enumeration of availability patterns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import AvailabilityModel, TruthSeries, as_beta
from .errors import (
    DimensionMismatchError,
    InvalidParameterError,
    NegativeVarianceError,
    UndefinedDiagnosticError,
)
from .moments import MomentSet

CAUCHY_SCHWARZ_TOL = 1e-9
ASSEMBLY_AGREEMENT_TOL = 1e-10
NEGATIVE_VARIANCE_TOL = 1e-9
DEFAULT_VALIDITY_THRESHOLD = 0.05

REPORT_COLUMNS = (
    "alpha",
    "scheme",
    "bias_sq",
    "variance",
    "mse",
    "se",
    "validity_ratio",
    "term_sampling",
    "term_missing",
)


@dataclass(frozen=True)
class RSMoments:
    """First and second moments of the numerator R and denominator S."""

    mu_R: float
    mu_S: float
    var_R: float
    var_S: float
    cov_RS: float

    def __post_init__(self):
        for name in ("mu_R", "mu_S", "var_R", "var_S", "cov_RS"):
            object.__setattr__(self, name, float(getattr(self, name)))
        scale = max(1.0, abs(self.var_R), abs(self.var_S))
        if self.var_R < -NEGATIVE_VARIANCE_TOL * scale or self.var_S < -NEGATIVE_VARIANCE_TOL * scale:
            raise NegativeVarianceError("R/S variances must be nonnegative")
        object.__setattr__(self, "var_R", max(self.var_R, 0.0))
        object.__setattr__(self, "var_S", max(self.var_S, 0.0))
        bound = np.sqrt(max(self.var_R, 0.0) * max(self.var_S, 0.0))
        if abs(self.cov_RS) > bound + CAUCHY_SCHWARZ_TOL * max(1.0, bound):
            raise InvalidParameterError("cov_RS violates the Cauchy-Schwarz bound")


@dataclass(frozen=True)
class StatReport:
    """Bias/variance/MSE/SE summary plus the first-order validity diagnostic."""

    bias_sq: float
    variance: float
    mse: float
    se: float
    validity_ratio: float
    bias_term_sampling: float
    bias_term_missing: float

    def __post_init__(self):
        for name in (
            "bias_sq",
            "variance",
            "mse",
            "se",
            "validity_ratio",
            "bias_term_sampling",
            "bias_term_missing",
        ):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.bias_sq < 0.0 or self.variance < 0.0 or self.se < 0.0:
            raise InvalidParameterError("report statistics must be nonnegative")
        if abs(self.mse - (self.bias_sq + self.variance)) > 1e-10 * max(1.0, abs(self.mse)):
            raise InvalidParameterError("mse must equal bias_sq + variance")


def _check_truth(m: MomentSet, truth: TruthSeries | None) -> None:
    # Guards against pairing a moment set with the wrong truth series; the
    # bias formula itself only needs the moments.
    if truth is None:
        return
    if len(truth) != m.n_time:
        raise DimensionMismatchError(
            f"truth has {len(truth)} steps but moments were built from {m.n_time}"
        )
    mean = float(truth.values.mean())
    if abs(mean - m.mean_truth) > 1e-9 * max(1.0, abs(m.mean_truth)):
        raise InvalidParameterError("truth series does not match the moment set")


def rs_moments(m: MomentSet, beta, avail: AvailabilityModel) -> RSMoments:
    """Moments of R and S for given weights and availability."""
    b = as_beta(beta)
    if b.shape[0] != m.n_locations:
        raise DimensionMismatchError("weights do not match the moment set size")
    alpha = avail.alpha
    b_sq = b**2
    zeta = m.zeta_for(alpha)
    cov = m.cov_pop
    cross = float(b @ cov @ b) - float(b_sq @ np.diag(cov))
    var_r = alpha * float(b_sq @ (zeta + m.sigma_eps_sq)) + alpha**2 * cross
    var_s = alpha * (1.0 - alpha) * float(b_sq.sum())
    cov_rs = alpha * (1.0 - alpha) * float(b_sq @ m.mean_obs)
    mu_r = alpha * float(b @ m.mean_obs)
    return RSMoments(mu_R=mu_r, mu_S=alpha, var_R=var_r, var_S=var_s, cov_RS=cov_rs)


def _missing_bias_offset(m: MomentSet, b: np.ndarray, alpha: float) -> float:
    """The constant missing-data term added to each per-time sampling error."""
    b_sq = b**2
    mu = float(b @ m.mean_obs)
    return (1.0 - alpha) / alpha * (mu * float(b_sq.sum()) - float(b_sq @ m.mean_obs))


def delta_bias(
    m: MomentSet,
    beta,
    avail: AvailabilityModel,
    truth: TruthSeries | None = None,
) -> tuple[float, float, float]:
    """Squared bias of the spatial average plus its two contributions.

    Returns ``(bias_sq, term_sampling, term_missing)`` where term_sampling is
    the finite-sampling quadratic form b' D1 b and term_missing the squared
    missing-data offset.  The total also carries their cross term, so it is
    not simply their sum.
    """
    b = as_beta(beta)
    if b.shape[0] != m.n_locations:
        raise DimensionMismatchError("weights do not match the moment set size")
    _check_truth(m, truth)
    alpha = avail.alpha
    term_sampling = float(b @ m.d1 @ b)
    offset = _missing_bias_offset(m, b, alpha)
    # (1/N) sum_t (b'd1(t) + c)^2 expanded in stored moments; the time mean
    # of d1(t) is exactly d2_diag.
    bias_sq = term_sampling + 2.0 * offset * float(b @ m.d2_diag) + offset**2
    return max(bias_sq, 0.0), term_sampling, offset**2


def variance_from_rs(rs: RSMoments) -> float:
    """Variance assembled from R/S moments (first-order ratio expansion)."""
    mu_s = rs.mu_S
    return (
        rs.var_R / mu_s**2
        + rs.mu_R**2 / mu_s**4 * rs.var_S
        - 2.0 * rs.mu_R / mu_s**3 * rs.cov_RS
    )


def delta_variance(m: MomentSet, beta, avail: AvailabilityModel) -> float:
    """Ensemble variance of the spatial average under availability alpha.

    Evaluates the expanded five-term expression and cross-checks it against
    the assembly from R/S moments; the two are algebraically identical, so
    disagreement or a negative result signals inconsistent moment inputs.
    """
    b = as_beta(beta)
    if b.shape[0] != m.n_locations:
        raise DimensionMismatchError("weights do not match the moment set size")
    alpha = avail.alpha
    b_sq = b**2
    zeta = m.zeta_for(alpha)
    cov = m.cov_pop
    mu = float(b @ m.mean_obs)
    terms = (
        float(b_sq @ zeta) / alpha,
        float(b @ cov @ b) - float(b_sq @ np.diag(cov)),
        m.sigma_eps_sq * float(b_sq.sum()) / alpha,
        -2.0 * (1.0 - alpha) / alpha * mu * float(b_sq @ m.mean_obs),
        (1.0 - alpha) / alpha * mu**2 * float(b_sq.sum()),
    )
    direct = float(sum(terms))
    scale = float(sum(abs(t) for t in terms)) + 1.0
    assembled = variance_from_rs(rs_moments(m, b, avail))
    if abs(direct - assembled) > ASSEMBLY_AGREEMENT_TOL * scale:
        raise InvalidParameterError(
            f"variance assemblies disagree ({direct!r} vs {assembled!r}); "
            "moment inputs are inconsistent"
        )
    if direct < -NEGATIVE_VARIANCE_TOL * scale:
        raise NegativeVarianceError(
            f"computed variance {direct!r} is negative; moment inputs are invalid"
        )
    return max(direct, 0.0)


def validity_diagnostic(rs: RSMoments) -> float:
    """First-order truncation diagnostic |var_S/mu_S^2 - cov_RS/(mu_R mu_S)|.

    Small values mean the mean-ratio approximation behind the variance
    estimator is safe; compare against ``DEFAULT_VALIDITY_THRESHOLD``.
    """
    if rs.mu_R == 0.0:
        raise UndefinedDiagnosticError("diagnostic undefined when mu_R = 0")
    return abs(rs.var_S / rs.mu_S**2 - rs.cov_RS / (rs.mu_R * rs.mu_S))


def mse_and_se(
    bias_sq: float,
    variance: float,
    m: MomentSet,
    beta,
    *,
    validity_ratio: float = 0.0,
    bias_term_sampling: float = 0.0,
    bias_term_missing: float = 0.0,
) -> StatReport:
    """Assemble the report: mse = bias_sq + variance, SE = sqrt(b'(D1+eps^2 I)b)."""
    b = as_beta(beta)
    if bias_sq < 0.0 or variance < 0.0:
        raise InvalidParameterError("bias_sq and variance must be nonnegative")
    se_sq = float(b @ m.d1 @ b) + m.sigma_eps_sq * float(b @ b)
    return StatReport(
        bias_sq=bias_sq,
        variance=variance,
        mse=bias_sq + variance,
        se=float(np.sqrt(max(se_sq, 0.0))),
        validity_ratio=validity_ratio,
        bias_term_sampling=bias_term_sampling,
        bias_term_missing=bias_term_missing,
    )


def full_report(
    m: MomentSet,
    beta,
    avail: AvailabilityModel,
    truth: TruthSeries | None = None,
) -> StatReport:
    """Run the whole estimator chain for one (weights, alpha) pair."""
    b = as_beta(beta)
    bias_sq, term_sampling, term_missing = delta_bias(m, b, avail, truth)
    variance = delta_variance(m, b, avail)
    ratio = validity_diagnostic(rs_moments(m, b, avail))
    return mse_and_se(
        bias_sq,
        variance,
        m,
        b,
        validity_ratio=ratio,
        bias_term_sampling=term_sampling,
        bias_term_missing=term_missing,
    )


def report_row(alpha: float, scheme: str, report: StatReport) -> list:
    """One CSV row in the documented REPORT_COLUMNS order."""
    return [
        repr(float(alpha)),
        scheme,
        repr(report.bias_sq),
        repr(report.variance),
        repr(report.mse),
        repr(report.se),
        repr(report.validity_ratio),
        repr(report.bias_term_sampling),
        repr(report.bias_term_missing),
    ]


__all__ = [
    "RSMoments",
    "StatReport",
    "REPORT_COLUMNS",
    "DEFAULT_VALIDITY_THRESHOLD",
    "rs_moments",
    "delta_bias",
    "delta_variance",
    "variance_from_rs",
    "validity_diagnostic",
    "mse_and_se",
    "full_report",
    "report_row",
]
