"""Moment estimation for the field behind a panel of observations.

Produces every matrix and per-location statistic the analytic estimators and
the weight optimizers consume: time means, covariance matrices, the deviation
outer-product matrix D1, expected-deviation diagonals D2 / F, and the
availability-inflated second moments.

Two covariance normalizations coexist on purpose.  ``cov_obs`` is the
unbiased 1/(N-1) sample covariance and feeds the variance quadratic form C.
``cov_pop`` uses 1/N, matching the empirical-distribution identities that the
exact enumeration oracle checks to 1e-10; the ratio-moment and bias/variance
estimators are built on it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data_model import AvailabilityModel, NoiseModel, ObservationPanel, TruthSeries, validate_panel
from .errors import (
    DimensionMismatchError,
    InvalidParameterError,
    IOFailureError,
    NonPsdMatrixError,
    ParseError,
)

SYMMETRY_TOL = 1e-10
PSD_EIG_TOL = 1e-8  # min eigenvalue >= -PSD_EIG_TOL * trace
F_DIAG_TOL = 1e-12


def _check_symmetric_psd(mat: np.ndarray, name: str) -> None:
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionMismatchError(f"{name} must be square")
    scale = max(1.0, float(np.abs(mat).max()))
    if float(np.abs(mat - mat.T).max()) > SYMMETRY_TOL * scale:
        raise NonPsdMatrixError(f"{name} is not symmetric within tolerance")
    trace = float(np.trace(mat))
    min_eig = float(np.linalg.eigvalsh(0.5 * (mat + mat.T)).min())
    if min_eig < -PSD_EIG_TOL * max(trace, 0.0) - 1e-300:
        raise NonPsdMatrixError(
            f"{name} has eigenvalue {min_eig:.3e} below the PSD tolerance"
        )


@dataclass(frozen=True)
class MomentSet:
    """All field statistics needed by the estimators and optimizers.

    ``zeta_sq`` holds the inflated second moments E[v_i^2] - alpha*(E[v_i])^2
    at the stored ``alpha``; :meth:`zeta_for` re-evaluates them at any other
    availability.
    """

    mean_obs: np.ndarray          # E r_i = E v_i, time means
    cov_obs: np.ndarray           # S_r, 1/(N-1) sample covariance
    cov_pop: np.ndarray           # 1/N covariance of the empirical distribution
    d1: np.ndarray                # (1/N) sum_t d1(t) d1(t)^T
    d2_diag: np.ndarray           # E v_i - E v
    f_diag: np.ndarray            # (E v_i - E v)^2
    zeta_sq: np.ndarray           # inflated second moments at `alpha`
    alpha: float                  # availability the stored zeta_sq refers to
    mean_truth: float             # E v
    sigma_eps_sq: float           # measurement-noise variance
    n_time: int                   # number of time steps the estimates used

    def __post_init__(self):
        mean_obs = np.array(self.mean_obs, dtype=float)
        n = mean_obs.shape[0]
        for name in ("cov_obs", "cov_pop", "d1"):
            mat = np.array(getattr(self, name), dtype=float)
            if mat.shape != (n, n):
                raise DimensionMismatchError(f"{name} must be {n}x{n}")
            _check_symmetric_psd(mat, name)
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)
        for name in ("d2_diag", "f_diag", "zeta_sq"):
            vec = np.array(getattr(self, name), dtype=float)
            if vec.shape != (n,):
                raise DimensionMismatchError(f"{name} must have length {n}")
            vec.setflags(write=False)
            object.__setattr__(self, name, vec)
        if float(np.abs(self.f_diag - self.d2_diag**2).max(initial=0.0)) > F_DIAG_TOL * max(
            1.0, float(np.abs(self.f_diag).max(initial=0.0))
        ):
            raise InvalidParameterError("f_diag must equal d2_diag**2 element-wise")
        mean_obs.setflags(write=False)
        object.__setattr__(self, "mean_obs", mean_obs)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "mean_truth", float(self.mean_truth))
        object.__setattr__(self, "sigma_eps_sq", float(self.sigma_eps_sq))
        object.__setattr__(self, "n_time", int(self.n_time))
        if not (0.0 < self.alpha <= 1.0):
            raise InvalidParameterError("stored alpha must be in (0, 1]")
        if self.sigma_eps_sq < 0.0:
            raise InvalidParameterError("sigma_eps_sq must be >= 0")

    @property
    def n_locations(self) -> int:
        return self.mean_obs.shape[0]

    def second_moment_obs(self) -> np.ndarray:
        """E r_i^2 under the empirical (1/N) distribution."""
        return np.diag(self.cov_pop) + self.mean_obs**2

    def zeta_for(self, alpha: float) -> np.ndarray:
        """Inflated second moments E v_i^2 - alpha (E v_i)^2 at a given alpha.

        E v_i^2 is observed through E r_i^2 - sigma_eps^2 since the noise is
        independent of the field.
        """
        return self.second_moment_obs() - self.sigma_eps_sq - alpha * self.mean_obs**2


def estimate_moments(
    panel: ObservationPanel,
    truth: TruthSeries,
    noise: NoiseModel,
    avail: AvailabilityModel,
) -> MomentSet:
    """Estimate a full MomentSet from a panel and its reference average.

    Means are time means; D1 averages deviation outer products with 1/N;
    cov_obs uses the unbiased 1/(N-1) normalization while cov_pop keeps 1/N.
    """
    validate_panel(panel, truth)
    values = panel.values
    n, n_time = values.shape
    mean_obs = values.mean(axis=1)
    mean_truth = float(truth.values.mean())

    dev_time = values - mean_obs[:, None]
    cov_pop = (dev_time @ dev_time.T) / n_time
    cov_obs = (dev_time @ dev_time.T) / (n_time - 1)

    d1_dev = values - truth.values[None, :]
    d1 = (d1_dev @ d1_dev.T) / n_time

    d2_diag = mean_obs - mean_truth
    f_diag = d2_diag**2
    second = np.diag(cov_pop) + mean_obs**2
    zeta_sq = second - noise.sigma_eps_sq - avail.alpha * mean_obs**2

    return MomentSet(
        mean_obs=mean_obs,
        cov_obs=cov_obs,
        cov_pop=cov_pop,
        d1=d1,
        d2_diag=d2_diag,
        f_diag=f_diag,
        zeta_sq=zeta_sq,
        alpha=avail.alpha,
        mean_truth=mean_truth,
        sigma_eps_sq=noise.sigma_eps_sq,
        n_time=n_time,
    )


def build_variance_matrix(
    m: MomentSet,
    avail: AvailabilityModel,
    mu_upsilon: float | None = None,
) -> np.ndarray:
    """Variance quadratic-form matrix C = (1/alpha) S_r + ((1-alpha)/alpha) F.

    F is the diagonal of squared expected deviations.  By default it is the
    stored ``f_diag`` (centered on the truth mean); passing ``mu_upsilon``
    recenters the deviations on that value instead.
    """
    alpha = avail.alpha
    if mu_upsilon is None:
        f = m.f_diag
    else:
        f = (float(mu_upsilon) - m.mean_obs) ** 2
    c = m.cov_obs / alpha + np.diag((1.0 - alpha) / alpha * f)
    return 0.5 * (c + c.T)


# ---------------------------------------------------------------------------
# Structured-text summary (key = value), reusable across CLI invocations.
# Vectors are comma-separated; matrices are one `name.row.<i>` line per row.
# Floats are written with repr() and round-trip exactly.
# ---------------------------------------------------------------------------

_SCALAR_KEYS = ("alpha", "mean_truth", "sigma_eps_sq", "n_time")
_VECTOR_KEYS = ("mean_obs", "d2_diag", "f_diag", "zeta_sq")
_MATRIX_KEYS = ("cov_obs", "cov_pop", "d1")


def save_moments(path: str | Path, m: MomentSet) -> None:
    lines = ["# oastats moment summary v1", f"n = {m.n_locations}"]
    for key in _SCALAR_KEYS:
        lines.append(f"{key} = {getattr(m, key)!r}")
    for key in _VECTOR_KEYS:
        vec = getattr(m, key)
        lines.append(f"{key} = " + ", ".join(repr(float(v)) for v in vec))
    for key in _MATRIX_KEYS:
        mat = getattr(m, key)
        for i, row in enumerate(mat):
            lines.append(f"{key}.row.{i} = " + ", ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_moments(path: str | Path) -> MomentSet:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IOFailureError(f"cannot read moment summary {path}: {exc}") from exc
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        entries[key.strip()] = value.strip()
    try:
        n = int(entries["n"])
        scalars = {key: float(entries[key]) for key in _SCALAR_KEYS}
        vectors = {
            key: np.array([float(v) for v in entries[key].split(",")])
            for key in _VECTOR_KEYS
        }
        matrices = {
            key: np.array(
                [
                    [float(v) for v in entries[f"{key}.row.{i}"].split(",")]
                    for i in range(n)
                ]
            )
            for key in _MATRIX_KEYS
        }
    except (KeyError, ValueError) as exc:
        raise ParseError(f"moment summary {path} is malformed: {exc}") from exc
    return MomentSet(
        mean_obs=vectors["mean_obs"],
        cov_obs=matrices["cov_obs"],
        cov_pop=matrices["cov_pop"],
        d1=matrices["d1"],
        d2_diag=vectors["d2_diag"],
        f_diag=vectors["f_diag"],
        zeta_sq=vectors["zeta_sq"],
        alpha=scalars["alpha"],
        mean_truth=scalars["mean_truth"],
        sigma_eps_sq=scalars["sigma_eps_sq"],
        n_time=int(scalars["n_time"]),
    )
