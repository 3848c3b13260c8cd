"""Core data containers: observation panels, truth series, weights, availability.

Missingness is never stored in a panel. It enters either as a reporting
probability (``AvailabilityModel``) used by the analytic estimators, or as a
Bernoulli draw handed to :func:`evaluate_average` / the simulation module.
All containers are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegeneratePanelError,
    DimensionMismatchError,
    EmptySupportError,
    InvalidParameterError,
    InvalidWeightsError,
    IOFailureError,
    NonFiniteValueError,
    ParseError,
)

WEIGHT_SUM_EXACT_TOL = 1e-12
WEIGHT_SUM_RENORM_TOL = 1e-9


def _frozen_array(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ObservationPanel:
    """n locations x N time steps of point observations, with no gaps.

    ``values[i, t]`` is the observation at location ``i`` and time ``t``.
    Coordinates are optional (lat, lon) pairs used only for output labeling.
    """

    values: np.ndarray
    location_ids: tuple[str, ...]
    coords: tuple[tuple[float, float], ...] | None = None
    time_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.ndim != 2:
            raise DimensionMismatchError("panel values must be a 2-D (n x N) array")
        n, n_time = values.shape
        if n < 1:
            raise DegeneratePanelError("panel needs at least one location")
        if n_time < 2:
            raise DegeneratePanelError("panel needs at least two time steps (N >= 2)")
        if not np.all(np.isfinite(values)):
            raise NonFiniteValueError("panel contains non-finite values")
        object.__setattr__(self, "values", values)

        ids = tuple(str(s) for s in self.location_ids)
        if len(ids) != n:
            raise DimensionMismatchError(
                f"{len(ids)} location ids for {n} panel rows"
            )
        object.__setattr__(self, "location_ids", ids)

        if self.coords is not None:
            coords = tuple((float(a), float(b)) for a, b in self.coords)
            if len(coords) != n:
                raise DimensionMismatchError(
                    f"{len(coords)} coordinate pairs for {n} panel rows"
                )
            if not all(np.isfinite(a) and np.isfinite(b) for a, b in coords):
                raise NonFiniteValueError("panel coordinates contain non-finite values")
            object.__setattr__(self, "coords", coords)

        time_ids = self.time_ids
        if time_ids is None:
            time_ids = tuple(f"t_{k + 1}" for k in range(n_time))
        else:
            time_ids = tuple(str(s) for s in time_ids)
            if len(time_ids) != n_time:
                raise DimensionMismatchError(
                    f"{len(time_ids)} time ids for {n_time} panel columns"
                )
        object.__setattr__(self, "time_ids", time_ids)

    @property
    def n_locations(self) -> int:
        return self.values.shape[0]

    @property
    def n_time(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class TruthSeries:
    """Reference spatial-average series, treated as ground truth for bias."""

    values: np.ndarray

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.ndim != 1:
            raise DimensionMismatchError("truth series must be 1-D")
        if not np.all(np.isfinite(values)):
            raise NonFiniteValueError("truth series contains non-finite values")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class AvailabilityModel:
    """Probability that any single observation is reported when sought."""

    alpha: float

    def __post_init__(self):
        alpha = float(self.alpha)
        if not (0.0 < alpha <= 1.0):
            raise InvalidParameterError(f"alpha must be in (0, 1], got {alpha}")
        object.__setattr__(self, "alpha", alpha)


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean measurement noise, identical standard deviation at all sites."""

    sigma_eps: float = 0.0

    def __post_init__(self):
        sigma = float(self.sigma_eps)
        if not (np.isfinite(sigma) and sigma >= 0.0):
            raise InvalidParameterError(f"sigma_eps must be >= 0, got {sigma}")
        object.__setattr__(self, "sigma_eps", sigma)

    @property
    def sigma_eps_sq(self) -> float:
        return self.sigma_eps**2


@dataclass(frozen=True)
class WeightVector:
    """Nonnegative averaging weights summing to one.

    Sums within 1e-12 of one are accepted as-is; deviations up to 1e-9 are
    renormalized on construction; anything larger is rejected so that
    downstream quadratic forms stay consistent.
    """

    beta: np.ndarray

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float)
        if beta.ndim != 1 or beta.size < 1:
            raise InvalidWeightsError("weights must be a non-empty 1-D vector")
        if not np.all(np.isfinite(beta)):
            raise NonFiniteValueError("weights contain non-finite values")
        if np.any(beta < 0.0):
            raise InvalidWeightsError("weights must be nonnegative")
        total = float(beta.sum())
        if abs(total - 1.0) > WEIGHT_SUM_RENORM_TOL:
            raise InvalidWeightsError(
                f"weights sum to {total!r}, more than {WEIGHT_SUM_RENORM_TOL} from 1"
            )
        if abs(total - 1.0) > WEIGHT_SUM_EXACT_TOL:
            beta = beta / total
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def uniform(cls, n: int) -> "WeightVector":
        if n < 1:
            raise InvalidWeightsError("need at least one weight")
        return cls(np.full(n, 1.0 / n))

    def __len__(self) -> int:
        return self.beta.shape[0]

    def support(self, tol: float = 1e-6) -> np.ndarray:
        """Indices of weights larger than ``tol``."""
        return np.flatnonzero(self.beta > tol)


def as_beta(beta) -> np.ndarray:
    """Coerce a WeightVector or raw array to a validated weight array."""
    if isinstance(beta, WeightVector):
        return beta.beta
    return WeightVector(np.asarray(beta, dtype=float)).beta


def validate_panel(panel: ObservationPanel, truth: TruthSeries) -> None:
    """Check that a panel/truth pair is jointly usable.

    Type invariants are already enforced at construction; this adds the
    cross-checks (matching time length).
    """
    if len(truth) != panel.n_time:
        raise DimensionMismatchError(
            f"truth has {len(truth)} steps but panel has {panel.n_time}"
        )


def evaluate_average(panel_column, beta, s) -> float:
    """The spatial-average estimator for one time step and one availability draw.

    Returns ``sum_i(beta_i * s_i * r_i) / sum_i(beta_i * s_i)``.  The ratio is
    invariant to positive rescaling of ``beta``, so an unnormalized weight
    array is also accepted.  Raises ``EmptySupportError`` when no available
    observation carries positive weight.
    """
    r = np.asarray(panel_column, dtype=float)
    b = beta.beta if isinstance(beta, WeightVector) else np.asarray(beta, dtype=float)
    mask = np.asarray(s, dtype=float)
    if r.shape != b.shape or r.shape != mask.shape:
        raise DimensionMismatchError("column, weights and availability must share shape")
    if np.any(b < 0.0):
        raise InvalidWeightsError("weights must be nonnegative")
    bw = b * mask
    denom = float(bw.sum())
    if denom <= 0.0:
        raise EmptySupportError("no available observation has positive weight")
    return float(bw @ r) / denom


# ---------------------------------------------------------------------------
# CSV formats
#
# Panel: header `location_id,lat,lon,t_1,...,t_N`, one row per location.
# Truth: header `t,value`, N rows.  Numeric cells are written with repr()
# so that a written file reads back to bit-identical floats.
# ---------------------------------------------------------------------------


def write_panel_csv(path: str | Path, panel: ObservationPanel) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["location_id", "lat", "lon", *panel.time_ids])
        for i, loc in enumerate(panel.location_ids):
            lat, lon = ("", "") if panel.coords is None else panel.coords[i]
            writer.writerow([loc, lat, lon, *(repr(float(v)) for v in panel.values[i])])


def read_panel_csv(path: str | Path) -> ObservationPanel:
    path = Path(path)
    try:
        with path.open("r", newline="", encoding="utf-8") as f:
            rows = [row for row in csv.reader(f) if row and not row[0].startswith("#")]
    except OSError as exc:
        raise IOFailureError(f"cannot read panel file {path}: {exc}") from exc
    if not rows:
        raise ParseError(f"panel file {path} is empty")
    header = rows[0]
    if len(header) < 4 or header[:3] != ["location_id", "lat", "lon"]:
        raise ParseError(
            f"panel file {path} must start with header 'location_id,lat,lon,t_1,...'"
        )
    time_ids = header[3:]
    ids: list[str] = []
    coords: list[tuple[float, float]] = []
    have_coords = True
    values: list[list[float]] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        ids.append(row[0])
        if row[1] == "" or row[2] == "":
            have_coords = False
        else:
            try:
                coords.append((float(row[1]), float(row[2])))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad coordinate") from exc
        try:
            values.append([float(v) for v in row[3:]])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: bad numeric value") from exc
    return ObservationPanel(
        values=np.array(values),
        location_ids=tuple(ids),
        coords=tuple(coords) if have_coords and coords else None,
        time_ids=tuple(time_ids),
    )


def write_truth_csv(path: str | Path, truth: TruthSeries, time_ids=None) -> None:
    path = Path(path)
    n = len(truth)
    labels = list(time_ids) if time_ids is not None else [f"t_{k + 1}" for k in range(n)]
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "value"])
        for label, v in zip(labels, truth.values):
            writer.writerow([label, repr(float(v))])


def read_truth_csv(path: str | Path) -> TruthSeries:
    path = Path(path)
    try:
        with path.open("r", newline="", encoding="utf-8") as f:
            rows = [row for row in csv.reader(f) if row and not row[0].startswith("#")]
    except OSError as exc:
        raise IOFailureError(f"cannot read truth file {path}: {exc}") from exc
    if not rows or rows[0][:2] != ["t", "value"]:
        raise ParseError(f"truth file {path} must start with header 't,value'")
    try:
        values = [float(row[1]) for row in rows[1:]]
    except (ValueError, IndexError) as exc:
        raise ParseError(f"truth file {path} has a malformed row") from exc
    return TruthSeries(np.array(values))
