"""Synthetic panel/truth generator: a desk-scale stand-in for gridded data.

A stationary Gaussian field with exponential spatial correlation is drawn on
a dense site layout; the truth series is the dense-field area average and the
observation panel samples the field at a subset of sites, with independent
zero-mean measurement noise added.  Everything is deterministic for a fixed
seed.
"""

from __future__ import annotations

import numpy as np

from .data_model import NoiseModel, ObservationPanel, TruthSeries
from .errors import InvalidParameterError


def generate_synthetic(
    n: int,
    n_time: int,
    corr_length: float,
    noise: NoiseModel,
    seed: int,
    *,
    mean_base: float = 8.0,
    mean_amp: float = 3.0,
    field_std: float = 2.0,
    dense_factor: int = 4,
    layout: str = "1d",
) -> tuple[ObservationPanel, TruthSeries]:
    """Draw an (n x n_time) observation panel and its true area average.

    The dense layout has ``dense_factor * n`` sites on a unit segment (or a
    near-square grid for ``layout="2d"``); observation sites are every
    ``dense_factor``-th dense site.  The field mean varies smoothly across
    the domain so that per-site expectations differ from the area mean, and
    fluctuations have covariance ``field_std^2 * exp(-dist / corr_length)``
    (independent sites when ``corr_length`` is 0).
    """
    if n < 1 or n_time < 1:
        raise InvalidParameterError("n and n_time must be >= 1")
    if corr_length < 0.0:
        raise InvalidParameterError("corr_length must be >= 0")
    if dense_factor < 1:
        raise InvalidParameterError("dense_factor must be >= 1")
    if field_std < 0.0:
        raise InvalidParameterError("field_std must be >= 0")

    m = dense_factor * n
    if layout == "1d":
        x = (np.arange(m) + 0.5) / m
        points = np.column_stack([x, np.zeros(m)])
    elif layout == "2d":
        side = int(np.ceil(np.sqrt(m)))
        g = (np.arange(side) + 0.5) / side
        xx, yy = np.meshgrid(g, g, indexing="ij")
        points = np.column_stack([xx.ravel(), yy.ravel()])[:m]
    else:
        raise InvalidParameterError(f"unknown layout {layout!r}")

    dist = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    if corr_length > 0.0:
        cov = field_std**2 * np.exp(-dist / corr_length)
    else:
        cov = field_std**2 * np.eye(m)
    # tiny jitter keeps the Cholesky factor stable for long correlation lengths
    chol = np.linalg.cholesky(cov + 1e-10 * field_std**2 * np.eye(m))

    mean_field = mean_base + mean_amp * np.sin(
        2.0 * np.pi * points[:, 0] + 0.5 * np.pi * points[:, 1]
    )

    rng = np.random.default_rng(seed)
    shocks = rng.standard_normal((m, n_time))
    field = mean_field[:, None] + chol @ shocks

    obs_idx = np.arange(n) * dense_factor
    observed = field[obs_idx]
    if noise.sigma_eps > 0.0:
        observed = observed + noise.sigma_eps * rng.standard_normal((n, n_time))

    truth = TruthSeries(field.mean(axis=0))
    lat_lon = [(float(points[j, 0]), float(points[j, 1])) for j in obs_idx]
    panel = ObservationPanel(
        values=observed,
        location_ids=tuple(f"site_{j:03d}" for j in range(n)),
        coords=tuple(lat_lon),
    )
    return panel, truth
