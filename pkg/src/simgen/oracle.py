"""Analytic stand-ins for the expensive simulators.

Both functions are toy models: their constants are invented to give a balanced,
learnable and monotone task, and carry no physical meaning.
"""

from __future__ import annotations

import math

import numpy as np

from .data import Dataset, DerivedFeature, ParameterSpace, ParameterSpec

# sigma in MPa (compression negative), d_c in m, width/height in km.
RUPTURE_SPACE = ParameterSpace(
    specs=(
        ParameterSpec("sigma_xx", "MPa", -120.0, -60.0, "negative"),
        ParameterSpec("sigma_yy", "MPa", -120.0, -60.0, "negative"),
        ParameterSpec("sigma_xy", "MPa", 30.0, 90.0, "positive"),
        ParameterSpec("mu_d", "dimensionless", 0.2, 0.6, "unit-interval"),
        ParameterSpec("sdrop", "dimensionless", 0.1, 0.5, "positive"),
        ParameterSpec("dc", "m", 0.1, 0.8, "positive"),
        ParameterSpec("width", "km", 0.5, 6.0, "positive"),
        ParameterSpec("height", "km", 0.1, 3.0, "positive"),
    ),
    derived=(
        DerivedFeature("width_over_height", "ratio", (6, 7)),
        DerivedFeature("sxx_minus_syy", "difference", (0, 1)),
        DerivedFeature("mud_times_sdrop", "product", (3, 4)),
        DerivedFeature("mud_minus_sdrop", "difference", (3, 4)),
    ),
)

# Thicknesses, depth, radius and scratch distance in nm.
MATERIAL_SPACE = ParameterSpace(
    specs=(
        ParameterSpec("t1", "nm", 1.0, 10.0, "positive"),
        ParameterSpec("t2", "nm", 1.0, 10.0, "positive"),
        ParameterSpec("t3", "nm", 1.0, 10.0, "positive"),
        ParameterSpec("t4", "nm", 1.0, 10.0, "positive"),
        ParameterSpec("depth", "nm", 3.0, 7.0, "positive"),
        ParameterSpec("radius", "nm", 5.0, 40.0, "positive"),
        ParameterSpec("distance", "nm", 0.0, 20.0, "nonnegative"),
    ),
    derived=(
        DerivedFeature("radius_over_depth", "ratio", (5, 4)),
    ),
)

SPACES = {"rupture": RUPTURE_SPACE, "material": MATERIAL_SPACE}
OUTCOME_COLUMN = {"rupture": "label", "material": "friction"}
TASK = {"rupture": "binary", "material": "regression"}

BARRIER_AREA_SCALE = 4.0  # km^2
DC_SCALE = 0.8  # m
SCRATCH_SCALE = 4.0  # nm


def rupture_score(sigma_xx, sigma_yy, sigma_xy, mu_d, sdrop, dc, width, height):
    """Signed breakthrough margin; vectorised over numpy arrays."""
    syy = np.abs(sigma_yy)
    strength_excess = (sigma_xy - mu_d * syy) / (sdrop * syy)
    stress_contrast = (sigma_xx - sigma_yy) / syy
    area = height * width
    barrier = area / (area + BARRIER_AREA_SCALE)
    weakening = dc / DC_SCALE
    return 2.0 * strength_excess + 0.3 * stress_contrast - 1.5 * barrier - 0.8 * weakening - 0.25


def _check_rupture(p: np.ndarray):
    sxx, syy, sxy, mu_d, sdrop, dc, w, h = p.T
    problems = []
    if np.any(~np.isfinite(p)):
        problems.append("non-finite value")
    if np.any(sxx >= 0) or np.any(syy >= 0):
        problems.append("normal stresses must be compressive (negative)")
    if np.any(sxy <= 0):
        problems.append("sigma_xy must be positive")
    if np.any((mu_d <= 0) | (mu_d >= 1)):
        problems.append("mu_d must lie in (0, 1)")
    if np.any(sdrop <= 0):
        problems.append("sdrop must be positive")
    if np.any(mu_d + sdrop >= 1.5):
        problems.append("static friction mu_d + sdrop must be < 1.5")
    if np.any(dc <= 0) or np.any(w <= 0) or np.any(h <= 0):
        problems.append("dc, width and height must be positive")
    if problems:
        raise ValueError("invalid rupture parameters: " + "; ".join(problems))


def rupture_oracle(params) -> np.ndarray | int:
    """Breakthrough label (1 = rupture crosses the barrier) for one row or a matrix of rows.

    Columns follow ``RUPTURE_SPACE`` order.
    """
    p = np.asarray(params, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[1] != 8:
        raise ValueError(f"rupture parameters need 8 columns, got {p.shape[1]}")
    _check_rupture(p)
    labels = (rupture_score(*p.T) >= 0).astype(int)
    return int(labels[0]) if single else labels


def friction_oracle(params) -> np.ndarray | float:
    """Friction coefficient at scratch distance, columns as in ``MATERIAL_SPACE``."""
    p = np.asarray(params, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[1] != 7:
        raise ValueError(f"material parameters need 7 columns, got {p.shape[1]}")
    t, depth, radius, d = p[:, :4], p[:, 4], p[:, 5], p[:, 6]
    if (np.any(~np.isfinite(p)) or np.any(t <= 0) or np.any((depth < 3) | (depth > 7))
            or np.any((radius < 5) | (radius > 40)) or np.any((d < 0) | (d > 20))):
        raise ValueError("invalid material configuration")
    mu_inf = np.clip(0.35 + 0.02 * t[:, 1] - 0.005 * radius + 0.01 * depth, 0.05, 1.0)
    mu = mu_inf * np.tanh(d / SCRATCH_SCALE)
    return float(mu[0]) if single else mu


def round_sig(x, digits: int = 9):
    """Round to ``digits`` significant digits so values survive a text round trip exactly."""
    x = np.asarray(x, dtype=float)
    flat = [float(f"{v:.{digits}g}") for v in x.ravel()]
    return np.array(flat).reshape(x.shape)


def synth_dataset(kind: str, n: int, seed: int, ranges=None) -> Dataset:
    """Uniform samples over a box, labelled by the matching oracle.

    ``ranges`` maps parameter name -> (lo, hi); missing names fall back to the
    built-in space bounds.
    """
    if kind not in SPACES:
        raise ValueError(f"unknown dataset kind {kind!r}")
    if n < 1:
        raise ValueError("n must be >= 1")
    space = SPACES[kind]
    box = space.bounds.copy()
    for name, (lo, hi) in (ranges or {}).items():
        k = space.index(name)
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError(f"invalid sampling range for {name}: [{lo}, {hi}]")
        box[k] = (lo, hi)
    rng = np.random.default_rng(seed)
    rows = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((n, space.dim))
    # Rows are written at 9 significant digits; round first so labels survive the file.
    rows = round_sig(rows)
    if kind == "rupture":
        outcomes = rupture_oracle(rows).astype(float)
    else:
        outcomes = round_sig(friction_oracle(rows))
    return Dataset(space, rows, outcomes, task=TASK[kind])
