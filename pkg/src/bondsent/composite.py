"""Additive micro+meso aggregation and the duration function: multilevel
Daubechies wavelet smoothing of per-bond sentiment series.

The transform supports two boundary treatments. Symmetric (half-point
reflection) extension is the production default: it never amplifies the
series, so smoothing is an energy-non-increasing projection. Polynomial
(degree-3 continuation) extension preserves the filters' vanishing moments
right up to the edges — constants through cubics produce zero detail
coefficients at every level — but extrapolation amplifies noise at deep
levels, so it is an analysis mode, not a smoothing default.
"""

from __future__ import annotations

import csv
import datetime as dt
import warnings
from dataclasses import dataclass
from math import comb

import numpy as np

from .corpus import Calendar, SchemaError
from .micro_absa import SentimentMatrix

FAMILIES = {"db4_8tap": 4, "d4_4tap": 2}
BOUNDARIES = ("symmetric", "polynomial")
MODES = ("full_sample", "causal")
SHRINKS = ("zero", "soft")


def daubechies_filters(vanishing_moments: int):
    """Orthonormal Daubechies analysis filters (lowpass, highpass) with the
    given number of vanishing moments; 2*vm taps each.

    Built by spectral factorization of the half-band polynomial: the binomial
    spline factor carries the vanishing moments and the minimum-phase root
    selection reproduces the standard coefficients to machine precision."""
    vm = int(vanishing_moments)
    if vm < 1:
        raise ValueError("need at least one vanishing moment")
    #  P(y) = sum_k C(vm-1+k, k) y^k, the Daubechies residual polynomial
    p_coeffs = [comb(vm - 1 + k, k) for k in range(vm)]
    q = np.array([1.0])
    if vm > 1:
        zroots = []
        for y in np.roots(p_coeffs[::-1]):
            # y = (2 - z - 1/z)/4 maps each y-root to a z-pair; keep |z| < 1
            b = 2.0 - 4.0 * y
            disc = np.sqrt(b * b - 4.0 + 0j)
            z1, z2 = (b + disc) / 2.0, (b - disc) / 2.0
            zroots.append(z1 if abs(z1) < 1.0 else z2)
        q = np.real(np.poly(zroots))
        q = q / q.sum()
    spline = np.array([1.0])
    for _ in range(vm):
        spline = np.convolve(spline, [0.5, 0.5])
    lo = np.sqrt(2.0) * np.convolve(spline, q)
    hi = (-1.0) ** np.arange(lo.size) * lo[::-1]
    return lo, hi


@dataclass(frozen=True)
class WaveletSpec:
    family: str = "db4_8tap"
    level: int = 6
    mode: str = "full_sample"
    boundary: str = "symmetric"
    window: int = 128  # causal-mode trailing window length
    shrink: str = "zero"  # "soft" applies a universal threshold instead

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown wavelet family {self.family!r}")
        if self.level < 1:
            raise ValueError("level must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.shrink not in SHRINKS:
            raise ValueError(f"unknown shrink rule {self.shrink!r}")
        if self.window < 1:
            raise ValueError("window must be >= 1")

    @property
    def filters(self):
        return daubechies_filters(FAMILIES[self.family])

    @property
    def min_length(self) -> int:
        # one full filter window; shorter series have no interior at all
        return 2 * FAMILIES[self.family]


@dataclass
class WaveletPyramid:
    approx: np.ndarray
    details: list  # details[0] is the finest band (level 1)
    lengths: list  # input length at each analysis step
    spec: WaveletSpec


def _extend_symmetric(x: np.ndarray, pad: int) -> np.ndarray:
    n = x.size
    idx = np.mod(np.arange(-pad, n + pad), 2 * n)
    idx = np.where(idx >= n, 2 * n - 1 - idx, idx)
    return x[idx]


_POLY_WEIGHTS = {
    3: np.array([4.0, -6.0, 4.0, -1.0]),
    2: np.array([3.0, -3.0, 1.0]),
    1: np.array([2.0, -1.0]),
    0: np.array([1.0]),
}


def _extend_polynomial(x: np.ndarray, pad: int) -> np.ndarray:
    """Continue both ends with the degree-3 (or highest affordable) Lagrange
    recursion; exact for polynomials up to that degree, and linear in x."""
    n = x.size
    deg = min(3, n - 1)
    w = _POLY_WEIGHTS[deg]
    left = list(x[: deg + 1])
    right = list(x[-(deg + 1) :][::-1])
    for _ in range(pad):
        left.insert(0, float(np.dot(w, left[: deg + 1])))
        right.insert(0, float(np.dot(w, right[: deg + 1])))
    return np.concatenate([left[:pad], x, right[:pad][::-1]])


def _extend(x: np.ndarray, pad: int, boundary: str) -> np.ndarray:
    if boundary == "polynomial":
        return _extend_polynomial(x, pad)
    return _extend_symmetric(x, pad)


def _dwt_step(x: np.ndarray, lo, hi, boundary: str):
    pad = lo.size - 1
    ext = _extend(x, pad, boundary)
    return np.correlate(ext, lo, "valid")[::2], np.correlate(ext, hi, "valid")[::2]


def _idwt_step(approx, detail, lo, hi, out_len: int) -> np.ndarray:
    pad = lo.size - 1
    up_a = np.zeros(2 * approx.size - 1)
    up_a[::2] = approx
    up_d = np.zeros(2 * detail.size - 1)
    up_d[::2] = detail
    rec = np.convolve(up_a, lo) + np.convolve(up_d, hi)
    return rec[pad : pad + out_len]


def dwt(series, spec: WaveletSpec) -> WaveletPyramid:
    """Multilevel analysis into one approximation plus per-level details."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("series must be 1-D")
    if x.size < spec.min_length:
        raise ValueError(
            f"series of length {x.size} too short for {spec.family} "
            f"(need >= {spec.min_length})"
        )
    lo, hi = spec.filters
    approx = x
    details, lengths = [], []
    for _ in range(spec.level):
        lengths.append(approx.size)
        approx, detail = _dwt_step(approx, lo, hi, spec.boundary)
        details.append(detail)
    return WaveletPyramid(approx=approx, details=details, lengths=lengths, spec=spec)


def idwt(pyramid: WaveletPyramid) -> np.ndarray:
    """Exact inverse of dwt for the recorded lengths."""
    lo, hi = pyramid.spec.filters
    approx = pyramid.approx
    for detail, out_len in zip(reversed(pyramid.details), reversed(pyramid.lengths)):
        approx = _idwt_step(approx, detail, lo, hi, out_len)
    return approx


def _smooth_full(x: np.ndarray, spec: WaveletSpec) -> np.ndarray:
    pyramid = dwt(x, spec)
    if spec.shrink == "soft":
        finest = pyramid.details[0]
        sigma = np.median(np.abs(finest)) / 0.6745 if finest.size else 0.0
        threshold = sigma * np.sqrt(2.0 * np.log(max(x.size, 2)))
        pyramid.details = [
            np.sign(d) * np.maximum(np.abs(d) - threshold, 0.0)
            for d in pyramid.details
        ]
    else:
        pyramid.details = [np.zeros_like(d) for d in pyramid.details]
    return idwt(pyramid)


def smooth(series, spec: WaveletSpec) -> np.ndarray:
    """Duration function: keep the level-spec approximation band, drop (or
    soft-threshold) every detail band, reconstruct, and crop.

    full_sample mode transforms the whole series at once. causal mode
    re-runs the same procedure on the trailing window ending at each index
    and keeps only that window's final sample, so index k never sees data
    after k; too-short prefixes (and series) pass through unchanged with a
    warning."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("series must be 1-D")
    if spec.mode == "full_sample":
        return _smooth_full(x, spec)
    out = np.empty_like(x)
    fell_back = False
    for k in range(x.size):
        start = max(0, k + 1 - spec.window)
        chunk = x[start : k + 1]
        if chunk.size < spec.min_length:
            out[k] = x[k]
            fell_back = True
        else:
            out[k] = _smooth_full(chunk, spec)[-1]
    if fell_back:
        warnings.warn(
            f"causal smoothing: prefixes shorter than {spec.min_length} "
            "passed through unsmoothed",
            stacklevel=2,
        )
    return out


# ---------------------------------------------------------------------------
# composite aggregation


def aggregate(alpha_row, beta_row) -> np.ndarray:
    """Elementwise sum of the bond's micro and meso series."""
    alpha_row = np.asarray(alpha_row, dtype=np.float64)
    beta_row = np.asarray(beta_row, dtype=np.float64)
    if alpha_row.shape != beta_row.shape:
        raise ValueError(
            f"length mismatch: {alpha_row.shape} vs {beta_row.shape}"
        )
    return alpha_row + beta_row


@dataclass
class CompositeSeries:
    bond_id: str
    raw: np.ndarray
    smoothed: np.ndarray
    spec: WaveletSpec

    def __post_init__(self):
        if self.raw.shape != self.smoothed.shape:
            raise ValueError("raw/smoothed length mismatch")
        if not np.all(np.isfinite(self.smoothed)):
            raise ValueError(f"{self.bond_id}: non-finite smoothed value")


def build_composite(
    alpha: SentimentMatrix,
    beta: SentimentMatrix,
    panels: dict,
    spec: WaveletSpec,
) -> dict:
    """Per-bond composite series: raw = alpha row + mean of the bond's
    standardized industry rows; smoothed = smooth(raw)."""
    from .meso_slsa import bond_meso_series

    if alpha.axis != "alpha" or beta.axis != "beta":
        raise ValueError("need an alpha matrix and a beta matrix")
    if alpha.calendar != beta.calendar:
        raise ValueError("alpha and beta calendars differ")
    out = {}
    for bond_id, panel in panels.items():
        if bond_id not in alpha.entities:
            raise KeyError(f"bond {bond_id!r} missing from the alpha registry")
        industry_ids = getattr(panel, "industry_ids", panel)
        raw = aggregate(
            alpha.row(bond_id), bond_meso_series(industry_ids, beta)
        )
        out[bond_id] = CompositeSeries(
            bond_id=bond_id, raw=raw, smoothed=smooth(raw, spec), spec=spec
        )
    return out


def save_composite(path, series_by_bond: dict, calendar: Calendar):
    """composite CSV: bond_id,date,raw,smoothed — one row per bond-day."""
    days = calendar.days()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bond_id", "date", "raw", "smoothed"])
        for bond_id in sorted(series_by_bond):
            series = series_by_bond[bond_id]
            for day, raw, smoothed in zip(days, series.raw, series.smoothed):
                writer.writerow(
                    [bond_id, day.isoformat(), repr(float(raw)), repr(float(smoothed))]
                )


def load_composite(path, calendar: Calendar | None = None) -> dict:
    """Read a composite CSV back into per-bond (raw, smoothed) arrays.

    Without an explicit calendar, the span is inferred from the file's own
    date range."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["bond_id", "date", "raw", "smoothed"]:
            raise SchemaError(f"{path}: bad composite header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise SchemaError(f"{path} line {lineno}: want 4 columns")
            rows.append(row)
    if calendar is None:
        if not rows:
            raise SchemaError(f"{path}: empty composite file")
        days = [dt.date.fromisoformat(r[1]) for r in rows]
        calendar = Calendar(min(days), max(days))
    series = {}
    for bond_id, date, raw, smoothed in rows:
        k = calendar.index(dt.date.fromisoformat(date))
        entry = series.setdefault(
            bond_id,
            (np.zeros(len(calendar)), np.zeros(len(calendar))),
        )
        entry[0][k] = float(raw)
        entry[1][k] = float(smoothed)
    return series
