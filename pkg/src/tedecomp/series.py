"""Multichannel stationary time series: windowing, splitting, batching, CSV I/O.

Slice convention is half-open throughout: a window anchored at t covers
past indices [t-tau, t) and future indices [t, t+tau).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateChannelError,
    ParseError,
    SizeError,
)

BINARY = "binary"
CONTINUOUS = "continuous"


@dataclass(frozen=True)
class MultiSeries:
    """A length-T, C-channel real-valued series; binary channels hold 0.0/1.0."""

    channel_names: tuple
    channel_kinds: tuple
    values: np.ndarray  # (T, C) float64

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ConfigurationError("values must be a (T, C) array")
        if values.shape[1] != len(self.channel_names):
            raise ConfigurationError(
                f"{values.shape[1]} columns but {len(self.channel_names)} channel names"
            )
        if len(self.channel_kinds) != len(self.channel_names):
            raise ConfigurationError("channel_kinds and channel_names differ in length")
        for kind in self.channel_kinds:
            if kind not in (BINARY, CONTINUOUS):
                raise ConfigurationError(f"unknown channel kind {kind!r}")
        for c, kind in enumerate(self.channel_kinds):
            if kind == BINARY:
                col = values[:, c]
                if not np.all((col == 0.0) | (col == 1.0)):
                    raise ConfigurationError(
                        f"binary channel {self.channel_names[c]!r} has values outside {{0, 1}}"
                    )
        values.setflags(write=False)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        object.__setattr__(self, "channel_kinds", tuple(self.channel_kinds))
        object.__setattr__(self, "values", values)

    @property
    def T(self):
        return self.values.shape[0]

    @property
    def C(self):
        return self.values.shape[1]

    def channel_index(self, name):
        try:
            return self.channel_names.index(name)
        except ValueError:
            raise ConfigurationError(f"no channel named {name!r}") from None

    def __eq__(self, other):
        if not isinstance(other, MultiSeries):
            return NotImplemented
        return (
            self.channel_names == other.channel_names
            and self.channel_kinds == other.channel_kinds
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class WindowTriple:
    """One training example: source past, target past, target future at anchor t."""

    x_past: np.ndarray  # (tau, C_x)
    y_past: np.ndarray  # (tau, C_y)
    y_future: np.ndarray  # (tau, C_y)
    anchor: int
    cond_past: np.ndarray | None = None  # (tau, C_z)


@dataclass(frozen=True)
class SplitSpec:
    """Contiguous train/validation split by anchor order."""

    train_fraction: float

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigurationError(
                f"train_fraction must lie in (0, 1), got {self.train_fraction}"
            )


def _check_disjoint(series, source_channels, target_channels, cond_channels):
    groups = {
        "source": list(source_channels),
        "target": list(target_channels),
        "cond": list(cond_channels),
    }
    seen = {}
    for label, idxs in groups.items():
        for i in idxs:
            if not 0 <= i < series.C:
                raise ConfigurationError(f"{label} channel index {i} out of range 0..{series.C - 1}")
            if i in seen:
                raise ConfigurationError(
                    f"channel {i} appears in both {seen[i]} and {label} lists"
                )
            seen[i] = label


def make_windows(series, source_channels, target_channels, cond_channels=(), tau=3):
    """Extract all valid WindowTriples at anchors t in [tau, T - tau]."""
    if tau < 1:
        raise ConfigurationError(f"tau must be >= 1, got {tau}")
    _check_disjoint(series, source_channels, target_channels, cond_channels)
    if not source_channels or not target_channels:
        raise ConfigurationError("source and target channel lists must be nonempty")
    if series.T < 2 * tau + 1:
        raise SizeError(
            f"series length {series.T} too short for tau={tau} (need >= {2 * tau + 1})"
        )
    src = np.asarray(list(source_channels), dtype=int)
    tgt = np.asarray(list(target_channels), dtype=int)
    cnd = np.asarray(list(cond_channels), dtype=int)
    v = series.values
    windows = []
    for t in range(tau, series.T - tau + 1):
        cond_past = v[t - tau : t, cnd].copy() if len(cnd) else None
        windows.append(
            WindowTriple(
                x_past=v[t - tau : t, src].copy(),
                y_past=v[t - tau : t, tgt].copy(),
                y_future=v[t : t + tau, tgt].copy(),
                anchor=t,
                cond_past=cond_past,
            )
        )
    return windows


def split(windows, spec):
    """Partition windows contiguously by anchor, dropping boundary-straddlers."""
    if not windows:
        raise SizeError("cannot split an empty window sequence")
    tau = windows[0].x_past.shape[0]
    n = len(windows)
    cut_idx = int(spec.train_fraction * n)
    if cut_idx <= 0 or cut_idx >= n:
        raise SizeError(f"fraction {spec.train_fraction} leaves an empty partition")
    boundary = windows[cut_idx].anchor  # first anchor owned by validation
    train = [w for w in windows if w.anchor + tau <= boundary]
    val = [w for w in windows if w.anchor - tau >= boundary]
    if not train or not val:
        raise SizeError("split produced an empty partition after boundary drops")
    return train, val


def sample_batch(windows, batch_size, rng):
    """Draw batch_size windows uniformly with replacement."""
    if not windows:
        raise SizeError("cannot sample from an empty window set")
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
    rng = np.random.default_rng(rng) if isinstance(rng, int) else rng
    idx = rng.integers(0, len(windows), size=batch_size)
    return [windows[i] for i in idx]


def save_csv(series, path):
    """Write header + one row per timestep, 17 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(series.channel_names)
        for row in series.values:
            writer.writerow([f"{x:.17g}" for x in row])


def load_csv(path):
    """Load a CSV series; channels that are entirely 0/1 are tagged binary."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        names = tuple(h.strip() for h in header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                raise ParseError(
                    f"{path}: line {lineno} has {len(row)} cells, expected {len(names)}"
                )
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise ParseError(f"{path}: line {lineno} has a non-numeric cell") from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    values = np.asarray(rows, dtype=np.float64)
    kinds = tuple(
        BINARY if np.all((values[:, c] == 0.0) | (values[:, c] == 1.0)) else CONTINUOUS
        for c in range(values.shape[1])
    )
    return MultiSeries(names, kinds, values)


def zscore(series):
    """Standardize continuous channels to mean 0, variance 1; binary untouched."""
    values = series.values.copy()
    for c, kind in enumerate(series.channel_kinds):
        if kind != CONTINUOUS:
            continue
        col = values[:, c]
        std = col.std()
        if std == 0.0:
            raise DegenerateChannelError(
                f"channel {series.channel_names[c]!r} has zero variance"
            )
        values[:, c] = (col - col.mean()) / std
    return MultiSeries(series.channel_names, series.channel_kinds, values)
