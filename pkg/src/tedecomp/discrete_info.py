"""Brute-force plugin information oracle over discrete (binary) windows.

All quantities are in bits. Windows are bit-packed into 64-bit integers,
so the total number of binary cells per window must stay <= 64.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ConfigurationError, DiscreteDataError, SampleAdequacyWarning
from .series import make_windows

PARTS = ("x_past", "y_past", "y_future", "cond")


@dataclass(frozen=True)
class JointCounter:
    """Empirical distribution over packed discrete states."""

    counts: dict  # packed state -> count (>= 1)
    total: int

    @staticmethod
    def from_keys(keys):
        uniq, cnt = np.unique(np.asarray(keys), return_counts=True)
        return JointCounter(dict(zip(uniq.tolist(), cnt.tolist())), int(len(keys)))


def entropy(counter):
    """Plugin Shannon entropy in bits."""
    if counter.total < 1:
        raise ConfigurationError("counter is empty")
    counts = np.array(list(counter.counts.values()), dtype=np.float64)
    n = float(counter.total)
    # H = log2 n - sum(c log2 c)/n; the 0 log 0 convention never arises (counts >= 1)
    return float(np.log2(n) - np.dot(counts, np.log2(counts)) / n)


class WindowMatrix:
    """Binary windows flattened to a (n, bits) uint8 matrix with named column groups.

    Columns are ordered x_past | y_past | y_future | cond, each part
    time-major (offset varies slower than channel).
    """

    def __init__(self, windows):
        if not windows:
            raise ConfigurationError("need at least one window")
        blocks = []
        self.part_columns = {}
        col = 0
        w0 = windows[0]
        for part in PARTS:
            arr0 = getattr(w0, part if part != "cond" else "cond_past")
            if arr0 is None:
                self.part_columns[part] = np.arange(0)
                continue
            stack = np.stack(
                [getattr(w, part if part != "cond" else "cond_past") for w in windows]
            )
            flat = stack.reshape(len(windows), -1)
            if not np.all((flat == 0.0) | (flat == 1.0)):
                raise DiscreteDataError(
                    f"part {part!r} contains non-binary values; the oracle is discrete-only"
                )
            blocks.append(flat.astype(np.uint8))
            self.part_columns[part] = np.arange(col, col + flat.shape[1])
            col += flat.shape[1]
        self.matrix = np.concatenate(blocks, axis=1)
        if self.matrix.shape[1] > 64:
            raise CapacityError(
                f"window has {self.matrix.shape[1]} binary cells; bit-packing supports <= 64"
            )

    @property
    def n(self):
        return self.matrix.shape[0]

    def columns(self, selector):
        """Resolve a selector (part name, iterable of part names, or column indices)."""
        if isinstance(selector, str):
            selector = (selector,)
        cols = []
        for item in selector:
            if isinstance(item, str):
                if item not in self.part_columns:
                    raise ConfigurationError(f"unknown window part {item!r}")
                cols.extend(self.part_columns[item].tolist())
            else:
                cols.append(int(item))
        return np.asarray(cols, dtype=int)

    def keys(self, selector):
        """Pack the selected columns of every window into integers."""
        cols = self.columns(selector)
        if len(cols) == 0:
            return np.zeros(self.n, dtype=np.uint64)
        bits = self.matrix[:, cols].astype(np.uint64)
        weights = (np.uint64(1) << np.arange(len(cols), dtype=np.uint64))
        return bits @ weights

    def counter(self, selector):
        return JointCounter.from_keys(self.keys(selector))


def _check_adequacy(counter):
    if counter.total < 10 * len(counter.counts):
        warnings.warn(
            f"only {counter.total} samples for {len(counter.counts)} observed states; "
            "plugin estimates may be biased",
            SampleAdequacyWarning,
            stacklevel=3,
        )


def _windows_matrix(windows):
    return windows if isinstance(windows, WindowMatrix) else WindowMatrix(windows)


def mutual_info(windows, vars_a, vars_b):
    """Plugin I(A;B) = H(A) + H(B) - H(A,B), clamped at 0."""
    wm = _windows_matrix(windows)
    cols_a, cols_b = wm.columns(vars_a), wm.columns(vars_b)
    joint = wm.counter(np.concatenate([cols_a, cols_b]))
    _check_adequacy(joint)
    value = entropy(wm.counter(cols_a)) + entropy(wm.counter(cols_b)) - entropy(joint)
    return max(value, 0.0)


def cond_mutual_info(windows, vars_a, vars_b, vars_c):
    """Plugin I(A;B|C) = H(A,C) + H(B,C) - H(A,B,C) - H(C), clamped at 0."""
    wm = _windows_matrix(windows)
    cols_a, cols_b, cols_c = (wm.columns(v) for v in (vars_a, vars_b, vars_c))
    if len(cols_c) == 0:
        return mutual_info(wm, cols_a, cols_b)
    joint = wm.counter(np.concatenate([cols_a, cols_b, cols_c]))
    _check_adequacy(joint)
    value = (
        entropy(wm.counter(np.concatenate([cols_a, cols_c])))
        + entropy(wm.counter(np.concatenate([cols_b, cols_c])))
        - entropy(joint)
        - entropy(wm.counter(cols_c))
    )
    return max(value, 0.0)


def _te_matrix(series, source_channels, target_channels, tau, cond_channels):
    windows = make_windows(series, source_channels, target_channels, cond_channels or (), tau)
    return WindowMatrix(windows)


def plugin_te(series, source_channels, target_channels, tau, cond_channels=None):
    """TE = I(X_past, Y_past; Y_future) - I(Y_past; Y_future) in bits.

    Conditioning channels, when given, are appended to both Y_past occurrences.
    """
    wm = _te_matrix(series, source_channels, target_channels, tau, cond_channels)
    past_ctx = ("y_past", "cond")
    return mutual_info(wm, ("x_past",) + past_ctx, "y_future") - mutual_info(
        wm, past_ctx, "y_future"
    )


def plugin_te_future(series, source_channels, target_channels, tau, cond_channels=None):
    """TE via the target's future: I(Y_future, Y_past; X_past) - I(Y_past; X_past)."""
    wm = _te_matrix(series, source_channels, target_channels, tau, cond_channels)
    past_ctx = ("y_past", "cond")
    return mutual_info(wm, ("y_future",) + past_ctx, "x_past") - mutual_info(
        wm, past_ctx, "x_past"
    )


def local_te(series, source_channels, target_channels, tau, cond_channels=None):
    """Pointwise log2 [p(y_fut|y_past,x_past) / p(y_fut|y_past)] per anchor.

    The mean over anchors equals plugin_te on the same data.
    """
    wm = _te_matrix(series, source_channels, target_channels, tau, cond_channels)
    past_ctx = ("y_past", "cond")

    def per_window_counts(selector):
        keys = wm.keys(wm.columns(selector))
        _, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
        return counts[inverse].astype(np.float64)

    c_xpy = per_window_counts(("x_past",) + past_ctx)
    c_xpyf = per_window_counts(("x_past",) + past_ctx + ("y_future",))
    c_p = per_window_counts(past_ctx)
    c_pf = per_window_counts(past_ctx + ("y_future",))
    return np.log2(c_xpyf / c_xpy) - np.log2(c_pf / c_p)


def te_report(series, source_channels, target_channels, tau, cond_channels=None, estimator="plugin_te"):
    """JSON-serializable record of one oracle estimate."""
    fn = {"plugin_te": plugin_te, "plugin_te_future": plugin_te_future}[estimator]
    value = fn(series, source_channels, target_channels, tau, cond_channels)
    n_windows = series.T - 2 * tau + 1
    return {
        "estimator": estimator,
        "channels": {
            "source": [series.channel_names[i] for i in source_channels],
            "target": [series.channel_names[i] for i in target_channels],
            "cond": [series.channel_names[i] for i in (cond_channels or ())],
        },
        "tau": tau,
        "value_bits": value,
        "n_windows": n_windows,
    }


def dump_report(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
