"""Decomposition schemes over windows: distributed bottleneck models, the
annealed training loop, endpoint TE readout, per-cell shares, local KL
traces, and pairwise TE by InfoNCE differencing.

Two directions: "source_past" compresses the source's past and forecasts
the target's future; "target_future" compresses the target's future and
infers the source's past. Either way the target's past (plus optional
conditioning channels) is passed to every encoder as context.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import ib_core
from .errors import ConfigurationError, ContractError, SizeError, TrainingDivergedError
from .ib_core import BetaSchedule, GaussianEncoder, LN2, beta_at, info_nce, kl_to_standard_normal, lagrangian
from .series import SplitSpec, make_windows, split

SOURCE_PAST = "source_past"
TARGET_FUTURE = "target_future"
PARTITIONS = ("monolithic", "per_channel", "per_timestep", "per_channel_timestep")


@dataclass(frozen=True)
class SchemeConfig:
    direction: str = SOURCE_PAST
    partition: str = "per_channel_timestep"
    tau: int = 3
    bottleneck_dim: int = 8
    bottleneck_hidden: tuple = (64,)
    context_dim: int = 32
    context_hidden: tuple = (64,)
    embed_dim: int = 32
    head_hidden: tuple = (256, 256)
    schedule: BetaSchedule = field(default_factory=lambda: BetaSchedule(5e-5, 3.0, 20000))
    warmup_fraction: float = 0.1
    batch_size: int = 128
    log_every: int = 100
    learning_rate: float = 3e-4
    train_fraction: float = 0.8
    seed: int = 0
    cond_channels: tuple = ()
    knee_tolerance: float = 0.03  # bits of val NCE slack defining the compression knee

    def __post_init__(self):
        if self.direction not in (SOURCE_PAST, TARGET_FUTURE):
            raise ConfigurationError(f"unknown direction {self.direction!r}")
        if self.partition not in PARTITIONS:
            raise ConfigurationError(f"unknown partition {self.partition!r}")
        for name in ("tau", "bottleneck_dim", "context_dim", "embed_dim", "batch_size", "log_every"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")


class WindowArrays:
    """Windows stacked into contiguous arrays for batched training."""

    def __init__(self, windows):
        if not windows:
            raise SizeError("empty window set")
        self.x_past = np.stack([w.x_past for w in windows])
        self.y_past = np.stack([w.y_past for w in windows])
        self.y_future = np.stack([w.y_future for w in windows])
        self.anchors = np.array([w.anchor for w in windows])
        if windows[0].cond_past is not None:
            self.cond = np.stack([w.cond_past for w in windows])
        else:
            self.cond = np.zeros((len(windows), self.x_past.shape[1], 0))

    @property
    def n(self):
        return self.x_past.shape[0]

    @property
    def tau(self):
        return self.x_past.shape[1]

    def context_flat(self, idx):
        n = len(idx)
        return np.concatenate(
            [self.y_past[idx].reshape(n, -1), self.cond[idx].reshape(n, -1)], axis=1
        )


def _offset_labels(direction, tau):
    if direction == SOURCE_PAST:
        return [f"t-{tau - j}" for j in range(tau)]
    return ["t" if j == 0 else f"t+{j}" for j in range(tau)]


def partition_cells(direction, partition, tau, channel_names):
    """Column index groups over the flattened (tau, C) compressed block.

    Flattening is row-major: column j*C + c holds (offset j, channel c).
    Returns a list of (label, column index array).
    """
    C = len(channel_names)
    offsets = _offset_labels(direction, tau)
    cells = []
    if partition == "monolithic":
        cells.append(("all", np.arange(tau * C)))
    elif partition == "per_channel":
        for c, name in enumerate(channel_names):
            cells.append((f"{name}[*]", np.arange(tau) * C + c))
    elif partition == "per_timestep":
        for j, off in enumerate(offsets):
            cells.append((f"*[{off}]", np.arange(C) + j * C))
    else:
        for j, off in enumerate(offsets):
            for c, name in enumerate(channel_names):
                cells.append((f"{name}[{off}]", np.array([j * C + c])))
    return cells


class Model:
    """All networks of one scheme: context encoder, per-cell bottlenecks, heads."""

    def __init__(self, config, shapes, include_source=True):
        self.config = config
        self.shapes = dict(shapes)
        self.include_source = include_source
        tau = config.tau
        cx, cy, cz = shapes["cx"], shapes["cy"], shapes["cz"]
        comp_channels = shapes["source_names"] if config.direction == SOURCE_PAST else shapes["target_names"]
        comp_width = cx if config.direction == SOURCE_PAST else cy
        g_width = cy if config.direction == SOURCE_PAST else cx
        rng = np.random.default_rng([config.seed, 0xA11CE])
        ctx_in = tau * (cy + cz)
        self.context_mlp = ad.MLP.create(ctx_in, config.context_hidden, config.context_dim, rng)
        if include_source:
            self.cells = partition_cells(config.direction, config.partition, tau, comp_channels)
            if comp_width != len(comp_channels):
                raise ConfigurationError("channel names inconsistent with compressed block width")
        else:
            self.cells = []
        self.encoders = [
            GaussianEncoder.create(
                len(cols) + config.context_dim, config.bottleneck_hidden, config.bottleneck_dim, rng
            )
            for _, cols in self.cells
        ]
        f_in = len(self.cells) * config.bottleneck_dim + config.context_dim
        self.f_head = ad.MLP.create(f_in, config.head_hidden, config.embed_dim, rng)
        self.g_head = ad.MLP.create(tau * g_width, config.head_hidden, config.embed_dim, rng)

    @property
    def cell_labels(self):
        return [label for label, _ in self.cells]

    def params(self):
        out = self.context_mlp.params()
        for enc in self.encoders:
            out.extend(enc.params())
        out.extend(self.f_head.params())
        out.extend(self.g_head.params())
        return out

    def _compressed_flat(self, arrays, idx):
        block = arrays.x_past if self.config.direction == SOURCE_PAST else arrays.y_future
        return block[idx].reshape(len(idx), -1)

    def _g_flat(self, arrays, idx):
        block = arrays.y_future if self.config.direction == SOURCE_PAST else arrays.x_past
        return block[idx].reshape(len(idx), -1)

    def forward(self, arrays, idx, rng=None):
        """Compute per-cell KL vectors (nats) and the InfoNCE value (bits).

        With rng, bottleneck samples are reparameterized draws; without,
        posterior means are used (evaluation mode).
        """
        context = self.context_mlp(ad.Tensor(arrays.context_flat(idx)))
        comp = self._compressed_flat(arrays, idx)
        kls, us = [], []
        for (label, cols), enc in zip(self.cells, self.encoders):
            inp = ad.concat([ad.Tensor(comp[:, cols]), context])
            mu, log_var = enc.posterior(inp)
            kls.append(kl_to_standard_normal(mu, log_var))
            if rng is None:
                us.append(mu)
            else:
                eps = rng.standard_normal(mu.shape)
                us.append(enc.sample(mu, log_var, eps))
        f_emb = self.f_head(ad.concat(us + [context]))
        g_emb = self.g_head(ad.Tensor(self._g_flat(arrays, idx)))
        return kls, info_nce(f_emb, g_emb)

    def posterior_kls(self, arrays, idx):
        """Per-window, per-cell KL in nats (no sampling), as a (n, cells) array."""
        context = self.context_mlp(ad.Tensor(arrays.context_flat(idx)))
        comp = self._compressed_flat(arrays, idx)
        out = np.zeros((len(idx), len(self.cells)))
        for k, ((label, cols), enc) in enumerate(zip(self.cells, self.encoders)):
            mu, log_var = enc.posterior(ad.concat([ad.Tensor(comp[:, cols]), context]))
            out[:, k] = kl_to_standard_normal(mu, log_var).value
        return out


def build_model(config, shapes, include_source=True):
    return Model(config, shapes, include_source)


def shapes_of(arrays, source_names, target_names):
    return {
        "cx": arrays.x_past.shape[2],
        "cy": arrays.y_past.shape[2],
        "cz": arrays.cond.shape[2],
        "source_names": tuple(source_names),
        "target_names": tuple(target_names),
    }


@dataclass
class RunRecord:
    """Optimization trace: logged betas, per-cell KLs, InfoNCE values."""

    cell_labels: list
    steps: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    nce_train: list = field(default_factory=list)
    nce_val: list = field(default_factory=list)
    kl_train: list = field(default_factory=list)  # per log: (n_cells,) nats
    kl_val: list = field(default_factory=list)
    rich_index: int = -1
    knee_index: int = -1
    plateau_converged: bool = False
    checkpoints: dict = field(default_factory=dict)
    batch_size: int = 128

    def n_logged(self):
        return len(self.steps)

    def assert_invariants(self):
        """KL nonnegativity and the log2(K) InfoNCE cap at every logged step."""
        cap = np.log2(self.batch_size) + 1e-9
        for i in range(self.n_logged()):
            if np.any(np.asarray(self.kl_val[i]) < -1e-12) or np.any(np.asarray(self.kl_train[i]) < -1e-12):
                raise ContractError(f"negative KL at logged step {self.steps[i]}")
            if self.nce_train[i] > cap or self.nce_val[i] > cap:
                raise ContractError(f"InfoNCE above log2(batch) at logged step {self.steps[i]}")

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            header = ["step", "beta", "kl_total_bits"]
            header += [f"kl_{label}_bits" for label in self.cell_labels]
            header += ["nce_train_bits", "nce_val_bits"]
            writer.writerow(header)
            for i in range(self.n_logged()):
                kl_bits = np.asarray(self.kl_val[i]) / LN2
                row = [self.steps[i], f"{self.betas[i]:.8g}", f"{kl_bits.sum():.8g}"]
                row += [f"{x:.8g}" for x in kl_bits]
                row += [f"{self.nce_train[i]:.8g}", f"{self.nce_val[i]:.8g}"]
                writer.writerow(row)


def _val_batches(n_val, batch_size, rng, max_batches=4):
    if n_val < 2:
        raise SizeError("validation set too small")
    size = min(batch_size, n_val)
    n_batches = min(max_batches, max(1, n_val // size))
    perm = rng.permutation(n_val)
    return [perm[i * size : (i + 1) * size] for i in range(n_batches)]


def _evaluate(model, arrays, batches):
    """Mean validation NCE (bits, posterior means) and per-cell KL (nats)."""
    nces, kls = [], []
    for idx in batches:
        kl_list, nce = model.forward(arrays, idx)
        nces.append(nce.value.item())
        if kl_list:
            kls.append(np.array([kl.value.mean() for kl in kl_list]))
        else:
            kls.append(np.zeros(0))
    return float(np.mean(nces)), np.mean(kls, axis=0)


def train(model, train_windows, val_windows, config):
    """Warm up at beta_initial, then anneal beta geometrically; log metrics.

    Warm-up lasts warmup_fraction * total_steps so the information-rich
    endpoint is a trained model rather than a transient.
    """
    arrays_train = train_windows if isinstance(train_windows, WindowArrays) else WindowArrays(train_windows)
    arrays_val = val_windows if isinstance(val_windows, WindowArrays) else WindowArrays(val_windows)
    schedule = config.schedule
    warmup = int(round(config.warmup_fraction * schedule.total_steps))
    total = warmup + schedule.total_steps
    rng = np.random.default_rng([config.seed, 0x7EA1])
    params = model.params()
    adam = ad.AdamState(learning_rate=config.learning_rate)
    record = RunRecord(cell_labels=model.cell_labels, batch_size=config.batch_size)
    val_batches = _val_batches(arrays_val.n, config.batch_size, rng)
    mid_beta = np.sqrt(schedule.beta_initial * schedule.beta_final)
    last_good = ad.get_flat_params(params)

    for step in range(total):
        beta = schedule.beta_initial if step < warmup else beta_at(schedule, step - warmup)
        idx = rng.integers(0, arrays_train.n, size=config.batch_size)
        kls, nce = model.forward(arrays_train, idx, rng=rng)
        loss = lagrangian(kls, nce, beta)
        if not np.isfinite(loss.value):
            raise TrainingDivergedError(
                f"non-finite loss at step {step}", step=step, checkpoint=last_good
            )
        ad.zero_grads(params)
        loss.backward()
        try:
            ad.adam_step(params, adam)
        except TrainingDivergedError as err:
            err.checkpoint = last_good
            raise
        is_log = (step + 1) % config.log_every == 0 or step == warmup - 1 or step == total - 1
        if is_log:
            nce_val, kl_val = _evaluate(model, arrays_val, val_batches)
            record.steps.append(step)
            record.betas.append(beta)
            record.nce_train.append(nce.value.item())
            record.nce_val.append(nce_val)
            record.kl_train.append(np.array([kl.value.mean() for kl in kls]))
            record.kl_val.append(kl_val)
            last_good = ad.get_flat_params(params)
            if step == warmup - 1:
                record.rich_index = record.n_logged() - 1
                record.knee_index = record.rich_index
                record.checkpoints["rich"] = last_good
                record.checkpoints["knee"] = last_good
            if beta >= mid_beta and "mid" not in record.checkpoints and step >= warmup:
                record.checkpoints["mid"] = last_good
            # compression knee: the highest-beta logged step still on the NCE plateau
            if (
                record.rich_index >= 0
                and step >= warmup
                and nce_val >= record.nce_val[record.rich_index] - config.knee_tolerance
            ):
                record.knee_index = record.n_logged() - 1
                record.checkpoints["knee"] = last_good
    record.checkpoints["final"] = ad.get_flat_params(params)

    # plateau detector over the last 10% of warm-up logged points
    warm_nce = [v for s, v in zip(record.steps, record.nce_val) if s < warmup]
    tail = max(2, int(np.ceil(0.1 * len(warm_nce))))
    if len(warm_nce) >= 2:
        window = warm_nce[-tail:]
        record.plateau_converged = (max(window) - min(window)) < 0.02 + 1e-12
    return record


@dataclass
class DecompositionResult:
    te_bits: float
    te_bits_raw: float
    shares_bits: dict  # cell label -> KL bits at the information-rich endpoint
    shares_fraction: dict
    self_info_bits: float
    info_plane: list  # (total KL bits, val NCE bits) per logged step
    direction: str
    plateau_converged: bool

    def to_json(self):
        return json.dumps(
            {
                "te_bits": self.te_bits,
                "te_bits_raw": self.te_bits_raw,
                "shares_bits": self.shares_bits,
                "shares_fraction": self.shares_fraction,
                "self_info_bits": self.self_info_bits,
                "info_plane": self.info_plane,
                "direction": self.direction,
                "plateau_converged": self.plateau_converged,
            },
            indent=2,
        )


def decompose(record, model=None, val_windows=None):
    """Endpoint TE readout and per-cell shares from a completed run.

    TE is the difference between the information-rich endpoint (last
    logged warm-up step, lowest beta) and the information-poor endpoint
    (final annealed step). Shares are read at the compression knee, where
    the annealing has squeezed out uninformative code length but the
    validation NCE is still on its plateau; with model and val_windows
    given, they are recomputed over the full validation set from the knee
    checkpoint.
    """
    if record.n_logged() < 2:
        raise ContractError("record has fewer than 2 logged points")
    rich = record.rich_index if record.rich_index >= 0 else 0
    knee = record.knee_index if record.knee_index >= 0 else rich
    nce_rich = record.nce_val[rich]
    nce_poor = record.nce_val[-1]
    te_raw = nce_rich - nce_poor
    if model is not None and val_windows is not None and "knee" in record.checkpoints:
        arrays = val_windows if isinstance(val_windows, WindowArrays) else WindowArrays(val_windows)
        params = model.params()
        saved = ad.get_flat_params(params)
        ad.set_flat_params(params, record.checkpoints["knee"])
        kl_knee = model.posterior_kls(arrays, np.arange(arrays.n)).mean(axis=0)
        ad.set_flat_params(params, saved)
    else:
        kl_knee = np.asarray(record.kl_val[knee])
    shares = {
        label: float(kl / LN2) for label, kl in zip(record.cell_labels, kl_knee)
    }
    total = sum(shares.values())
    fractions = {label: (v / total if total > 0 else 0.0) for label, v in shares.items()}
    plane = [
        (float(np.asarray(record.kl_val[i]).sum() / LN2), float(record.nce_val[i]))
        for i in range(record.n_logged())
    ]
    return DecompositionResult(
        te_bits=max(te_raw, 0.0),
        te_bits_raw=float(te_raw),
        shares_bits=shares,
        shares_fraction=fractions,
        self_info_bits=float(nce_poor),
        info_plane=plane,
        direction="",
        plateau_converged=record.plateau_converged,
    )


@dataclass
class LocalKLTrace:
    """Instantaneous per-cell KL cost (nats) on a held-out stream."""

    anchors: np.ndarray
    traces: np.ndarray  # (n_windows, n_cells)
    cell_labels: list

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["anchor"] + [f"kl_{label}_nats" for label in self.cell_labels])
            for a, row in zip(self.anchors, self.traces):
                writer.writerow([int(a)] + [f"{x:.8g}" for x in row])


def local_kl_trace(model, windows, batch=512):
    """Evaluate per-anchor KL per bottleneck on windows, in anchor order."""
    arrays = windows if isinstance(windows, WindowArrays) else WindowArrays(windows)
    order = np.argsort(arrays.anchors, kind="stable")
    traces = np.zeros((arrays.n, len(model.cells)))
    for start in range(0, arrays.n, batch):
        idx = order[start : start + batch]
        traces[start : start + len(idx)] = model.posterior_kls(arrays, idx)
    return LocalKLTrace(arrays.anchors[order], traces, model.cell_labels)


def prepare_windows(series, source_channels, target_channels, config):
    windows = make_windows(
        series, source_channels, target_channels, config.cond_channels, config.tau
    )
    train_w, val_w = split(windows, SplitSpec(config.train_fraction))
    return WindowArrays(train_w), WindowArrays(val_w)


def run_decomposition(series, source_channels, target_channels, config):
    """Windows -> model -> annealed training -> decomposition, end to end."""
    arrays_train, arrays_val = prepare_windows(series, source_channels, target_channels, config)
    names = series.channel_names
    shapes = shapes_of(
        arrays_train,
        [names[i] for i in source_channels],
        [names[i] for i in target_channels],
    )
    model = build_model(config, shapes)
    record = train(model, arrays_train, arrays_val, config)
    result = decompose(record, model, arrays_val)
    result.direction = config.direction
    return record, model, result


def _tail_mean(values, k=5):
    return float(np.mean(values[-k:]))


def pairwise_te_nce(series, pairs, tau, config):
    """TE per (source, target) pair from the difference of forecasting InfoNCE
    values with and without the source, both trained at fixed beta_initial."""
    results = []
    fixed = BetaSchedule(
        config.schedule.beta_initial, config.schedule.beta_initial, config.schedule.total_steps
    )
    for source_channels, target_channels in pairs:
        if set(source_channels) & set(target_channels):
            raise ConfigurationError(
                f"pair source {source_channels} and target {target_channels} overlap"
            )
        pair_config = replace(config, schedule=fixed, warmup_fraction=0.0, partition="monolithic")
        arrays_train, arrays_val = prepare_windows(series, source_channels, target_channels, pair_config)
        names = series.channel_names
        shapes = shapes_of(
            arrays_train,
            [names[i] for i in source_channels],
            [names[i] for i in target_channels],
        )
        nce = {}
        for tag, include in (("with_source", True), ("without_source", False)):
            model = build_model(pair_config, shapes, include_source=include)
            record = train(model, arrays_train, arrays_val, pair_config)
            nce[tag] = _tail_mean(record.nce_val)
        raw = nce["with_source"] - nce["without_source"]
        results.append(
            {
                "source": [names[i] for i in source_channels],
                "target": [names[i] for i in target_channels],
                "te_bits": max(raw, 0.0),
                "te_bits_raw": raw,
                "nce_with_source": nce["with_source"],
                "nce_without_source": nce["without_source"],
            }
        )
    return results


def direction_consistency(series, source_channels, target_channels, config):
    """Run both decomposition directions on shared data and compare endpoints."""
    report = {}
    for direction in (SOURCE_PAST, TARGET_FUTURE):
        cfg = replace(config, direction=direction)
        _, _, result = run_decomposition(series, source_channels, target_channels, cfg)
        report[direction] = result
    te_a = report[SOURCE_PAST].te_bits
    te_b = report[TARGET_FUTURE].te_bits
    return {
        "te_source_past": te_a,
        "te_target_future": te_b,
        "abs_difference": abs(te_a - te_b),
        "results": report,
    }
