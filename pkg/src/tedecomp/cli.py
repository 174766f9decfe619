"""Configuration-driven experiment runner.

Subcommands: simulate | oracle | decompose | pairwise | trace | verify.
A single JSON config names the data source, channel roles, and scheme
settings; every run writes its artifacts plus a manifest into the output
directory.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import autodiff as ad
from . import boolnet, decomposer, discrete_info, svg
from .decomposer import SchemeConfig, WindowArrays
from .errors import ConfigurationError
from .ib_core import BetaSchedule, LN2
from .series import load_csv, save_csv, zscore

BUILTINS = {
    "fig2a": lambda seed: boolnet.fig2a_spec(),
    "fig2b": lambda seed: boolnet.fig2b_spec(),
    "fig2c": boolnet.fig2c_spec,
}

# Defaults mirroring the synthetic and continuous hyperparameter tables.
PRESETS = {
    "synthetic": {
        "beta_initial": 5e-5,
        "beta_final": 3.0,
        "steps": 20000,
        "tau": 3,
        "bottleneck_hidden": [64],
        "head_hidden": [256, 256],
    },
    "continuous": {
        "beta_initial": 1e-3,
        "beta_final": 1.0,
        "steps": 20000,
        "tau": 10,
        "bottleneck_hidden": [256],
        "head_hidden": [256],
    },
}

TOP_KEYS = {"preset", "data", "channels", "tau", "scheme", "pairs", "zscore", "output_dir"}
DATA_KEYS = {"builtin", "steps", "seed", "network_seed", "csv"}
CHANNEL_KEYS = {"source", "target", "cond"}
SCHEME_KEYS = {
    "direction", "partition", "beta_initial", "beta_final", "steps", "warmup_fraction",
    "batch_size", "learning_rate", "log_every", "train_fraction", "knee_tolerance",
    "bottleneck_dim", "bottleneck_hidden", "context_dim", "context_hidden",
    "embed_dim", "head_hidden", "seeds",
}


def validate_config(doc):
    """Collect every violation, not just the first."""
    errors = []
    if not isinstance(doc, dict):
        return ["config must be a JSON object"]
    for key in doc:
        if key not in TOP_KEYS:
            errors.append(f"unknown top-level key {key!r}")
    preset = doc.get("preset", "synthetic")
    if preset not in PRESETS:
        errors.append(f"unknown preset {preset!r}; options: {sorted(PRESETS)}")
    data = doc.get("data")
    if not isinstance(data, dict):
        errors.append("missing or invalid 'data' section")
    else:
        for key in data:
            if key not in DATA_KEYS:
                errors.append(f"unknown data key {key!r}")
        if ("builtin" in data) == ("csv" in data):
            errors.append("data must name exactly one of 'builtin' or 'csv'")
        if "builtin" in data and data["builtin"] not in BUILTINS:
            errors.append(f"unknown builtin network {data['builtin']!r}")
    channels = doc.get("channels", {})
    for key in channels:
        if key not in CHANNEL_KEYS:
            errors.append(f"unknown channels key {key!r}")
    scheme = doc.get("scheme", {})
    for key in scheme:
        if key not in SCHEME_KEYS:
            errors.append(f"unknown scheme key {key!r}")
    tau = doc.get("tau", scheme.get("tau", 0) if isinstance(scheme, dict) else 0)
    if tau and (not isinstance(tau, int) or tau < 1):
        errors.append("tau must be a positive integer")
    return errors


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    errors = validate_config(doc)
    if errors:
        raise ConfigurationError(json.dumps({"errors": errors}))
    return doc


def resolve_series(doc):
    data = doc["data"]
    if "csv" in data:
        series = load_csv(data["csv"])
    else:
        spec = BUILTINS[data["builtin"]](data.get("network_seed", 0))
        series = boolnet.simulate(spec, data.get("steps", 10**4), data.get("seed", 0))
    if doc.get("zscore", False):
        series = zscore(series)
    return series


def resolve_channels(doc, series):
    def to_indices(items):
        return tuple(
            item if isinstance(item, int) else series.channel_index(item) for item in items
        )

    channels = doc.get("channels", {})
    if "source" in channels and "target" in channels:
        return (
            to_indices(channels["source"]),
            to_indices(channels["target"]),
            to_indices(channels.get("cond", [])),
        )
    data = doc["data"]
    if "builtin" in data:
        spec = BUILTINS[data["builtin"]](data.get("network_seed", 0))
        return spec.source_indices(), spec.target_indices(), ()
    raise ConfigurationError("channels.source and channels.target are required for CSV data")


def scheme_config(doc, seed_override=None):
    preset = PRESETS[doc.get("preset", "synthetic")]
    scheme = dict(doc.get("scheme", {}))
    tau = doc.get("tau", preset["tau"])
    schedule = BetaSchedule(
        scheme.get("beta_initial", preset["beta_initial"]),
        scheme.get("beta_final", preset["beta_final"]),
        scheme.get("steps", preset["steps"]),
    )
    seeds = scheme.get("seeds", [0])
    if seed_override is not None:
        seeds = [seed_override]
    base = SchemeConfig(
        direction=scheme.get("direction", "source_past"),
        partition=scheme.get("partition", "per_channel_timestep"),
        tau=tau,
        bottleneck_dim=scheme.get("bottleneck_dim", 8),
        bottleneck_hidden=tuple(scheme.get("bottleneck_hidden", preset["bottleneck_hidden"])),
        context_dim=scheme.get("context_dim", 32),
        context_hidden=tuple(scheme.get("context_hidden", [64])),
        embed_dim=scheme.get("embed_dim", 32),
        head_hidden=tuple(scheme.get("head_hidden", preset["head_hidden"])),
        schedule=schedule,
        warmup_fraction=scheme.get("warmup_fraction", 0.1),
        batch_size=scheme.get("batch_size", 128),
        log_every=scheme.get("log_every", 100),
        learning_rate=scheme.get("learning_rate", 3e-4),
        train_fraction=scheme.get("train_fraction", 0.8),
        knee_tolerance=scheme.get("knee_tolerance", 0.03),
        seed=seeds[0],
    )
    return base, list(seeds)


def write_manifest(out_dir, doc, seeds, started, extra=None):
    from . import __version__

    canonical = json.dumps(doc, sort_keys=True).encode()
    manifest = {
        "config_sha256": hashlib.sha256(canonical).hexdigest(),
        "config": doc,
        "seeds": seeds,
        "version": __version__,
        "wall_time_s": round(time.time() - started, 3),
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def cmd_simulate(doc, out_dir, args):
    started = time.time()
    series = resolve_series(doc)
    path = os.path.join(out_dir, "trajectory.csv")
    save_csv(series, path)
    write_manifest(out_dir, doc, [doc["data"].get("seed", 0)], started, {"rows": series.T})
    print(f"wrote {path} ({series.T} rows, {series.C} channels)")
    return 0


def cmd_oracle(doc, out_dir, args):
    started = time.time()
    series = resolve_series(doc)
    src, tgt, cond = resolve_channels(doc, series)
    tau = doc.get("tau", PRESETS[doc.get("preset", "synthetic")]["tau"])
    reports = [
        discrete_info.te_report(series, src, tgt, tau, cond or None, estimator)
        for estimator in ("plugin_te", "plugin_te_future")
    ]
    path = os.path.join(out_dir, "oracle.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(reports, fh, indent=2)
        fh.write("\n")
    write_manifest(out_dir, doc, [doc["data"].get("seed", 0)], started)
    for rep in reports:
        print(f"{rep['estimator']}: {rep['value_bits']:.4f} bits over {rep['n_windows']} windows")
    return 0


def _decompose_one(task):
    doc, seed = task
    series = resolve_series(doc)
    src, tgt, cond = resolve_channels(doc, series)
    base, _ = scheme_config(doc)
    config = replace(base, seed=seed, cond_channels=cond)
    record, model, result = decomposer.run_decomposition(series, src, tgt, config)
    return seed, record, model, result


def _emit_decomposition(out_dir, seed, record, model, result):
    record.to_csv(os.path.join(out_dir, f"run_{seed}.csv"))
    with open(os.path.join(out_dir, f"decomposition_{seed}.json"), "w", encoding="utf-8") as fh:
        fh.write(result.to_json())
        fh.write("\n")
    kl, nce = zip(*result.info_plane)
    plane = svg.line_chart(
        f"Information plane (seed {seed})",
        "compressed information (KL bits)",
        "InfoNCE (bits)",
        {"trajectory": (list(kl), list(nce))},
    )
    with open(os.path.join(out_dir, f"info_plane_{seed}.svg"), "w", encoding="utf-8") as fh:
        fh.write(plane)
    bars = svg.bar_chart(
        f"Share of transfer entropy (seed {seed})",
        "KL at knee (bits)",
        list(result.shares_bits.keys()),
        list(result.shares_bits.values()),
    )
    with open(os.path.join(out_dir, f"shares_{seed}.svg"), "w", encoding="utf-8") as fh:
        fh.write(bars)
    for tag, flat in record.checkpoints.items():
        prefix = os.path.join(out_dir, f"checkpoint_{seed}_{tag}")
        params = model.params()
        saved = ad.get_flat_params(params)
        ad.set_flat_params(params, flat)
        ad.save_checkpoint(params, prefix)
        ad.set_flat_params(params, saved)


def cmd_decompose(doc, out_dir, args):
    started = time.time()
    _, seeds = scheme_config(doc, args.seed)
    tasks = [(doc, seed) for seed in seeds]
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outputs = list(pool.map(_decompose_one, tasks))
    else:
        outputs = [_decompose_one(task) for task in tasks]
    summary = []
    for seed, record, model, result in outputs:
        _emit_decomposition(out_dir, seed, record, model, result)
        summary.append({"seed": seed, "te_bits": result.te_bits, "shares_bits": result.shares_bits})
        print(f"seed {seed}: te={result.te_bits:.3f} bits, self-info={result.self_info_bits:.3f} bits")
    if len(summary) > 1:
        te_values = [s["te_bits"] for s in summary]
        agg = {
            "per_seed": summary,
            "te_bits_mean": float(np.mean(te_values)),
            "te_bits_std": float(np.std(te_values)),
        }
        with open(os.path.join(out_dir, "decomposition_summary.json"), "w", encoding="utf-8") as fh:
            json.dump(agg, fh, indent=2)
            fh.write("\n")
    write_manifest(out_dir, doc, seeds, started)
    return 0


def _pairwise_tasks(doc, series):
    pairs = []
    for source, target in doc.get("pairs", []):
        to_idx = lambda items: tuple(
            i if isinstance(i, int) else series.channel_index(i) for i in items
        )
        pairs.append((to_idx(source), to_idx(target)))
    if not pairs:
        src, tgt, _ = resolve_channels(doc, series)
        pairs = [(src, tgt)]
    return pairs


def cmd_pairwise(doc, out_dir, args):
    started = time.time()
    series = resolve_series(doc)
    pairs = _pairwise_tasks(doc, series)
    base, seeds = scheme_config(doc, args.seed)
    tau = doc.get("tau", PRESETS[doc.get("preset", "synthetic")]["tau"])
    results = decomposer.pairwise_te_nce(series, pairs, tau, base)
    path = os.path.join(out_dir, "pairwise.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=2)
        fh.write("\n")
    sources = sorted({tuple(r["source"]) for r in results})
    targets = sorted({tuple(r["target"]) for r in results})
    matrix = np.full((len(sources), len(targets)), np.nan)
    for r in results:
        matrix[sources.index(tuple(r["source"])), targets.index(tuple(r["target"]))] = r["te_bits"]
    chart = svg.heatmap(
        "Pairwise transfer entropy (bits)",
        ["+".join(s) for s in sources],
        ["+".join(t) for t in targets],
        matrix,
    )
    with open(os.path.join(out_dir, "pairwise.svg"), "w", encoding="utf-8") as fh:
        fh.write(chart)
    write_manifest(out_dir, doc, seeds, started)
    for r in results:
        print(f"{'+'.join(r['source'])} -> {'+'.join(r['target'])}: {r['te_bits']:.3f} bits")
    return 0


def cmd_trace(doc, out_dir, args):
    started = time.time()
    if not args.checkpoint:
        raise ConfigurationError("trace requires --checkpoint PREFIX")
    series = resolve_series(doc)
    src, tgt, cond = resolve_channels(doc, series)
    base, seeds = scheme_config(doc, args.seed)
    config = replace(base, cond_channels=cond)
    _, arrays_val = decomposer.prepare_windows(series, src, tgt, config)
    names = series.channel_names
    shapes = decomposer.shapes_of(
        arrays_val, [names[i] for i in src], [names[i] for i in tgt]
    )
    model = decomposer.build_model(config, shapes)
    ad.load_checkpoint(model.params(), args.checkpoint)
    trace = decomposer.local_kl_trace(model, arrays_val)
    trace.to_csv(os.path.join(out_dir, "local_kl_trace.csv"))
    curves = {
        label: (trace.anchors.tolist(), trace.traces[:, k].tolist())
        for k, label in enumerate(trace.cell_labels)
    }
    chart = svg.line_chart(
        "Instantaneous KL cost", "time (anchor)", "KL (nats)", curves
    )
    with open(os.path.join(out_dir, "local_kl_trace.svg"), "w", encoding="utf-8") as fh:
        fh.write(chart)
    write_manifest(out_dir, doc, seeds, started, {"checkpoint": args.checkpoint})
    print(f"trace over {len(trace.anchors)} anchors, {len(trace.cell_labels)} bottlenecks")
    return 0


def cmd_verify(doc, out_dir, args):
    """Fast acceptance report: oracle values and estimator identities."""
    started = time.time()
    checks = []

    def check(name, ok, detail):
        checks.append({"name": name, "pass": bool(ok), "detail": detail})
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")

    series_a = boolnet.simulate(boolnet.fig2a_spec(), 10**4, 7)
    te_a = discrete_info.plugin_te(series_a, (0, 1), (2, 3), 3)
    check("oracle fig2a TE = 1.0 +/- 0.05", abs(te_a - 1.0) <= 0.05, f"{te_a:.4f} bits")
    te_b = discrete_info.plugin_te(series_a, (0, 1), (3,), 3)
    check("oracle fig2b TE = 2.0 +/- 0.05", abs(te_b - 2.0) <= 0.05, f"{te_b:.4f} bits")
    te_fut = discrete_info.plugin_te_future(series_a, (0, 1), (2, 3), 3)
    check("plugin_te == plugin_te_future", abs(te_a - te_fut) <= 1e-9, f"diff={abs(te_a - te_fut):.2e}")
    local = discrete_info.local_te(series_a, (0, 1), (2, 3), 3)
    check("mean(local_te) == plugin_te", abs(local.mean() - te_a) <= 1e-9, f"diff={abs(local.mean() - te_a):.2e}")

    path = os.path.join(out_dir, "verify.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(checks, fh, indent=2)
        fh.write("\n")
    write_manifest(out_dir, doc, [], started)
    return 0 if all(c["pass"] for c in checks) else 1


COMMANDS = {
    "simulate": cmd_simulate,
    "oracle": cmd_oracle,
    "decompose": cmd_decompose,
    "pairwise": cmd_pairwise,
    "trace": cmd_trace,
    "verify": cmd_verify,
}


def main(argv=None):
    parser = argparse.ArgumentParser(prog="tedecomp", description=__doc__)
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="experiment config JSON")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, default=None, help="override the seed list")
    parser.add_argument("--jobs", type=int, default=1, help="parallel jobs for multi-run commands")
    parser.add_argument("--checkpoint", default=None, help="checkpoint prefix for 'trace'")
    args = parser.parse_args(argv)
    try:
        doc = load_config(args.config)
        out_dir = args.out or doc.get("output_dir", "out")
        os.makedirs(out_dir, exist_ok=True)
        return COMMANDS[args.command](doc, out_dir, args)
    except ConfigurationError as err:
        message = str(err)
        if not message.startswith("{"):
            message = json.dumps({"errors": [message]})
        print(message, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
