"""Binary-valued recurrent network simulator with the three built-in systems.

Updates are synchronous: the state at t+1 depends only on the state at t.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .series import BINARY, MultiSeries

BURN_IN = 10  # steps discarded before the returned trajectory


@dataclass(frozen=True)
class Random:
    """Fires with probability p each step, independent of everything."""

    p: float = 0.5


@dataclass(frozen=True)
class Xor:
    inputs: tuple  # exactly two node names

    def __post_init__(self):
        if len(self.inputs) != 2:
            raise ConfigurationError(f"Xor needs exactly 2 inputs, got {len(self.inputs)}")
        object.__setattr__(self, "inputs", tuple(self.inputs))


@dataclass(frozen=True)
class Copy:
    input: str


@dataclass(frozen=True)
class IntegrateFire:
    """Fires iff the +/-1 weighted sum of previous-step inputs is > 0."""

    inputs: tuple  # ((node name, weight), ...) with weight in {+1, -1}

    def __post_init__(self):
        if len(self.inputs) < 1:
            raise ConfigurationError("IntegrateFire needs at least one input")
        for name, w in self.inputs:
            if w not in (1, -1):
                raise ConfigurationError(f"IntegrateFire weight must be +1 or -1, got {w}")
        object.__setattr__(self, "inputs", tuple((n, int(w)) for n, w in self.inputs))


def _rule_inputs(rule):
    if isinstance(rule, Random):
        return ()
    if isinstance(rule, Xor):
        return rule.inputs
    if isinstance(rule, Copy):
        return (rule.input,)
    if isinstance(rule, IntegrateFire):
        return tuple(name for name, _ in rule.inputs)
    raise ConfigurationError(f"unknown rule {rule!r}")


@dataclass(frozen=True)
class NetworkSpec:
    nodes: tuple  # ((name, rule), ...) in channel order
    source_set: tuple
    target_set: tuple

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "source_set", tuple(self.source_set))
        object.__setattr__(self, "target_set", tuple(self.target_set))
        names = [name for name, _ in self.nodes]
        if len(set(names)) != len(names):
            raise ConfigurationError("node names must be unique")
        known = set(names)
        for name, rule in self.nodes:
            for ref in _rule_inputs(rule):
                if ref not in known:
                    raise ConfigurationError(f"node {name!r} references unknown node {ref!r}")
        if set(self.source_set) & set(self.target_set):
            raise ConfigurationError("source_set and target_set must be disjoint")
        for role, members in (("source", self.source_set), ("target", self.target_set)):
            for name in members:
                if name not in known:
                    raise ConfigurationError(f"{role} set references unknown node {name!r}")

    @property
    def names(self):
        return tuple(name for name, _ in self.nodes)

    def channel_indices(self, names):
        order = self.names
        return tuple(order.index(n) for n in names)

    def source_indices(self):
        return self.channel_indices(self.source_set)

    def target_indices(self):
        return self.channel_indices(self.target_set)

    def to_json(self):
        def rule_doc(rule):
            if isinstance(rule, Random):
                return {"kind": "random", "p": rule.p}
            if isinstance(rule, Xor):
                return {"kind": "xor", "inputs": list(rule.inputs)}
            if isinstance(rule, Copy):
                return {"kind": "copy", "input": rule.input}
            return {"kind": "integrate_fire", "inputs": [[n, w] for n, w in rule.inputs]}

        doc = {
            "nodes": [{"name": name, **rule_doc(rule)} for name, rule in self.nodes],
            "source_set": list(self.source_set),
            "target_set": list(self.target_set),
        }
        return json.dumps(doc, indent=2)

    @staticmethod
    def from_json(text):
        doc = json.loads(text)
        nodes = []
        for nd in doc["nodes"]:
            kind = nd["kind"]
            if kind == "random":
                rule = Random(p=nd.get("p", 0.5))
            elif kind == "xor":
                rule = Xor(inputs=tuple(nd["inputs"]))
            elif kind == "copy":
                rule = Copy(input=nd["input"])
            elif kind == "integrate_fire":
                rule = IntegrateFire(inputs=tuple((n, w) for n, w in nd["inputs"]))
            else:
                raise ConfigurationError(f"unknown rule kind {kind!r}")
            nodes.append((nd["name"], rule))
        return NetworkSpec(tuple(nodes), tuple(doc["source_set"]), tuple(doc["target_set"]))


def simulate(spec, steps, rng, burn_in=BURN_IN):
    """Run the network for burn_in + steps synchronous updates; return the tail."""
    if steps < 1:
        raise ConfigurationError(f"steps must be >= 1, got {steps}")
    rng = np.random.default_rng(rng) if isinstance(rng, int) else rng
    names = spec.names
    index = {n: i for i, n in enumerate(names)}
    n_nodes = len(names)
    total = burn_in + steps
    # Draws are keyed by sorted node name so permuting the node list never
    # changes the trajectory of any channel.
    sorted_names = sorted(names)
    rank = {n: i for i, n in enumerate(sorted_names)}
    init_bits = rng.integers(0, 2, size=n_nodes).astype(np.float64)
    state = np.array([init_bits[rank[n]] for n in names])
    out = np.empty((total, n_nodes))
    for t in range(total):
        draws = rng.random(n_nodes)
        nxt = np.empty(n_nodes)
        for i, (name, rule) in enumerate(spec.nodes):
            if isinstance(rule, Random):
                nxt[i] = 1.0 if draws[rank[name]] < rule.p else 0.0
            elif isinstance(rule, Xor):
                a, b = rule.inputs
                nxt[i] = float(state[index[a]] != state[index[b]])
            elif isinstance(rule, Copy):
                nxt[i] = state[index[rule.input]]
            else:  # IntegrateFire
                total_in = sum(w * state[index[n]] for n, w in rule.inputs)
                nxt[i] = 1.0 if total_in > 0 else 0.0
        out[t] = nxt
        state = nxt
    return MultiSeries(names, (BINARY,) * n_nodes, out[burn_in:])


def fig2a_spec():
    """Two random sources drive green through XOR; red stores green's last state."""
    return NetworkSpec(
        nodes=(
            ("blue", Random(0.5)),
            ("orange", Random(0.5)),
            ("green", Xor(("blue", "orange"))),
            ("red", Copy("green")),
        ),
        source_set=("blue", "orange"),
        target_set=("green", "red"),
    )


def fig2b_spec():
    """Same dynamics as fig2a but the green process is excluded from the target."""
    base = fig2a_spec()
    return NetworkSpec(nodes=base.nodes, source_set=base.source_set, target_set=("red",))


def fig2c_spec(seed):
    """Six-node integrate-and-fire network with seeded random +/-1 wiring.

    Two random sources (blue, orange), two hidden nodes, two targets
    (green, red); every non-source node draws two distinct inputs and
    signed weights from the seed.
    """
    rng = np.random.default_rng(seed)
    names = ("blue", "orange", "hidden1", "hidden2", "green", "red")
    nodes = [("blue", Random(0.5)), ("orange", Random(0.5))]
    for name in names[2:]:
        picks = rng.choice(len(names), size=2, replace=False)
        weights = rng.choice([-1, 1], size=2)
        nodes.append(
            (name, IntegrateFire(tuple((names[p], int(w)) for p, w in zip(picks, weights))))
        )
    return NetworkSpec(tuple(nodes), ("blue", "orange"), ("green", "red"))
