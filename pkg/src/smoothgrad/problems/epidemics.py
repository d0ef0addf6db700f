"""Agent-based SIR epidemic on a random geometric graph, fitted to a reference run."""

import csv
import io
from dataclasses import dataclass
from typing import Optional

import networkx as nx
import numpy as np

from ..api import CrispContext, make_rng
from ..errors import ConfigError
from .base import Problem

REFERENCE_COLUMNS = ("step", "location", "s", "i", "r")
# recovery step of an agent that was never infected; finite so path merges stay finite
NEVER = 1e6


@dataclass
class EpidemicsConfig:
    agents: int = 200
    steps: int = 25
    nodes: int = 100
    radius: float = 0.165
    stay_prob: float = 0.5
    graph_seed: int = 1
    walk_seed: int = 2
    truth_seed: int = 3
    reference_seed: int = 4
    recovery_rate: float = 0.2
    initial_prob: float = 0.1
    location_range: tuple = (0.05, 0.35)


class Epidemics(Problem):
    """SIR dynamics of agents doing random walks over a fixed graph.

    Parameters are ``[recovery rate, initial infection probability,
    p_1 .. p_L]`` with one infection probability per location.  At step 0 each
    agent is infected iff a uniform draw is below the initial probability.
    Afterwards each susceptible agent sharing a location with an infected one
    is infected iff a fresh uniform draw per contact is below that location's
    probability.  An infected agent recovers once the step reaches its
    infection step plus an exponential delay with the given rate.  The loss is
    the mean squared error of per-step, per-location S/I/R counts against a
    reference trajectory.
    """

    name = "epidemics"
    sigma0 = 0.02
    lr0 = 0.005
    fidelity_range = 0.05

    def __init__(self, config=None, reference=None):
        self.cfg = c = config or EpidemicsConfig()
        self.n = 2 + c.nodes
        self.graph = nx.random_geometric_graph(c.nodes, c.radius, seed=c.graph_seed)
        self.walks = self._walks()
        self.occupants = []
        for where in self.walks:
            order = np.argsort(where, kind="stable")
            groups = np.split(order, np.flatnonzero(np.diff(where[order])) + 1)
            self.occupants.append([(int(where[g[0]]), g.tolist()) for g in groups])
        self.lower = np.concatenate([[1e-3], np.zeros(1 + c.nodes)])
        self.upper = np.concatenate([[10.0], np.ones(1 + c.nodes)])
        self.eval_seeds = (c.reference_seed,)
        self._reference = None
        if reference is not None:
            self.reference = reference

    def _walks(self):
        c = self.cfg
        rng = np.random.default_rng(c.walk_seed)
        nbrs = [sorted(self.graph.neighbors(v)) for v in range(c.nodes)]
        pos = np.empty((c.steps, c.agents), dtype=int)
        pos[0] = rng.integers(0, c.nodes, c.agents)
        for t in range(1, c.steps):
            for a in range(c.agents):
                here = pos[t - 1, a]
                move = rng.random() >= c.stay_prob and nbrs[here]
                pos[t, a] = nbrs[here][rng.integers(len(nbrs[here]))] if move else here
        return pos

    def truth(self):
        c = self.cfg
        rng = np.random.default_rng(c.truth_seed)
        locs = rng.uniform(*c.location_range, c.nodes)
        return np.concatenate([[c.recovery_rate, c.initial_prob], locs])

    def initial(self, seed=0):
        """Ground truth perturbed by a seeded relative error of up to 50%."""
        rng = np.random.default_rng(seed)
        return self.clamp(self.truth() * rng.uniform(0.5, 1.5, self.n))

    @property
    def reference(self):
        if self._reference is None:
            self._reference = self.simulate(self.truth(), self.cfg.reference_seed)
        return self._reference

    @reference.setter
    def reference(self, counts):
        c = self.cfg
        counts = np.asarray(counts, dtype=float)
        if counts.shape != (c.steps, c.nodes, 3):
            raise ConfigError(
                f"reference must have shape {(c.steps, c.nodes, 3)}, got {counts.shape}")
        self._reference = counts

    def run(self, ctx, x, rng, counts=None):
        c = self.cfg
        A, T = c.agents, c.steps
        ref = self.reference
        rate, p0, ploc = x[0], x[1], x[2:]
        u0 = rng.random(A).tolist()
        gap = (-np.log1p(-rng.random(A))).tolist()
        S = ctx.array([1.0] * A)
        I = ctx.array([0.0] * A)
        R = ctx.array([0.0] * A)
        due = ctx.array([NEVER] * A)
        s = ctx.state(loss=0.0)

        def infect(a, t):
            S[a] = 0.0
            I[a] = 1.0
            due[a] = t + gap[a] / rate

        def record(t):
            occupied = np.zeros(c.nodes, dtype=bool)
            for loc, members in self.occupants[t]:
                occupied[loc] = True
                for k, arr in enumerate((S, I, R)):
                    e = sum(arr[a] for a in members) - float(ref[t, loc, k])
                    s.loss = s.loss + e * e
                    if counts is not None:
                        counts[t, loc, k] = float(sum(arr[a] for a in members))
            s.loss = s.loss + float(np.sum(ref[t, ~occupied] ** 2))

        for a in range(A):
            ctx.branch(u0[a] <= p0, lambda a=a: infect(a, 0), site=("seed", a))
        record(0)
        for t in range(1, T):
            groups = self.occupants[t]
            draws = rng.random(sum(len(g) * (len(g) - 1) for _, g in groups)).tolist()
            ill = [I[a] for a in range(A)]
            d = 0
            for loc, g in groups:
                if len(g) < 2:
                    continue
                for a in g:
                    for b in g:
                        if a == b:
                            continue
                        u = draws[d]
                        d += 1

                        def contact(a=a, b=b, u=u, loc=loc, t=t):
                            ctx.branch(u <= ploc[loc], lambda: infect(a, t),
                                       site=("infect", a, b, t))

                        ctx.branch(S[a] * ill[b] >= 0.5, contact, site=("contact", a, b, t))
            for a in range(A):
                def recover(a=a):
                    I[a] = 0.0
                    R[a] = 1.0

                def check(a=a, t=t):
                    ctx.branch(due[a] <= t, recover, site=("recover", a, t))

                ctx.branch(I[a] >= 0.5, check, site=("ill", a, t))
            record(t)
        return s.loss / (T * c.nodes * 3)

    def simulate(self, x, seed):
        """Crisp per-step, per-location S/I/R counts, shape ``(steps, nodes, 3)``."""
        c = self.cfg
        counts = np.zeros((c.steps, c.nodes, 3))
        zero = np.zeros((c.steps, c.nodes, 3))
        saved, self._reference = self._reference, zero
        try:
            self.run(CrispContext(self.n), [float(v) for v in x], make_rng(seed), counts=counts)
        finally:
            self._reference = saved
        return counts


def make_reference(problem, x=None, seed=None, path=None):
    """Simulate at ``x`` (default: ground truth) and return the CSV text; optionally write it."""
    x = problem.truth() if x is None else np.asarray(x, dtype=float)
    seed = problem.cfg.reference_seed if seed is None else seed
    counts = problem.simulate(x, seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REFERENCE_COLUMNS)
    for t in range(counts.shape[0]):
        for loc in range(counts.shape[1]):
            w.writerow([t, loc] + [int(round(v)) for v in counts[t, loc]])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as f:
            f.write(text)
    return text


def load_reference(path, config: Optional[EpidemicsConfig] = None):
    c = config or EpidemicsConfig()
    counts = np.zeros((c.steps, c.nodes, 3))
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != REFERENCE_COLUMNS:
            raise ConfigError(f"reference file must have columns {','.join(REFERENCE_COLUMNS)}")
        for row in reader:
            t, loc = int(row["step"]), int(row["location"])
            if not (0 <= t < c.steps and 0 <= loc < c.nodes):
                raise ConfigError(f"reference row out of range: step {t}, location {loc}")
            counts[t, loc] = [float(row["s"]), float(row["i"]), float(row["r"])]
    return counts
