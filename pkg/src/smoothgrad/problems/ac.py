"""Thermostat controlled by a small neural network."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..api import sigmoid, tanh
from .base import Problem

SCALE_CENTER = 22.0
SCALE_SPAN = 5.0


@dataclass
class AcConfig:
    steps: int = 10
    hidden: int = 10
    target_range: tuple = (20.0, 24.0)
    start_range: tuple = (18.0, 30.0)
    outside_range: tuple = (26.0, 36.0)
    leak_range: tuple = (0.05, 0.2)
    open_leak: float = 0.6
    window_prob: float = 0.05
    cooling: float = 4.0
    energy_weight: float = 0.1
    # fixing any of these removes that source of randomness
    target: Optional[float] = None
    start: Optional[float] = None
    outside: Optional[float] = None
    leak: Optional[float] = None


class AirConditioner(Problem):
    """A room drifts towards the outside temperature; a network decides cooling.

    Inputs per step are the target, the previous and the newly drifted room
    temperature (normalised), and the previous on/off decision and power.  One
    hidden ``tanh`` layer feeds two outputs: the unit is on iff output 0 is
    positive, and output 1 through a sigmoid sets the power.  The loss is the
    mean squared temperature error plus a penalty on the energy used.  Each
    step the window opens with a small probability, raising heat exchange.
    """

    name = "ac"
    stochastic = True
    eval_seeds = tuple(range(10))
    sigma0 = 0.1
    lr0 = 0.01
    fidelity_range = 0.5

    def __init__(self, config=None):
        self.cfg = config or AcConfig()
        h = self.cfg.hidden
        self.n = h * 5 + h + 2 * h + 2

    def layout(self, x):
        """Split a flat parameter vector into ``(W1, b1, W2, b2)`` nested lists."""
        h = self.cfg.hidden
        W1 = [[x[j * 5 + i] for i in range(5)] for j in range(h)]
        b1 = [x[5 * h + j] for j in range(h)]
        o = 6 * h
        W2 = [[x[o + k * h + j] for j in range(h)] for k in range(2)]
        b2 = [x[o + 2 * h + k] for k in range(2)]
        return W1, b1, W2, b2

    def initial(self, seed=0):
        return np.random.default_rng(seed).normal(0.0, 0.3, self.n)

    def episode(self, rng):
        """Draw the per-episode conditions; fixed config fields override the draw."""
        c = self.cfg
        draws = {
            "target": rng.uniform(*c.target_range),
            "start": rng.uniform(*c.start_range),
            "outside": rng.uniform(*c.outside_range),
            "leak": rng.uniform(*c.leak_range),
        }
        for key in draws:
            if getattr(c, key) is not None:
                draws[key] = getattr(c, key)
        draws["window"] = rng.random(c.steps) < c.window_prob
        return draws

    def run(self, ctx, x, rng):
        c = self.cfg
        ep = self.episode(rng)
        W1, b1, W2, b2 = self.layout(x)
        target, outside = ep["target"], ep["outside"]
        norm = lambda v: (v - SCALE_CENTER) / SCALE_SPAN  # noqa: E731
        s = ctx.state(temp=ep["start"], on=0.0, power=0.0, err=0.0, energy=0.0)
        for t in range(c.steps):
            leak = c.open_leak if ep["window"][t] else ep["leak"]
            prev = s.temp
            drifted = prev + leak * (outside - prev)
            feats = [norm(target), norm(prev), norm(drifted), s.on, s.power]
            hid = [tanh(sum_products(W1[j], feats, b1[j])) for j in range(c.hidden)]
            gate = sum_products(W2[0], hid, b2[0])
            level = sigmoid(sum_products(W2[1], hid, b2[1]))
            s.temp = drifted
            s.on = 0.0
            s.power = 0.0

            def cool():
                s.temp = drifted - c.cooling * level
                s.on = 1.0
                s.power = level
                s.energy = s.energy + level

            ctx.branch(gate > 0.0, cool)
            e = s.temp - target
            s.err = s.err + e * e
        return s.err / c.steps + c.energy_weight * s.energy


def sum_products(ws, xs, bias):
    acc = bias
    for w, v in zip(ws, xs):
        acc = acc + w * v
    return acc
