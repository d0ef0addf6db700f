"""Common shape of a benchmark problem."""

import numpy as np


class Problem:
    """A smooth program plus what the optimizer and harness need to know about it.

    ``run`` returns the quantity to *minimise*; problems whose natural
    objective is maximised (``sense == "max"``) return its negation and
    :meth:`report` flips it back.
    """

    name = "problem"
    n = 1
    sense = "min"
    stochastic = False
    eval_seeds = (0,)
    lower = None
    upper = None
    sigma0 = 0.1
    lr0 = 0.01
    fidelity_range = 0.5

    def run(self, ctx, x, rng):
        raise NotImplementedError

    def __call__(self, ctx, x, rng):
        return self.run(ctx, x, rng)

    def initial(self, seed=0):
        return np.zeros(self.n)

    def report(self, value):
        return -value if self.sense == "max" else value

    def clamp(self, x):
        if self.lower is None and self.upper is None:
            return x
        return np.clip(x, self.lower, self.upper)

    def __repr__(self):
        return f"<{type(self).__name__} {self.name} n={self.n}>"
