"""Grid of signalised intersections; the parameters are the signal offsets."""

import numpy as np

from ..api import minimum
from .base import Problem

PERIOD = 4


class Traffic(Problem):
    """``d x d`` intersections, each with a horizontal and a vertical queue.

    Every step ``d`` vehicles enter at the western and northern borders
    (alternating by lane and step).  A signal with offset ``o`` is green for
    the horizontal direction while ``(t + o) mod 4 < 2``, i.e. two steps
    green and two red per period of four.  The offset is first reduced into
    ``[0, 4)`` and every phase test compares it against a constant, so each
    branch condition on the offset is linear in it.  The green direction moves
    ``min(1, queue)`` vehicles through the intersection; they go straight, or
    turn into the perpendicular direction according to a fixed schedule, and
    leave when they cross the eastern or southern border.

    The objective is the total number of intersection passings (maximised).
    """

    sense = "max"
    sigma0 = 0.5
    lr0 = 0.1
    fidelity_range = 2.0

    def __init__(self, d=2, steps=None, turn_prob=0.05, schedule_seed=0):
        if d < 1:
            raise ValueError("grid size must be at least 1")
        self.d = d
        self.n = d * d
        self.name = f"traffic{d}"
        self.steps = d if steps is None else steps
        rng = np.random.default_rng(schedule_seed)
        self.turn_h = rng.random((self.steps, self.n)) < turn_prob
        self.turn_v = rng.random((self.steps, self.n)) < turn_prob

    def initial(self, seed=0):
        return np.random.default_rng(seed).uniform(0.0, PERIOD, self.n)

    def spawned(self, t):
        """(queue, index) pairs receiving a vehicle at step ``t``."""
        d = self.d
        return [("h", j * d) if (t + j) % 2 == 0 else ("v", j) for j in range(d)]

    @staticmethod
    def _reduce(ctx, o):
        """``o mod 4`` through two loops, keeping the offset smooth."""
        s = ctx.state(r=o)

        def down():
            s.r = s.r - PERIOD

        def up():
            s.r = s.r + PERIOD

        ctx.loop(lambda: s.r >= PERIOD, down)
        ctx.loop(lambda: s.r < 0.0, up)
        return s.r

    @staticmethod
    def _signal(ctx, u, green, red):
        """Horizontal green iff ``u`` (in ``[0, 7)``) lies in ``[0, 2)`` or ``[4, 6)``.

        The phase tests run one after another rather than nested, so every
        sample meets each of them.
        """
        s = ctx.state(on=0.0)

        def inc():
            s.on = s.on + 1.0

        def dec():
            s.on = s.on - 1.0

        ctx.branch(u < 2.0, inc)
        ctx.branch(u >= 4.0, inc)
        ctx.branch(u >= 6.0, dec)
        ctx.branch(s.on >= 0.5, green, red)

    def run(self, ctx, x, rng, trace=None):
        d, n = self.d, self.n
        hq, vq = ctx.array([0.0] * n), ctx.array([0.0] * n)
        ha, va = ctx.array([0.0] * n), ctx.array([0.0] * n)
        s = ctx.state(flow=0.0, exited=0.0)

        def route(k, m, turn, horizontal):
            r, c = divmod(k, d)
            if horizontal != bool(turn):
                nr, nc, dest = r, c + 1, ha
            else:
                nr, nc, dest = r + 1, c, va
            if nr >= d or nc >= d:
                s.exited = s.exited + m
            else:
                j = nr * d + nc
                dest[j] = dest[j] + m

        phase = [self._reduce(ctx, x[k]) for k in range(n)]
        for t in range(self.steps):
            for kind, j in self.spawned(t):
                q = hq if kind == "h" else vq
                q[j] = q[j] + 1.0
            for k in range(n):
                def go_h(k=k, t=t):
                    m = minimum(1.0, hq[k])
                    hq[k] = hq[k] - m
                    s.flow = s.flow + m
                    route(k, m, self.turn_h[t, k], True)

                def go_v(k=k, t=t):
                    m = minimum(1.0, vq[k])
                    vq[k] = vq[k] - m
                    s.flow = s.flow + m
                    route(k, m, self.turn_v[t, k], False)

                self._signal(ctx, t % PERIOD + phase[k], go_h, go_v)
            for k in range(n):
                hq[k] = hq[k] + ha[k]
                vq[k] = vq[k] + va[k]
                ha[k] = 0.0
                va[k] = 0.0
            if trace is not None:
                trace.append({
                    "step": t,
                    "spawned": d * (t + 1),
                    "on_grid": sum(hq[k] + vq[k] for k in range(n)),
                    "exited": s.exited,
                    "flow": s.flow,
                })
        return -s.flow

    def simulate(self, x):
        """Crisp run returning the per-step bookkeeping used by the conservation checks."""
        from ..api import CrispContext

        trace = []
        ctx = CrispContext(self.n)
        self.run(ctx, [float(v) for v in x], None, trace=trace)
        return trace
