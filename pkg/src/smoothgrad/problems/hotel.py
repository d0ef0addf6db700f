"""Hotel revenue management with interdependent booking limits."""

import csv
from dataclasses import dataclass, field
from importlib import resources
from typing import List

import numpy as np

from ..api import maximum
from ..errors import ConfigError
from .base import Problem

RATE_COLUMNS = ("product", "arrival_day", "stay_len", "rate_class", "arrival_rate", "price")
WEEK_HOURS = 168.0


@dataclass(frozen=True)
class Product:
    index: int
    arrival_day: int
    stay_len: int
    rate_class: str
    arrival_rate: float
    price: float

    @property
    def nights(self):
        return range(self.arrival_day, self.arrival_day + self.stay_len)


def load_rates(path=None):
    """Read a product table; ``None`` loads the bundled default set."""
    if path is None:
        text = resources.files(__package__).joinpath("data/hotel_rates.csv").read_text()
    else:
        with open(path, newline="") as f:
            text = f.read()
    rows = list(csv.DictReader(text.splitlines()))
    if not rows or tuple(rows[0].keys()) != RATE_COLUMNS:
        raise ConfigError(f"rates file must have columns {','.join(RATE_COLUMNS)}")
    products = [
        Product(int(r["product"]), int(r["arrival_day"]), int(r["stay_len"]),
                r["rate_class"], float(r["arrival_rate"]), float(r["price"]))
        for r in rows
    ]
    if [p.index for p in products] != list(range(len(products))):
        raise ConfigError("products must be numbered 0..n-1 in order")
    return products


@dataclass
class HotelConfig:
    rooms: int = 100
    nights: int = 7
    products: List[Product] = field(default_factory=load_rates)


class Hotel(Problem):
    """One week of booking requests against per-product limits.

    Requests for each product arrive as a Poisson process over the week and
    are served in time order.  A request is accepted iff the product's limit is
    positive; acceptance earns the product's price and decrements the limit of
    every product sharing at least one night (including itself).  Revenue is
    maximised.
    """

    name = "hotel"
    sense = "max"
    stochastic = True
    eval_seeds = tuple(range(10))
    sigma0 = 5.0
    lr0 = 1.0
    fidelity_range = 20.0

    def __init__(self, config=None):
        self.cfg = config or HotelConfig()
        prods = self.cfg.products
        self.n = len(prods)
        self.overlap = [
            [q.index for q in prods if set(p.nights) & set(q.nights)] for p in prods
        ]
        self.rates = np.array([p.arrival_rate for p in prods])
        self.prices = np.array([p.price for p in prods])
        self.lower = np.zeros(self.n)
        self.upper = np.full(self.n, float(self.cfg.rooms))

    def initial(self, seed=0):
        return np.random.default_rng(seed).uniform(0.0, self.cfg.rooms, self.n)

    def requests(self, rng):
        """Product indices of the week's requests in arrival order."""
        counts = rng.poisson(self.rates)
        prods = np.repeat(np.arange(self.n), counts)
        times = rng.uniform(0.0, WEEK_HOURS, prods.size)
        return prods[np.argsort(times, kind="stable")]

    def run(self, ctx, x, rng, bookings=None):
        limits = ctx.array(list(x))
        s = ctx.state(revenue=0.0)
        for k in self.requests(rng):
            k = int(k)

            def accept(k=k):
                s.revenue = s.revenue + float(self.prices[k])
                for j in self.overlap[k]:
                    limits[j] = maximum(limits[j] - 1.0, 0.0)
                if bookings is not None:
                    bookings.append(k)

            ctx.branch(limits[k] > 0.0, accept)
        return -s.revenue

    def occupancy(self, bookings):
        """Rooms sold per night for a list of accepted product indices."""
        occ = np.zeros(self.cfg.nights + 1, dtype=int)
        for k in bookings:
            for night in self.cfg.products[k].nights:
                occ[night] += 1
        return occ[1:]
