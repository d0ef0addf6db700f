"""Benchmark programs and a registry keyed by short ids."""

import re

from ..errors import ConfigError
from .ac import AcConfig, AirConditioner
from .base import Problem
from .epidemics import Epidemics, EpidemicsConfig, load_reference, make_reference
from .hotel import Hotel, HotelConfig, load_rates
from .simple import Heaviside, Quadratic, Synthetic, synthetic_oracle
from .traffic import Traffic

PROBLEM_IDS = ("heaviside", "quadratic", "synthetic<depth>", "traffic<d>", "ac", "hotel", "epidemics")


def get_problem(pid, *, steps=None, rates=None, reference=None):
    """Build a problem from its id, e.g. ``traffic5`` or ``synthetic8``."""
    if pid == "heaviside":
        return Heaviside()
    if pid == "quadratic":
        return Quadratic()
    if pid == "ac":
        return AirConditioner()
    if pid == "hotel":
        return Hotel(HotelConfig(products=load_rates(rates))) if rates else Hotel()
    if pid == "epidemics":
        prob = Epidemics()
        if reference:
            prob.reference = load_reference(reference, prob.cfg)
        return prob
    m = re.fullmatch(r"(traffic|synthetic)(\d+)", pid)
    if m and int(m.group(2)) >= 1:
        size = int(m.group(2))
        return Traffic(size, steps=steps) if m.group(1) == "traffic" else Synthetic(size)
    raise ConfigError(f"unknown problem {pid!r}; expected one of {', '.join(PROBLEM_IDS)}")


__all__ = [
    "AcConfig", "AirConditioner", "Epidemics", "EpidemicsConfig", "Heaviside", "Hotel",
    "HotelConfig", "Problem", "Quadratic", "Synthetic", "Traffic", "get_problem",
    "load_rates", "load_reference", "make_reference", "synthetic_oracle", "PROBLEM_IDS",
]
