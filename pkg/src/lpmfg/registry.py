"""Built-in problem families and the tabulated-coefficient file format."""
from __future__ import annotations

from typing import Callable, Dict

import numpy as np

from .domain import ConfigError, Grid, ProblemSpec

DEFAULT_GRID = (30, 30, 3)


def _zero(t, x, z, a):
    return 0.0 * x + 0.0 * a


def _const(c):
    return lambda t, x, z, a: c + 0.0 * x + 0.0 * a


def _bump(center=0.5, width=0.12):
    return lambda x: np.exp(-0.5 * ((x - center) / width) ** 2)


def stop_now() -> ProblemSpec:
    return ProblemSpec(
        name="stop-now", T=1.0, x_lo=0.0, x_hi=1.0, a_lo=0.0, a_hi=0.0,
        barb=_zero, barsigma=_const(0.1), barf=_zero,
        barg=lambda t, x, w: 1.0 + 0.0 * x,
        m0=_bump(), description="g = 1, f = 0: every policy is worth 1",
    )


def never_stop() -> ProblemSpec:
    return ProblemSpec(
        name="never-stop", T=1.0, x_lo=0.0, x_hi=1.0, a_lo=0.0, a_hi=0.0,
        barb=_zero, barsigma=_zero, barf=_const(1.0),
        barg=lambda t, x, w: 0.0 * x,
        m0=_bump(), boundary_mode="unattainable",
        description="f = 1, g = 0, frozen state: run to the horizon, value T",
    )


def martingale(sigma: float = 0.15) -> ProblemSpec:
    return ProblemSpec(
        name="martingale", T=1.0, x_lo=0.0, x_hi=1.0, a_lo=0.0, a_hi=0.0,
        barb=_zero, barsigma=_const(sigma), barf=_zero,
        barg=lambda t, x, w: x + 0.0 * t,
        m0=_bump(0.45, 0.1), description="b = 0, f = 0, g = x: stopping is a fair game",
    )


def american_put_like(strike: float = 0.5, rate: float = 1.0, sigma: float = 0.15) -> ProblemSpec:
    return ProblemSpec(
        name="american-put-like", T=1.0, x_lo=0.0, x_hi=1.0, a_lo=0.0, a_hi=0.0,
        barb=_zero, barsigma=_const(sigma), barf=_zero,
        barg=lambda t, x, w: np.exp(-rate * t) * np.maximum(strike - x, 0.0),
        m0=_bump(0.5, 0.1),
        description="driftless state, discounted put payoff as obstacle",
    )


def congestion_mfg(kappa: float = 1.5, drift: float = 0.3, sigma: float = 0.15,
                   cost: float = 0.5, center: float = 0.7) -> ProblemSpec:
    """Running reward ``f1(x) * (1 - kappa * <f1, m_t>) - cost * a^2 - 0.1``.

    ``f1`` is a bump at ``center``; ``1 - kappa z`` is non-increasing, the
    dynamics ignore the population, so the Nash value is unique.
    """
    def f1(x):
        return np.exp(-0.5 * ((x - center) / 0.15) ** 2)

    return ProblemSpec(
        name="congestion-mfg", T=1.0, x_lo=0.0, x_hi=1.0, a_lo=-1.0, a_hi=1.0,
        barb=lambda t, x, z, a: drift * a + 0.0 * x,
        barsigma=_const(sigma),
        barf=lambda t, x, z, a: f1(x) * (1.0 - kappa * z[0]) - cost * a * a - 0.1,
        barg=lambda t, x, w: 0.0 * x,
        hat_f=lambda t, x: f1(x)[..., None],
        m0=_bump(0.35, 0.1), convex_k=True,
        description="crowd-averse running reward, drift control, anti-monotone",
    )


def crowd_exit_mfg(kappa: float = 0.8, bonus: float = 0.4, drift: float = -0.1,
                   sigma: float = 0.15, rate: float = 0.3) -> ProblemSpec:
    """Bank-run flavour: early withdrawal pays ``bonus * (1 - t/T)`` scaled by
    ``1 - kappa * <1 - t/T, mu>``, which shrinks as more agents leave early.
    Staying earns ``rate * x`` per unit time; the exit payoff adds ``x``.
    """
    T = 1.0

    def g1(t, x):
        return (1.0 - t / T) + 0.0 * x

    return ProblemSpec(
        name="crowd-exit-mfg", T=T, x_lo=0.0, x_hi=1.0, a_lo=0.0, a_hi=0.0,
        barb=_const(drift), barsigma=_const(sigma),
        barf=lambda t, x, z, a: rate * x + 0.0 * a,
        barg=lambda t, x, w: bonus * g1(t, x) * (1.0 - kappa * w[0]) + x,
        hat_g=lambda t, x: g1(t, x)[..., None],
        m0=_bump(0.5, 0.12),
        description="early-exit bonus decreasing in the early-exit mass, anti-monotone",
    )


REGISTRY: Dict[str, Callable[[], ProblemSpec]] = {
    "stop-now": stop_now,
    "never-stop": never_stop,
    "martingale": martingale,
    "american-put-like": american_put_like,
    "congestion-mfg": congestion_mfg,
    "crowd-exit-mfg": crowd_exit_mfg,
}


def registry_problems() -> list:
    return sorted(REGISTRY)


def get_problem(name: str) -> ProblemSpec:
    try:
        return REGISTRY[name]()
    except KeyError:
        raise ConfigError(f"unknown problem {name!r}; known: {', '.join(registry_problems())}") from None


def random_problem(seed: int, drift_scale: float = 0.3, sigma: float = 0.1,
                   boundary_mode: str = "attainable") -> ProblemSpec:
    """Smooth random frozen problem (coefficients ignore the population)."""
    rng = np.random.default_rng(seed)
    ph = rng.uniform(0, 2 * np.pi, size=6)
    fr = rng.uniform(1.0, 6.0, size=6)
    amp = rng.uniform(0.2, 1.0, size=4)
    center = rng.uniform(0.3, 0.7)

    def barb(t, x, z, a):
        return drift_scale * (0.5 * a + 0.5 * np.sin(fr[0] * x + ph[0] + t))

    def barsigma(t, x, z, a):
        return sigma * (0.6 + 0.4 * np.cos(fr[1] * x + ph[1]) ** 2) + 0.0 * a

    def barf(t, x, z, a):
        return amp[0] * np.cos(fr[2] * x + ph[2] + 2 * t) - amp[1] * (a - 0.3 * np.sin(fr[3] * x)) ** 2

    def barg(t, x, w):
        return amp[2] * np.sin(fr[4] * x + ph[4]) * (1.0 - 0.5 * t) + amp[3] * x

    return ProblemSpec(
        name=f"random-{seed}", T=1.0, x_lo=0.0, x_hi=1.0, a_lo=-1.0, a_hi=1.0,
        barb=barb, barsigma=barsigma, barf=barf, barg=barg,
        m0=lambda x: np.exp(-0.5 * ((x - center) / 0.15) ** 2),
        boundary_mode=boundary_mode, description="randomised smooth frozen problem",
    )
