#!/usr/bin/env python3
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.optimize import minimize_scalar
from scipy.optimize.elementwise import find_root

from .dto import BurgersProblem, GrowthRecord
from ..common.singleton import Singleton
from ..common.utils import DomainError

__all__ = [
    "growth_epsilon",
    "ToysService"
]

SAMPLES = 20001
TRANSPORT_POINTS = 4097
SLOPE_BLOWUP = -1e8


def growth_epsilon(t: float, t_star: float = 1.0) -> float:
    """Bump width used for the growth experiments: min(1/3, sqrt((T* - t) / 20))."""
    return min(1.0 / 3.0, math.sqrt((t_star - t) / 20.0))


class ToysService(metaclass=Singleton):
    # Riccati

    @staticmethod
    def riccati(t: float) -> tuple[float, float]:
        """u' = u^2 with u(0) = 1 and its linearization ratio v(t) / v(0)."""
        if not 0.0 <= t < 1.0:
            raise DomainError(f"Riccati solution exists only for 0 <= t < 1, got t={t!r}")
        return 1.0 / (1.0 - t), 1.0 / (1.0 - t) ** 2

    @staticmethod
    def riccati_perturbed_blowup(eps: float) -> float:
        if not eps > -1.0:
            raise DomainError(f"perturbed data 1 + eps must be positive, got eps={eps!r}")
        return 1.0 / (1.0 + eps)

    # Burgers

    @staticmethod
    def blowup_time(problem: BurgersProblem) -> float:
        """1 / max(-u'(x)) of the (perturbed) initial profile over the problem domain."""
        x = np.linspace(*problem.domain, SAMPLES)
        slope = problem.initial_prime(x)
        if np.any(slope > 0.0):
            raise DomainError(f"perturbed profile is not monotone for eps={problem.eps!r}")
        k = int(np.argmin(slope))
        steepest = float(-slope[k])
        if 0 < k < x.size - 1:
            refined = minimize_scalar(lambda s: float(problem.initial_prime(np.array(s))),
                                      bounds=(x[k - 1], x[k + 1]), method="bounded", options={"xatol": 1e-14})
            steepest = max(steepest, -float(refined.fun))
        if not steepest > 0.0:
            raise DomainError("initial profile has no compressive region")
        return 1.0 / steepest

    def t_star(self, problem: BurgersProblem) -> float:
        return self.blowup_time(problem.copy(eps=0.0))

    def burgers_perturbed_blowup(self, problem: BurgersProblem, eps: float | None = None) -> float:
        return self.blowup_time(problem if eps is None else problem.copy(eps=eps))

    def characteristic_blowup_time(self, problem: BurgersProblem, candidates: int = 3) -> float:
        """Earliest time a characteristic slope w' = -w^2 reaches the blow-up level, over the steepest feet."""
        x = np.linspace(*problem.domain, SAMPLES)
        slope = problem.initial_prime(x)
        feet = x[np.argsort(slope)[:candidates]]
        horizon = 2.0 * self.blowup_time(problem)

        def event(_t: float, w: np.ndarray) -> float:
            return w[0] - SLOPE_BLOWUP

        event.terminal = True
        event.direction = -1

        times = []
        for foot in feet:
            w0 = float(problem.initial_prime(np.array(foot)))
            solution = solve_ivp(lambda _t, w: -w ** 2, (0.0, horizon), [w0], events=event, rtol=1e-10,
                                 atol=1e-10)
            if solution.t_events[0].size:
                times.append(float(solution.t_events[0][0]))
        if not times:
            raise DomainError(f"no characteristic blew up before t={horizon!r}")
        return min(times)

    def burgers_eval(self, problem: BurgersProblem, t: float, x: float | np.ndarray) -> np.ndarray:
        """u(t, x) = u0(x - t u(t, x)) through bracketed roots of x0 + t u0(x0) = x."""
        x = np.asarray(x, dtype=float)
        if t < 0.0:
            raise DomainError(f"negative time {t!r}")
        t_blowup = self.blowup_time(problem)
        if t >= t_blowup:
            raise DomainError(f"t={t!r} is past the blow-up time {t_blowup!r}")
        if t == 0.0:
            return problem.initial(x)

        reach = t * (problem.u0_bound + problem.eps ** 4) * (1.0 + 1e-12) + 1e-15
        result = find_root(lambda x0, target: x0 + t * problem.initial(x0) - target, (x - reach, x + reach),
                           args=(x,))
        if not np.all(result.success):
            raise DomainError(f"characteristic foot not bracketed at t={t!r}")
        return problem.initial(result.x)

    def perturbation_growth(self, problem: BurgersProblem, t: float, eps: float | None = None,
                            p: float | None = None) -> GrowthRecord:
        """Growth of ||v(t)||_p for v transported by the unperturbed characteristics."""
        eps = problem.eps if eps is None else eps
        p = problem.p if p is None else p
        if not eps > 0.0:
            raise DomainError("perturbation vanishes identically; growth ratio is undefined")
        if p < 1.0:
            raise DomainError(f"norm index must be at least 1, got p={p!r}")
        t_star = self.t_star(problem)
        if not 0.0 <= t < t_star:
            raise DomainError(f"t={t!r} must lie in [0, {t_star!r})")

        bump = problem.copy(eps=eps)
        alpha = np.linspace(-eps, eps, TRANSPORT_POINTS)
        v0 = bump.bump(alpha)
        feet = alpha + t * problem.u0(alpha)
        v = v0 / (1.0 + t * problem.u0_prime(alpha))
        before = simpson(np.abs(v0) ** p, x=alpha) ** (1.0 / p)
        after = simpson(np.abs(v) ** p, x=feet) ** (1.0 / p)
        exponent = 0.5 - 0.5 / p
        return GrowthRecord(t=float(t), eps=float(eps), p=float(p), ratio=float(after / before),
                            bound=float((t_star / (t_star - t)) ** exponent), exponent=exponent)

    def growth_table(self, problem: BurgersProblem, times: Sequence[float], p: float | None = None) -> list[
            GrowthRecord]:
        t_star = self.t_star(problem)
        return [self.perturbation_growth(problem, t, growth_epsilon(t, t_star), p) for t in times]
