"""Derivative-free simplex minimisation (Nelder-Mead)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class NelderMeadOptions:
    max_iter: int = 5000
    xtol: float = 1e-6
    ftol: float = 1e-12
    initial_scale: float = 0.5
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool


def nelder_mead(fun: Callable[[np.ndarray], float], x0, options: NelderMeadOptions = NelderMeadOptions()) -> OptimizeResult:
    """Minimise ``fun`` from ``x0``.

    Converged when the simplex diameter (max-norm distance of any vertex from
    the best one) is below ``xtol`` and the spread of function values is below
    ``ftol``. Hitting ``max_iter`` returns the best vertex with ``converged=False``.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = len(x0)
    f0 = float(fun(x0))
    if not np.isfinite(f0):
        raise ValueError("objective is not finite at the starting point")
    rho, chi, gamma, sigma = options.reflection, options.expansion, options.contraction, options.shrink

    simplex = np.vstack([x0] + [x0 + options.initial_scale * np.eye(n)[i] for i in range(n)])
    fvals = np.empty(n + 1)
    fvals[0] = f0
    for i in range(1, n + 1):
        fvals[i] = fun(simplex[i])
    evals = n + 1

    def converged() -> bool:
        return (
            np.max(np.abs(simplex[1:] - simplex[0])) <= options.xtol
            and fvals[-1] - fvals[0] <= options.ftol
        )

    it = 0
    while True:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        if converged():
            return OptimizeResult(simplex[0].copy(), float(fvals[0]), it, evals, True)
        if it >= options.max_iter:
            return OptimizeResult(simplex[0].copy(), float(fvals[0]), it, evals, False)
        it += 1

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + rho * (centroid - worst)
        fr = fun(xr)
        evals += 1
        if fr < fvals[0]:
            xe = centroid + chi * (xr - centroid)
            fe = fun(xe)
            evals += 1
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-1]:
            xc = centroid + gamma * (xr - centroid)
            fc = fun(xc)
            evals += 1
            if fc <= fr:
                simplex[-1], fvals[-1] = xc, fc
                continue
        else:
            xc = centroid + gamma * (worst - centroid)
            fc = fun(xc)
            evals += 1
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
                continue
        simplex[1:] = simplex[0] + sigma * (simplex[1:] - simplex[0])
        for i in range(1, n + 1):
            fvals[i] = fun(simplex[i])
        evals += n
