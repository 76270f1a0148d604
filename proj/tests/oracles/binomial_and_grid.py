#!/usr/bin/env python3
"""Independent values for the binomial and posterior-grid checks.

Exact binomial tails use rational arithmetic; the posterior mean of the
one-cell collapsed model (7 wins, 3 losses, Normal(0, 100) prior) uses
mpmath quadrature.
"""
from fractions import Fraction
from math import comb

import mpmath


def upper_tail(k: int, n: int) -> Fraction:
    return Fraction(sum(comb(n, i) for i in range(k, n + 1)), 2**n)


def posterior_mean(wins: int, losses: int, prior_sd: float = 100.0) -> float:
    def log_density(b):
        return (wins * -mpmath.log1p(mpmath.exp(-b)) + losses * -mpmath.log1p(mpmath.exp(b))
                - b * b / (2 * prior_sd**2))

    z = mpmath.quad(lambda b: mpmath.exp(log_density(b)), [-60, 0, 60])
    m = mpmath.quad(lambda b: b * mpmath.exp(log_density(b)), [-60, 0, 60])
    return float(m / z)


if __name__ == "__main__":
    for k, n in [(64, 69), (100, 200), (140, 250), (64, 127)]:
        print(f"P[X >= {k}], n = {n}: {float(upper_tail(k, n))!r}")
    print(f"posterior mean, 7 wins / 3 losses: {posterior_mean(7, 3)!r}")
