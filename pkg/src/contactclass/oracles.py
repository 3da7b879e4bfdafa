"""Brute-force reference implementations used to cross-check closed forms.

These enumerate every outcome sequence explicitly and are only practical
for a dozen or so decisions.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable

import numpy as np
from scipy.special import i0e

MAX_ENUMERATION = 16


def _check_size(k):
    if k > MAX_ENUMERATION:
        raise ValueError(f"enumeration over 2**{k} outcomes refused")


def enumerate_combined_pmd(x: int, x0: int, pi_md: float) -> float:
    """Sum the probability of every detect/miss sequence of length ``x`` with
    fewer than ``x0`` detections."""
    _check_size(x)
    total = 0.0
    for seq in itertools.product((0, 1), repeat=x):
        hits = sum(seq)
        if hits < x0:
            total += (1.0 - pi_md) ** hits * pi_md ** (x - hits)
    return total


def enumerate_false_alarm(y: int, x0: int, px: Callable[[int], float], pi_md: float, pi_fa: float) -> float:
    """False verdict probability after ``y`` radio contacts, by enumeration.

    The first ``x`` contacts lie in the contact zone (each detected with
    probability ``1 - pi_md``), the rest outside (each wrongly flagged with
    probability ``pi_fa``). A false alarm needs fewer than ``x0`` true
    detections but at least ``x0`` flags in total.
    """
    _check_size(y)
    total = 0.0
    for x in range(0, y + 1):
        w = px(x)
        if w == 0.0:
            continue
        acc = 0.0
        for seq in itertools.product((0, 1), repeat=y):
            m = sum(seq[:x])
            q = sum(seq[x:])
            if m < x0 and m + q >= x0:
                acc += (
                    (1.0 - pi_md) ** m
                    * pi_md ** (x - m)
                    * pi_fa**q
                    * (1.0 - pi_fa) ** (y - x - q)
                )
        total += w * acc
    return total


def series_bessel_i(order: int, x: float, terms: int = 400) -> float:
    """``I_order(x)`` from its power series, summed until terms vanish."""
    half = 0.5 * x
    total = 0.0
    for k in range(terms):
        if half == 0.0:
            term = 1.0 if (k == 0 and order == 0) else 0.0
        else:
            term = math.exp((2 * k + order) * math.log(half) - math.lgamma(k + 1) - math.lgamma(k + order + 1))
        total += term
        if k > half and term < 1e-17 * total:
            break
    return total


def triple_loop_spreading(K, p_i, pmf, x0, x_max, pi_md) -> float:
    """``K p_i sum_x p_X(x) sum_{m<x0} C(x,m) (1-pi)^m pi^(x-m)`` with
    explicit loops and exact binomial coefficients."""
    total = 0.0
    for x in range(x0, x_max + 1):
        w = pmf[x] if x < len(pmf) else 0.0
        for m in range(0, x0):
            total += w * math.comb(x, m) * (1.0 - pi_md) ** m * pi_md ** (x - m)
    return K * p_i * total


def rice_quadrature_marcum(a: float, b: float) -> float:
    """``Q_1(a, b)`` by integrating the Rice density over [b, inf) with
    composite Simpson on a fine grid; independent of the library routine."""
    upper = max(a, b) + 40.0
    if b >= upper:
        return 0.0
    n = 20001
    r = np.linspace(b, upper, n)
    # r exp(-(r^2+a^2)/2) I0(a r) = r exp(-(r-a)^2/2) * [exp(-a r) I0(a r)]
    f = r * np.exp(-0.5 * (r - a) ** 2) * i0e(a * r)
    h = (upper - b) / (n - 1)
    return float(h / 3.0 * (f[0] + f[-1] + 4.0 * f[1:-1:2].sum() + 2.0 * f[2:-1:2].sum()))
