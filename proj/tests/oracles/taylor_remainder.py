#!/usr/bin/env python3
"""Brute-force Taylor remainder for near-affine homography flows.

For each homography H with |h7|, |h8| <= 0.01 the flow f(p) = H(p) - p is
compared, pixel by pixel on the 80x144 normalized grid, with its second-order
Taylor polynomial T2 about the origin. T2 f lies in the span of the twelve
monomial flows, so ||f - T2 f|| / ||f|| bounds the relative residual of any
least-squares fit onto that span.

T2 is built here by numerical differentiation of the exact map (central
differences in extended precision), independently of any closed form.

Writes tests/oracles/taylor_cases.inc: one C++ initializer row per case,
{h1..h8, bound}.
"""
import pathlib

import mpmath as mp
import numpy as np

HEIGHT, WIDTH = 80, 144
CASES = 100
SEED = 20240611
PERSPECTIVE = 0.01

mp.mp.dps = 40


def grid():
    x = np.linspace(-1.0, 1.0, WIDTH)
    y = np.linspace(-1.0, 1.0, HEIGHT)
    return np.meshgrid(x, y)


def taylor2_coefficients(h):
    """Second-order Taylor coefficients of (u, v) at the origin via mpmath."""
    h = [mp.mpf(float(v)) for v in h]

    def comp(k):
        def fn(x, y):
            w = h[6] * x + h[7] * y + 1
            return (h[3 * k] * x + h[3 * k + 1] * y + h[3 * k + 2]) / w
        return fn

    out = []
    for k in range(2):
        fn = comp(k)
        d = lambda nx, ny: mp.diff(fn, (0, 0), (nx, ny))
        # basis order: 1, x, y, xy, x^2, y^2
        out.append([d(0, 0), d(1, 0), d(0, 1), d(1, 1), d(2, 0) / 2, d(0, 2) / 2])
    return [[float(c) for c in row] for row in out]


def relative_remainder(h):
    X, Y = grid()
    w = h[6] * X + h[7] * Y + 1.0
    u = (h[0] * X + h[1] * Y + h[2]) / w - X
    v = (h[3] * X + h[4] * Y + h[5]) / w - Y
    cu, cv = taylor2_coefficients(h)
    mono = [np.ones_like(X), X, Y, X * Y, X * X, Y * Y]
    tu = sum(c * m for c, m in zip(cu, mono)) - X
    tv = sum(c * m for c, m in zip(cv, mono)) - Y
    num = np.sqrt(np.sum((u - tu) ** 2) + np.sum((v - tv) ** 2))
    den = np.sqrt(np.sum(u ** 2) + np.sum(v ** 2))
    return num / den


def main():
    rng = np.random.default_rng(SEED)
    rows = []
    for _ in range(CASES):
        h = np.empty(8)
        h[[0, 4]] = 1.0 + rng.uniform(-0.2, 0.2, 2)
        h[[1, 2, 3, 5]] = rng.uniform(-0.2, 0.2, 4)
        h[6:8] = rng.uniform(-PERSPECTIVE, PERSPECTIVE, 2)
        rows.append((h, relative_remainder(h)))
    out = pathlib.Path(__file__).with_name("taylor_cases.inc")
    with out.open("w") as f:
        f.write("// Generated by taylor_remainder.py; do not edit.\n")
        f.write("// {h1, h2, h3, h4, h5, h6, h7, h8, relative remainder bound}\n")
        for h, bound in rows:
            vals = ", ".join(repr(float(v)) for v in h) + ", " + repr(float(bound))
            f.write("{" + vals + "},\n")
    bounds = np.array([b for _, b in rows])
    print(f"cases={CASES} max_bound={bounds.max():.6e} min_bound={bounds.min():.6e}")


if __name__ == "__main__":
    main()
