"""Pure-Python reference implementations of the compiled kernels.

Used when the extension is unavailable or when ``DNLS_PHASE_PURE_PYTHON``
is set. The Metropolis sweep follows the compiled loop operation by
operation, so chains are identical across backends.
"""

from __future__ import annotations

import math

import numpy as np


def metropolis_sweep(re, im, neighbors, theta, coupling, p, step, mass_cap, mass, noise, uniforms):
    """One sequential sweep over all sites; returns ``(accepted, mass, energy_change)``."""
    half = 0.5 * (p + 1.0)
    total = 0.0
    accepted = 0
    nbr = neighbors.tolist()
    noise_l = noise.tolist()
    unif = uniforms.tolist()
    for x in range(len(re)):
        old_re = float(re[x])
        old_im = float(im[x])
        new_re = old_re + step * noise_l[x][0]
        new_im = old_im + step * noise_l[x][1]
        old_r2 = old_re * old_re + old_im * old_im
        new_r2 = new_re * new_re + new_im * new_im
        new_mass = mass - old_r2 + new_r2
        if new_mass > mass_cap:
            continue
        grad_old = 0.0
        grad_new = 0.0
        for y in nbr[x]:
            ry = float(re[y])
            iy = float(im[y])
            dre = old_re - ry
            dim = old_im - iy
            grad_old = grad_old + dre * dre + dim * dim
            dre = new_re - ry
            dim = new_im - iy
            grad_new = grad_new + dre * dre + dim * dim
        d_energy = (grad_new - grad_old) - coupling * (math.pow(new_r2, half) - math.pow(old_r2, half))
        if d_energy <= 0.0 or unif[x] < math.exp(-theta * d_energy):
            re[x] = new_re
            im[x] = new_im
            mass = new_mass
            total = total + d_energy
            accepted += 1
    return accepted, mass, total


def count_returns(directions, d):
    """Number of returns to the origin (times ``t >= 1``) for each walk."""
    directions = np.asarray(directions)
    walks, steps = directions.shape
    pos = np.zeros((walks, d), dtype=np.int64)
    counts = np.zeros(walks, dtype=np.int64)
    rows = np.arange(walks)
    for t in range(steps):
        code = directions[:, t].astype(np.int64)
        sign = np.where(code < d, 1, -1)
        pos[rows, code % d] += sign
        counts += ~pos.any(axis=1)
    return counts
