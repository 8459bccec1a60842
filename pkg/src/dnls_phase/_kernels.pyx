# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled inner loops: single-site Metropolis sweeps and random-walk return counts.

The arithmetic mirrors ``_kernels_py`` operation by operation so that both
backends produce identical chains for identical random inputs.
"""

from libc.math cimport exp, pow

import numpy as np


def metropolis_sweep(
    double[::1] re,
    double[::1] im,
    int[:, ::1] neighbors,
    double theta,
    double coupling,
    double p,
    double step,
    double mass_cap,
    double mass,
    double[:, ::1] noise,
    double[::1] uniforms,
):
    """One sequential sweep over all sites; returns ``(accepted, mass, energy_change)``.

    ``coupling`` multiplies ``|psi_x|^(p+1)`` in the energy with a minus sign.
    Proposals ``psi_x + step * (noise[x, 0] + i noise[x, 1])`` that push the
    total mass above ``mass_cap`` are rejected; the rest are accepted with
    probability ``min(1, exp(-theta * dE))``.
    """
    cdef Py_ssize_t n_sites = re.shape[0]
    cdef Py_ssize_t slots = neighbors.shape[1]
    cdef Py_ssize_t x, s, y
    cdef double half = 0.5 * (p + 1.0)
    cdef double old_re, old_im, new_re, new_im, old_r2, new_r2, new_mass
    cdef double grad_old, grad_new, dre, dim, d_energy, total = 0.0
    cdef long accepted = 0
    for x in range(n_sites):
        old_re = re[x]
        old_im = im[x]
        new_re = old_re + step * noise[x, 0]
        new_im = old_im + step * noise[x, 1]
        old_r2 = old_re * old_re + old_im * old_im
        new_r2 = new_re * new_re + new_im * new_im
        new_mass = mass - old_r2 + new_r2
        if new_mass > mass_cap:
            continue
        grad_old = 0.0
        grad_new = 0.0
        for s in range(slots):
            y = neighbors[x, s]
            dre = old_re - re[y]
            dim = old_im - im[y]
            grad_old = grad_old + dre * dre + dim * dim
            dre = new_re - re[y]
            dim = new_im - im[y]
            grad_new = grad_new + dre * dre + dim * dim
        d_energy = (grad_new - grad_old) - coupling * (pow(new_r2, half) - pow(old_r2, half))
        if d_energy <= 0.0 or uniforms[x] < exp(-theta * d_energy):
            re[x] = new_re
            im[x] = new_im
            mass = new_mass
            total = total + d_energy
            accepted += 1
    return accepted, mass, total


def count_returns(signed char[:, ::1] directions, int d):
    """Number of returns to the origin (times ``t >= 1``) for each walk.

    ``directions[w, t]`` in ``0 .. 2d-1`` encodes the step ``+e_{k}`` for
    ``k < d`` and ``-e_{k-d}`` otherwise.
    """
    cdef Py_ssize_t walks = directions.shape[0]
    cdef Py_ssize_t steps = directions.shape[1]
    cdef Py_ssize_t w, t, k
    cdef long pos[16]
    cdef int code, zero
    out = np.zeros(walks, dtype=np.int64)
    cdef long long[::1] counts = out
    if d > 16:
        raise ValueError("dimension above 16 is not supported")
    for w in range(walks):
        for k in range(d):
            pos[k] = 0
        for t in range(steps):
            code = directions[w, t]
            if code < d:
                pos[code] += 1
            else:
                pos[code - d] -= 1
            zero = 1
            for k in range(d):
                if pos[k] != 0:
                    zero = 0
                    break
            if zero:
                counts[w] += 1
    return out
