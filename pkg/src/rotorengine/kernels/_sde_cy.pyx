# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled batch kernel for the classical Ito dynamics (default profile).

Mirrors kernels._sde_py.advance_block step for step; see that module for
the contract.  The per-trajectory inner loop keeps all state in registers.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sin, cos, sqrt

cnp.import_array()


def advance_block(cnp.float64_t[::1] phi, cnp.float64_t[::1] lz,
                  cnp.float64_t[::1] n,
                  cnp.float64_t[:, ::1] dw, du_obj,
                  double dt, double inertia, double kappa,
                  double n_hot, double n_cold,
                  bint milstein, bint backaction):
    cdef Py_ssize_t batch = phi.shape[0]
    cdef Py_ssize_t steps = dw.shape[1]
    cdef Py_ssize_t i, j
    cdef double p, l, x, s, fh, fc, fh2, fc2, fsum, keff, nbar
    cdef double w, dlz, dn
    cdef double dphi_coeff = dt / inertia
    cdef double half_sum = 0.5 * (n_hot + n_cold)
    cdef cnp.float64_t[:, ::1] du
    if backaction:
        du = du_obj

    for i in range(batch):
        p = phi[i]
        l = lz[i]
        x = n[i]
        for j in range(steps):
            s = sin(p)
            fh = 0.5 * (1.0 + s)
            fc = 0.5 * (1.0 - s)
            fh2 = fh * fh
            fc2 = fc * fc
            fsum = fh2 + fc2
            keff = kappa * fsum
            nbar = (fh2 * n_hot + fc2 * n_cold) / fsum

            w = dw[i, j]
            dlz = x * s * dt
            if backaction:
                dlz = dlz - cos(p) * sqrt(kappa * x * half_sum) * du[i, j]
            dn = -keff * (x - nbar) * dt + sqrt(2.0 * x * keff * nbar) * w
            if milstein:
                dn = dn + 0.5 * keff * nbar * (w * w - dt)

            p += l * dphi_coeff
            l += dlz
            x += dn
            if x < 0.0:
                x = 0.0
        phi[i] = p
        lz[i] = l
        n[i] = x
