"""Pure-numpy batch kernel for the classical Ito dynamics (default profile).

State variables per trajectory: unwrapped angle phi, angular momentum lz,
mode intensity n.  One call advances every trajectory in the batch through
dw.shape[1] Euler or Milstein steps, in place.  The intensity is clamped to
n >= 0 after every step (full truncation of the square-root diffusion).
"""

import numpy as np


def advance_block(phi, lz, n, dw, du, dt, inertia, kappa, n_hot, n_cold,
                  milstein, backaction):
    """Advance the batch through one block of steps, in place.

    Parameters
    ----------
    phi, lz, n : float64 arrays, shape (batch,)
        Trajectory states, updated in place.
    dw : float64 array, shape (batch, steps)
        Wiener increments for the intensity noise, variance dt each.
    du : float64 array, shape (batch, steps) or None
        Independent increments for the backaction momentum noise; required
        when backaction is true.
    dt : float
        Time step.
    inertia, kappa, n_hot, n_cold : float
        Engine parameters (hbar = g = 1).
    milstein : bool
        Add the Milstein correction for the multiplicative intensity noise.
    backaction : bool
        Include the momentum backaction noise term.
    """
    steps = dw.shape[1]
    half_sum = 0.5 * (n_hot + n_cold)
    for j in range(steps):
        s = np.sin(phi)
        fh = 0.5 * (1.0 + s)
        fc = 0.5 * (1.0 - s)
        fh2 = fh * fh
        fc2 = fc * fc
        fsum = fh2 + fc2
        keff = kappa * fsum
        nbar = (fh2 * n_hot + fc2 * n_cold) / fsum

        w = dw[:, j]
        dlz = n * s * dt
        if backaction:
            dlz = dlz - np.cos(phi) * np.sqrt(kappa * n * half_sum) * du[:, j]
        dn = -keff * (n - nbar) * dt + np.sqrt(2.0 * n * keff * nbar) * w
        if milstein:
            dn = dn + 0.5 * keff * nbar * (w * w - dt)

        phi += lz * (dt / inertia)
        lz += dlz
        np.maximum(n + dn, 0.0, out=n)
