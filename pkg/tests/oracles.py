"""Independent reference computations used by the solver tests."""

import numpy as np


def chain_energy_tables(h, p, load, values):
    seg = h / p * np.abs((values[None, :] - values[:, None]) / h) ** p
    return seg, load * values


def lattice_minimum(h, p, load, values, fixed=None):
    """Exact minimum of the 1D three-interior-node energy over a value lattice.

    ``E(u) = sum_segments h/p |du/h|^p - load * sum_i u_i`` with ``u_0 = u_4 = 0``.
    The chain structure makes dynamic programming exact: each interior node
    interacts only with its neighbours.  ``values`` is one lattice per node.
    """
    v1, v2, v3 = values
    seg = lambda a, b: h / p * np.abs((b[None, :] - a[:, None]) / h) ** p
    zero = np.zeros(1)
    c1 = seg(zero, v1)[0] - load * v1
    t12 = c1[:, None] + seg(v1, v2)
    arg2 = np.argmin(t12, axis=0)
    c2 = t12[arg2, np.arange(v2.size)] - load * v2
    t23 = c2[:, None] + seg(v2, v3)
    arg3 = np.argmin(t23, axis=0)
    c3 = t23[arg3, np.arange(v3.size)] - load * v3 + seg(v3, zero)[:, 0]
    k3 = int(np.argmin(c3))
    k2 = int(arg3[k3])
    k1 = int(arg2[k2])
    return np.array([v1[k1], v2[k2], v3[k3]]), float(c3[k3])


def brute_force_minimizer(p, load=1.0, lo=-1.0, hi=2.0, step=1e-3):
    """Nested lattice search over ``[lo, hi]^3`` with one refinement pass around the coarse optimum."""
    h = 0.25
    coarse = np.arange(lo, hi + step / 2, step)
    u, _ = lattice_minimum(h, p, load * h, [coarse] * 3)
    fine_step = step / 1000
    fine = [np.arange(c - step, c + step + fine_step / 2, fine_step) for c in u]
    return lattice_minimum(h, p, load * h, fine)
