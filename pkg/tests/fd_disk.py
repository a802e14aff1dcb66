"""Independent polar finite-difference oracle for disk Neumann problems.

Second-order conservative scheme on a node-centered polar grid, used to
cross-check the exact modal solver.  Successive grids nest, so Richardson
extrapolation of a grid pair gives a higher-order reference.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


def solve_polar_fd(gfun, bfun, h, nr, ntheta):
    """Solve -lap u = g on r < h with -du/dr = b at r = h, mean zero.

    ``gfun(r, theta)`` and ``bfun(theta)`` are vectorized callables.
    Returns (r_nodes, theta_nodes, u) with u of shape (nr+1, ntheta);
    row 0 repeats the shared center value.
    """
    dr = h / nr
    dth = 2.0 * np.pi / ntheta
    r = dr * np.arange(nr + 1)
    th = dth * np.arange(ntheta)

    def idx(j, k):
        return 1 + (j - 1) * ntheta + (k % ntheta)

    n = 1 + nr * ntheta
    rows, cols, vals = [], [], []
    rhs = np.zeros(n)

    # Shared center node: five-point polar limit of the Laplacian.
    rows.append(0)
    cols.append(0)
    vals.append(4.0 / dr ** 2)
    for k in range(ntheta):
        rows.append(0)
        cols.append(idx(1, k))
        vals.append(-4.0 / (dr ** 2 * ntheta))
    rhs[0] = np.mean(gfun(np.zeros(ntheta), th))

    b = bfun(th)
    for j in range(1, nr + 1):
        rj = r[j]
        ap = (rj + 0.5 * dr) / (rj * dr ** 2)
        am = (rj - 0.5 * dr) / (rj * dr ** 2)
        at = 1.0 / (rj ** 2 * dth ** 2)
        g = gfun(np.full(ntheta, rj), th)
        for k in range(ntheta):
            row = idx(j, k)
            rows.append(row)
            cols.append(row)
            vals.append(ap + am + 2.0 * at)
            for kk in (k - 1, k + 1):
                rows.append(row)
                cols.append(idx(j, kk))
                vals.append(-at)
            left = 0 if j == 1 else idx(j - 1, k)
            rhs[row] = g[k]
            if j < nr:
                rows.append(row)
                cols.append(idx(j + 1, k))
                vals.append(-ap)
                rows.append(row)
                cols.append(left)
                vals.append(-am)
            else:
                # Ghost elimination: u_r(h) = -b gives
                # u_{nr+1} = u_{nr-1} - 2 dr b.
                rows.append(row)
                cols.append(left)
                vals.append(-(ap + am))
                rhs[row] -= 2.0 * dr * ap * b[k]

    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    # The pure-Neumann system is singular up to constants; pin the center.
    A = A.tolil()
    A[0, :] = 0.0
    A[0, 0] = 1.0
    rhs[0] = 0.0
    u = spla.spsolve(A.tocsr(), rhs)

    grid = np.empty((nr + 1, ntheta))
    grid[0, :] = u[0]
    grid[1:, :] = u[1:].reshape(nr, ntheta)
    return r, th, grid - _disk_mean(grid, r, dr, dth)


def _disk_mean(grid, r, dr, dth):
    w = np.zeros_like(grid)
    w[0, :] = np.pi * (0.5 * dr) ** 2 / grid.shape[1]
    w[1:-1, :] = r[1:-1, None] * dr * dth
    w[-1, :] = r[-1] * 0.5 * dr * dth
    return float((w * grid).sum() / w.sum())


def richardson_pair(gfun, bfun, h, nr, ntheta):
    """Extrapolate the (nr, ntheta) and doubled grids to fourth order.

    Returns (r, th, u_star, rate) on the coarse grid, where ``rate`` is
    the observed convergence order of the pair against the next-coarser
    level, a self-check that the oracle operates in its asymptotic range.
    """
    _, _, u0 = solve_polar_fd(gfun, bfun, h, nr // 2, ntheta // 2)
    r1, t1, u1 = solve_polar_fd(gfun, bfun, h, nr, ntheta)
    _, _, u2 = solve_polar_fd(gfun, bfun, h, 2 * nr, 2 * ntheta)
    e01 = np.max(np.abs(u0 - u1[::2, ::2]))
    e12 = np.max(np.abs(u1 - u2[::2, ::2]))
    rate = float(np.log2(e01 / e12)) if e12 > 0 else np.inf
    u_star = (4.0 * u2[::2, ::2] - u1) / 3.0
    return r1, t1, u_star, rate
