"""Independently coded reference values used by the tests.

Everything here is written from the defining formulas, not by calling the
package, so that agreement between the two is evidence rather than tautology.
"""

from __future__ import annotations

import numpy as np


def exact_quadratic_second_moment(c_gamma: float, alpha: float, sigma2: float,
                                  d: int, n_points) -> dict:
    """E||Z_n - m||^2 for the quadratic objective with gaussian noise.

    With grad g(x, z) = z - x and x ~ N(m, sigma^2 I_d), the error
    e_n = Z_n - m satisfies e_{n+1} = (1 - gamma_n) e_n + gamma_n xi with
    xi ~ N(0, sigma^2 I_d) independent of e_n, so

        a_{n+1} = (1 - gamma_n)^2 a_n + gamma_n^2 sigma^2 d,   a_1 = sigma^2 d

    (the start Z_1 is itself one fresh sample).  Returns {n: a_n}.
    """
    wanted = sorted(int(n) for n in n_points)
    out = {}
    a = sigma2 * d
    n = 1
    last = wanted[-1]
    while n <= last:
        if n in wanted:
            out[n] = a
        g = c_gamma * float(n) ** (-alpha)
        a = (1.0 - g) ** 2 * a + g * g * sigma2 * d
        n += 1
    return out


def reference_asgd(grad, z0, c_gamma: float, alpha: float, samples,
                   checkpoints) -> dict:
    """Plain-python Robbins-Monro loop with running average.

    grad(sample, z) -> gradient vector or None (None = skip the iterate
    update at this step).  Returns {n: (z, zbar)} at the requested n.
    """
    wanted = set(int(n) for n in checkpoints)
    z = np.array(z0, dtype=np.float64)
    zbar = z.copy()
    n = 1
    out = {}
    if n in wanted:
        out[n] = (z.copy(), zbar.copy())
    for x in samples:
        g = grad(x, z)
        if g is not None:
            z = z - c_gamma * float(n) ** (-alpha) * np.asarray(g, dtype=np.float64)
        n += 1
        zbar = zbar + (z - zbar) / n
        if n in wanted:
            out[n] = (z.copy(), zbar.copy())
    return out


def dense_extreme_eigenvalues(mat: np.ndarray) -> tuple:
    """(lambda_max, lambda_min) via the dense symmetric eigensolver."""
    w = np.linalg.eigvalsh(np.asarray(mat, dtype=np.float64))
    return float(w[-1]), float(w[0])


def ols_slope(x: np.ndarray, y: np.ndarray) -> tuple:
    """Slope, intercept and slope standard error of y ~ a + b x by hand."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xm = x - x.mean()
    sxx = float(np.dot(xm, xm))
    b = float(np.dot(xm, y)) / sxx
    a = float(y.mean() - b * x.mean())
    resid = y - (a + b * x)
    dof = x.size - 2
    se = float(np.sqrt(np.dot(resid, resid) / dof / sxx)) if dof > 0 else 0.0
    return b, a, se
