"""Small numeric helpers shared by several modules."""

import numpy as np


def smoothstep(x, a=0.0, b=1.0):
    """C2 quintic ramp: 0 for x <= a, 1 for x >= b."""
    s = np.clip((np.asarray(x, float) - a) / (b - a), 0.0, 1.0)
    return s * s * s * (s * (6 * s - 15) + 10)


def smoothstep_d(x, a=0.0, b=1.0):
    """Derivative of :func:`smoothstep` with respect to x."""
    s = np.clip((np.asarray(x, float) - a) / (b - a), 0.0, 1.0)
    return 30 * s * s * (s - 1) ** 2 / (b - a)


def loglog_fit(x, y):
    """Least-squares slope of log y against log x.

    Returns (slope, intercept, rms residual).
    """
    lx = np.log(np.asarray(x, float))
    ly = np.log(np.asarray(y, float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid ** 2)))
