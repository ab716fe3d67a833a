"""Independent reference solutions used by the tests.

None of these share code with the package: they integrate initial value
problems with scipy and root-find on the shooting parameter.
"""
import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq


def shoot_linear(k, left, right, t_eval):
    """phi'' + k phi = 0 on [-1, 1], phi(-1) = left, phi(1) = right, by superposing two IVPs."""

    def run(phi0, dphi0):
        sol = solve_ivp(lambda t, y: [y[1], -k * y[0]], (-1.0, 1.0), [phi0, dphi0], t_eval=t_eval,
                        rtol=1e-13, atol=1e-15, method="DOP853")
        return sol.y[0]

    base = run(left, 0.0)
    unit = run(0.0, 1.0)
    slope = (right - base[-1]) / unit[-1]
    return base + slope * unit


def liouville_shooting(L, c, d, B):
    """Even solution of -u'' = c exp(-d u) on [-L, L] with u(+-L) = -B; returns u(x) for |x| <= L."""

    def end_value(s):
        sol = solve_ivp(lambda t, y: [y[1], -c * np.exp(-d * y[0])], (0.0, L), [s, 0.0],
                        rtol=1e-13, atol=1e-14, method="DOP853")
        return sol.y[0, -1] + B

    lo, hi = -B, -B + 1.0
    while end_value(hi) < 0:
        lo, hi = hi, hi + 1.0
    s = brentq(end_value, lo, hi, xtol=1e-15, rtol=1e-15)
    sol = solve_ivp(lambda t, y: [y[1], -c * np.exp(-d * y[0])], (0.0, L), [s, 0.0], dense_output=True,
                    rtol=1e-13, atol=1e-14, method="DOP853")
    return lambda x: sol.sol(np.abs(np.asarray(x, dtype=float)))[0]


def sphere_point(theta, phi):
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
