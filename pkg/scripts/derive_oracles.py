"""Independent reference values for the Figure 1 scenario.

Does not import the package: hazards, integrals and ODEs are recomputed here
with scipy.integrate (quad and DOP853) and a 2x2 adjugate inverse. The printed
dictionary is frozen into tests/oracle_values.py.
"""

import math
import pprint

import numpy as np
from scipy.integrate import quad, solve_ivp

T, GAMMA, RHO, R = 40.0, -3.0, 0.03, 0.04
I0, GROWTH, LOADING = 50_000.0, 0.03, 1.05
MU = np.array([0.07, 0.11])
SIGMA = np.array([[0.19, 0.15], [0.17, 0.21]])
QUAD = dict(epsabs=0.0, epsrel=1e-13, limit=200)


def lam(t):
    return 0.001 + math.exp(-9.5 + 0.1 * t)


def eta(t):
    return LOADING * lam(t)


def income(t):
    return I0 * math.exp(GROWTH * t)


def cum_hazard(t, s):
    return quad(lam, t, s, **QUAD)[0]


alpha = MU - R
cov = SIGMA @ SIGMA.T
adj = np.array([[cov[1, 1], -cov[0, 1]], [-cov[1, 0], cov[0, 0]]])
xi = adj / (cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0])
xa = xi @ alpha
Sigma_half = 0.5 * alpha @ xa
loadings = SIGMA.T @ xa


def H(t, insured=True):
    g = GAMMA
    disc = R + (eta(t) if insured else 0.0)
    return (lam(t) + RHO) / (1 - g) - g * Sigma_half / (1 - g) ** 2 - g / (1 - g) * disc


def K(t, insured=True):
    g = GAMMA
    return lam(t) ** (1 / (1 - g)) / eta(t) ** (g / (1 - g)) + 1.0 if insured else 1.0


def ivp(t0, insured=True):
    """b and e on [t0, T] by DOP853, integrating backward from T."""

    def rhs(t, y):
        b, e = y
        disc = R + (eta(t) if insured else 0.0)
        return [disc * b - income(t), H(t, insured) * e - K(t, insured)]

    sol = solve_ivp(rhs, (T, t0), [0.0, 1.0], method="DOP853", rtol=1e-13, atol=1e-12)
    return sol.y[0, -1], sol.y[1, -1]


def b_quad(t, insured=True):
    disc = (lambda s: R * (s - t) + (LOADING * cum_hazard(t, s) if insured else 0.0))
    return quad(lambda s: income(s) * math.exp(-disc(s)), t, T, **QUAD)[0]


def e_quad(t, insured=True):
    def int_h(a, b):
        return quad(lambda u: H(u, insured), a, b, **QUAD)[0]

    tail = math.exp(-int_h(t, T))
    body = quad(lambda s: K(s, insured) * math.exp(-int_h(t, s)), t, T, **QUAD)[0]
    return tail + body


def main():
    out = {}
    out["xi_alpha"] = xa.tolist()
    out["Sigma"] = float(Sigma_half)
    out["sigma_T_xi_alpha"] = loadings.tolist()
    out["cum_hazard_0_40"] = cum_hazard(0, 40)
    out["survival_40_0"] = math.exp(-cum_hazard(0, 40))
    out["density_20_0"] = lam(20) * math.exp(-cum_hazard(0, 20))
    for t in (0.0, 20.0):
        bq, eq = b_quad(t), e_quad(t)
        bi, ei = ivp(t)
        assert abs(bq - bi) <= 1e-9 * abs(bq) and abs(eq - ei) <= 1e-9 * abs(eq), (t, bq, bi, eq, ei)
        out[f"b_{t:g}"] = bq
        out[f"e_{t:g}"] = eq
        out[f"b0_{t:g}"] = b_quad(t, insured=False)
        out[f"e0_{t:g}"] = e_quad(t, insured=False)
        out[f"D_{t:g}"] = (lam(t) / eta(t)) ** (1 / (1 - GAMMA)) / eq
        out[f"a_{t:g}"] = math.exp(-RHO * t) * eq ** (1 - GAMMA)
    out["H_20"] = H(20.0)
    out["K_20"] = K(20.0)
    out["D_40"] = (1 / LOADING) ** (1 / (1 - GAMMA))

    def at(t, x):
        b, e, D, a = out[f"b_{t:g}"], out[f"e_{t:g}"], out[f"D_{t:g}"], out[f"a_{t:g}"]
        F = x + b
        return {
            "V": a / GAMMA * F**GAMMA,
            "c": F / e,
            "p": eta(t) * ((D - 1) * x + D * b),
            "theta": (F * xa / (x * (1 - GAMMA))).tolist(),
        }

    out["at_0_1e5"] = at(0.0, 1e5)
    out["at_20_1e6"] = at(20.0, 1e6)
    out["at_0_1e4"] = at(0.0, 1e4)
    pprint.pprint(out, width=110, sort_dicts=True)


if __name__ == "__main__":
    main()
