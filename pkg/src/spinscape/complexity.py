"""Asymptotic critical-point complexity of the surrogate field.

Log-scale growth rates (total and index-resolved), the energy thresholds
bounding the bands of low-index critical points, and the sharp leading-order
prefactor of the expected count below a level, together with the auxiliary
saddle-point machinery used to cross-check the closed forms.

All exponentially large or small quantities are handled as natural logs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

__all__ = [
    "ComplexityParams",
    "ExactTermReport",
    "BandTable",
    "KNConstants",
    "e_infinity",
    "i1",
    "i1_prime",
    "theta_H",
    "theta_Hk",
    "band_thresholds",
    "q_theta",
    "j_func",
    "h_aux",
    "t_of_v_s1",
    "exact_leading_complexity",
    "k_n_constants",
    "selberg_T",
    "log_selberg_Z",
    "psi_saddle_check",
    "theta_curves",
]

_BRACKET_GROWTH = 1.414213562373095
_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ComplexityParams:
    H: int
    u: float
    k: int | None = None

    def __post_init__(self):
        if self.H < 3:
            raise ValueError("H must be at least 3")
        if self.k is not None and self.k < 0:
            raise ValueError("index k must be nonnegative")


@dataclass(frozen=True)
class BandTable:
    H: int
    thresholds: tuple

    def __post_init__(self):
        ts = tuple(float(e) for e in self.thresholds)
        object.__setattr__(self, "thresholds", ts)
        einf = e_infinity(self.H)
        if any(t2 >= t1 for t1, t2 in zip(ts, ts[1:])):
            raise ValueError("thresholds must be strictly decreasing")
        if any(t <= einf for t in ts):
            raise ValueError("thresholds must exceed the bulk edge")


@dataclass(frozen=True)
class ExactTermReport:
    H: int
    N: int
    u: float
    v: float
    h_of_v: float
    T_value: float
    nu_sq: float
    s1: float
    theta_H_u: float
    log_leading: float
    components: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "H": self.H,
            "N": self.N,
            "u": self.u,
            "v": self.v,
            "h_of_v": self.h_of_v,
            "T_value": self.T_value,
            "nu_sq": self.nu_sq,
            "s1": self.s1,
            "theta_H_u": self.theta_H_u,
            "log_leading": self.log_leading,
            "components": dict(self.components),
        }


def e_infinity(H: int) -> float:
    if H < 2:
        raise ValueError("H must be at least 2")
    return 2.0 * math.sqrt((H - 1.0) / H)


def i1(u: float, E: float) -> float:
    """(2/E^2) integral of sqrt(z^2 - E^2) from u up to -E, in closed form."""
    if E <= 0:
        raise ValueError("E must be positive")
    if u > -E + 1e-12:
        raise ValueError("i1 requires u <= -E")
    sq = math.sqrt(max(u * u - E * E, 0.0))
    return -(u / (E * E)) * sq - math.log(-u + sq) + math.log(E)


def i1_prime(u: float, E: float) -> float:
    if E <= 0:
        raise ValueError("E must be positive")
    if u > -E + 1e-12:
        raise ValueError("i1_prime requires u <= -E")
    return -(2.0 / (E * E)) * math.sqrt(max(u * u - E * E, 0.0))


def theta_H(H: int, u: float) -> float:
    """Log-scale growth rate of the expected number of critical points below
    level sqrt(N) u.  Piecewise: below the bulk edge, inside it, and the
    plateau for u >= 0."""
    if H < 3:
        raise ValueError("H must be at least 3")
    einf = e_infinity(H)
    half_log = 0.5 * math.log(H - 1.0)
    quad = (H - 2.0) / (4.0 * (H - 1.0)) * u * u
    if u <= -einf:
        return half_log - quad - i1(u, einf)
    if u <= 0.0:
        return half_log - quad
    return half_log


def theta_Hk(H: int, k: int, u: float) -> float:
    """Index-k analogue: each unit of index pays one more I1 below the edge; a
    flat deficit (H-2)/H above it."""
    if H < 3:
        raise ValueError("H must be at least 3")
    if k < 0:
        raise ValueError("k must be nonnegative")
    einf = e_infinity(H)
    half_log = 0.5 * math.log(H - 1.0)
    if u <= -einf:
        quad = (H - 2.0) / (4.0 * (H - 1.0)) * u * u
        return half_log - quad - (k + 1) * i1(u, einf)
    return half_log - (H - 2.0) / H


def band_thresholds(H: int, k_max: int) -> BandTable:
    """Zero crossings E_k of theta_Hk(H, k, -E) above the bulk edge.

    Bracketed bisection to 1e-10 absolute; the upper bracket grows
    geometrically until a sign change appears and the search refuses to
    extrapolate if none is found.
    """
    if H < 3:
        raise ValueError("H must be at least 3")
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    einf = e_infinity(H)
    out = []
    for k in range(k_max + 1):
        def f(E, _k=k):
            return theta_Hk(H, _k, -E)
        lo = einf
        f_lo = f(lo)
        if f_lo <= 0:
            raise RuntimeError("no positive value at the bulk edge")
        hi = einf * _BRACKET_GROWTH
        n_grow = 0
        while f(hi) > 0:
            hi *= _BRACKET_GROWTH
            n_grow += 1
            if n_grow > 200:
                raise RuntimeError(f"no sign change found for k={k}")
        while hi - lo > 1e-10:
            mid = 0.5 * (lo + hi)
            if f(mid) > 0:
                lo = mid
            else:
                hi = mid
        out.append(0.5 * (lo + hi))
    return BandTable(H=H, thresholds=tuple(out))


def q_theta(theta_p: float, paper_literal: bool = False) -> float:
    """Angular weight in the rank-2 correction.  The corrected coefficient
    makes it identically 1; the literal flag restores the printed 4 cos(4t)
    variant for comparison."""
    c4 = 4.0 if paper_literal else 1.0
    return 0.5 * math.sin(2.0 * theta_p) ** 2 + 0.25 * (3.0 + c4 * math.cos(4.0 * theta_p))


def h_aux(v: float) -> float:
    """Edge factor h(v) for v above sqrt(2); two closed forms cross-checked.

    The quarter-power-ratio form and the resolvent form
    2 |sqrt(v^2-2) - v|^{-1/2} |v^2-2|^{-1/4}; the latter is evaluated as
    sqrt(2) (v + sqrt(v^2-2))^{1/2} (v^2-2)^{-1/4}, the same number without
    the cancellation near the branch point and at large v.
    """
    if v <= _SQRT2:
        raise ValueError("h_aux requires v > sqrt(2)")
    d = v - _SQRT2
    s = v + _SQRT2
    r = d / s
    form_a = r ** 0.25 + r ** -0.25
    disc = d * s
    form_b = _SQRT2 * math.sqrt(v + math.sqrt(disc)) * disc ** -0.25
    if abs(form_a - form_b) > 1e-12 * max(1.0, abs(form_a)):
        raise AssertionError(
            f"edge-factor closed forms disagree at v={v}: {form_a} vs {form_b}"
        )
    return form_a


def j_func(x: float, s1: float, theta_p: float,
           paper_literal_q: bool = False) -> float:
    if abs(x) <= _SQRT2:
        raise ValueError("j_func requires |x| > sqrt(2)")
    hv = h_aux(abs(x))
    disc = x * x - 2.0
    q = q_theta(theta_p, paper_literal=paper_literal_q)
    return (1.0
            + 0.25 * s1 * math.sqrt(disc) * hv * hv
            - 0.25 * s1 * s1 * q * abs(disc) * hv * hv)


def t_of_v_s1(v: float, s1: float, n_nodes: int = 64,
              paper_literal_q: bool = False) -> float:
    """Angular average (2/pi) of j(-v, s1, .) over a quarter period."""
    if v <= _SQRT2:
        raise ValueError("t_of_v_s1 requires v > sqrt(2)")
    if s1 == 0.0:
        return 1.0
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    a, b = 0.0, math.pi / 2.0
    t = 0.5 * (b - a) * nodes + 0.5 * (a + b)
    vals = np.array([
        j_func(-v, s1, tp, paper_literal_q=paper_literal_q) for tp in t
    ])
    integral = 0.5 * (b - a) * float(weights @ vals)
    return (2.0 / math.pi) * integral


def exact_leading_complexity(spec, u: float,
                             paper_literal_q: bool = False) -> ExactTermReport:
    """Sharp leading-order log of the expected count of points below level
    sqrt(N) u, for u strictly below the bulk edge.

    Assembled in log space from: the 1/sqrt(2 pi H N) prefactor, the
    mean-gradient penalty exp(-|nu|^2/2H), the rank-2 angular factor T, the
    edge factor h(v), the exponential N theta_H(u), and the level-density
    correction I1 - (u/2) I1' - log(theta_H'(u)).
    """
    from .surrogate import conditional_hessian_params

    H, N = spec.H, spec.N
    if H < 3:
        raise ValueError("H must be at least 3")
    einf = e_infinity(H)
    if u >= -einf:
        raise ValueError("exact leading term requires u < -E_infinity")
    model = conditional_hessian_params(spec)
    nu_sq = float(model.nu @ model.nu)
    s1 = model.s1
    v = -_SQRT2 * u / einf
    hv = h_aux(v)
    tval = t_of_v_s1(v, s1, paper_literal_q=paper_literal_q)
    th = theta_H(H, u)
    i1_val = i1(u, einf)
    i1p = i1_prime(u, einf)
    # slope of theta_H below the edge; positive there, and the printed
    # denominator with the opposite sign convention is its negation
    theta_slope = -(H - 2.0) * u / (2.0 * (H - 1.0)) - i1p
    if theta_slope <= 0.0:
        raise ValueError("level-density denominator not positive; outside regime")
    components = {
        "minus_half_log_N": -0.5 * math.log(N),
        "minus_half_log_2piH": -0.5 * math.log(2.0 * math.pi * H),
        "minus_nu_sq_over_2H": -nu_sq / (2.0 * H),
        "log_T": math.log(tval),
        "log_h_of_v": math.log(hv),
        "N_theta_H": N * th,
        "i1": i1_val,
        "minus_half_u_i1_prime": -0.5 * u * i1p,
        "minus_log_theta_slope": -math.log(theta_slope),
    }
    log_leading = math.fsum(components.values())
    return ExactTermReport(
        H=H, N=N, u=u, v=v, h_of_v=hv, T_value=tval, nu_sq=nu_sq, s1=s1,
        theta_H_u=th, log_leading=log_leading, components=components,
    )


@dataclass(frozen=True)
class KNConstants:
    N: int
    log_k_exact: float
    log_k_asymptotic: float
    log_c_asymptotic: float | None = None


def k_n_constants(N: int, H: int | None = None, nu_sq: float = 0.0) -> KNConstants:
    """Log magnitudes of the determinant-formula constant and, given H, the
    full combined prefactor constant."""
    if N < 3:
        raise ValueError("N must be at least 3")
    log_exact = ((N + 3) * math.log(N) - gammaln(N / 2.0)
                 - gammaln((N - 1) / 2.0) - 1.5 * math.log(math.pi))
    log_asym = (4.5 * math.log(N) + N * math.log(2.0 * math.e)
                - math.log(4.0 * _SQRT2 * math.pi ** 2.5))
    log_c = None
    if H is not None:
        if H < 2:
            raise ValueError("H must be at least 2")
        log_c = (5.0 * math.log(N) - math.log(4.0 * math.pi ** 3 * math.sqrt(H))
                 + 1.5 * (N - 1) * math.log(2.0 * math.e)
                 + 0.5 * N * math.log(H - 1.0) - nu_sq / (2.0 * H))
    return KNConstants(N=N, log_k_exact=log_exact, log_k_asymptotic=log_asym,
                       log_c_asymptotic=log_c)


def log_selberg_Z(N: int) -> float:
    """Log of the GOE normalization Z_N = (1/N!)(2 sqrt2)^N N^{-N(N+1)/4}
    prod_{i<=N} Gamma(1 + i/2)."""
    if N < 1:
        raise ValueError("N must be positive")
    i = np.arange(1, N + 1)
    return float(
        -gammaln(N + 1.0) + N * math.log(2.0 * _SQRT2)
        - 0.25 * N * (N + 1) * math.log(N)
        + np.sum(gammaln(1.0 + i / 2.0))
    )


def selberg_T(N: int, k: int) -> float:
    """N^{-1} log of the k-th tail ratio T_{N,k} = Z_{N-k} / (k! Z_N) times
    ((N-k)/N)^{(N + N(N+1)/2)/2}."""
    if not 0 <= k < N:
        raise ValueError("need 0 <= k < N")
    if k == 0:
        return 0.0
    expo = 0.5 * (N + 0.5 * N * (N + 1))
    log_t = (log_selberg_Z(N - k) - gammaln(k + 1.0) - log_selberg_Z(N)
             + expo * math.log((N - k) / N))
    return log_t / N


def _psi(z: complex, sign: int, x: float) -> complex:
    return 0.5 * z * z + sign * 1j * x * z - 0.5 * np.log(z)


def _psi_prime(z: complex, sign: int, x: float) -> complex:
    return z + sign * 1j * x - 0.5 / z


def _psi_double_prime(z: complex) -> complex:
    return 1.0 + 0.5 / (z * z)


def psi_saddle_check(x: float, H: int = 3, sign=None, branch: str = "upper") -> dict:
    """Diagnostics for the exponent functions psi(z) = z^2/2 +- i x z - log(z)/2.

    For x < -sqrt2 the four branch points +-sqrt2 +- i0 are all seen at angle
    pi along the real axis (cuts run vertically away from the axis), so the
    square root (2 - x^2)^{1/2} continues to +i sqrt(x^2 - 2) on the upper
    sheet; the lower sheet flips its sign.  Verifies that the saddle is
    stationary, the curvature identity psi'' = i sqrt(x^2-2) / z, and the
    four-saddle exponent sum against its closed form.
    """
    if x >= -_SQRT2:
        raise ValueError("psi_saddle_check requires x < -sqrt(2)")
    if H < 3:
        raise ValueError("H must be at least 3")
    root = math.sqrt(x * x - 2.0)
    sq = 1j * root if branch == "upper" else -1j * root
    out = {"x": x, "H": H}
    saddles = {}
    for s in (+1, -1) if sign is None else (sign,):
        z = (-s * 1j * x + sq) / 2.0
        saddles[s] = z
        out[f"saddle_{'plus' if s > 0 else 'minus'}"] = z
        out[f"grad_resid_{'plus' if s > 0 else 'minus'}"] = abs(_psi_prime(z, s, x))
        out[f"curv_resid_{'plus' if s > 0 else 'minus'}"] = abs(
            _psi_double_prime(z) - 1j * root / z
        )
    if sign is None:
        zp, zm = saddles[+1], saddles[-1]
        phi4 = (4.0 * _psi(zp, +1, x) + 2.0 * _psi(zm, -1, x)
                - (H + 1.0) / H * x * x)
        closed = (1.5 * (1.0 + math.log(2.0)) + (H - 2.0) / (2.0 * H) * x * x
                  + i1(x, _SQRT2) - np.log(1j))
        out["phi4"] = phi4
        out["phi4_closed"] = closed
        out["phi4_resid"] = abs(phi4 - closed)
        # composing with theta_H at the matching level must cancel both the
        # quadratic and the I1 terms, leaving only constants
        einf = e_infinity(H)
        u = x * einf / _SQRT2
        comp = theta_H(H, u) + phi4.real
        out["composition_resid"] = abs(
            comp - 0.5 * math.log(H - 1.0) - 1.5 * (1.0 + math.log(2.0))
        )
    return out


def theta_curves(H: int, u_grid, k_max: int = 3):
    """Rows (u, theta_H, theta_H0..theta_Hkmax) for curve emission."""
    rows = []
    for u in u_grid:
        row = [float(u), theta_H(H, float(u))]
        row.extend(theta_Hk(H, k, float(u)) for k in range(k_max + 1))
        rows.append(row)
    return rows
