"""Piecewise-linear activations, network path-sum expansion, and moment coefficients.

A piecewise-linear function with L pieces is stored as slopes alpha_1..alpha_L,
intercepts beta_1..beta_L and strictly increasing breakpoints a_1..a_{L-1};
piece i is active on the half-open interval (a_{i-1}, a_i], with the first
piece extending to -inf and the last piece open to +inf.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PiecewiseLinear",
    "PieceDistribution",
    "ActivationMoments",
    "MLPNetwork",
    "FitResult",
    "DegenerateMomentsError",
    "UndefinedCorrelationError",
    "make_piecewise",
    "fit_piecewise",
    "eval_piecewise",
    "piece_index",
    "forward_mlp",
    "path_expand",
    "activation_moments",
    "classifier_correlation",
    "relu",
    "hardtanh",
    "identity_activation",
    "five_piece",
    "activation_from_text",
    "activation_to_text",
]

_CONT_RTOL = 1e-12


class DegenerateMomentsError(ValueError):
    """Mean slope sums to zero, so the rescaled moment coefficients blow up."""


class UndefinedCorrelationError(ValueError):
    """A constant label sequence has no defined correlation."""


@dataclass(frozen=True)
class PiecewiseLinear:
    slopes: tuple
    intercepts: tuple
    breakpoints: tuple

    def __post_init__(self):
        slopes = tuple(float(s) for s in self.slopes)
        intercepts = tuple(float(b) for b in self.intercepts)
        breakpoints = tuple(float(a) for a in self.breakpoints)
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "intercepts", intercepts)
        object.__setattr__(self, "breakpoints", breakpoints)
        L = len(slopes)
        if L < 1:
            raise ValueError("need at least one piece")
        if len(intercepts) != L:
            raise ValueError("slopes and intercepts length mismatch")
        if len(breakpoints) != L - 1:
            raise ValueError("need exactly L-1 breakpoints")
        if any(not np.isfinite(v) for v in slopes + intercepts + breakpoints):
            raise ValueError("non-finite piece parameters")
        if any(b2 <= b1 for b1, b2 in zip(breakpoints, breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        for i, a in enumerate(breakpoints):
            left = slopes[i] * a + intercepts[i]
            right = slopes[i + 1] * a + intercepts[i + 1]
            if abs(left - right) > _CONT_RTOL * max(1.0, abs(left), abs(right)):
                raise ValueError(
                    f"discontinuity at breakpoint {a}: {left} vs {right}"
                )

    @property
    def n_pieces(self) -> int:
        return len(self.slopes)


@dataclass(frozen=True)
class PieceDistribution:
    probabilities: tuple

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probabilities)
        object.__setattr__(self, "probabilities", probs)
        if any(p < 0 for p in probs):
            raise ValueError("piece probabilities must be nonnegative")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError("piece probabilities must sum to 1")


@dataclass(frozen=True)
class ActivationMoments:
    rho: float
    rho_l: tuple
    H: int

    def __post_init__(self):
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "rho_l", tuple(float(r) for r in self.rho_l))
        if self.H < 2:
            raise ValueError("H must be at least 2")
        if len(self.rho_l) != self.H:
            raise ValueError("need H rescaled moment coefficients")
        if not np.isfinite(self.rho) or not all(np.isfinite(self.rho_l)):
            raise ValueError("non-finite moments")


@dataclass(frozen=True)
class MLPNetwork:
    weights: tuple
    activation: PiecewiseLinear

    def __post_init__(self):
        ws = tuple(np.asarray(w, dtype=float) for w in self.weights)
        object.__setattr__(self, "weights", ws)
        if not ws:
            raise ValueError("need at least one weight matrix")
        for w in ws:
            if w.ndim != 2 or not np.isfinite(w).all():
                raise ValueError("weights must be finite matrices")
        for w1, w2 in zip(ws, ws[1:]):
            if w2.shape[1] != w1.shape[0]:
                raise ValueError(
                    f"layer shapes do not compose: {w1.shape} then {w2.shape}"
                )

    @property
    def depth(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class FitResult:
    pieces: PiecewiseLinear
    error: float
    within_tol: bool


def make_piecewise(slopes, intercepts, breakpoints) -> PiecewiseLinear:
    """Build a validated PiecewiseLinear.

    If a single intercept is supplied for a multi-piece function, it is taken
    as beta_1 and the remaining intercepts are generated by the continuity
    recurrence beta_{i+1} = beta_i + (alpha_i - alpha_{i+1}) a_i.  Otherwise
    the full intercept set is validated against the continuity constraints.
    """
    slopes = tuple(float(s) for s in np.atleast_1d(np.asarray(slopes, dtype=float)))
    intercepts = tuple(float(b) for b in np.atleast_1d(np.asarray(intercepts, dtype=float)))
    breakpoints = tuple(float(a) for a in np.atleast_1d(np.asarray(breakpoints, dtype=float))) if breakpoints is not None else ()
    L = len(slopes)
    if len(intercepts) == 1 and L > 1:
        chain = [intercepts[0]]
        for i in range(L - 1):
            chain.append(chain[-1] + (slopes[i] - slopes[i + 1]) * breakpoints[i])
        intercepts = tuple(chain)
    return PiecewiseLinear(slopes, intercepts, breakpoints)


def piece_index(p: PiecewiseLinear, x):
    """0-based index of the active piece; intervals are left-open, right-closed."""
    bp = np.asarray(p.breakpoints, dtype=float)
    return np.searchsorted(bp, np.asarray(x, dtype=float), side="left")


def eval_piecewise(p: PiecewiseLinear, x):
    x_arr = np.asarray(x, dtype=float)
    idx = piece_index(p, x_arr)
    alpha = np.asarray(p.slopes)[idx]
    beta = np.asarray(p.intercepts)[idx]
    out = alpha * x_arr + beta
    if np.isscalar(x) or x_arr.ndim == 0:
        return float(out)
    return out


def _hat_design(knots, xs):
    # hat-function basis of the continuous interpolant through the knots,
    # extended linearly beyond the end knots
    k = np.asarray(knots)
    n = len(k)
    cols = []
    for j in range(n):
        v = np.zeros(n)
        v[j] = 1.0
        cols.append(_pwl_from_knot_values(k, v)(xs))
    return np.column_stack(cols)


def _pwl_from_knot_values(knots, values):
    def f(xs):
        # np.interp is flat beyond the ends; extend with the end slopes instead
        ys = np.interp(xs, knots, values)
        lo_slope = (values[1] - values[0]) / (knots[1] - knots[0])
        hi_slope = (values[-1] - values[-2]) / (knots[-1] - knots[-2])
        left = xs < knots[0]
        right = xs > knots[-1]
        ys = np.where(left, values[0] + lo_slope * (xs - knots[0]), ys)
        ys = np.where(right, values[-1] + hi_slope * (xs - knots[-1]), ys)
        return ys
    return f


def _knots_to_pieces(knots, values) -> PiecewiseLinear:
    knots = np.asarray(knots, dtype=float)
    values = np.asarray(values, dtype=float)
    slopes = np.diff(values) / np.diff(knots)
    intercepts = values[:-1] - slopes * knots[:-1]
    # interior knots are the breakpoints; piece count is len(knots) - 1
    bp = knots[1:-1]
    # snap near-equal neighbouring slopes to dodge spurious breakpoints is not
    # done: the caller asked for exactly L pieces
    return make_piecewise(tuple(slopes), (float(intercepts[0]),), tuple(bp))


def fit_piecewise(f, L: int, domain, eps=None, *, n_grid: int = 2001,
                  n_sweeps: int = 8) -> FitResult:
    """Fit an L-piece continuous piecewise-linear approximation to f.

    Uniform interior knots refined by coordinate descent on a sample grid;
    knot values are least-squares fits in the hat basis, with the final sup
    error reported.  eps, when given, only sets the within_tol flag.
    """
    if L < 2:
        raise ValueError("need at least two pieces")
    lo, hi = float(domain[0]), float(domain[1])
    if not lo < hi:
        raise ValueError("empty fitting domain")
    xs = np.linspace(lo, hi, n_grid)
    ys = np.asarray([float(f(x)) for x in xs])

    def sup_error(knots):
        A = _hat_design(knots, xs)
        coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
        return float(np.max(np.abs(A @ coef - ys))), coef

    knots = np.linspace(lo, hi, L + 1)
    best_err, best_coef = sup_error(knots)
    for _ in range(n_sweeps):
        improved = False
        for j in range(1, L):
            lo_j = knots[j - 1]
            hi_j = knots[j + 1]
            cand = xs[(xs > lo_j) & (xs < hi_j)]
            # coarse thinned scan, then a full-resolution scan near the winner
            stride = max(1, len(cand) // 80)
            for stage in range(2):
                pool = cand[::stride] if stage == 0 else cand[
                    np.abs(cand - knots[j]) <= stride * (xs[1] - xs[0])
                ]
                for c in pool:
                    trial = knots.copy()
                    trial[j] = c
                    err, coef = sup_error(trial)
                    if err < best_err - 1e-15:
                        best_err, best_coef, knots = err, coef, trial
                        improved = True
        if not improved:
            break
    pieces = _knots_to_pieces(knots, best_coef)
    within = True if eps is None else bool(best_err <= eps)
    return FitResult(pieces, best_err, within)


def forward_mlp(net: MLPNetwork, x):
    """Exact forward pass; returns (output, iota) with 1-based piece indices."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.weights[0].shape[1],):
        raise ValueError(
            f"input shape {x.shape} does not match first layer {net.weights[0].shape}"
        )
    act = net.activation
    alpha = np.asarray(act.slopes)
    beta = np.asarray(act.intercepts)
    h = x
    iota = []
    for w in net.weights:
        z = w @ h
        idx = piece_index(act, z)
        h = alpha[idx] * z + beta[idx]
        iota.append(idx + 1)
    return h, tuple(iota)


def path_expand(net: MLPNetwork, x):
    """Output via explicit path sums: data paths plus per-layer bias paths.

    Independent of forward_mlp except for the active-piece indices, which are
    read from its iota tensor.  Only viable for small networks.
    """
    x = np.asarray(x, dtype=float)
    widths = [net.weights[0].shape[1]] + [w.shape[0] for w in net.weights]
    n_paths = 1
    for wd in widths:
        n_paths *= wd
    if n_paths > 1_000_000:
        raise ValueError(f"path count {n_paths} exceeds 1e6")
    _, iota = forward_mlp(net, x)
    alpha = np.asarray(net.activation.slopes)
    beta = np.asarray(net.activation.intercepts)
    H = net.depth
    n_out = widths[-1]
    out = np.zeros(n_out)
    # data paths: every chain (k_0, ..., k_H) picks up x, one weight per layer
    # and one slope per visited neuron
    for ks in itertools.product(*(range(wd) for wd in widths)):
        term = x[ks[0]]
        for layer in range(H):
            term *= net.weights[layer][ks[layer + 1], ks[layer]]
            term *= alpha[iota[layer][ks[layer + 1]] - 1]
        out[ks[-1]] += term
    # bias paths: the intercept injected at layer l, neuron k_l, then carried
    # through the remaining layers by weights and slopes
    for layer0 in range(H):
        sub_widths = widths[layer0 + 1:]
        for ks in itertools.product(*(range(wd) for wd in sub_widths)):
            term = beta[iota[layer0][ks[0]] - 1]
            for r in range(len(sub_widths) - 1):
                term *= net.weights[layer0 + 1 + r][ks[r + 1], ks[r]]
                term *= alpha[iota[layer0 + 1 + r][ks[r + 1]] - 1]
            out[ks[-1]] += term
    return out


def activation_moments(p: PiecewiseLinear, d: PieceDistribution, H: int) -> ActivationMoments:
    """Moment coefficients of the random piece selection.

    With each neuron drawing its piece i.i.d. from d, the mean slope product
    over a depth-H path is rho = (sum pi alpha)^H, and the rescaled intercept
    moments are rho_l = (sum pi beta)(sum pi alpha)^(H-l) / rho.
    """
    if H < 2:
        raise ValueError("H must be at least 2")
    if len(d.probabilities) != p.n_pieces:
        raise ValueError("distribution length does not match piece count")
    pi = np.asarray(d.probabilities)
    sa = float(pi @ np.asarray(p.slopes))
    sb = float(pi @ np.asarray(p.intercepts))
    if abs(sa) < 1e-12:
        raise DegenerateMomentsError(
            "mean slope is zero; rescaled moments are undefined"
        )
    rho = sa ** H
    rho_l = tuple(sb * sa ** (H - l) / rho for l in range(1, H + 1))
    return ActivationMoments(rho=rho, rho_l=rho_l, H=H)


def classifier_correlation(z1, z2, c: int) -> float:
    """Pearson correlation of two label sequences from their joint counts."""
    z1 = np.asarray(z1, dtype=np.int64)
    z2 = np.asarray(z2, dtype=np.int64)
    if z1.shape != z2.shape or z1.ndim != 1:
        raise ValueError("label sequences must be equal-length vectors")
    if z1.min() < 1 or z1.max() > c or z2.min() < 1 or z2.max() > c:
        raise ValueError(f"labels must lie in 1..{c}")
    n = len(z1)
    joint = np.bincount((z1 - 1) * c + (z2 - 1), minlength=c * c).reshape(c, c) / n
    vals = np.arange(1, c + 1, dtype=float)
    p1 = joint.sum(axis=1)
    p2 = joint.sum(axis=0)
    m1 = p1 @ vals
    m2 = p2 @ vals
    v1 = p1 @ vals ** 2 - m1 ** 2
    v2 = p2 @ vals ** 2 - m2 ** 2
    if v1 <= 0 or v2 <= 0:
        raise UndefinedCorrelationError("constant classifier has no correlation")
    e12 = vals @ joint @ vals
    return float((e12 - m1 * m2) / np.sqrt(v1 * v2))


def relu() -> PiecewiseLinear:
    return make_piecewise((0.0, 1.0), (0.0, 0.0), (0.0,))


def hardtanh() -> PiecewiseLinear:
    return make_piecewise((0.0, 1.0, 0.0), (-1.0,), (-1.0, 1.0))


def identity_activation() -> PiecewiseLinear:
    return PiecewiseLinear((1.0,), (0.0,), ())


def five_piece() -> PiecewiseLinear:
    # slope profile 0.01, 0.1, 1, 0.3, 0.03 with breakpoints -2, -1, 1, 2 and
    # value 0 at the origin; intercepts follow from continuity
    return make_piecewise(
        (0.01, 0.1, 1.0, 0.3, 0.03),
        (-1.08, -0.9, 0.0, 0.7, 1.24),
        (-2.0, -1.0, 1.0, 2.0),
    )


def activation_from_text(text: str) -> PiecewiseLinear:
    """Parse the plain-text activation format.

    Lines of the form 'slopes=...', 'intercepts=...', 'breakpoints=...' with
    comma-separated decimals; blank lines and '#' comments are ignored.
    """
    fields = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed activation config line: {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip().lower()
        if key not in ("slopes", "intercepts", "breakpoints"):
            raise ValueError(f"unknown activation config key: {key!r}")
        items = [s for s in (t.strip() for t in val.split(",")) if s]
        fields[key] = tuple(float(s) for s in items)
    for needed in ("slopes", "intercepts"):
        if needed not in fields:
            raise ValueError(f"activation config missing {needed}")
    return make_piecewise(
        fields["slopes"], fields["intercepts"], fields.get("breakpoints", ())
    )


def activation_to_text(p: PiecewiseLinear) -> str:
    return (
        "slopes=" + ",".join(repr(v) for v in p.slopes) + "\n"
        "intercepts=" + ",".join(repr(v) for v in p.intercepts) + "\n"
        "breakpoints=" + ",".join(repr(v) for v in p.breakpoints) + "\n"
    )
