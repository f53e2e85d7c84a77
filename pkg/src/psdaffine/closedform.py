"""Semi-explicit transform exponents for matrix basic affine jump-diffusions.

An MBAJD has gamma = 0, c = 0, mu = 0, constant drift b = 2 p alpha with
p >= (d-1)/2, and Lyapunov linear drift B(x) = beta x + x beta^T. Writing
omega_t(x) = exp(beta t) x exp(beta^T t) for the linear flow and
sigma_t(x) = 2 int_0^t omega_s(x) ds, the exponents are

    psi(t, u) = exp(beta^T t) (I + u sigma_t(alpha))^{-1} u exp(beta t)
    phi(t, u) = p log det(I + u sigma_t(alpha))
                - int_0^t sum_k w_k (exp(-tr(psi(s, u) xi_k)) - 1) ds

The psi expression is the singular-safe form of
exp(beta^T t)(u^{-1} + sigma)^{-1} exp(beta t): both agree whenever u is
invertible, but the former also covers u on the boundary of the tube. The
log-determinant is evaluated on a continuous branch followed from t = 0
(where the determinant is 1), never on the principal branch, and the jump
term is a time integral even though the phi rate only shows the instantaneous
sum. No invertibility of alpha is needed anywhere in this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import AtomicMeasure, AffineParams, LyapunovDrift, jump_transform_m
from .symcore import (
    DomainError,
    check_square,
    check_sym,
    frobenius,
    is_psd,
    mat_exp,
    symmetrize,
    trace_inner,
)


class BranchTrackingError(RuntimeError):
    """The log-determinant argument could not be followed continuously."""


@dataclass(frozen=True)
class MBAJDSpec:
    d: int
    alpha: np.ndarray
    beta: np.ndarray
    p: float
    m: AtomicMeasure = field(default_factory=AtomicMeasure)

    def __post_init__(self):
        d = int(self.d)
        alpha = np.asarray(self.alpha, dtype=float)
        check_sym(alpha, "alpha", tol=1e-12 * max(1.0, float(np.abs(alpha).max())))
        alpha = symmetrize(alpha)
        beta = check_square(np.asarray(self.beta, dtype=float), "beta").copy()
        if alpha.shape != (d, d) or beta.shape != (d, d):
            raise DomainError("alpha and beta must be d x d")
        if not is_psd(alpha):
            raise DomainError("alpha must be PSD")
        p = float(self.p)
        if p < (d - 1) / 2.0:
            raise DomainError(f"p must be at least (d-1)/2 = {(d - 1) / 2}")
        for xi, _ in self.m.atoms:
            if xi.shape != (d, d):
                raise DomainError("m atom dimension does not match d")
        alpha.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "p", p)

    def to_affine_params(self) -> AffineParams:
        """The same model as a general parameter set (b = 2 p alpha)."""
        return AffineParams(d=self.d, alpha=self.alpha, b=2.0 * self.p * self.alpha,
                            drift=LyapunovDrift(beta=self.beta), c=0.0, m=self.m)


def flow_omega(beta: np.ndarray, x: np.ndarray, t: float) -> np.ndarray:
    """omega_t(x) = exp(beta t) x exp(beta^T t); PSD-preserving for PSD x."""
    e = mat_exp(np.asarray(beta, dtype=float) * t)
    return symmetrize(e @ np.asarray(x, dtype=float) @ e.T)


def _adaptive_simpson(f, a: float, b: float, tol: float, max_depth: int = 30):
    """Adaptive Simpson quadrature for scalar/array, real/complex integrands.

    Error control is the standard |S_fine - S_coarse| / 15 estimate, taken
    as a max over components for array-valued integrands.
    """
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)

    def simpson(h6, f0, f1, f2):
        return h6 * (f0 + 4.0 * f1 + f2)

    def recurse(a, b, fa, fm, fb, whole, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson((m - a) / 6.0, fa, flm, fm)
        right = simpson((b - m) / 6.0, fm, frm, fb)
        err = np.max(np.abs(left + right - whole)) / 15.0
        if err <= tol or depth >= max_depth:
            if depth >= max_depth and err > tol:
                raise RuntimeError("adaptive quadrature failed to converge")
            return left + right + (left + right - whole) / 15.0
        return (recurse(a, m, fa, flm, fm, left, depth + 1)
                + recurse(m, b, fm, frm, fb, right, depth + 1))

    whole = simpson((b - a) / 6.0, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, 0)


# cross-check registry: (beta bytes, alpha bytes) -> largest t validated
_SIGMA_CHECKED: dict[tuple[bytes, bytes], float] = {}


def _sigma_vanloan(beta: np.ndarray, alpha: np.ndarray, t: float) -> np.ndarray:
    d = beta.shape[0]
    blk = np.zeros((2 * d, 2 * d))
    blk[:d, :d] = beta
    blk[:d, d:] = 2.0 * alpha
    blk[d:, d:] = -beta.T
    e = mat_exp(blk * t)
    # top-right block is int_0^t e^{beta (t-s)} 2 alpha e^{-beta^T s} ds;
    # multiplying by e^{beta^T t} (the transpose of the top-left block)
    # turns it into 2 int_0^t e^{beta r} alpha e^{beta^T r} dr
    return symmetrize(e[:d, d:] @ e[:d, :d].T)


def sigma_integral(beta: np.ndarray, alpha: np.ndarray, t: float,
                   check: bool | str = True) -> np.ndarray:
    """sigma_t(alpha) = 2 int_0^t omega_s(alpha) ds, computed by a block
    matrix exponential and cross-checked against adaptive quadrature.

    check=True reruns the quadrature witness on every call; check="auto"
    reruns it only the first time a given (beta, alpha) is seen at a horizon
    at least this large (the block construction has no t-dependent failure
    modes beyond what one horizon exposes, so this catches sign and
    transpose mistakes at a fraction of the cost). A discrepancy above 1e-8
    raises immediately.
    """
    beta = check_square(np.asarray(beta, dtype=float), "beta")
    alpha = check_sym(np.asarray(alpha, dtype=float), "alpha")
    if t < 0:
        raise DomainError("sigma_integral requires t >= 0")
    if t == 0:
        return np.zeros_like(alpha)
    sig = _sigma_vanloan(beta, alpha, t)
    run_check = bool(check)
    if check == "auto":
        key = (beta.tobytes(), alpha.tobytes())
        run_check = _SIGMA_CHECKED.get(key, 0.0) < t
        if run_check:
            _SIGMA_CHECKED[key] = t
    if run_check:
        quad = _adaptive_simpson(lambda s: 2.0 * flow_omega(beta, alpha, s), 0.0, t,
                                 tol=1e-11 * max(1.0, frobenius(alpha)))
        disc = frobenius(sig - quad)
        if disc > 1e-8 * max(1.0, frobenius(sig)):
            raise RuntimeError(
                f"sigma_integral cross-check failed: block-exponential and "
                f"quadrature differ by {disc:.3e}")
    return sig


def mbajd_psi(spec: MBAJDSpec, u: np.ndarray, t: float,
              _sigma_check: bool | str = True) -> np.ndarray:
    """psi(t, u) in the singular-safe form exp(beta^T t)(I + u sigma)^{-1} u exp(beta t)."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (spec.d, spec.d):
        raise DomainError("u must be d x d")
    if t == 0:
        return u.copy()
    sig = sigma_integral(spec.beta, spec.alpha, t, check=_sigma_check)
    a = np.eye(spec.d) + u @ sig
    if np.linalg.cond(a) > 1e12:
        raise DomainError(f"I + u sigma_t(alpha) is near singular at t = {t}")
    e = mat_exp(spec.beta * t)
    psi = e.T @ np.linalg.solve(a, u) @ e
    return (psi + psi.T) / 2.0  # symmetric in exact arithmetic


def _logdet_continuous(spec: MBAJDSpec, u: np.ndarray, t: float) -> complex:
    """log det(I + u sigma_s(alpha)) at s = t on the branch that is 0 at s = 0.

    The argument of the determinant is unwrapped along a refining s-grid;
    refinement stops once consecutive argument increments are small, and a
    persistent jump of pi or more between refinement levels is an error.
    """
    eye = np.eye(spec.d)
    # prime the cross-check at the full horizon so the grid sweep skips it
    sigma_integral(spec.beta, spec.alpha, t, check="auto")

    def dets(grid):
        vals = np.empty(len(grid), dtype=complex)
        for i, s in enumerate(grid):
            sig = sigma_integral(spec.beta, spec.alpha, float(s), check="auto")
            vals[i] = np.linalg.det(eye + u @ sig)
        return vals

    n = 16
    prev_total = None
    while n <= 2 ** 14:
        grid = np.linspace(0.0, t, n + 1)
        z = dets(grid)
        if np.min(np.abs(z)) < 1e-300:
            raise BranchTrackingError("determinant vanished along the trajectory")
        args = np.unwrap(np.angle(z))
        max_jump = np.max(np.abs(np.diff(args))) if n > 0 else 0.0
        total = args[-1] - args[0]  # angle(z[0]) = 0 since det = 1 at s = 0
        if max_jump < np.pi / 4 and prev_total is not None and \
                abs(total - prev_total) < 1e-9 * (1.0 + abs(total)):
            return complex(np.log(abs(z[-1])), total)
        prev_total = total
        n *= 2
    raise BranchTrackingError(
        "argument increments above pi persisted under grid refinement")


def mbajd_phi(spec: MBAJDSpec, u: np.ndarray, t: float) -> complex:
    """phi(t, u) = p log det(I + u sigma_t(alpha)) plus the time-integrated
    jump contribution."""
    u = np.asarray(u, dtype=complex)
    if t == 0:
        return 0.0 + 0.0j
    val = spec.p * _logdet_continuous(spec, u, t)
    if not spec.m.is_empty:
        def integrand(s):
            if s == 0.0:
                psi_s = u
            else:
                psi_s = mbajd_psi(spec, u, s, _sigma_check="auto")
            return -jump_transform_m(spec.m, psi_s)

        val = val + _adaptive_simpson(integrand, 0.0, t, tol=1e-10)
    return complex(val)


def mbajd_transform(spec: MBAJDSpec, u: np.ndarray, x: np.ndarray, t: float) -> complex:
    """exp(-phi(t, u) - tr(psi(t, u) x)) for the jump-diffusion of ``spec``."""
    x = np.asarray(x, dtype=float)
    if not is_psd(x):
        raise DomainError("transform requires x PSD")
    if t == 0:
        return complex(np.exp(-trace_inner(np.asarray(u, dtype=complex), x)))
    phi = mbajd_phi(spec, u, t)
    psi = mbajd_psi(spec, u, t)
    return complex(np.exp(-phi - trace_inner(psi, x)))


def wishart_transform(spec: MBAJDSpec, u: np.ndarray, x: np.ndarray, t: float) -> complex:
    """Transform of the jump-free process; requires an empty jump measure."""
    if not spec.m.is_empty:
        raise DomainError("wishart_transform requires an empty jump measure")
    return mbajd_transform(spec, u, x, t)
