"""Convex conjugates F*, H*, the perspective integrand and their proximal maps.

Every function is vectorised over ``x`` and the scalar arguments.  Power
specs use closed forms; callback specs fall back to safeguarded 1-D solves.
In 2-D, momenta and fluxes carry their vector index on the last axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from typing import Callable

import numpy as np
from scipy import integrate as _integrate
from scipy import optimize as _optimize

from .errors import DomainError, NumericError

NEWTON_TOL = 1e-12
NEWTON_MAXIT = 50


def monotone_root(fun, lo, hi, x0=None, tol=NEWTON_TOL, maxit=NEWTON_MAXIT, scale=1.0):
    """Vectorised safeguarded Newton for increasing ``fun`` with a sign change on [lo, hi].

    ``fun(x)`` returns ``(value, derivative)``.  Steps leaving the bracket are
    replaced by bisection.  Stops when ``|value| <= tol * (1 + scale)`` or the
    bracket collapses to rounding level; raises ``NumericError`` otherwise.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    lo, hi = np.broadcast_arrays(lo, hi)
    lo, hi = lo.copy(), hi.copy()
    x = 0.5 * (lo + hi) if x0 is None else np.clip(np.broadcast_to(x0, lo.shape).astype(float), lo, hi)
    thresh = tol * (1.0 + np.abs(np.broadcast_to(scale, lo.shape)))
    trace = []
    val = np.zeros_like(x)
    for _ in range(maxit):
        val, der = fun(x)
        res = np.abs(val)
        trace.append(float(np.max(res)) if res.size else 0.0)
        width = hi - lo
        done = (res <= thresh) | (width <= 4e-16 * (1.0 + np.abs(x)))
        if np.all(done):
            return x
        pos = val > 0
        hi = np.where(pos, np.minimum(hi, x), hi)
        lo = np.where(pos, lo, np.maximum(lo, x))
        with np.errstate(divide="ignore", invalid="ignore"):
            step = x - val / der
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        x = np.where(done, x, np.where(bad, 0.5 * (lo + hi), step))
    val, _ = fun(x)
    if np.all((np.abs(val) <= thresh) | (hi - lo <= 4e-16 * (1.0 + np.abs(x)))):
        return x
    raise NumericError(
        f"safeguarded Newton did not converge in {maxit} iterations",
        trace=trace,
        residual=float(np.max(np.abs(val))),
    )


def _norm(spec, v):
    v = np.asarray(v, dtype=float)
    return np.abs(v) if spec.dimension == 1 else np.linalg.norm(v, axis=-1)


def _kstar_const(spec) -> float:
    """Constant c with  sup_p {s p - kappa p^r} = c s^(r')."""
    kappa, r = spec.hamiltonian.kappa, spec.r
    return (1.0 - 1.0 / r) * (kappa * r) ** (-1.0 / (r - 1.0))


def kinetic_conjugate(spec, s):
    """``K*(s) = c |s|^(r')``, the conjugate of ``kappa |p|^r`` (scalar or norm)."""
    return _kstar_const(spec) * np.power(np.abs(s), spec.r_conj)


# ---------------------------------------------------------------------------
# coupling


def coupling_primitive(spec, x, m):
    """``F(x, m) = int_0^m f(x, s) ds``; negative m raises ``DomainError``."""
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise DomainError("F(x, m) is +infinity for m < 0")
    cs = spec.coupling
    if cs.is_power:
        return cs.coefficient / spec.q * np.power(m, spec.q) + spec.g(x) * m
    x = np.asarray(x, dtype=float)

    def one(xi, mi):
        val, _ = _integrate.quad(lambda s: float(spec.f(xi, s)), 0.0, mi, epsabs=1e-13, epsrel=1e-12)
        return val

    return _callback_points(spec, one, x, m)


def _callback_points(spec, one, x, *scalars):
    """Apply ``one(x_point, *scalar_values)`` over matching leading shapes."""
    x = np.asarray(x, dtype=float)
    base = x.shape if spec.dimension == 1 else x.shape[:-1]
    scalars = [np.asarray(s, dtype=float) for s in scalars]
    shape = np.broadcast_shapes(base, *[s.shape for s in scalars])
    xb = np.broadcast_to(x, shape if spec.dimension == 1 else shape + (spec.dimension,))
    sb = [np.broadcast_to(s, shape) for s in scalars]
    out = np.empty(shape)
    for idx in np.ndindex(shape):
        out[idx] = one(xb[idx], *[s[idx] for s in sb])
    return out


def coupling_inverse(spec, x, a):
    """``(F*)'(x, a) = max(f^{-1}(x, a), 0)``: the density that a resource level a sustains."""
    a = np.asarray(a, dtype=float)
    cs = spec.coupling
    if cs.is_power:
        y = np.maximum(a - spec.g(x), 0.0)
        return np.power(y / cs.coefficient, 1.0 / (spec.q - 1.0))
    if cs.inverse is not None:
        return np.maximum(np.asarray(cs.inverse(x, a + spec.shift), dtype=float), 0.0)
    return _callback_points(spec, partial(_invert_f, spec), x, a)


def _invert_f(spec, xi, ai):
    f0 = float(spec.f(xi, 0.0))
    if ai <= f0:
        return 0.0
    hi, trace = 1.0, []
    for _ in range(200):
        val = float(spec.f(xi, hi))
        trace.append(val)
        if val >= ai:
            break
        hi *= 2.0
    else:
        raise NumericError("could not bracket f^{-1}(a)", trace=trace)
    try:
        return _optimize.brentq(lambda s: float(spec.f(xi, s)) - ai, 0.0, hi, xtol=1e-14, rtol=1e-14)
    except (ValueError, RuntimeError) as exc:
        raise NumericError(f"f^{{-1}} solve failed: {exc}", trace=trace) from exc


def coupling_conjugate(spec, x, a):
    """``F*(x, a) = sup_{m >= 0} {a m - F(x, m)}``; zero for ``a <= f(x, 0)``."""
    a = np.asarray(a, dtype=float)
    cs = spec.coupling
    if cs.is_power:
        y = np.maximum(a - spec.g(x), 0.0)
        return (1.0 / spec.p) * cs.coefficient ** (-1.0 / (spec.q - 1.0)) * np.power(y, spec.p)
    mstar = coupling_inverse(spec, x, a)
    return a * mstar - coupling_primitive(spec, x, mstar)


def fstar_prox(spec, x, step, a_tilde):
    """``argmin_a F*(x, a) + (a - a_tilde)^2 / (2 step)``."""
    if np.any(np.asarray(step) <= 0):
        raise DomainError("prox step must be positive")
    at = np.asarray(a_tilde, dtype=float)
    cs = spec.coupling
    if cs.is_power:
        g = spec.g(x)
        c, beta = cs.coefficient, 1.0 / (spec.q - 1.0)
        y0 = np.maximum(at - g, 0.0)
        if spec.q == 2.0:
            y = c * y0 / (c + step)
        else:
            def fun(y):
                yy = np.maximum(y, 0.0)
                return (yy + step * np.power(yy / c, beta) - y0,
                        1.0 + step * beta / c * np.power(np.maximum(yy, 1e-300) / c, beta - 1.0))

            y = np.where(y0 > 0, monotone_root(fun, 0.0, y0, x0=y0, scale=y0), 0.0)
        return np.where(at > g, g + y, at)

    def one(xi, ai, si):
        f0 = float(spec.f(xi, 0.0))
        if ai <= f0:
            return ai
        fn = lambda b: b - ai + si * _invert_f(spec, xi, b)
        return _optimize.brentq(fn, f0, ai, xtol=1e-14, rtol=1e-14)

    return _callback_points(spec, one, x, at, np.broadcast_to(step, at.shape))


# ---------------------------------------------------------------------------
# Hamiltonian


def hamiltonian_conjugate(spec, x, v):
    """``H*(x, v) = sup_p {p.v - H(x, p)}``."""
    if spec.hamiltonian.is_power:
        return kinetic_conjugate(spec, _norm(spec, v)) - spec.V(x)
    d = spec.dimension

    def one(xi, *vi):
        vv = np.array(vi)
        obj = lambda p: float(spec.H(xi if d == 1 else xi[None], p[0] if d == 1 else p[None])) - float(p @ vv)
        res = _optimize.minimize(obj, np.zeros(d), method="BFGS", options={"gtol": 1e-10})
        if not res.success and res.status != 2:
            raise NumericError(f"H* maximisation failed: {res.message}", trace=[res.fun])
        return -float(res.fun)

    v = np.asarray(v, dtype=float)
    comps = [v] if d == 1 else [v[..., k] for k in range(d)]
    return _callback_points(spec, one, x, *comps)


def perspective_value(spec, x, m, w):
    """``m H*(x, -w/m)`` with value 0 at (0, 0) and +inf at (0, w != 0)."""
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise DomainError("perspective requires m >= 0")
    w = np.asarray(w, dtype=float)
    wn = _norm(spec, w)
    safe = np.where(m > 0, m, 1.0)
    direction = -w / (safe if spec.dimension == 1 else safe[..., None])
    val = m * hamiltonian_conjugate(spec, x, direction)
    out = np.where(m > 0, val, np.where(wn == 0, 0.0, math.inf))
    return out[()] if out.ndim == 0 else out


def _prox_speed(W, s, m, c, rc, v0):
    """Optimal |w|/m for fixed m: root of ``c r' v^(r'-1) + (v m - W)/s = 0``."""
    if rc == 2.0:
        return W / (m + 2.0 * c * s)

    def g(v):
        return (c * rc * np.power(v, rc - 1.0) + (v * m - W) / s,
                c * rc * (rc - 1.0) * np.power(np.maximum(v, 1e-300), rc - 2.0) + m / s)

    return monotone_root(g, 0.0, v0, x0=v0, scale=W / s)


def _prox_density(mt, W, s, c, rc, v0):
    """Root m > 0 of the reduced optimality condition ``(m - mt)/s = (r'-1) K*(v(m))``."""

    def outer(m):
        v = _prox_speed(W, s, m, c, rc, v0)
        val = (m - mt) / s - (rc - 1.0) * c * np.power(v, rc)
        gv = c * rc * (rc - 1.0) * np.power(np.maximum(v, 1e-300), rc - 2.0) + m / s
        der = 1.0 / s + (rc - 1.0) * c * rc * np.power(v, rc - 1.0) * (v / s) / gv
        return val, der

    hi = np.maximum(mt, 0.0) + s * (rc - 1.0) * c * np.power(v0, rc)
    return monotone_root(outer, 0.0, hi, x0=hi, scale=np.abs(mt) / s + W**2)


def perspective_prox(spec, x, step, m_tilde, w_tilde):
    """Proximal map of ``(m, w) -> m H*(x, -w/m)`` for power Hamiltonians.

    Returns ``(m, w)`` minimising the perspective plus
    ``(|m - m_tilde|^2 + |w - w_tilde|^2) / (2 step)``.  The flux keeps the
    direction of ``w_tilde``; its length and m solve a nested pair of monotone
    scalar equations (a cubic in m when r = 2).  Returns ``(0, 0)`` when the
    unconstrained minimiser would have m <= 0.
    """
    if not spec.hamiltonian.is_power:
        spec.require_power("perspective_prox")
    if np.any(np.asarray(step) <= 0):
        raise DomainError("prox step must be positive")
    w_t = np.asarray(w_tilde, dtype=float)
    W = _norm(spec, w_t)
    s = np.asarray(step, dtype=float)
    mt = np.asarray(m_tilde, dtype=float) + s * spec.V(x)  # absorbs the linear -V m term
    mt, W, s = (np.array(a, dtype=float) for a in np.broadcast_arrays(mt, W, s))
    c, rc = _kstar_const(spec), spec.r_conj

    v0 = np.power(W / (s * c * rc), 1.0 / (rc - 1.0))  # limit of |w|/m as m -> 0+
    live = mt + s * (rc - 1.0) * c * np.power(v0, rc) > 0
    m = np.zeros(mt.shape)
    length = np.zeros(mt.shape)
    if np.any(live):
        args = (mt[live], W[live], s[live])
        m_live = _prox_density(*args, c, rc, v0[live])
        m[live] = m_live
        length[live] = m_live * _prox_speed(args[1], args[2], m_live, c, rc, v0[live])
    ratio = np.divide(length, W, out=np.zeros_like(W), where=W > 0)
    w = ratio * w_t if spec.dimension == 1 else ratio[..., None] * w_t
    if m.ndim == 0:
        return float(m), (float(w) if np.ndim(w) == 0 else w)
    return m, w


# ---------------------------------------------------------------------------
# bundle + growth bookkeeping


@dataclass(frozen=True)
class ConjugateTable:
    """Evaluators bound to one spec."""

    fstar: Callable
    hstar: Callable
    fstar_prox: Callable
    perspective_prox: Callable
    perspective: Callable


def conjugate_table(spec) -> ConjugateTable:
    return ConjugateTable(
        fstar=partial(coupling_conjugate, spec),
        hstar=partial(hamiltonian_conjugate, spec),
        fstar_prox=partial(fstar_prox, spec),
        perspective_prox=partial(perspective_prox, spec),
        perspective=partial(perspective_value, spec),
    )


def estimate_growth_constants(spec, samples=2000, radius=20.0, seed=0) -> dict:
    """Smallest C >= 1 with ``|z|^k / C - C <= G(z) <= C |z|^k + C`` on random samples,
    for ``G = F*`` (k = p) and ``G = H*`` (k = r')."""
    rng = np.random.default_rng(seed)
    d = spec.dimension
    x = rng.random(samples) if d == 1 else rng.random((samples, 2))

    def fit(vals, mag):
        upper = vals / (mag + 1.0)
        lower = 0.5 * (-vals + np.sqrt(vals**2 + 4.0 * mag))
        return float(max(1.0, np.max(upper), np.max(lower)))

    a = rng.uniform(-radius, radius, samples)
    v = rng.uniform(-radius, radius, samples if d == 1 else (samples, 2))
    c_f = fit(coupling_conjugate(spec, x, a), np.abs(a) ** spec.p)
    c_h = fit(hamiltonian_conjugate(spec, x, v), _norm(spec, v) ** spec.r_conj)
    return {"C_fstar": c_f, "C_hstar": c_h, "samples": int(samples), "radius": float(radius)}
