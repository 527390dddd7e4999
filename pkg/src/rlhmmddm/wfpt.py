"""Wiener first-passage-time (WFPT) distribution for two-boundary diffusion.

Evaluates the joint density of (response time, choice) for a unit-variance
Wiener process with drift v between absorbing boundaries at 0 and alpha,
starting at b*alpha, with additive non-decision time tau. Provides stable
log-densities, closed-form choice probabilities, and a bridge-corrected
Euler sampler.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

DENSITY_FLOOR = 1e-300
LOG_FLOOR = float(np.log(DENSITY_FLOOR))

# default absolute truncation tolerance for the series representations
SERIES_EPS = 1e-10


class DomainError(ValueError):
    """Raised when an argument is outside the mathematical domain."""


class SamplingError(RuntimeError):
    """Raised when diffusion paths fail to absorb within the time cap."""


@dataclass(frozen=True)
class DdmParams:
    """One WFPT parameterization.

    alpha: boundary separation (> 0, evidence units).
    b: relative bias, starting point as a fraction of alpha (0 < b < 1).
    v: drift rate (evidence/second, any finite real).
    tau: non-decision time (seconds, >= 0).
    """

    alpha: float
    b: float
    v: float
    tau: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise DomainError(f"alpha must be positive and finite, got {self.alpha}")
        if not (np.isfinite(self.b) and 0.0 < self.b < 1.0):
            raise DomainError(f"b must lie in (0, 1), got {self.b}")
        if not np.isfinite(self.v):
            raise DomainError(f"v must be finite, got {self.v}")
        if not (np.isfinite(self.tau) and self.tau >= 0.0):
            raise DomainError(f"tau must be nonnegative and finite, got {self.tau}")


def _term_counts(tn, eps):
    """Number of series terms needed at scaled time tn for tolerance eps.

    Returns (ks, kl): real-valued term counts for the small-time and
    large-time representations; take the ceiling before use.
    """
    tn = np.asarray(tn, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.pi * tn * eps
        kl = np.where(
            lam < 1.0,
            np.sqrt(-2.0 * np.log(np.maximum(lam, DENSITY_FLOOR)) / (np.pi**2 * tn)),
            0.0,
        )
        kl = np.maximum(kl, 1.0 / (np.pi * np.sqrt(tn)))
        mu = 2.0 * eps * np.sqrt(2.0 * np.pi * tn)
        ks = np.where(
            mu < 1.0,
            2.0 + np.sqrt(np.maximum(-2.0 * tn * np.log(np.maximum(mu, DENSITY_FLOOR)), 0.0)),
            2.0,
        )
        ks = np.maximum(ks, np.sqrt(tn) + 1.0)
    return ks, kl


def _unit_logpdf(tn, w, eps=SERIES_EPS, rep="auto", grad=False):
    """log f0(tn; 1, w, 0) elementwise, with optional derivatives.

    tn, w: broadcast-compatible arrays of scaled decision times (> 0) and
    relative start points in (0, 1). Entries where the truncated series is
    nonpositive or underflows come back as -inf (callers apply the floor).

    With grad=True also returns d log f0 / d tn and d log f0 / d w
    (zero where the value is -inf).
    """
    tn = np.atleast_1d(np.asarray(tn, dtype=float))
    w = np.broadcast_to(np.asarray(w, dtype=float), tn.shape)
    out = np.full(tn.shape, -np.inf)
    gt = np.zeros(tn.shape) if grad else None
    gw = np.zeros(tn.shape) if grad else None

    ks, kl = _term_counts(tn, eps)
    if rep == "small":
        use_small = np.ones(tn.shape, dtype=bool)
    elif rep == "large":
        use_small = np.zeros(tn.shape, dtype=bool)
    elif rep == "auto":
        use_small = ks <= kl
    else:
        raise DomainError(f"rep must be 'small', 'large', or 'auto', got {rep!r}")

    pad = 3 if grad else 0  # derivative series converge slightly slower

    m = use_small
    if m.any():
        K = int(np.ceil(ks[m].max())) + pad
        k = np.arange(-np.floor((K - 1) / 2), np.ceil((K - 1) / 2) + 1)
        t = tn[m, None]
        x = w[m, None] + 2.0 * k[None, :]
        e = -x * x / (2.0 * t)
        mx = e.max(axis=1, keepdims=True)
        u = np.exp(e - mx)
        s = np.sum(x * u, axis=1)
        good = s > 0.0
        res = np.full(s.shape, -np.inf)
        res[good] = (
            -0.5 * np.log(2.0 * np.pi) - 1.5 * np.log(tn[m][good]) + mx[good, 0] + np.log(s[good])
        )
        out[m] = res
        if grad:
            st = np.sum(x * (x * x / (2.0 * t * t)) * u, axis=1)
            sw = np.sum((1.0 - x * x / t) * u, axis=1)
            gts = np.zeros(s.shape)
            gws = np.zeros(s.shape)
            gts[good] = -1.5 / tn[m][good] + st[good] / s[good]
            gws[good] = sw[good] / s[good]
            gt[m] = gts
            gw[m] = gws

    m = ~use_small
    if m.any():
        K = int(np.ceil(kl[m].max())) + pad
        k = np.arange(1.0, K + 1)
        t = tn[m, None]
        u = np.exp(-(k[None, :] ** 2 - 1.0) * np.pi**2 * t / 2.0)
        sin_kw = np.sin(k[None, :] * np.pi * w[m, None])
        s = np.sum(k[None, :] * u * sin_kw, axis=1)
        good = s > 0.0
        res = np.full(s.shape, -np.inf)
        res[good] = np.log(np.pi) - np.pi**2 * tn[m][good] / 2.0 + np.log(s[good])
        out[m] = res
        if grad:
            st = np.sum(k[None, :] * (-(k[None, :] ** 2 - 1.0) * np.pi**2 / 2.0) * u * sin_kw, axis=1)
            sw = np.sum(k[None, :] ** 2 * np.pi * u * np.cos(k[None, :] * np.pi * w[m, None]), axis=1)
            gts = np.zeros(s.shape)
            gws = np.zeros(s.shape)
            gts[good] = -np.pi**2 / 2.0 + st[good] / s[good]
            gws[good] = sw[good] / s[good]
            gt[m] = gts
            gw[m] = gws

    if grad:
        return out, gt, gw
    return out


def f0_unit(t, b, rep="auto", eps=SERIES_EPS):
    """Density of hitting the lower boundary at scaled time t for the unit
    process (boundary separation 1, start b, zero drift).

    rep selects the series representation; 'auto' takes whichever needs
    fewer terms at tolerance eps.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if not np.all(np.isfinite(t_arr)) or np.any(t_arr <= 0.0):
        raise DomainError("t must be positive and finite")
    b_arr = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b_arr)) or np.any(b_arr <= 0.0) or np.any(b_arr >= 1.0):
        raise DomainError("b must lie in (0, 1)")
    logf = _unit_logpdf(t_arr, b_arr, eps=eps, rep=rep)
    val = np.exp(logf)
    if np.isscalar(t) or np.ndim(t) == 0:
        return float(val[0])
    return val


@njit(parallel=True, cache=True)
def _log_joint_kernel(t, a, alpha, b, v, tau, eps, grad):
    """Per-trial floored log joint density and partials wrt (alpha, b, v, tau).

    Same series representations and term-count rules as _unit_logpdf, with
    the choice handled by reflection. Gradients are zero where the density
    sits on the floor.
    """
    N = t.shape[0]
    out = np.full(N, LOG_FLOOR)
    d_alpha = np.zeros(N)
    d_b = np.zeros(N)
    d_v = np.zeros(N)
    d_tau = np.zeros(N)
    ia2 = 1.0 / (alpha * alpha)
    log_alpha = np.log(alpha)
    pisq = np.pi * np.pi
    pad = 3 if grad else 0
    for i in prange(N):
        td = t[i] - tau
        if td <= 0.0:
            continue
        if a[i] == 1:
            w = 1.0 - b
            ve = -v[i]
            sgn = -1.0
        else:
            w = b
            ve = v[i]
            sgn = 1.0
        tn = td * ia2
        # term-count rules at tolerance eps
        lam = np.pi * tn * eps
        kl_min = 1.0 / (np.pi * np.sqrt(tn))
        if lam < 1.0:
            kl = np.sqrt(-2.0 * np.log(lam) / (pisq * tn))
            if kl < kl_min:
                kl = kl_min
        else:
            kl = kl_min
        mu = 2.0 * eps * np.sqrt(2.0 * np.pi * tn)
        ks_min = np.sqrt(tn) + 1.0
        if mu < 1.0:
            ks = 2.0 + np.sqrt(-2.0 * tn * np.log(mu))
        else:
            ks = 2.0
        if ks < ks_min:
            ks = ks_min
        gt = 0.0
        gw = 0.0
        if ks <= kl:
            K = int(np.ceil(ks)) + pad
            k_lo = -int(np.floor((K - 1) / 2.0))
            k_hi = int(np.ceil((K - 1) / 2.0))
            m = -(w * w) / (2.0 * tn)  # k = 0 term carries the max exponent
            S = 0.0
            St = 0.0
            Sw = 0.0
            for k in range(k_lo, k_hi + 1):
                x = w + 2.0 * k
                u = np.exp(-(x * x) / (2.0 * tn) - m)
                S += x * u
                if grad:
                    St += x * (x * x / (2.0 * tn * tn)) * u
                    Sw += (1.0 - x * x / tn) * u
            if S <= 0.0:
                continue
            logg = -0.5 * np.log(2.0 * np.pi) - 1.5 * np.log(tn) + m + np.log(S)
            if grad:
                gt = -1.5 / tn + St / S
                gw = Sw / S
        else:
            K = int(np.ceil(kl)) + pad
            S = 0.0
            St = 0.0
            Sw = 0.0
            for k in range(1, K + 1):
                u = np.exp(-(k * k - 1.0) * pisq * tn / 2.0)
                sk = np.sin(k * np.pi * w)
                S += k * u * sk
                if grad:
                    St += k * (-(k * k - 1.0) * pisq / 2.0) * u * sk
                    Sw += k * k * np.pi * u * np.cos(k * np.pi * w)
            if S <= 0.0:
                continue
            logg = np.log(np.pi) - pisq * tn / 2.0 + np.log(S)
            if grad:
                gt = -pisq / 2.0 + St / S
                gw = Sw / S
        logf = -2.0 * log_alpha - alpha * w * ve - 0.5 * ve * ve * td + logg
        if logf < LOG_FLOOR:
            continue
        out[i] = logf
        if grad:
            d_alpha[i] = -2.0 / alpha - w * ve + gt * (-2.0 * td / (alpha * alpha * alpha))
            d_b[i] = sgn * (-alpha * ve + gw)
            d_v[i] = sgn * (-alpha * w - ve * td)
            d_tau[i] = 0.5 * ve * ve - gt * ia2
    return out, d_alpha, d_b, d_v, d_tau


def _log_joint(t, a, alpha, b, v, tau, eps=SERIES_EPS, grad=False):
    """Floored log joint density, vectorized over trials.

    t: response times; a: choices in {0, 1}; alpha, b, tau scalars; v scalar
    or per-trial array. With grad=True also returns the partial derivatives
    with respect to (alpha, b, v, tau), each zero wherever the density sits
    on the floor.
    """
    t = np.atleast_1d(np.ascontiguousarray(t, dtype=np.float64))
    a = np.ascontiguousarray(np.broadcast_to(np.asarray(a), t.shape), dtype=np.int64)
    v = np.ascontiguousarray(np.broadcast_to(np.asarray(v, dtype=np.float64), t.shape))
    out, da, db, dv, dtau = _log_joint_kernel(
        t, a, float(alpha), float(b), v, float(tau), float(eps), bool(grad)
    )
    if grad:
        return out, da, db, dv, dtau
    return out


def log_joint_density(t, a, p: DdmParams, eps=SERIES_EPS):
    """log f(t, a; alpha, b, v, tau), floored at log(1e-300).

    The floor applies both when t <= tau and when the density underflows,
    keeping downstream likelihood sums finite.
    """
    out = _log_joint(t, a, p.alpha, p.b, p.v, p.tau, eps=eps)
    if np.isscalar(t) or np.ndim(t) == 0:
        return float(out[0])
    return out


def joint_density(t, a, p: DdmParams, eps=SERIES_EPS):
    """Joint density f(t, a; alpha, b, v, tau); exactly 0 for t <= tau."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    logf = _log_joint(t_arr, a, p.alpha, p.b, p.v, p.tau, eps=eps)
    val = np.exp(logf)
    val[(t_arr - p.tau) <= 0.0] = 0.0
    val[logf <= LOG_FLOOR] = 0.0
    if np.isscalar(t) or np.ndim(t) == 0:
        return float(val[0])
    return val


def choice_prob(p: DdmParams):
    """Probability of absorbing at the upper boundary (choice a=1).

    Uses a 2-term Taylor expansion for |v*alpha| < 1e-6 to stay continuous
    across v=0, where the probability equals b.
    """
    x = p.v * p.alpha
    b = p.b
    if abs(x) < 1e-6:
        return b + b * (1.0 - b) * x
    if x > 0:
        return (np.exp(-2.0 * b * x) - 1.0) / (np.exp(-2.0 * x) - 1.0)
    # multiply through by exp(2x) so every exponent is negative
    e2x = np.exp(2.0 * x)
    return (np.exp(2.0 * (1.0 - b) * x) - e2x) / (1.0 - e2x)


# ---------------------------------------------------------------------------
# Sampling: Euler-Maruyama with a Brownian-bridge crossing correction.
# ---------------------------------------------------------------------------

@njit(parallel=True, cache=True)
def _simulate_paths(alpha, z0, v, dt, t_max, seeds, out_t, out_a):
    n = seeds.shape[0]
    sq = np.sqrt(dt)
    # exp(-2*x/dt) is below uniform resolution once x > 20*dt
    near = 20.0 * dt
    for i in prange(n):
        np.random.seed(seeds[i])
        ai = alpha[i]
        vi = v[i]
        w = z0[i]
        t = 0.0
        a = -1
        while t < t_max:
            wn = w + vi * dt + sq * np.random.normal()
            t += dt
            if wn >= ai:
                a = 1
                break
            if wn <= 0.0:
                a = 0
                break
            pu = 0.0
            pl = 0.0
            du = (ai - w) * (ai - wn)
            if du < near:
                pu = np.exp(-2.0 * du / dt)
            dl = w * wn
            if dl < near:
                pl = np.exp(-2.0 * dl / dt)
            if pu > 0.0 or pl > 0.0:
                u = np.random.random()
                if u < pu:
                    a = 1
                    break
                if u < pu + pl:
                    a = 0
                    break
            w = wn
        out_t[i] = t
        out_a[i] = a


def sample_batch(alpha, b, v, tau, rng, dt=1e-4, t_max=60.0):
    """Draw one (t, a) per row of the per-draw parameter arrays.

    Returns (t, a, n_failed): entries that hit the time cap have a = -1 and
    are counted in n_failed; callers decide whether to re-draw or raise.
    """
    alpha = np.ascontiguousarray(np.atleast_1d(alpha), dtype=np.float64)
    b = np.broadcast_to(np.asarray(b, dtype=np.float64), alpha.shape)
    v = np.ascontiguousarray(np.broadcast_to(np.asarray(v, dtype=np.float64), alpha.shape))
    tau = np.broadcast_to(np.asarray(tau, dtype=np.float64), alpha.shape)
    z0 = np.ascontiguousarray(b * alpha)
    seeds = rng.integers(0, 2**32 - 1, size=alpha.shape[0]).astype(np.uint32)
    out_t = np.empty(alpha.shape[0])
    out_a = np.empty(alpha.shape[0], dtype=np.int64)
    _simulate_paths(alpha, z0, v, dt, t_max, seeds, out_t, out_a)
    failed = out_a < 0
    out_t = out_t + tau
    return out_t, out_a, int(failed.sum())


def sample(p: DdmParams, rng, size=None, dt=1e-4, t_max=60.0):
    """Sample (response time, choice) from WFPT(alpha, b, v, tau).

    Euler-Maruyama with step dt plus a per-step Brownian-bridge crossing
    correction, which removes the O(sqrt(dt)) boundary bias of the raw
    scheme. size=None returns a scalar pair; otherwise arrays of length size.
    """
    m = 1 if size is None else int(size)
    alpha = np.full(m, p.alpha)
    t, a, n_failed = sample_batch(alpha, p.b, p.v, p.tau, rng, dt=dt, t_max=t_max)
    if n_failed:
        raise SamplingError(
            f"{n_failed} of {m} paths exceeded the {t_max} s decision-time cap"
        )
    if size is None:
        return float(t[0]), int(a[0])
    return t, a
