"""Circular statistics used throughout the filter.

Angles live on (-pi, pi].  Only the Bessel functions the von Mises family
needs are provided (log I0, log I1 and the ratio I1/I0).
"""

import numpy as np

TWO_PI = 2.0 * np.pi
LOG_2PI = np.log(TWO_PI)

# Below this argument the power series is used, above it the asymptotic
# expansion.  Both are accurate to ~1e-15 relative at the crossover.
_SERIES_LIMIT = 20.0
_SERIES_TERMS = 90
_ASYMPTOTIC_TERMS = 14

# Degenerate resultant: mean direction is undefined, report 0.
RESULTANT_EPS = 1e-12

# Above this concentration the von Mises is sampled as a wrapped normal.
_WRAPPED_NORMAL_KAPPA = 1e5
_TINY_KAPPA = 1e-8


def wrap_angle(x):
    """Wrap ``x`` into (-pi, pi].  Accepts scalars or arrays."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("wrap_angle: input must be finite")
    out = np.remainder(arr + np.pi, TWO_PI) - np.pi
    out = np.where(out <= -np.pi, np.pi, out)
    if out.ndim == 0:
        return float(out)
    return out


def _log_bessel_series(x, order):
    # I_v(x) = (x/2)^v sum_k (x^2/4)^k / (k! (k+v)!)
    q = 0.25 * x * x
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, _SERIES_TERMS):
        term = term * q / (k * (k + order))
        total = total + term
    with np.errstate(divide="ignore"):
        log_pref = order * np.log(0.5 * x) if order else 0.0
        log_fact = 0.0 if order == 0 else np.log(float(np.prod(np.arange(1, order + 1))))
    return log_pref - log_fact + np.log(total)


def _log_bessel_asymptotic(x, order):
    mu = 4.0 * order * order
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, _ASYMPTOTIC_TERMS):
        term = term * (-(mu - (2 * k - 1) ** 2)) / (k * 8.0 * x)
        total = total + term
    return x - 0.5 * np.log(TWO_PI * x) + np.log(total)


def _log_bessel(x, order):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError("Bessel argument must be non-negative")
    flat = np.atleast_1d(arr).astype(float)
    out = np.empty_like(flat)
    small = flat < _SERIES_LIMIT
    if np.any(small):
        out[small] = _log_bessel_series(flat[small], order)
    if np.any(~small):
        out[~small] = _log_bessel_asymptotic(flat[~small], order)
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def log_i0(x):
    """Natural log of the modified Bessel function I0, overflow-free."""
    return _log_bessel(x, 0)


def log_i1(x):
    """Natural log of the modified Bessel function I1 (``-inf`` at 0)."""
    return _log_bessel(x, 1)


def bessel_ratio(kappa):
    """I1(kappa) / I0(kappa), the mean resultant length of a von Mises."""
    return np.exp(log_i1(kappa) - log_i0(kappa))


def _check_kappa(kappa):
    kappa = float(kappa)
    if not np.isfinite(kappa) or kappa < 0:
        raise ValueError(f"concentration must be finite and >= 0, got {kappa}")
    return kappa


def vm_logpdf(x, mu, kappa):
    """Normalised von Mises log-density at ``x`` with mean ``mu``."""
    kappa = _check_kappa(kappa)
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    out = kappa * np.cos(x - mu) - LOG_2PI - log_i0(kappa)
    if np.ndim(out) == 0:
        return float(out)
    return out


def vm_sample(rng, mu, kappa, size=None):
    """Draw von Mises variates by Best & Fisher rejection.

    ``mu`` may be an array, in which case one draw per entry is returned
    (``size`` then defaults to ``mu.shape``).  ``kappa == 0`` gives the
    uniform law on (-pi, pi].
    """
    kappa = _check_kappa(kappa)
    mu = np.asarray(mu, dtype=float)
    shape = mu.shape if size is None else size
    mu = np.broadcast_to(mu, shape)
    n = int(np.prod(shape))

    if kappa < _TINY_KAPPA:
        # uniform on (-pi, pi]: 1 - U lies in (0, 1]
        draws = np.pi - TWO_PI * rng.random(n)
        out = draws.reshape(shape)
        return out if out.ndim else float(out)

    if kappa > _WRAPPED_NORMAL_KAPPA:
        offsets = rng.standard_normal(n) / np.sqrt(kappa)
    else:
        r = 1.0 + np.sqrt(1.0 + 4.0 * kappa * kappa)
        rho = (r - np.sqrt(2.0 * r)) / (2.0 * kappa)
        s = (1.0 + rho * rho) / (2.0 * rho)

        w = np.empty(n)
        todo = np.arange(n)
        while todo.size:
            u1 = rng.random(todo.size)
            u2 = rng.random(todo.size)
            z = np.cos(np.pi * u1)
            ww = (1.0 + s * z) / (s + z)
            y = kappa * (s - ww)
            with np.errstate(divide="ignore", invalid="ignore"):
                accept = (y * (2.0 - y) - u2 > 0) | (np.log(y / u2) + 1.0 - y >= 0)
            w[todo[accept]] = ww[accept]
            todo = todo[~accept]
        signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        offsets = signs * np.arccos(np.clip(w, -1.0, 1.0))

    out = wrap_angle(mu.reshape(-1) + offsets)
    out = np.asarray(out).reshape(shape)
    return out if out.ndim else float(out)


def circ_mean_resultant(angles, weights=None):
    """Weighted circular mean and mean resultant length.

    Returns ``(mean, resultant)``.  When the resultant is below 1e-12 the
    mean is undefined and reported as 0.
    """
    angles = np.asarray(angles, dtype=float).reshape(-1)
    if angles.size == 0:
        raise ValueError("circ_mean_resultant: no angles given")
    if weights is None:
        weights = np.full(angles.size, 1.0 / angles.size)
    else:
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if weights.shape != angles.shape:
            raise ValueError("weights and angles differ in length")
        if np.any(weights < 0):
            raise ValueError("weights must be non-negative")
    c = float(np.dot(weights, np.cos(angles)))
    s = float(np.dot(weights, np.sin(angles)))
    resultant = min(np.hypot(c, s), 1.0)
    if resultant < RESULTANT_EPS:
        return 0.0, resultant
    return wrap_angle(np.arctan2(s, c)), resultant
