"""Pure-numpy fallback for the hot kernels; same contracts as the numba backend."""

import numpy as np

BACKEND = "numpy"

LIMITER_NONE = 0
LIMITER_MINMOD = 1
LIMITER_SUPERBEE = 2


def windowed_corr(m, kvals, dx):
    padded = np.concatenate([m, np.zeros(kvals.size - 1)])
    return np.correlate(padded, kvals, mode="valid") * dx


def rev_windowed_corr(phi, kvals, dx):
    return np.convolve(phi, kvals)[: phi.size] * dx


def edge_fluxes(m, v_face, dt, dx, limiter_id):
    n = m.size
    F = np.zeros(n + 1)
    F[1:] = v_face[1:] * m
    if limiter_id != LIMITER_NONE and n > 2:
        up = m[1 : n - 1]
        dn = m[2:n]
        denom = dn - up
        ok = denom != 0.0
        theta = np.zeros(n - 2)
        np.divide(up - m[: n - 2], denom, out=theta, where=ok)
        if limiter_id == LIMITER_SUPERBEE:
            phi = np.maximum(
                0.0, np.maximum(np.minimum(1.0, 2.0 * theta), np.minimum(2.0, theta))
            )
        else:
            phi = np.clip(theta, 0.0, 1.0)
        phi[~ok] = 0.0
        v = v_face[2:n]
        F[2:n] += v * 0.5 * phi * (1.0 - v * dt / dx) * denom
    return F


def apply_fluxes(m, F, dt, dx):
    out = m - (dt / dx) * (F[1:] - F[:-1])
    neg = out < 0.0
    clipped = -float(out[neg].sum()) * dx
    out[neg] = 0.0
    return out, clipped


def adjoint_step(lam, v_cells, src, ghost, dt, dx):
    lam_dn = np.empty_like(lam)
    lam_dn[:-1] = lam[1:]
    lam_dn[-1] = ghost
    return lam + dt * (v_cells * (lam_dn - lam) / dx + src)


def warmup():
    """No compilation needed; present for backend symmetry."""
