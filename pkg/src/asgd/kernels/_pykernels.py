"""Numpy lockstep kernel: a block of replicates advances one sample per step.

Contract shared with the compiled backend (_ckernels): entering a block each
replicate r holds (Z_{n0}, Zbar_{n0}); the block consumes B fresh samples
xs[r, b] = X_{n0+1+b} and applies, for b = 0..B-1,

    Z   <- Z - gam[b] * grad         gam[b]  = gamma_{n0+b}
    Zbar <- Zbar + wavg[b] * (Z - Zbar)   wavg[b] = 1/(n0+b+1)

After processing offset b == cp_pos[k], (Z, Zbar) are copied into
out_z[k], out_zbar[k].  A replicate whose next iterate would be non-finite is
deactivated first: active[r] drops to 0, fail_n[r] records the sample count
n0+b+1, and its state freezes at the last finite value (checkpoints from then
on record the frozen state).  Geometric-quantile samples closer than 1e-12 to
the iterate skip the gradient, bump degen[r], and still update the average.

All arrays are modified in place; the caller owns allocation.
"""

import numpy as np

_ETA = 1e-12
_CLAMP = 40.0


def advance_block(kind, v, z, zbar, n0, gam, wavg, xs, ys,
                  cp_pos, out_z, out_zbar, active, fail_n, degen):
    Rc, B, d = xs.shape
    act = active.view(bool)
    n_cp = cp_pos.shape[0]
    cp_i = 0
    with np.errstate(all="ignore"):
        for b in range(B):
            x = xs[:, b, :]
            if kind == 0:
                g = z - x
            elif kind == 1:
                diff = x - z
                dist = np.sqrt(np.einsum("rd,rd->r", diff, diff))
                ok = dist >= _ETA
                degen += act & ~ok
                safe = np.where(ok, dist, 1.0)
                g = np.where(ok[:, None], -diff / safe[:, None] - v[None, :], 0.0)
            elif kind == 2:
                t = np.clip(ys[:, b] - np.einsum("rd,rd->r", x, z), -_CLAMP, _CLAMP)
                g = (-np.tanh(t))[:, None] * x
            elif kind == 3:
                yb = ys[:, b]
                t = np.clip(-yb * np.einsum("rd,rd->r", x, z), -_CLAMP, _CLAMP)
                s = 1.0 / (1.0 + np.exp(-t))
                g = (-(s * yb))[:, None] * x
            else:
                raise ValueError(f"unknown objective kind {kind}")

            z_new = z - gam[b] * g
            fin = np.isfinite(z_new).all(axis=1)
            if not fin.all():
                newly_bad = act & ~fin
                if newly_bad.any():
                    fail_n[newly_bad] = n0 + b + 1
                    np.logical_and(act, fin, out=act)
            if act.all():
                z[:] = z_new
                zbar += wavg[b] * (z - zbar)
            else:
                z[act] = z_new[act]
                zbar[act] += wavg[b] * (z[act] - zbar[act])
            if cp_i < n_cp and cp_pos[cp_i] == b:
                out_z[cp_i] = z
                out_zbar[cp_i] = zbar
                cp_i += 1
