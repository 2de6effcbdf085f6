# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled lockstep kernel; same contract as _pykernels.advance_block.

The replicate loop runs without the GIL, so the harness can drive several
replicate chunks from plain Python threads and get real parallelism.  Failed
replicates freeze at their last finite state, exactly as in the numpy
backend; results agree with it to rounding (summation order differs inside
dot products).
"""

import numpy as np

from libc.math cimport exp, isfinite, sqrt, tanh

cdef double _ETA = 1e-12
cdef double _CLAMP = 40.0


def advance_block(int kind, double[::1] v, double[:, ::1] z, double[:, ::1] zbar,
                  long long n0, double[::1] gam, double[::1] wavg,
                  double[:, :, ::1] xs, double[:, ::1] ys,
                  long long[::1] cp_pos, double[:, :, ::1] out_z, double[:, :, ::1] out_zbar,
                  unsigned char[::1] active, long long[::1] fail_n, long long[::1] degen):
    cdef Py_ssize_t Rc = xs.shape[0]
    cdef Py_ssize_t B = xs.shape[1]
    cdef Py_ssize_t d = xs.shape[2]
    cdef Py_ssize_t n_cp = cp_pos.shape[0]
    cdef Py_ssize_t r, b, j, k, cp_i
    cdef double t, s, dist, gn, w, coef
    cdef bint bad, skip

    if kind < 0 or kind > 3:
        raise ValueError(f"unknown objective kind {kind}")
    if z.shape[0] != Rc or z.shape[1] != d or zbar.shape[0] != Rc or zbar.shape[1] != d:
        raise ValueError("state arrays do not match sample block shape")
    if (kind == 2 or kind == 3) and (ys.shape[0] != Rc or ys.shape[1] != B):
        raise ValueError("label array does not match sample block shape")
    if gam.shape[0] != B or wavg.shape[0] != B:
        raise ValueError("step-size arrays do not match block length")
    if n_cp > 0 and (out_z.shape[0] != n_cp or out_zbar.shape[0] != n_cp):
        raise ValueError("checkpoint output arrays do not match cp_pos")

    tmp_arr = np.empty(d, dtype=np.float64)
    cdef double[::1] tmp = tmp_arr

    with nogil:
        for r in range(Rc):
            cp_i = 0
            if not active[r]:
                for k in range(n_cp):
                    for j in range(d):
                        out_z[k, r, j] = z[r, j]
                        out_zbar[k, r, j] = zbar[r, j]
                continue
            for b in range(B):
                gn = gam[b]
                w = wavg[b]
                skip = False
                if kind == 0:
                    for j in range(d):
                        tmp[j] = z[r, j] - gn * (z[r, j] - xs[r, b, j])
                elif kind == 1:
                    dist = 0.0
                    for j in range(d):
                        t = xs[r, b, j] - z[r, j]
                        dist += t * t
                    dist = sqrt(dist)
                    if dist < _ETA:
                        skip = True
                        degen[r] += 1
                    else:
                        for j in range(d):
                            tmp[j] = z[r, j] - gn * (-(xs[r, b, j] - z[r, j]) / dist - v[j])
                elif kind == 2:
                    t = 0.0
                    for j in range(d):
                        t += xs[r, b, j] * z[r, j]
                    t = ys[r, b] - t
                    if t > _CLAMP:
                        t = _CLAMP
                    elif t < -_CLAMP:
                        t = -_CLAMP
                    coef = -tanh(t)
                    for j in range(d):
                        tmp[j] = z[r, j] - gn * coef * xs[r, b, j]
                else:
                    t = 0.0
                    for j in range(d):
                        t += xs[r, b, j] * z[r, j]
                    t = -ys[r, b] * t
                    if t > _CLAMP:
                        t = _CLAMP
                    elif t < -_CLAMP:
                        t = -_CLAMP
                    s = 1.0 / (1.0 + exp(-t))
                    coef = -s * ys[r, b]
                    for j in range(d):
                        tmp[j] = z[r, j] - gn * coef * xs[r, b, j]

                if not skip:
                    bad = False
                    for j in range(d):
                        if not isfinite(tmp[j]):
                            bad = True
                            break
                    if bad:
                        active[r] = 0
                        fail_n[r] = n0 + b + 1
                        for k in range(cp_i, n_cp):
                            for j in range(d):
                                out_z[k, r, j] = z[r, j]
                                out_zbar[k, r, j] = zbar[r, j]
                        break
                    for j in range(d):
                        z[r, j] = tmp[j]
                for j in range(d):
                    zbar[r, j] += w * (z[r, j] - zbar[r, j])
                if cp_i < n_cp and cp_pos[cp_i] == b:
                    for j in range(d):
                        out_z[cp_i, r, j] = z[r, j]
                        out_zbar[cp_i, r, j] = zbar[r, j]
                    cp_i += 1
