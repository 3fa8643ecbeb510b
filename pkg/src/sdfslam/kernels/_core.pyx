# Compiled twin of ``_reference``: same contract, same arithmetic, scalar
# loops instead of vectorized NumPy. Keep the expressions in lockstep with
# the reference module so both backends produce identical floats.

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor

cnp.import_array()


def bilinear_wf(F, W, double ox, double oy, double res, double trunc,
                double wmax, pts):
    cdef cnp.ndarray[cnp.float32_t, ndim=2, mode="c"] Fa = np.ascontiguousarray(F, dtype=np.float32)
    cdef cnp.ndarray[cnp.float32_t, ndim=2, mode="c"] Wa = np.ascontiguousarray(W, dtype=np.float32)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] P = np.ascontiguousarray(
        np.asarray(pts, dtype=np.float64).reshape(-1, 2))
    cdef Py_ssize_t h = Fa.shape[0], w = Fa.shape[1], n = P.shape[0]
    cdef double sat = wmax * trunc

    cdef cnp.ndarray[cnp.float64_t, ndim=1] val = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gx = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gy = np.empty(n, dtype=np.float64)

    cdef Py_ssize_t k, i0, j0
    cdef double u, v, tu, tv
    cdef double m00, m10, m01, m11, wv, fv
    for k in range(n):
        u = (P[k, 0] - ox) / res
        v = (P[k, 1] - oy) / res
        if not (u >= 0.0 and u <= w - 1.0 and v >= 0.0 and v <= h - 1.0):
            val[k] = sat
            gx[k] = 0.0
            gy[k] = 0.0
            continue
        i0 = <Py_ssize_t>floor(u)
        if i0 > w - 2:
            i0 = w - 2
        j0 = <Py_ssize_t>floor(v)
        if j0 > h - 2:
            j0 = h - 2
        tu = u - i0
        tv = v - j0

        wv = Wa[j0, i0]; fv = Fa[j0, i0]
        m00 = wv * fv if wv > 0.0 else sat
        wv = Wa[j0, i0 + 1]; fv = Fa[j0, i0 + 1]
        m10 = wv * fv if wv > 0.0 else sat
        wv = Wa[j0 + 1, i0]; fv = Fa[j0 + 1, i0]
        m01 = wv * fv if wv > 0.0 else sat
        wv = Wa[j0 + 1, i0 + 1]; fv = Fa[j0 + 1, i0 + 1]
        m11 = wv * fv if wv > 0.0 else sat

        val[k] = (1.0 - tv) * ((1.0 - tu) * m00 + tu * m10) + tv * (
            (1.0 - tu) * m01 + tu * m11)
        gx[k] = ((1.0 - tv) * (m10 - m00) + tv * (m11 - m01)) / res
        gy[k] = ((1.0 - tu) * (m01 - m00) + tu * (m11 - m10)) / res
    return val, gx, gy


def bilinear_fw(F, W, double ox, double oy, double res, double trunc, pts):
    cdef cnp.ndarray[cnp.float32_t, ndim=2, mode="c"] Fa = np.ascontiguousarray(F, dtype=np.float32)
    cdef cnp.ndarray[cnp.float32_t, ndim=2, mode="c"] Wa = np.ascontiguousarray(W, dtype=np.float32)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] P = np.ascontiguousarray(
        np.asarray(pts, dtype=np.float64).reshape(-1, 2))
    cdef Py_ssize_t h = Fa.shape[0], w = Fa.shape[1], n = P.shape[0]

    cdef cnp.ndarray[cnp.float64_t, ndim=1] fv = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wv = np.empty(n, dtype=np.float64)

    cdef Py_ssize_t k, i0, j0
    cdef double u, v, tu, tv
    cdef double a00, a10, a01, a11
    for k in range(n):
        u = (P[k, 0] - ox) / res
        v = (P[k, 1] - oy) / res
        if not (u >= 0.0 and u <= w - 1.0 and v >= 0.0 and v <= h - 1.0):
            fv[k] = trunc
            wv[k] = 0.0
            continue
        i0 = <Py_ssize_t>floor(u)
        if i0 > w - 2:
            i0 = w - 2
        j0 = <Py_ssize_t>floor(v)
        if j0 > h - 2:
            j0 = h - 2
        tu = u - i0
        tv = v - j0

        a00 = Fa[j0, i0]; a10 = Fa[j0, i0 + 1]
        a01 = Fa[j0 + 1, i0]; a11 = Fa[j0 + 1, i0 + 1]
        fv[k] = (1.0 - tv) * ((1.0 - tu) * a00 + tu * a10) + tv * (
            (1.0 - tu) * a01 + tu * a11)
        a00 = Wa[j0, i0]; a10 = Wa[j0, i0 + 1]
        a01 = Wa[j0 + 1, i0]; a11 = Wa[j0 + 1, i0 + 1]
        wv[k] = (1.0 - tv) * ((1.0 - tu) * a00 + tu * a10) + tv * (
            (1.0 - tu) * a01 + tu * a11)
    return fv, wv


def traverse_free(double ox, double oy, double res, Py_ssize_t width,
                  Py_ssize_t height, double x0, double y0, double ux,
                  double uy, double extent):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ecols = np.empty(0, dtype=np.int64)
    if extent <= 0.0:
        return ecols, ecols.copy()

    cdef double x1 = x0 + ux * extent
    cdef double y1 = y0 + uy * extent
    cdef double c0, c1, lo, hi, kk, b, t
    cdef Py_ssize_t cap = 4
    if ux != 0.0:
        cap += <Py_ssize_t>(ceil(abs(ux) * extent / res)) + 2
    if uy != 0.0:
        cap += <Py_ssize_t>(ceil(abs(uy) * extent / res)) + 2
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ts = np.empty(cap, dtype=np.float64)
    cdef Py_ssize_t m = 0

    ts[m] = 0.0; m += 1
    ts[m] = extent; m += 1
    if ux != 0.0:
        c0 = (x0 - ox) / res
        c1 = (x1 - ox) / res
        if c0 < c1:
            lo = c0; hi = c1
        else:
            lo = c1; hi = c0
        kk = floor(lo + 0.5)
        while kk <= ceil(hi - 0.5):
            b = ox + (kk - 0.5) * res
            t = (b - x0) / ux
            if 0.0 <= t <= extent:
                ts[m] = t; m += 1
            kk += 1.0
    if uy != 0.0:
        c0 = (y0 - oy) / res
        c1 = (y1 - oy) / res
        if c0 < c1:
            lo = c0; hi = c1
        else:
            lo = c1; hi = c0
        kk = floor(lo + 0.5)
        while kk <= ceil(hi - 0.5):
            b = oy + (kk - 0.5) * res
            t = (b - y0) / uy
            if 0.0 <= t <= extent:
                ts[m] = t; m += 1
            kk += 1.0

    cdef cnp.ndarray[cnp.float64_t, ndim=1] tt = np.sort(ts[:m], kind="stable")

    cdef cnp.ndarray[cnp.int64_t, ndim=1] cols = np.empty(m, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] rows = np.empty(m, dtype=np.int64)
    cdef Py_ssize_t cnt = 0, k
    cdef double tm, proj
    cdef cnp.int64_t cc, rr
    for k in range(m - 1):
        tm = 0.5 * (tt[k] + tt[k + 1])
        cc = <cnp.int64_t>floor((x0 + ux * tm - ox) / res + 0.5)
        rr = <cnp.int64_t>floor((y0 + uy * tm - oy) / res + 0.5)
        if cnt > 0 and cols[cnt - 1] == cc and rows[cnt - 1] == rr:
            continue
        cols[cnt] = cc; rows[cnt] = rr; cnt += 1
    # Second pass: in-bounds plus projection filter, preserving order.
    cdef Py_ssize_t out_n = 0
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ocols = np.empty(cnt, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] orows = np.empty(cnt, dtype=np.int64)
    for k in range(cnt):
        cc = cols[k]; rr = rows[k]
        if cc < 0 or cc >= width or rr < 0 or rr >= height:
            continue
        proj = (ox + cc * res - x0) * ux + (oy + rr * res - y0) * uy
        if proj >= 0.0 and proj <= extent:
            ocols[out_n] = cc; orows[out_n] = rr; out_n += 1
    return ocols[:out_n].copy(), orows[:out_n].copy()


cdef inline void _cr_weights(double t, double* w) noexcept:
    cdef double t2 = t * t
    cdef double t3 = t2 * t
    w[0] = 0.5 * (-t3 + 2.0 * t2 - t)
    w[1] = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0)
    w[2] = 0.5 * (-3.0 * t3 + 4.0 * t2 + t)
    w[3] = 0.5 * (t3 - t2)


def bicubic_fw(F, W, double ox, double oy, double res, double trunc, pts):
    cdef cnp.ndarray[cnp.float32_t, ndim=2, mode="c"] Fa = np.ascontiguousarray(F, dtype=np.float32)
    cdef cnp.ndarray[cnp.float32_t, ndim=2, mode="c"] Wa = np.ascontiguousarray(W, dtype=np.float32)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] P = np.ascontiguousarray(
        np.asarray(pts, dtype=np.float64).reshape(-1, 2))
    cdef Py_ssize_t h = Fa.shape[0], w = Fa.shape[1], n = P.shape[0]

    cdef cnp.ndarray[cnp.float64_t, ndim=1] fv = np.full(n, trunc, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wv = np.zeros(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1, cast=True] valid = np.zeros(n, dtype=bool)

    cdef Py_ssize_t k, i1, j1, ia, ib, ja, jb, di, dj, ii, jj
    cdef double u, v, tu, tv, acc, rowv
    cdef double wx[4]
    cdef double wy[4]
    cdef double wa, wb, wc, wd
    for k in range(n):
        u = (P[k, 0] - ox) / res
        v = (P[k, 1] - oy) / res
        if not (u >= 0.0 and u <= w - 1.0 and v >= 0.0 and v <= h - 1.0):
            continue
        i1 = <Py_ssize_t>floor(u)
        j1 = <Py_ssize_t>floor(v)
        tu = u - i1
        tv = v - j1

        ia = i1 if i1 < w - 1 else w - 1
        ib = i1 + 1 if i1 + 1 < w - 1 else w - 1
        ja = j1 if j1 < h - 1 else h - 1
        jb = j1 + 1 if j1 + 1 < h - 1 else h - 1
        if not (Wa[ja, ia] > 0.0 and Wa[ja, ib] > 0.0 and
                Wa[jb, ia] > 0.0 and Wa[jb, ib] > 0.0):
            continue

        _cr_weights(tu, wx)
        _cr_weights(tv, wy)
        acc = 0.0
        for dj in range(4):
            jj = j1 - 1 + dj
            if jj < 0:
                jj = 0
            elif jj > h - 1:
                jj = h - 1
            rowv = 0.0
            for di in range(4):
                ii = i1 - 1 + di
                if ii < 0:
                    ii = 0
                elif ii > w - 1:
                    ii = w - 1
                rowv += wx[di] * <double>Fa[jj, ii]
            acc += wy[dj] * rowv
        if acc > trunc:
            acc = trunc
        elif acc < -trunc:
            acc = -trunc

        wa = Wa[ja, ia]; wb = Wa[ja, ib]
        wc = Wa[jb, ia]; wd = Wa[jb, ib]
        fv[k] = acc
        wv[k] = (1.0 - tv) * ((1.0 - tu) * wa + tu * wb) + tv * (
            (1.0 - tu) * wc + tu * wd)
        valid[k] = True
    return fv, wv, valid
