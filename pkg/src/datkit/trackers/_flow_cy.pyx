# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled backend for the per-level point tracking kernel.

Same algorithm as _flow_numpy.track_level, written as straight per-point
loops; this is the hot inner loop of Median Flow tracking.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND_NAME = "cython"

STATUS_CONVERGED = 0
STATUS_ILL_CONDITIONED = 1
STATUS_DIVERGED = 2


cdef inline double _bilinear(const double[:, ::1] img, double x, double y) nogil:
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    cdef Py_ssize_t x0, y0, x1, y1
    cdef double fx, fy
    if x < 0.0:
        x = 0.0
    elif x > w - 1.0:
        x = w - 1.0
    if y < 0.0:
        y = 0.0
    elif y > h - 1.0:
        y = h - 1.0
    x0 = <Py_ssize_t> x
    y0 = <Py_ssize_t> y
    if x0 > w - 2:
        x0 = w - 2 if w >= 2 else 0
    if y0 > h - 2:
        y0 = h - 2 if h >= 2 else 0
    fx = x - x0
    fy = y - y0
    x1 = x0 + 1 if x0 + 1 < w else w - 1
    y1 = y0 + 1 if y0 + 1 < h else h - 1
    return (img[y0, x0] * (1.0 - fx) * (1.0 - fy)
            + img[y0, x1] * fx * (1.0 - fy)
            + img[y1, x0] * (1.0 - fx) * fy
            + img[y1, x1] * fx * fy)


def track_level(const double[:, ::1] prev,
                const double[:, ::1] grad_x,
                const double[:, ::1] grad_y,
                const double[:, ::1] nxt,
                const double[:, ::1] pts,
                const double[:, ::1] guess,
                const cnp.uint8_t[::1] active,
                int half_win,
                int max_iter,
                double eps,
                double min_eig):
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t win = 2 * half_win + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] disp_arr = np.array(guess, dtype=np.float64)
    cdef cnp.ndarray[cnp.int8_t, ndim=1] status_arr = np.zeros(n, dtype=np.int8)
    cdef double[:, ::1] disp = disp_arr
    cdef cnp.int8_t[::1] status = status_arr

    cdef cnp.ndarray[cnp.float64_t, ndim=2] tmpl_arr = np.empty((win, win), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ix_arr = np.empty((win, win), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] iy_arr = np.empty((win, win), dtype=np.float64)
    cdef double[:, ::1] tmpl = tmpl_arr
    cdef double[:, ::1] ix = ix_arr
    cdef double[:, ::1] iy = iy_arr

    cdef Py_ssize_t p, r, c, it
    cdef double px, py, sx, sy
    cdef double gxx, gxy, gyy, trace, lam_min, det
    cdef double dx, dy, diff, bx, by, ex, ey
    cdef bint converged

    for p in range(n):
        if not active[p]:
            continue
        px = pts[p, 0]
        py = pts[p, 1]

        gxx = 0.0
        gxy = 0.0
        gyy = 0.0
        for r in range(win):
            sy = py + (r - half_win)
            for c in range(win):
                sx = px + (c - half_win)
                tmpl[r, c] = _bilinear(prev, sx, sy)
                ix[r, c] = _bilinear(grad_x, sx, sy)
                iy[r, c] = _bilinear(grad_y, sx, sy)
                gxx += ix[r, c] * ix[r, c]
                gxy += ix[r, c] * iy[r, c]
                gyy += iy[r, c] * iy[r, c]

        trace = gxx + gyy
        lam_min = 0.5 * (trace - sqrt((gxx - gyy) * (gxx - gyy) + 4.0 * gxy * gxy))
        if lam_min < min_eig:
            status[p] = STATUS_ILL_CONDITIONED
            continue

        det = gxx * gyy - gxy * gxy
        dx = disp[p, 0]
        dy = disp[p, 1]
        converged = False
        for it in range(max_iter):
            bx = 0.0
            by = 0.0
            for r in range(win):
                sy = py + (r - half_win)
                for c in range(win):
                    sx = px + (c - half_win)
                    diff = tmpl[r, c] - _bilinear(nxt, sx + dx, sy + dy)
                    bx += diff * ix[r, c]
                    by += diff * iy[r, c]
            ex = (gyy * bx - gxy * by) / det
            ey = (gxx * by - gxy * bx) / det
            dx += ex
            dy += ey
            if sqrt(ex * ex + ey * ey) < eps:
                converged = True
                break
        disp[p, 0] = dx
        disp[p, 1] = dy
        if not converged:
            status[p] = STATUS_DIVERGED

    return disp_arr, status_arr
