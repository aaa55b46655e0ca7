# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled gossip kernels; mirror of ``_pykernels`` operation for operation."""

from libc.math cimport floor, fmod, fabs, M_PI

cdef double TIE_TOL = 1e-9
cdef double GRID_TOL = 1e-9
cdef double TWO_PI = 2.0 * M_PI


cdef inline long long round_half_away(double x) nogil:
    cdef double f = floor(x)
    cdef double frac = x - f
    if frac > 0.5 + TIE_TOL:
        return <long long>f + 1
    if frac < 0.5 - TIE_TOL:
        return <long long>f
    if f + 0.5 > 0.0:
        return <long long>f + 1
    return <long long>f


cdef inline double wrap(double t) nogil:
    cdef double out = fmod(t, TWO_PI)
    if out < 0.0:
        out += TWO_PI
    if out >= TWO_PI:
        out = 0.0
    return out


cdef inline long long pmod(long long k, long long m) nogil:
    cdef long long r = k % m
    if r < 0:
        r += m
    return r


def z_steps(long long[::1] z, long long[::1] ei, long long[::1] ej, double omega,
            long long[::1] picks, long long[:, ::1] trace, bint record, bint stop_at_eq):
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t kmax = picks.shape[0]
    cdef Py_ssize_t k, m
    cdef long long e, i, j, zi, zj, lo, hi
    cdef Py_ssize_t applied = 0
    cdef bint hit = False
    with nogil:
        for k in range(kmax):
            e = picks[k]
            i = ei[e]
            j = ej[e]
            zi = z[i]
            zj = z[j]
            z[i] = zi + round_half_away(omega * <double>(zj - zi))
            z[j] = zj + round_half_away(omega * <double>(zi - zj))
            applied = k + 1
            if record:
                for m in range(n):
                    trace[k, m] = z[m]
            if stop_at_eq:
                lo = z[0]
                hi = z[0]
                for m in range(1, n):
                    if z[m] < lo:
                        lo = z[m]
                    if z[m] > hi:
                        hi = z[m]
                if hi - lo <= 1:
                    hit = True
                    break
    return applied, hit


cdef inline bint at_target(double[::1] lr, double[::1] th, double[::1] lrt,
                           double[::1] tht, Py_ssize_t k, double r_tol, double t_tol) nogil:
    return fabs(lr[k] - lrt[k]) <= r_tol and fabs(th[k] - tht[k]) <= t_tol


def y_steps(double[::1] lr, double[::1] th, double[::1] lr_t, double[::1] th_t,
            double log_a, long long M, double omega, bint signed_mean,
            long long[::1] ei, long long[::1] ej, long long[::1] picks,
            double[:, ::1] noise_r, double[:, ::1] noise_t, bint has_noise,
            double nc0, double nc1, double nref,
            double lo_lr, double hi_lr,
            double[:, ::1] trace_lr, double[:, ::1] trace_th, bint record,
            bint stop_at_target):
    cdef Py_ssize_t n = lr.shape[0]
    cdef Py_ssize_t kmax = picks.shape[0]
    cdef Py_ssize_t step, m
    cdef long long e, i, j
    cdef double theta_b = TWO_PI / <double>M
    cdef double r_tol = GRID_TOL * log_a
    cdef double t_tol = GRID_TOL * theta_b
    cdef double eps = GRID_TOL * theta_b
    cdef double w1 = 1.0 - omega
    cdef double lri, lrj, thi, thj, qi, qj, ai, aj, mi, mj
    cdef double new_lri, new_lrj, new_thi, new_thj, oi, oj, di, dj
    cdef long long matched = 0
    cdef int before
    cdef Py_ssize_t applied = 0
    cdef bint hit = False
    cdef Py_ssize_t first_violation = -1

    with nogil:
        for m in range(n):
            if at_target(lr, th, lr_t, th_t, m, r_tol, t_tol):
                matched += 1
        for step in range(kmax):
            e = picks[step]
            i = ei[e]
            j = ej[e]
            lri = lr[i]
            lrj = lr[j]
            thi = th[i]
            thj = th[j]
            if has_noise:
                lri = lri + noise_r[step, 0] * (nc0 + nc1 * (lri - nref))
                lrj = lrj + noise_r[step, 1] * (nc0 + nc1 * (lrj - nref))
                thi = wrap(thi + noise_t[step, 0])
                thj = wrap(thj + noise_t[step, 1])
            qi = <double>round_half_away(lri / log_a) * log_a
            qj = <double>round_half_away(lrj / log_a) * log_a
            ai = <double>pmod(round_half_away(thi / theta_b), M) * theta_b
            aj = <double>pmod(round_half_away(thj / theta_b), M) * theta_b

            mi = w1 * qi + omega * (qj - (lr_t[j] - lr_t[i]))
            mj = w1 * qj + omega * (qi - (lr_t[i] - lr_t[j]))
            new_lri = <double>round_half_away(mi / log_a) * log_a
            new_lrj = <double>round_half_away(mj / log_a) * log_a

            oi = wrap(aj - wrap(th_t[j] - th_t[i]))
            di = wrap(oi - ai)
            if di > TWO_PI - eps:
                di = 0.0
            if signed_mean and di > M_PI + eps:
                di -= TWO_PI
            oj = wrap(ai - wrap(th_t[i] - th_t[j]))
            dj = wrap(oj - aj)
            if dj > TWO_PI - eps:
                dj = 0.0
            if signed_mean and dj > M_PI + eps:
                dj -= TWO_PI
            new_thi = <double>pmod(round_half_away(wrap(ai + omega * di) / theta_b), M) * theta_b
            new_thj = <double>pmod(round_half_away(wrap(aj + omega * dj) / theta_b), M) * theta_b

            before = at_target(lr, th, lr_t, th_t, i, r_tol, t_tol) + \
                at_target(lr, th, lr_t, th_t, j, r_tol, t_tol)
            lr[i] = new_lri
            lr[j] = new_lrj
            th[i] = new_thi
            th[j] = new_thj
            matched += at_target(lr, th, lr_t, th_t, i, r_tol, t_tol) + \
                at_target(lr, th, lr_t, th_t, j, r_tol, t_tol) - before
            applied = step + 1
            if first_violation < 0 and not (lo_lr < new_lri < hi_lr and lo_lr < new_lrj < hi_lr):
                first_violation = step
            if record:
                for m in range(n):
                    trace_lr[step, m] = lr[m]
                    trace_th[step, m] = th[m]
            if stop_at_target and matched == n:
                hit = True
                break
    return applied, hit, first_violation
