"""Pure-Python gossip kernels.

Loaded when the compiled ``_ckernels`` extension is unavailable (or when
``QFORMATION_PURE_PYTHON=1``).  Signatures and floating-point operation order
match ``_ckernels.pyx`` exactly so both backends produce identical traces.
"""

from __future__ import annotations

import math

TIE_TOL = 1e-9
GRID_TOL = 1e-9
TWO_PI = 2.0 * math.pi
PI = math.pi


def round_half_away(x):
    f = math.floor(x)
    frac = x - f
    if frac > 0.5 + TIE_TOL:
        return int(f) + 1
    if frac < 0.5 - TIE_TOL:
        return int(f)
    return int(f) + 1 if f + 0.5 > 0.0 else int(f)


def _wrap(t):
    out = math.fmod(t, TWO_PI)
    if out < 0.0:
        out += TWO_PI
    if out >= TWO_PI:
        out = 0.0
    return out


def z_steps(z, ei, ej, omega, picks, trace, record, stop_at_eq):
    """Apply quantized-averaging steps in place.

    Returns ``(n_applied, hit)`` where ``hit`` is true when ``stop_at_eq`` was
    set and the state reached spread <= 1 after ``n_applied`` steps.
    """
    zs = [int(v) for v in z]
    n = len(zs)
    eil = ei.tolist()
    ejl = ej.tolist()
    pl = picks.tolist()
    applied = 0
    hit = False
    for k, e in enumerate(pl):
        i = eil[e]
        j = ejl[e]
        zi = zs[i]
        zj = zs[j]
        zs[i] = zi + round_half_away(omega * (zj - zi))
        zs[j] = zj + round_half_away(omega * (zi - zj))
        applied = k + 1
        if record:
            trace[k, :] = zs
        if stop_at_eq and max(zs) - min(zs) <= 1:
            hit = True
            break
    for k in range(n):
        z[k] = zs[k]
    return applied, hit


def y_steps(lr, th, lr_t, th_t, log_a, M, omega, signed_mean,
            ei, ej, picks,
            noise_r, noise_t, has_noise, nc0, nc1, nref,
            lo_lr, hi_lr,
            trace_lr, trace_th, record, stop_at_target):
    """Apply quantized formation-control steps in place.

    State is log-radius ``lr`` and angle ``th``.  Perceived values are
    ``lr + g*(nc0 + nc1*(lr - nref))`` and ``wrap(th + gt)`` when
    ``has_noise``; ``noise_r``/``noise_t`` hold one row ``(g_i, g_j)`` per
    step.  Returns ``(n_applied, hit, first_violation)`` with chunk-relative
    step counts and ``-1`` for "no violation".
    """
    n = len(lr)
    lrs = lr.tolist()
    ths = th.tolist()
    lrt = lr_t.tolist()
    tht = th_t.tolist()
    eil = ei.tolist()
    ejl = ej.tolist()
    pl = picks.tolist()
    if has_noise:
        nr = noise_r.tolist()
        nt = noise_t.tolist()
    theta_b = TWO_PI / M
    r_tol = GRID_TOL * log_a
    t_tol = GRID_TOL * theta_b
    eps = GRID_TOL * theta_b
    w1 = 1.0 - omega

    def at_target(k):
        return abs(lrs[k] - lrt[k]) <= r_tol and abs(ths[k] - tht[k]) <= t_tol

    matched = sum(1 for k in range(n) if at_target(k))
    applied = 0
    hit = False
    first_violation = -1
    for step, e in enumerate(pl):
        i = eil[e]
        j = ejl[e]
        lri = lrs[i]
        lrj = lrs[j]
        thi = ths[i]
        thj = ths[j]
        if has_noise:
            gi, gj = nr[step]
            lri = lri + gi * (nc0 + nc1 * (lri - nref))
            lrj = lrj + gj * (nc0 + nc1 * (lrj - nref))
            hi_, hj_ = nt[step]
            thi = _wrap(thi + hi_)
            thj = _wrap(thj + hj_)
        # quantize perceived values
        qi = round_half_away(lri / log_a) * log_a
        qj = round_half_away(lrj / log_a) * log_a
        ai = (round_half_away(thi / theta_b) % M) * theta_b
        aj = (round_half_away(thj / theta_b) % M) * theta_b
        # radial channel
        mi = w1 * qi + omega * (qj - (lrt[j] - lrt[i]))
        mj = w1 * qj + omega * (qi - (lrt[i] - lrt[j]))
        new_lri = round_half_away(mi / log_a) * log_a
        new_lrj = round_half_away(mj / log_a) * log_a
        # angular channel
        oi = _wrap(aj - _wrap(tht[j] - tht[i]))
        di = _wrap(oi - ai)
        if di > TWO_PI - eps:
            di = 0.0
        if signed_mean and di > PI + eps:
            di -= TWO_PI
        oj = _wrap(ai - _wrap(tht[i] - tht[j]))
        dj = _wrap(oj - aj)
        if dj > TWO_PI - eps:
            dj = 0.0
        if signed_mean and dj > PI + eps:
            dj -= TWO_PI
        new_thi = (round_half_away(_wrap(ai + omega * di) / theta_b) % M) * theta_b
        new_thj = (round_half_away(_wrap(aj + omega * dj) / theta_b) % M) * theta_b

        before = at_target(i) + at_target(j)
        lrs[i] = new_lri
        lrs[j] = new_lrj
        ths[i] = new_thi
        ths[j] = new_thj
        matched += at_target(i) + at_target(j) - before
        applied = step + 1
        if first_violation < 0 and not (
            lo_lr < new_lri < hi_lr and lo_lr < new_lrj < hi_lr
        ):
            first_violation = step
        if record:
            trace_lr[step, :] = lrs
            trace_th[step, :] = ths
        if stop_at_target and matched == n:
            hit = True
            break
    for k in range(n):
        lr[k] = lrs[k]
        th[k] = ths[k]
    return applied, hit, first_violation
