"""Numba-compiled inner loop for the 3-player QRE trace.

One fused sweep per step computes all six pairwise payoff matrices, so the
three payoff tensors are read once instead of nine times; the whole anneal
loop runs without Python dispatch.  Player counts other than 3 use the
numpy path in ``solvers``.  Results agree with the numpy path to floating
point accumulation order.
"""

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap


TERM_EPS_NE = 0
TERM_TERMINAL = 1
TERM_MAX_STEPS = 2


@njit(cache=True)
def _softmax_inplace(z, out):
    m = z[0]
    for i in range(z.shape[0]):
        if z[i] > m:
            m = z[i]
    s = 0.0
    for i in range(z.shape[0]):
        out[i] = np.exp(z[i] - m)
        s += out[i]
    for i in range(z.shape[0]):
        out[i] /= s
    return m + np.log(s)


@njit(cache=True)
def lle_anneal_3p(
    u0,
    u1,
    u2,
    z0,
    z1,
    z2,
    logt0,
    logt1,
    logt2,
    tau_init,
    tau_decay,
    interval,
    gate,
    tau_terminal,
    eps_ne,
    lr,
    max_steps,
    force_anneal,
    trace_out,
):
    """Run the annealed QRE descent; mutates z in place.

    Returns (steps_taken, final_tau, termination_code, trace_rows).
    ``trace_out`` rows are (step, tau, loss, exploitability).
    """
    P, K, R = u0.shape
    n0, n1, n2 = P, K, R
    x0 = np.empty(n0)
    x1 = np.empty(n1)
    x2 = np.empty(n2)
    logx0 = np.empty(n0)
    logx1 = np.empty(n1)
    logx2 = np.empty(n2)
    br0 = np.empty(n0)
    br1 = np.empty(n1)
    br2 = np.empty(n2)
    a0 = np.empty(n0)
    a1 = np.empty(n1)
    a2 = np.empty(n2)
    d0 = np.empty(n0)
    d1 = np.empty(n1)
    d2 = np.empty(n2)
    g0 = np.empty(n0)
    g1 = np.empty(n1)
    g2 = np.empty(n2)
    m0k = np.empty((n0, n1))
    m0r = np.empty((n0, n2))
    m1p = np.empty((n1, n0))
    m1r = np.empty((n1, n2))
    m2p = np.empty((n2, n0))
    m2r = np.empty((n2, n1))
    nvar = n0 + n1 + n2
    am = np.zeros(nvar)
    av = np.zeros(nvar)
    b1 = 0.9
    b2 = 0.999
    eps = 1e-8
    b1t = 1.0
    b2t = 1.0

    tau = tau_init
    step = 0
    term = TERM_MAX_STEPS
    n_trace = 0
    # Adam's fixed-step oscillation can floor the loss just above the
    # anneal gate; back off the step size when a stage stops improving.
    lr_cur = lr
    stall_window = max(4 * interval, 1000)
    best_loss = np.inf
    last_progress = 0
    while step < max_steps:
        lse0 = _softmax_inplace(z0, x0)
        lse1 = _softmax_inplace(z1, x1)
        lse2 = _softmax_inplace(z2, x2)
        for i in range(n0):
            logx0[i] = z0[i] - lse0
        for i in range(n1):
            logx1[i] = z1[i] - lse1
        for i in range(n2):
            logx2[i] = z2[i] - lse2

        m0k[:] = 0.0
        m0r[:] = 0.0
        m1p[:] = 0.0
        m1r[:] = 0.0
        m2p[:] = 0.0
        m2r[:] = 0.0
        for p in range(P):
            xpp = x0[p]
            for k in range(K):
                xkk = x1[k]
                for r in range(R):
                    v0 = u0[p, k, r]
                    v1 = u1[p, k, r]
                    v2 = u2[p, k, r]
                    xrr = x2[r]
                    m0k[p, k] += v0 * xrr
                    m0r[p, r] += v0 * xkk
                    m1p[k, p] += v1 * xrr
                    m1r[k, r] += v1 * xpp
                    m2p[r, p] += v2 * xkk
                    m2r[r, k] += v2 * xpp

        for p in range(n0):
            s = 0.0
            for k in range(n1):
                s += m0k[p, k] * x1[k]
            d0[p] = s
        for k in range(n1):
            s = 0.0
            for p in range(n0):
                s += m1p[k, p] * x0[p]
            d1[k] = s
        for r in range(n2):
            s = 0.0
            for p in range(n0):
                s += m2p[r, p] * x0[p]
            d2[r] = s

        for i in range(n0):
            a0[i] = d0[i] / tau + logt0[i]
        for i in range(n1):
            a1[i] = d1[i] / tau + logt1[i]
        for i in range(n2):
            a2[i] = d2[i] / tau + logt2[i]
        lseb0 = _softmax_inplace(a0, br0)
        lseb1 = _softmax_inplace(a1, br1)
        lseb2 = _softmax_inplace(a2, br2)

        xd0 = 0.0
        kl0 = 0.0
        mx0 = d0[0]
        for i in range(n0):
            xd0 += x0[i] * d0[i]
            kl0 += x0[i] * (logx0[i] - logt0[i])
            if d0[i] > mx0:
                mx0 = d0[i]
        xd1 = 0.0
        kl1 = 0.0
        mx1 = d1[0]
        for i in range(n1):
            xd1 += x1[i] * d1[i]
            kl1 += x1[i] * (logx1[i] - logt1[i])
            if d1[i] > mx1:
                mx1 = d1[i]
        xd2 = 0.0
        kl2 = 0.0
        mx2 = d2[0]
        for i in range(n2):
            xd2 += x2[i] * d2[i]
            kl2 += x2[i] * (logx2[i] - logt2[i])
            if d2[i] > mx2:
                mx2 = d2[i]
        loss = (
            tau * (lseb0 + lseb1 + lseb2)
            - (xd0 + xd1 + xd2)
            + tau * (kl0 + kl1 + kl2)
        )
        exploit = max(0.0, mx0 - xd0) + max(0.0, mx1 - xd1) + max(0.0, mx2 - xd2)

        at_check = step % interval == 0
        if at_check and n_trace < trace_out.shape[0]:
            trace_out[n_trace, 0] = step
            trace_out[n_trace, 1] = tau
            trace_out[n_trace, 2] = loss
            trace_out[n_trace, 3] = exploit
            n_trace += 1
        if exploit <= eps_ne:
            term = TERM_EPS_NE
            break
        if loss < 0.9 * best_loss:
            best_loss = loss
            last_progress = step
        if at_check and loss <= gate:
            if tau <= tau_terminal * (1.0 + 1e-12):
                term = TERM_TERMINAL
                break
            tau = max(tau * tau_decay, tau_terminal)
            lr_cur = lr
            best_loss = np.inf
            last_progress = step
        elif step - last_progress > stall_window:
            if lr_cur > lr / 128.0:
                lr_cur *= 0.5
                best_loss = np.inf
                last_progress = step
            elif force_anneal:
                # stuck in a local basin above the gate: keep tracing anyway
                if tau <= tau_terminal * (1.0 + 1e-12):
                    term = TERM_TERMINAL
                    break
                tau = max(tau * tau_decay, tau_terminal)
                lr_cur = lr
                best_loss = np.inf
                last_progress = step

        # gradients wrt marginals, then chain through softmax
        for p in range(n0):
            s = -d0[p] + tau * (logx0[p] - logt0[p])
            for k in range(n1):
                s += m1p[k, p] * (br1[k] - x1[k])
            for r in range(n2):
                s += m2p[r, p] * (br2[r] - x2[r])
            g0[p] = s
        for k in range(n1):
            s = -d1[k] + tau * (logx1[k] - logt1[k])
            for p in range(n0):
                s += m0k[p, k] * (br0[p] - x0[p])
            for r in range(n2):
                s += m2r[r, k] * (br2[r] - x2[r])
            g1[k] = s
        for r in range(n2):
            s = -d2[r] + tau * (logx2[r] - logt2[r])
            for p in range(n0):
                s += m0r[p, r] * (br0[p] - x0[p])
            for k in range(n1):
                s += m1r[k, r] * (br1[k] - x1[k])
            g2[r] = s

        xg0 = 0.0
        for i in range(n0):
            xg0 += x0[i] * g0[i]
        xg1 = 0.0
        for i in range(n1):
            xg1 += x1[i] * g1[i]
        xg2 = 0.0
        for i in range(n2):
            xg2 += x2[i] * g2[i]

        b1t *= b1
        b2t *= b2
        idx = 0
        for i in range(n0):
            grad = x0[i] * (g0[i] - xg0)
            am[idx] = b1 * am[idx] + (1 - b1) * grad
            av[idx] = b2 * av[idx] + (1 - b2) * grad * grad
            z0[i] -= lr_cur * (am[idx] / (1 - b1t)) / (np.sqrt(av[idx] / (1 - b2t)) + eps)
            idx += 1
        for i in range(n1):
            grad = x1[i] * (g1[i] - xg1)
            am[idx] = b1 * am[idx] + (1 - b1) * grad
            av[idx] = b2 * av[idx] + (1 - b2) * grad * grad
            z1[i] -= lr_cur * (am[idx] / (1 - b1t)) / (np.sqrt(av[idx] / (1 - b2t)) + eps)
            idx += 1
        for i in range(n2):
            grad = x2[i] * (g2[i] - xg2)
            am[idx] = b1 * am[idx] + (1 - b1) * grad
            av[idx] = b2 * av[idx] + (1 - b2) * grad * grad
            z2[i] -= lr_cur * (am[idx] / (1 - b1t)) / (np.sqrt(av[idx] / (1 - b2t)) + eps)
            idx += 1
        step += 1

    return step, tau, term, n_trace
