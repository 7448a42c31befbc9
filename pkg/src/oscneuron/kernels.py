"""Hot inner loops, each as a numba kernel plus a pure-numpy twin.

Dispatch happens in the calling modules through ``_accel.USE_NUMBA``.  Both
twins consume identical inputs (including pre-drawn noise), so they agree to
rounding error and can be cross-checked in the test suite.

Pair-integration state layout (one column per task), in rescaled units where
time is measured in periods of ``f_mid``:

    state[0]  theta1 (rad; callers fold whole turns out between calls)
    state[1]  theta2 (rad; likewise)
    state[2]  detector envelope
    state[3]  1.0 while the detector is charging on the current cycle
    state[4]  sum of held peaks inside the readout window
    state[5]  number of held peaks inside the readout window
    state[6]  sum of the envelope inside the readout window
    state[7]  number of envelope samples inside the readout window
    state[8]  sum of the squared signal inside the readout window
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import njit

TWO_PI = 2.0 * math.pi
N_STATE = 9


# ---------------------------------------------------------------------------
# coupled pair: stochastic Heun + exponential-decay peak detector
# ---------------------------------------------------------------------------

_INV_PI = 1.0 / math.pi
_PI_HI = 3.141592653589793116
_PI_LO = 1.2246467991473532e-16
# Taylor coefficients of sin(r)/r in r**2, enough for |r| <= pi/2 to ~1e-15
_S1, _S2, _S3, _S4 = -1.6666666666666666e-01, 8.3333333333333332e-03, -1.9841269841269841e-04, 2.7557319223985893e-06
_S5, _S6, _S7, _S8 = -2.5052108385441720e-08, 1.6059043836821613e-10, -7.6471637318198164e-13, 2.8114572543455206e-15
_FAST = {"contract"}


@njit(inline="always", fastmath=_FAST, error_model="numpy")
def fast_sin(x):
    """Branch-free sine (abs. error < 1e-13 for |x| < 1e3); lets the step loop vectorize."""
    k = math.floor(x * _INV_PI + 0.5)
    r = (x - k * _PI_HI) - k * _PI_LO
    r2 = r * r
    p = r * (1.0 + r2 * (_S1 + r2 * (_S2 + r2 * (_S3 + r2 * (_S4 + r2 * (_S5 + r2 * (_S6 + r2 * (_S7 + r2 * _S8))))))))
    odd = k - 2.0 * math.floor(0.5 * k)
    return p - 2.0 * odd * p


NOISE_NONE, NOISE_ARRAY, NOISE_HASH = 0, 1, 2
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1
_G64 = np.uint64(_GOLDEN)


@njit(inline="always")
def _mix(z):
    # splitmix64 finalizer
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _mix_np(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hashed_signs(keys, step):
    """±1 increments of both oscillators at ``step`` for every task key, as ``(2, n)``.

    Counter-based: the value depends only on ``(key, step)``.
    """
    ctr = np.uint64((int(step) * _GOLDEN) & _MASK64)
    z = _mix_np(np.asarray(keys, dtype=np.uint64) + ctr)
    b1 = (z >> np.uint64(63)).astype(np.float64)
    b2 = ((z >> np.uint64(62)) & np.uint64(1)).astype(np.float64)
    return np.stack([1.0 - 2.0 * b1, 1.0 - 2.0 * b2])


@njit(nogil=True, fastmath=_FAST, error_model="numpy")
def pair_steps_nb(state, w1, w2, kc, h, q, mode, noise, keys, sigma, n_steps, step0, detect_from, window_from, record):
    """Advance every task by ``n_steps`` steps.

    ``state`` is ``(N_STATE, n_tasks)``.  ``w1``, ``w2`` are natural
    frequencies and ``kc`` the coupling, in cycles per time unit.

    Noise by ``mode``: ``NOISE_NONE`` adds nothing; ``NOISE_ARRAY`` adds
    ``noise[n, j, i]`` (already scaled) to oscillator ``j`` of task ``i`` at
    step ``n``; ``NOISE_HASH`` adds ``±sigma`` with signs hashed from
    ``(keys[i], step)``.  ``noise`` must have at least one row in every mode.

    When ``record`` has a nonzero first axis the signal and both phases go to
    ``record[n, 0:3, i]``.
    """
    n_tasks = state.shape[1]
    keep = record.shape[0] > 0
    use_array = mode == NOISE_ARRAY
    use_hash = mode == NOISE_HASH
    ck = TWO_PI * kc
    th1a = state[0]
    th2a = state[1]
    enva = state[2]
    chga = state[3]
    psa = state[4]
    pca = state[5]
    esa = state[6]
    eca = state[7]
    ssa = state[8]
    # steps outside, tasks inside: the task loops are flat and vectorize
    for n in range(n_steps):
        step = step0 + n
        ctr = np.uint64(step) * _G64
        row = n if use_array else 0
        nz1 = noise[row, 0]
        nz2 = noise[row, 1]
        for i in range(n_tasks):
            th1 = th1a[i]
            th2 = th2a[i]
            c1 = TWO_PI * w1[i]
            c2 = TWO_PI * w2[i]
            if use_hash:
                z = _mix(keys[i] + ctr)
                n1 = sigma - 2.0 * sigma * np.float64(z >> np.uint64(63))
                n2 = sigma - 2.0 * sigma * np.float64((z >> np.uint64(62)) & np.uint64(1))
            else:
                n1 = nz1[i]
                n2 = nz2[i]
            sd = fast_sin(th1 - th2)
            r1 = c1 - ck * sd
            r2 = c2 + ck * sd
            sp = fast_sin((th1 + r1 * h + n1) - (th2 + r2 * h + n2))
            th1a[i] = th1 + 0.5 * (r1 + c1 - ck * sp) * h + n1
            th2a[i] = th2 + 0.5 * (r2 + c2 + ck * sp) * h + n2
        if keep:
            for i in range(n_tasks):
                record[n, 0, i] = fast_sin(th1a[i]) + fast_sin(th2a[i])
                record[n, 1, i] = th1a[i]
                record[n, 2, i] = th2a[i]
        if step >= detect_from:
            win = 1.0 if step >= window_from else 0.0
            for i in range(n_tasks):
                s = fast_sin(th1a[i]) + fast_sin(th2a[i])
                # branch-free update
                env = enva[i]
                dec = env * q
                up = 1.0 if s >= dec else 0.0
                drop = chga[i] * (1.0 - up) * win
                psa[i] += drop * env
                pca[i] += drop
                env = up * s + (1.0 - up) * dec
                enva[i] = env
                chga[i] = up
                esa[i] += win * env
                eca[i] += win
                ssa[i] += win * s * s


def pair_steps_np(state, w1, w2, kc, h, q, mode, noise, keys, sigma, n_steps, step0, detect_from, window_from, record):
    """Numpy twin of :func:`pair_steps_nb` (uses ``np.sin``): vectorized over tasks, looped over time."""
    th1 = state[0].copy()
    th2 = state[1].copy()
    env = state[2].copy()
    chg = state[3] > 0.0
    psum = state[4].copy()
    pcnt = state[5].copy()
    esum = state[6].copy()
    ecnt = state[7].copy()
    ssum = state[8].copy()
    c1 = TWO_PI * w1
    c2 = TWO_PI * w2
    ck = TWO_PI * kc
    keep = record.shape[0] > 0
    for n in range(n_steps):
        sd = np.sin(th1 - th2)
        r1 = c1 - ck * sd
        r2 = c2 + ck * sd
        if mode == NOISE_HASH:
            n1, n2 = sigma * hashed_signs(keys, step0 + n)
        else:
            n1 = noise[n if mode == NOISE_ARRAY else 0, 0]
            n2 = noise[n if mode == NOISE_ARRAY else 0, 1]
        sp = np.sin((th1 + r1 * h + n1) - (th2 + r2 * h + n2))
        th1 = th1 + 0.5 * (r1 + c1 - ck * sp) * h + n1
        th2 = th2 + 0.5 * (r2 + c2 + ck * sp) * h + n2
        step = step0 + n
        if step < detect_from and not keep:
            continue
        s = np.sin(th1) + np.sin(th2)
        if keep:
            record[n, 0] = s
            record[n, 1] = th1
            record[n, 2] = th2
        if step >= detect_from:
            dec = env * q
            up = s >= dec
            if step >= window_from:
                drop = chg & ~up
                psum = psum + np.where(drop, env, 0.0)
                pcnt = pcnt + drop
            env = np.where(up, s, dec)
            chg = up
            if step >= window_from:
                esum = esum + env
                ecnt = ecnt + 1.0
                ssum = ssum + s * s
    state[0] = th1
    state[1] = th2
    state[2] = env
    state[3] = chg
    state[4] = psum
    state[5] = pcnt
    state[6] = esum
    state[7] = ecnt
    state[8] = ssum


# ---------------------------------------------------------------------------
# peak detector on a recorded trace
# ---------------------------------------------------------------------------


@njit(nogil=True)
def detector_nb(samples, q, window_from):
    """Run the envelope follower; return (held-peak sum, count, envelope sum, count)."""
    env = 0.0
    chg = False
    psum = 0.0
    pcnt = 0
    esum = 0.0
    ecnt = 0
    for n in range(samples.shape[0]):
        s = samples[n]
        dec = env * q
        if s >= dec:
            env = s
            chg = True
        else:
            if chg and n >= window_from:
                psum += env
                pcnt += 1
            chg = False
            env = dec
        if n >= window_from:
            esum += env
            ecnt += 1
    return psum, pcnt, esum, ecnt


def detector_np(samples, q, window_from):
    """Numpy twin of :func:`detector_nb`.

    Uses ``env[n] = q**n * max_{m<=n}(max(s[m], 0) * q**-m)`` in blocks short
    enough that ``q**-m`` stays finite.
    """
    s = np.asarray(samples, dtype=np.float64)
    n_total = s.shape[0]
    if n_total == 0:
        return 0.0, 0, 0.0, 0
    log_q = math.log(q)
    block = max(1, int(40.0 / max(-log_q, 1e-300)))
    env = np.empty(n_total)
    charging = np.empty(n_total, dtype=bool)
    carry = 0.0
    for lo in range(0, n_total, block):
        hi = min(lo + block, n_total)
        grow = np.exp(-log_q * np.arange(hi - lo, dtype=np.float64))
        scaled = s[lo:hi] * grow
        start = carry * q
        run = np.maximum(np.maximum.accumulate(scaled), start)
        prev = np.empty_like(run)
        prev[0] = start
        prev[1:] = run[:-1]
        charging[lo:hi] = scaled >= prev
        env[lo:hi] = run / grow
        carry = env[hi - 1]
    held = charging[:-1] & ~charging[1:]
    idx = np.nonzero(held)[0]
    idx = idx[idx + 1 >= window_from]
    win = env[window_from:]
    return float(env[idx].sum()), int(idx.size), float(win.sum()), int(win.size)


# ---------------------------------------------------------------------------
# single-neuron gate learning, one task per initial condition
# ---------------------------------------------------------------------------

KIND_OSC, KIND_SIG, KIND_THR = 0, 1, 2
GATE_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])


@njit
def _act_nb(kind, a, p):
    """(z, dz/da) for a scalar pre-activation; ``p`` is rho, gain or level."""
    if kind == KIND_OSC:
        u = a * p
        if abs(u) >= 1.0:
            return 0.0, 0.0
        r = math.sqrt(1.0 - u * u)
        s = math.sqrt(2.0 + 2.0 * r)
        zs = 2.0 - math.sqrt(2.0)
        return (s - math.sqrt(2.0)) / zs, -(a * p * p) / (s * r * zs)
    if kind == KIND_SIG:
        x = p * a
        if x >= 0.0:
            z = 1.0 / (1.0 + math.exp(-x))
        else:
            e = math.exp(x)
            z = e / (1.0 + e)
        return z, p * z * (1.0 - z)
    return (1.0 if a > p else 0.0), 0.0


@njit(nogil=True)
def gate_ensemble_nb(params, target, kind, p, lr, max_iter):
    """Train one neuron per row of ``params`` (w1, w2, b) in place.

    Full-batch gradient descent on ½Σ(z - t)² (perceptron rule for the
    threshold kind).  A task stops as soon as all four outputs sit on the
    correct side of 0.5.  Returns the per-task iteration count at stop
    (``max_iter`` if it never succeeded) and a success flag.
    """
    n = params.shape[0]
    iters = np.full(n, max_iter, dtype=np.int64)
    ok = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        w1 = params[i, 0]
        w2 = params[i, 1]
        b = params[i, 2]
        for it in range(max_iter + 1):
            g1 = 0.0
            g2 = 0.0
            gb = 0.0
            correct = 0
            for r in range(4):
                x1 = GATE_X[r, 0]
                x2 = GATE_X[r, 1]
                z, dz = _act_nb(kind, w1 * x1 + w2 * x2 + b, p)
                t = target[r]
                if (z > 0.5) == (t > 0.5):
                    correct += 1
                if kind == KIND_THR:
                    d = t - z
                    g1 -= d * x1
                    g2 -= d * x2
                    gb -= d
                else:
                    d = (z - t) * dz
                    g1 += d * x1
                    g2 += d * x2
                    gb += d
            if correct == 4:
                ok[i] = True
                iters[i] = it
                break
            if it == max_iter:
                break
            w1 -= lr * g1
            w2 -= lr * g2
            b -= lr * gb
        params[i, 0] = w1
        params[i, 1] = w2
        params[i, 2] = b
    return iters, ok


def _act_np(kind, a, p):
    if kind == KIND_OSC:
        u = a * p
        inside = np.abs(u) < 1.0
        r = np.sqrt(np.where(inside, 1.0 - u * u, 1.0))
        s = np.sqrt(2.0 + 2.0 * r)
        zs = 2.0 - math.sqrt(2.0)
        z = np.where(inside, (s - math.sqrt(2.0)) / zs, 0.0)
        return z, np.where(inside, -(a * p * p) / (s * r * zs), 0.0)
    if kind == KIND_SIG:
        x = p * a
        e = np.exp(-np.abs(x))
        z = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        return z, p * z * (1.0 - z)
    return (a > p).astype(np.float64), np.zeros_like(a)


def gate_ensemble_np(params, target, kind, p, lr, max_iter):
    """Numpy twin of :func:`gate_ensemble_nb`, vectorized over tasks."""
    n = params.shape[0]
    iters = np.full(n, max_iter, dtype=np.int64)
    ok = np.zeros(n, dtype=bool)
    active = np.arange(n)
    X = GATE_X
    t = np.asarray(target, dtype=np.float64)
    for it in range(max_iter + 1):
        if active.size == 0:
            break
        P = params[active]
        A = P[:, :2] @ X.T + P[:, 2:3]
        Z, dZ = _act_np(kind, A, p)
        done = np.all((Z > 0.5) == (t > 0.5), axis=1)
        ok[active[done]] = True
        iters[active[done]] = it
        if it == max_iter:
            break
        keep = ~done
        active, A, Z, dZ, P = active[keep], A[keep], Z[keep], dZ[keep], P[keep]
        D = (Z - t) * dZ if kind != KIND_THR else -(t - Z)
        G = np.concatenate([D @ X, D.sum(axis=1, keepdims=True)], axis=1)
        params[active] = P - lr * G
    return iters, ok


# ---------------------------------------------------------------------------
# per-example SGD epoch for a dense network
# ---------------------------------------------------------------------------


@njit
def _train_act_nb(kind, a, p, cap, recover):
    z, dz = _act_nb(kind, a, p)
    if cap > 0.0:
        if dz > cap:
            dz = cap
        elif dz < -cap:
            dz = -cap
        if recover and kind == KIND_OSC and abs(a * p) >= 1.0:
            dz = -cap if a > 0.0 else cap
    return z, dz


@njit(nogil=True)
def sgd_epoch_nb(X, T, order, weights, biases, kind, p, lr, cap, recover_out):
    """One pass of per-example SGD over ``order``; updates parameters in place.

    ``weights``/``biases`` are typed lists of float64 arrays (out x in / out).
    Returns the mean of ½Σ(z - t)² seen during the pass.
    """
    n_layers = len(weights)
    zs = [np.empty(0) for _ in range(n_layers + 1)]
    ds = [np.empty(0) for _ in range(n_layers)]
    for l in range(n_layers):
        zs[l + 1] = np.empty(weights[l].shape[0])
        ds[l] = np.empty(weights[l].shape[0])
    loss = 0.0
    for idx in order:
        zs[0] = X[idx]
        for l in range(n_layers):
            W = weights[l]
            b = biases[l]
            zin = zs[l]
            zout = zs[l + 1]
            dl = ds[l]
            rec = recover_out and l == n_layers - 1
            for o in range(W.shape[0]):
                s = b[o]
                for j in range(W.shape[1]):
                    s += W[o, j] * zin[j]
                zout[o], dl[o] = _train_act_nb(kind, s, p, cap, rec)
        zo = zs[n_layers]
        dl = ds[n_layers - 1]
        for o in range(zo.shape[0]):
            e = zo[o] - T[idx, o]
            loss += 0.5 * e * e
            dl[o] *= e
        for l in range(n_layers - 1, -1, -1):
            W = weights[l]
            dl = ds[l]
            if l > 0:
                dprev = ds[l - 1]
                for j in range(W.shape[1]):
                    g = 0.0
                    for o in range(W.shape[0]):
                        g += W[o, j] * dl[o]
                    dprev[j] *= g
            zin = zs[l]
            b = biases[l]
            for o in range(W.shape[0]):
                c = lr * dl[o]
                if c != 0.0:
                    for j in range(W.shape[1]):
                        if zin[j] != 0.0:
                            W[o, j] -= c * zin[j]
                    b[o] -= c
    return loss / max(len(order), 1)


def sgd_epoch_np(X, T, order, weights, biases, kind, p, lr, cap, recover_out):
    """Numpy twin of :func:`sgd_epoch_nb` (same update order, same arithmetic)."""
    n_layers = len(weights)
    loss = 0.0
    for idx in order:
        zs = [X[idx]]
        ds = []
        for l in range(n_layers):
            a = weights[l] @ zs[-1] + biases[l]
            z, dz = _act_np(kind, a, p)
            if cap > 0.0:
                dz = np.clip(dz, -cap, cap)
                if recover_out and kind == KIND_OSC and l == n_layers - 1:
                    dz = np.where(np.abs(a * p) >= 1.0, -np.sign(a) * cap, dz)
            zs.append(z)
            ds.append(dz)
        e = zs[-1] - T[idx]
        loss += 0.5 * float(e @ e)
        delta = ds[-1] * e
        for l in range(n_layers - 1, -1, -1):
            back = weights[l].T @ delta if l > 0 else None
            weights[l] -= lr * np.outer(delta, zs[l])
            biases[l] -= lr * delta
            if l > 0:
                delta = ds[l - 1] * back
    return loss / max(len(order), 1)
