"""Hot loops: MLP mini-batch SGD and LASSO coordinate descent.

Every kernel exists twice: an explicit-loop version compiled by numba and a
vectorised numpy version. Both consume identical inputs (shuffling and
initialisation happen in the caller) so they agree up to rounding.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

MSE = 0
CROSS_ENTROPY = 1


# ---------------------------------------------------------------------------
# MLP: numba path
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _nb_accumulate(X, T, rows, W1, b1, W2, b2, gW1, gb1, gW2, gb2, loss_code):
    """Add the summed per-sample gradients of ``rows`` into g*; return summed loss.

    Inner loops run over contiguous 1-D row views so LLVM can vectorise them.
    """
    d, h = W1.shape
    q = W2.shape[1]
    W2T = np.ascontiguousarray(W2.T)
    gW2T = np.zeros((q, h))
    a = np.empty(h)
    s = np.empty(h)
    y = np.empty(q)
    dy = np.empty(q)
    total = 0.0
    for r in range(rows.shape[0]):
        j = rows[r]
        for k in range(h):
            a[k] = b1[k]
        for i in range(d):
            xi = X[j, i]
            wi = W1[i]
            for k in range(h):
                a[k] += xi * wi[k]
        for k in range(h):
            a[k] = max(a[k], 0.0)
        for c in range(q):
            wc = W2T[c]
            acc = b2[c]
            for k in range(h):
                acc += a[k] * wc[k]
            y[c] = acc
        if loss_code == 0:
            for c in range(q):
                diff = y[c] - T[j, c]
                total += diff * diff
                dy[c] = 2.0 * diff
        else:
            m = y[0]
            for c in range(1, q):
                m = max(m, y[c])
            se = 0.0
            for c in range(q):
                se += np.exp(y[c] - m)
            lse = m + np.log(se)
            tsum = 0.0
            for c in range(q):
                tsum += T[j, c]
                total += T[j, c] * (lse - y[c])
            for c in range(q):
                dy[c] = np.exp(y[c] - lse) * tsum - T[j, c]
        for k in range(h):
            s[k] = 0.0
        for c in range(q):
            g = dy[c]
            gb2[c] += g
            gc = gW2T[c]
            wc = W2T[c]
            for k in range(h):
                gc[k] += a[k] * g
                s[k] += wc[k] * g
        for k in range(h):
            if a[k] <= 0.0:
                s[k] = 0.0
            gb1[k] += s[k]
        for i in range(d):
            xi = X[j, i]
            gi = gW1[i]
            for k in range(h):
                gi[k] += xi * s[k]
    gW2 += gW2T.T
    return total


@njit(cache=True, nogil=True)
def _nb_batch_grad(X, T, W1, b1, W2, b2, weight_decay, loss_code):
    n = X.shape[0]
    gW1 = np.zeros_like(W1)
    gb1 = np.zeros_like(b1)
    gW2 = np.zeros_like(W2)
    gb2 = np.zeros_like(b2)
    rows = np.arange(n)
    total = _nb_accumulate(X, T, rows, W1, b1, W2, b2, gW1, gb1, gW2, gb2, loss_code)
    inv = 1.0 / n
    gW1 *= inv
    gb1 *= inv
    gW2 *= inv
    gb2 *= inv
    gW1 += weight_decay * W1
    gW2 += weight_decay * W2
    obj = total * inv + 0.5 * weight_decay * (np.sum(W1 * W1) + np.sum(W2 * W2))
    return obj, gW1, gb1, gW2, gb2


@njit(cache=True, nogil=True)
def _nb_train(X, T, W1, b1, W2, b2, order, lr, momentum, weight_decay,
              batch_size, loss_code):
    n_epochs, n = order.shape
    vW1 = np.zeros_like(W1)
    vb1 = np.zeros_like(b1)
    vW2 = np.zeros_like(W2)
    vb2 = np.zeros_like(b2)
    gW1 = np.empty_like(W1)
    gb1 = np.empty_like(b1)
    gW2 = np.empty_like(W2)
    gb2 = np.empty_like(b2)
    epoch_loss = np.empty(n_epochs)
    step = 0
    for e in range(n_epochs):
        total = 0.0
        for start in range(0, n, batch_size):
            stop = min(start + batch_size, n)
            gW1[:] = 0.0
            gb1[:] = 0.0
            gW2[:] = 0.0
            gb2[:] = 0.0
            part = _nb_accumulate(X, T, order[e, start:stop], W1, b1, W2, b2,
                                  gW1, gb1, gW2, gb2, loss_code)
            if not np.isfinite(part):
                return epoch_loss[:e], step
            total += part
            inv = 1.0 / (stop - start)
            vW1 *= momentum
            vW1 -= lr * (gW1 * inv + weight_decay * W1)
            vb1 *= momentum
            vb1 -= lr * (gb1 * inv)
            vW2 *= momentum
            vW2 -= lr * (gW2 * inv + weight_decay * W2)
            vb2 *= momentum
            vb2 -= lr * (gb2 * inv)
            W1 += vW1
            b1 += vb1
            W2 += vW2
            b2 += vb2
            step += 1
        epoch_loss[e] = total / n
    return epoch_loss, -1


# ---------------------------------------------------------------------------
# MLP: numpy path
# ---------------------------------------------------------------------------


def _np_forward_backward(Xb, Tb, W1, b1, W2, b2, loss_code):
    Z = Xb @ W1 + b1
    A = np.maximum(Z, 0.0)
    Y = A @ W2 + b2
    if loss_code == MSE:
        diff = Y - Tb
        total = float(np.sum(diff * diff))
        dY = 2.0 * diff
    else:
        m = Y.max(axis=1, keepdims=True)
        lse = m + np.log(np.exp(Y - m).sum(axis=1, keepdims=True))
        total = float(np.sum(Tb * (lse - Y)))
        dY = np.exp(Y - lse) * Tb.sum(axis=1, keepdims=True) - Tb
    gW2 = A.T @ dY
    gb2 = dY.sum(axis=0)
    dZ = (dY @ W2.T) * (Z > 0.0)
    gW1 = Xb.T @ dZ
    gb1 = dZ.sum(axis=0)
    return total, gW1, gb1, gW2, gb2


def _np_batch_grad(X, T, W1, b1, W2, b2, weight_decay, loss_code):
    n = X.shape[0]
    total, gW1, gb1, gW2, gb2 = _np_forward_backward(X, T, W1, b1, W2, b2, loss_code)
    obj = total / n + 0.5 * weight_decay * (np.sum(W1 * W1) + np.sum(W2 * W2))
    return (obj, gW1 / n + weight_decay * W1, gb1 / n,
            gW2 / n + weight_decay * W2, gb2 / n)


def _np_train(X, T, W1, b1, W2, b2, order, lr, momentum, weight_decay,
              batch_size, loss_code):
    n_epochs, n = order.shape
    vel = [np.zeros_like(p) for p in (W1, b1, W2, b2)]
    epoch_loss = np.empty(n_epochs)
    step = 0
    for e in range(n_epochs):
        total = 0.0
        for start in range(0, n, batch_size):
            rows = order[e, start:start + batch_size]
            part, gW1, gb1, gW2, gb2 = _np_forward_backward(
                X[rows], T[rows], W1, b1, W2, b2, loss_code)
            if not np.isfinite(part):
                return epoch_loss[:e], step
            total += part
            inv = 1.0 / rows.shape[0]
            grads = (gW1 * inv + weight_decay * W1, gb1 * inv,
                     gW2 * inv + weight_decay * W2, gb2 * inv)
            for p, v, g in zip((W1, b1, W2, b2), vel, grads):
                v *= momentum
                v -= lr * g
                p += v
            step += 1
        epoch_loss[e] = total / n
    return epoch_loss, -1


# ---------------------------------------------------------------------------
# LASSO coordinate descent
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _nb_lasso_cd(X, t, beta, lam, tol, max_sweeps):
    n, p = X.shape
    col_sq = np.zeros(p)
    for i in range(p):
        s = 0.0
        for j in range(n):
            s += X[j, i] * X[j, i]
        col_sq[i] = s / n
    r = t.copy()
    for i in range(p):
        if beta[i] != 0.0:
            for j in range(n):
                r[j] -= X[j, i] * beta[i]
    max_change = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        max_change = 0.0
        for i in range(p):
            if col_sq[i] == 0.0:
                beta[i] = 0.0
                continue
            rho = 0.0
            for j in range(n):
                rho += X[j, i] * r[j]
            rho = rho / n + col_sq[i] * beta[i]
            if rho > lam:
                new = (rho - lam) / col_sq[i]
            elif rho < -lam:
                new = (rho + lam) / col_sq[i]
            else:
                new = 0.0
            delta = new - beta[i]
            if delta != 0.0:
                for j in range(n):
                    r[j] -= X[j, i] * delta
                beta[i] = new
                if abs(delta) > max_change:
                    max_change = abs(delta)
        sweeps += 1
        if max_change < tol:
            break
    return beta, sweeps, max_change


def _np_lasso_cd(X, t, beta, lam, tol, max_sweeps):
    n, p = X.shape
    col_sq = np.einsum("ji,ji->i", X, X) / n
    r = t - X @ beta
    max_change = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        max_change = 0.0
        for i in range(p):
            if col_sq[i] == 0.0:
                beta[i] = 0.0
                continue
            rho = X[:, i] @ r / n + col_sq[i] * beta[i]
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[i]
            delta = new - beta[i]
            if delta != 0.0:
                r -= X[:, i] * delta
                beta[i] = new
                max_change = max(max_change, abs(delta))
        sweeps += 1
        if max_change < tol:
            break
    return beta, sweeps, max_change


if USE_NUMBA:
    train_mlp = _nb_train
    mlp_batch_grad = _nb_batch_grad
    lasso_cd = _nb_lasso_cd
else:
    train_mlp = _np_train
    mlp_batch_grad = _np_batch_grad
    lasso_cd = _np_lasso_cd

BACKENDS = {
    "numba": {"train_mlp": _nb_train, "mlp_batch_grad": _nb_batch_grad,
              "lasso_cd": _nb_lasso_cd},
    "numpy": {"train_mlp": _np_train, "mlp_batch_grad": _np_batch_grad,
              "lasso_cd": _np_lasso_cd},
}
