"""Pure numpy implementation of the ``_kernels`` extension interface.

Used when the compiled module is unavailable or ``TRUSTPRED_BACKEND=python``.
Results agree with the compiled kernels up to floating-point summation order.
"""

import numpy as np


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def loss_grad(kind, z, o, p, gamma, ap, an, orient):
    # (1 + |z|)^2 may overflow to inf for huge |z|; the resulting zero slope is the limit
    with np.errstate(over="ignore"):
        return _loss_grad(kind, np.asarray(z, dtype=np.float64), o, p, gamma, ap, an, orient)


def _loss_grad(kind, z, o, p, gamma, ap, an, orient):
    is_pos = np.asarray(o) == 1
    if kind in (0, 1):
        t = np.where(is_pos, z, -z)
        sign = np.where(is_pos, 1.0, -1.0)
        ce = _softplus(-t)
        if kind == 0:
            return ce, -sign * _sigmoid(-t)
        mod = np.exp(-gamma * _softplus(t))
        grad = sign * (-gamma * mod * _sigmoid(t) * ce - mod * _sigmoid(-t))
        return mod * ce, grad
    if kind == 2:
        q = _sigmoid(z)
        diff = q - p
        return diff * diff, 2.0 * diff * q * _sigmoid(-z)
    az = np.abs(z)
    s = z / (1.0 + az)
    ds = 1.0 / ((1.0 + az) * (1.0 + az))
    e_pos = np.exp(orient * ap * s)
    e_neg = np.exp(-orient * an * s)
    values = np.where(is_pos, e_pos - np.exp(-ap), e_neg - np.exp(-an))
    grads = np.where(is_pos, orient * ap * e_pos * ds, -orient * an * e_neg * ds)
    return values, grads


def sgd_train(X, o, p, sw, perms, w, b, signed_dist, kind, gamma, ap, an,
              orient, lrs, batch_size, momentum, weight_decay):
    # divergence is detected explicitly and reported through the status code
    with np.errstate(over="ignore", invalid="ignore"):
        return _sgd_train(X, o, p, sw, perms, w, b, signed_dist, kind, gamma, ap, an,
                          orient, lrs, batch_size, momentum, weight_decay)


def _sgd_train(X, o, p, sw, perms, w, b, signed_dist, kind, gamma, ap, an,
               orient, lrs, batch_size, momentum, weight_decay):
    n, d = X.shape
    epochs = perms.shape[0]
    per_epoch = -(-n // batch_size)
    losses = np.zeros(epochs * per_epoch)
    vw = np.zeros(d)
    vb = 0.0
    step = 0
    for ep in range(epochs):
        for bi in range(per_epoch):
            idx = perms[ep, bi * batch_size:(bi + 1) * batch_size]
            m = idx.shape[0]
            if signed_dist:
                nw = float(np.sqrt(w @ w))
                if not (nw > 0 and np.isfinite(nw)):
                    return b, losses, 2, step, ep, bi
            else:
                nw = 1.0
            xb = X[idx]
            u = xb @ w + b
            vals, grads = loss_grad(kind, u / nw, o[idx], p[idx], gamma, ap, an, orient)
            loss = float(np.sum(sw[idx] * vals) / m)
            if not np.isfinite(loss):
                return b, losses, 1, step, ep, bi
            gz = sw[idx] * grads / m
            gw = gz @ xb
            gbs = float(np.sum(gz))
            if signed_dist:
                gw = gw / nw - float(gz @ u) * w / (nw * nw * nw)
                gb = gbs / nw
            else:
                gb = gbs
            if weight_decay != 0.0:
                gw = gw + weight_decay * w
                gb += weight_decay * b
            lr = lrs[step]
            vw = momentum * vw - lr * gw
            w += vw
            vb = momentum * vb - lr * gb
            b += vb
            losses[step] = loss
            if not (np.isfinite(b) and np.isfinite(w).all()):
                return b, losses, 2, step, ep, bi
            step += 1
    return b, losses, 0, -1, -1, -1
