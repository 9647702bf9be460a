# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: elementwise loss/gradient and the SGD epoch loop.

Loss kind codes: 0 CE, 1 focal, 2 TCP, 3 steep slope.  ``orient`` is the
steep slope slide orientation (see ``losses.SLIDE_ORIENTATION``).
"""

from libc.math cimport exp, log1p, fabs, sqrt, isfinite

import numpy as np


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef inline double _softplus(double x) noexcept nogil:
    cdef double m = x if x > 0 else 0.0
    return m + log1p(exp(-fabs(x)))


cdef inline void _loss(int kind, double z, int o, double p, double gamma,
                       double ap, double an, double k,
                       double* val, double* grad) noexcept nogil:
    cdef double t, sign, ce, mod, q, diff, az, s, ds, e
    if kind == 0 or kind == 1:
        if o == 1:
            t = z
            sign = 1.0
        else:
            t = -z
            sign = -1.0
        ce = _softplus(-t)
        if kind == 0:
            val[0] = ce
            grad[0] = -sign * _sigmoid(-t)
        else:
            mod = exp(-gamma * _softplus(t))
            val[0] = mod * ce
            grad[0] = sign * (-gamma * mod * _sigmoid(t) * ce - mod * _sigmoid(-t))
    elif kind == 2:
        q = _sigmoid(z)
        diff = q - p
        val[0] = diff * diff
        grad[0] = 2.0 * diff * q * _sigmoid(-z)
    else:
        az = fabs(z)
        s = z / (1.0 + az)
        ds = 1.0 / ((1.0 + az) * (1.0 + az))
        if o == 1:
            e = exp(k * ap * s)
            val[0] = e - exp(-ap)
            grad[0] = k * ap * e * ds
        else:
            e = exp(-k * an * s)
            val[0] = e - exp(-an)
            grad[0] = -k * an * e * ds


def loss_grad(int kind, const double[::1] z, const unsigned char[::1] o,
              const double[::1] p, double gamma, double ap, double an, double orient):
    cdef Py_ssize_t n = z.shape[0], i
    values = np.empty(n)
    grads = np.empty(n)
    cdef double[::1] v = values
    cdef double[::1] g = grads
    with nogil:
        for i in range(n):
            _loss(kind, z[i], o[i], p[i], gamma, ap, an, orient, &v[i], &g[i])
    return values, grads


def sgd_train(const double[:, ::1] X, const unsigned char[::1] o,
              const double[::1] p, const double[::1] sw,
              const long long[:, ::1] perms, double[::1] w, double b,
              bint signed_dist, int kind, double gamma, double ap, double an,
              double orient, const double[::1] lrs, Py_ssize_t batch_size,
              double momentum, double weight_decay):
    """Mini-batch heavy-ball SGD over the given per-epoch orders.

    ``w`` is updated in place.  Returns ``(b, losses, status, fail_step,
    fail_epoch, fail_batch)``; status 0 ok, 1 non-finite loss, 2 non-finite or
    degenerate parameters.
    """
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t epochs = perms.shape[0]
    cdef Py_ssize_t per_epoch = (n + batch_size - 1) // batch_size
    cdef Py_ssize_t ep, bi, r, i, j, start, stop, m
    cdef Py_ssize_t step = 0
    cdef int status = 0
    cdef double nw, u, z, val, grad, gz, total, ga, gbs, gb, lr, loss
    cdef double vb = 0.0
    losses = np.zeros(epochs * per_epoch)
    vw_arr = np.zeros(d)
    gw_arr = np.zeros(d)
    cdef double[::1] L = losses
    cdef double[::1] vw = vw_arr
    cdef double[::1] gw = gw_arr

    with nogil:
        for ep in range(epochs):
            for bi in range(per_epoch):
                start = bi * batch_size
                stop = start + batch_size
                if stop > n:
                    stop = n
                m = stop - start
                if signed_dist:
                    nw = 0.0
                    for j in range(d):
                        nw += w[j] * w[j]
                    nw = sqrt(nw)
                    if not (nw > 0 and isfinite(nw)):
                        status = 2
                        break
                else:
                    nw = 1.0
                for j in range(d):
                    gw[j] = 0.0
                total = 0.0
                ga = 0.0
                gbs = 0.0
                for r in range(start, stop):
                    i = perms[ep, r]
                    u = 0.0
                    for j in range(d):
                        u += X[i, j] * w[j]
                    u += b
                    z = u / nw
                    _loss(kind, z, o[i], p[i], gamma, ap, an, orient, &val, &grad)
                    total += sw[i] * val
                    gz = sw[i] * grad / m
                    for j in range(d):
                        gw[j] += gz * X[i, j]
                    ga += gz * u
                    gbs += gz
                loss = total / m
                if not isfinite(loss):
                    status = 1
                    break
                if signed_dist:
                    for j in range(d):
                        gw[j] = gw[j] / nw - ga * w[j] / (nw * nw * nw)
                    gb = gbs / nw
                else:
                    gb = gbs
                if weight_decay != 0.0:
                    for j in range(d):
                        gw[j] += weight_decay * w[j]
                    gb += weight_decay * b
                lr = lrs[step]
                for j in range(d):
                    vw[j] = momentum * vw[j] - lr * gw[j]
                    w[j] += vw[j]
                vb = momentum * vb - lr * gb
                b += vb
                L[step] = loss
                if not isfinite(b):
                    status = 2
                    break
                for j in range(d):
                    if not isfinite(w[j]):
                        status = 2
                if status != 0:
                    break
                step += 1
            if status != 0:
                break
    if status != 0:
        return b, losses, status, step, ep, bi
    return b, losses, 0, -1, -1, -1
