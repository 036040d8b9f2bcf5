"""Independent reference implementations used by the tests."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

from convprobe.network import Classifier, Elu, MaxPool, NetworkSpec, SpatialConv, TemporalConv


def naive_dft(x):
    """Direct O(T^2) summation, bins 0..T//2."""
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[-1]
    k = np.arange(T // 2 + 1)[:, None]
    t = np.arange(T)[None, :]
    return x @ np.exp(-2j * np.pi * k * t / T).T


def naive_amplitudes(x):
    """Single-sided amplitudes and complex coefficients from :func:`naive_dft`."""
    T = np.shape(x)[-1]
    X = naive_dft(x)
    scale = np.full(T // 2 + 1, 2.0 / T)
    scale[0] = 1.0 / T
    if T % 2 == 0:
        scale[-1] = 1.0 / T
    return np.abs(X) * scale, X


def pearson_oracle(x, y):
    """Textbook formula in exact rationals, one square root at the end."""
    x = [Fraction(v) for v in x]
    y = [Fraction(v) for v in y]
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return float(sxy) / math.sqrt(float(sxx * syy))


def wilcoxon_enumeration(d):
    """(W+, two-sided p) by listing every sign assignment of the ranked |d|."""
    d = [float(v) for v in d if v != 0]
    n = len(d)
    a = sorted(abs(v) for v in d)
    rank = {}
    i = 0
    while i < n:
        j = i
        while j + 1 < n and a[j + 1] == a[i]:
            j += 1
        rank[a[i]] = Fraction(i + j + 2, 2)
        i = j + 1
    ranks = [rank[abs(v)] for v in d]
    w = sum((r for r, v in zip(ranks, d) if v > 0), Fraction(0))
    lo = hi = 0
    for signs in itertools.product((0, 1), repeat=n):
        s = sum((r for r, g in zip(ranks, signs) if g), Fraction(0))
        lo += s <= w
        hi += s >= w
    return float(w), min(1.0, 2 * min(lo, hi) / 2**n)


def occlusion_fields(net, layer, rng, n_inputs=2, delta=3.0):
    """Per unit, the input samples whose change alters any filter of ``layer``.

    Each time sample is bumped by +-delta on all channels, over a few random
    inputs; a unit's field is the set of samples that ever changed it.
    Returns a boolean (units, window) matrix.
    """
    W, C = net.window, net.channels
    influence = None
    eye = np.eye(W)
    for _ in range(n_inputs):
        x = rng.standard_normal((C, W))
        base = net.activations(x[None], (layer,))[layer][0]
        for sign in (1.0, -1.0):
            for s in range(0, W, 64):
                rows = eye[s : s + 64]
                batch = x[None] + sign * delta * rows[:, None, :]
                out = net.activations(batch, (layer,))[layer]
                changed = np.any(out != base[None], axis=1).T  # (units, block)
                if influence is None:
                    influence = np.zeros((changed.shape[0], W), dtype=bool)
                influence[:, s : s + rows.shape[0]] |= changed
    return influence


def finite_difference_errors(net, x, labels, h=1e-4, n_entries=None, rng=None):
    """Relative error (tensor norm) between analytic and central-difference gradients.

    With ``n_entries`` only that many randomly chosen entries per tensor are
    perturbed. Returns {name: relative error}.
    """
    loss, grads, _ = net.loss_and_grads(x, labels, input_grad=True)
    out = {}
    targets = dict(net.params)
    for name, p in list(targets.items()) + [("input", x)]:
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if n_entries is not None and flat.size > n_entries:
            idx = rng.choice(flat.size, n_entries, replace=False)
        fd = np.empty(idx.size)
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + h
            lp = net.loss_and_grads(x, labels)[0]
            flat[i] = old - h
            lm = net.loss_and_grads(x, labels)[0]
            flat[i] = old
            fd[j] = (lp - lm) / (2 * h)
        an = grads[name].reshape(-1)[idx]
        out[name] = float(np.linalg.norm(an - fd) / max(np.linalg.norm(fd), np.linalg.norm(an), 1e-12))
    return out


def small_spec(pool=(2, 2), window=60, channels=3):
    """Tiny 5-conv network; with defaults 60 -> 58 -> 29 -> 27 -> 13 -> 11 -> 5 -> 3 -> 1."""
    layers = [TemporalConv(3, 2), SpatialConv(3), Elu(), MaxPool(*pool)]
    for f in (3, 3, 3):
        layers += [TemporalConv(3, f), Elu(), MaxPool(*pool)]
    layers.append(Classifier(3))
    return NetworkSpec(channels, window, layers)
