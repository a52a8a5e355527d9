"""Independent reference implementations used as test oracles.

Each one is deliberately naive: plain Python loops over pixels, events or
samples, sharing no code with the package beyond its data types.
"""
import math

import numpy as np


def blob_scene(seed, size=16, n_frames=1001, step_us=1000):
    """Log-intensity frames of a few Gaussian blobs drifting across a small sensor."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    c0 = rng.uniform(0, size, (n, 2))
    vel = rng.uniform(-12, 12, (n, 2))  # px/s
    amp = rng.uniform(0.3, 1.0, n)
    sig = rng.uniform(1.0, 3.0, n)
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    frames = []
    for k in range(n_frames):
        t = k * step_us * 1e-6
        img = np.zeros((size, size))
        for i in range(n):
            cx, cy = c0[i] + vel[i] * t
            img += amp[i] * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sig[i] ** 2))
        frames.append((k * step_us, np.clip(img, 0.0, 1.0)))
    return frames


def brute_force_events(frames, C, refractory):
    """Per-pixel re-simulation of the reference-and-threshold sensor.

    Returns a list of ``(t, x, y, p)`` tuples, each render interval sorted by
    ``(t, y, x)`` and intervals concatenated in time order.
    """
    t_first, first = frames[0]
    h, w = first.shape
    ref = [[float(first[y][x]) for x in range(w)] for y in range(h)]
    last = [[None] * w for _ in range(h)]
    out = []
    for (t0, a), (t1, b) in zip(frames[:-1], frames[1:]):
        batch = []
        for y in range(h):
            for x in range(w):
                r = ref[y][x]
                lp, ln = float(a[y][x]), float(b[y][x])
                k = int(math.floor(abs(ln - r) / C))
                if k == 0:
                    continue
                pol = 1 if ln > r else -1
                for j in range(1, k + 1):
                    level = r + pol * j * C
                    frac = (level - lp) / (ln - lp) if ln != lp else 1.0
                    frac = min(max(frac, 0.0), 1.0)
                    t = t0 + int(round(frac * (t1 - t0)))
                    if last[y][x] is None or t - last[y][x] >= refractory:
                        batch.append((t, x, y, pol))
                        last[y][x] = t
                ref[y][x] = r + pol * k * C
        batch.sort(key=lambda e: (e[0], e[2], e[1]))
        out.extend(batch)
    return out


def lif_reference(events, shape, stride, radius, tau_us, w, vth, vreset=0.0):
    """Event-by-event leaky integrate-and-fire over a pooled grid; returns ``(t, x, y)`` spikes."""
    gh, gw = shape
    v = {}
    last = {}
    spikes = []
    for t, x, y in events:
        cx, cy = x // stride, y // stride
        for yy in range(cy - radius, cy + radius + 1):
            for xx in range(cx - radius, cx + radius + 1):
                if not (0 <= yy < gh and 0 <= xx < gw):
                    continue
                pot = v.get((yy, xx), vreset)
                if (yy, xx) in last:
                    pot *= math.exp(-(t - last[(yy, xx)]) / tau_us)
                pot += w
                last[(yy, xx)] = t
                if pot >= vth:
                    spikes.append((t, xx, yy))
                    pot = vreset
                v[(yy, xx)] = pot
    return spikes


def quintic_by_solve(T, p0, v0, a0, p1, v1, a1):
    """Quintic coefficients (ascending powers) from the 6x6 boundary-condition system."""
    rows = []
    for t in (0.0, T):
        rows.append([t ** i for i in range(6)])
        rows.append([i * t ** (i - 1) if i >= 1 else 0.0 for i in range(6)])
        rows.append([i * (i - 1) * t ** (i - 2) if i >= 2 else 0.0 for i in range(6)])
    A = np.array([rows[0], rows[1], rows[2], rows[3], rows[4], rows[5]])
    b = np.array([p0, v0, a0, p1, v1, a1])
    return np.linalg.solve(A, b)


def mlp_forward(weights, biases, x):
    """Plain nested-loop evaluation of a tanh MLP with a linear output layer."""
    h = list(x)
    for li, (W, b) in enumerate(zip(weights, biases)):
        nxt = []
        for i in range(len(b)):
            acc = b[i]
            for j in range(len(h)):
                acc += W[i][j] * h[j]
            nxt.append(math.tanh(acc) if li < len(weights) - 1 else acc)
        h = nxt
    return h
