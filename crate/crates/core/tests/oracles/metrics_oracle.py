"""Reference SSIM and RASE for the metric fixture pairs.

Images are regenerated from a shared xorshift stream, so the fixture file
only stores sizes and expected scores. Run from the crate root:

    python3 tests/oracles/metrics_oracle.py > tests/fixtures/metric_pairs.json
"""

import json

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

MASK = 0xFFFFFFFF
C1 = (0.01 * 255) ** 2
C2 = (0.03 * 255) ** 2


def stream(seed):
    s = (seed * 2654435761 + 1) & MASK
    while True:
        s ^= (s << 13) & MASK
        s ^= s >> 17
        s ^= (s << 5) & MASK
        yield s >> 24


def noise(w, h, seed):
    g = stream(seed)
    return np.array([next(g) for _ in range(w * h * 3)], dtype=np.int64).reshape(h, w, 3)


def pair(i):
    w = 8 + (i * 7) % 33
    h = 6 + (i * 5) % 29
    kind = i % 5
    a = noise(w, h, 2 * i + 1)
    r = noise(w, h, 2 * i + 2)
    if kind == 0:
        b = r
    elif kind == 1:
        b = np.clip(a + (r - 128) // 16, 0, 255)
    elif kind == 2:
        b = 255 - a
    elif kind == 3:
        xs = np.arange(w).reshape(1, w, 1)
        a = (xs * 255) // max(w - 1, 1) + np.zeros((h, w, 3), dtype=np.int64)
        b = np.clip(a + (r - 128) // 32, 0, 255)
    else:
        a = np.full((h, w, 3), 10 + i, dtype=np.int64)
        b = np.clip(a + r // 8, 0, 255)
    return w, h, kind, a, b


def gray(img):
    img = img.astype(np.float64)
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def ssim(a, b):
    x, y = gray(a), gray(b)
    h, w = x.shape
    wh, ww = min(8, h), min(8, w)
    xs = sliding_window_view(x, (wh, ww)).reshape(-1, wh * ww)
    ys = sliding_window_view(y, (wh, ww)).reshape(-1, wh * ww)
    ddof = 1 if wh * ww > 1 else 0
    mx, my = xs.mean(axis=1), ys.mean(axis=1)
    vx, vy = xs.var(axis=1, ddof=ddof), ys.var(axis=1, ddof=ddof)
    cov = ((xs - mx[:, None]) * (ys - my[:, None])).sum(axis=1) / (wh * ww - ddof)
    s = ((2 * mx * my + C1) * (2 * cov + C2)) / ((mx**2 + my**2 + C1) * (vx + vy + C2))
    return float(s.mean())


def rase(a, b):
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    mu = a.mean()
    rmse = [np.sqrt(((a[..., c] - b[..., c]) ** 2).mean()) for c in range(3)]
    return float(100.0 / mu * np.sqrt(np.mean(np.square(rmse))))


def main():
    out = []
    for i in range(50):
        w, h, kind, a, b = pair(i)
        out.append({"index": i, "width": w, "height": h, "kind": kind, "ssim": ssim(a, b), "rase": rase(a, b)})
    print(json.dumps(out, indent=1))


if __name__ == "__main__":
    main()
