"""Brute-force PSNR/SSIM written from the defining formulas.

No vectorized filtering, no shared helpers with the package: plain
python loops over pixels and over every fully-inside 11x11 window, so
the two implementations can only agree if both encode the same math.
"""

import math

WINDOW = 11
SIGMA = 1.5
C1 = 0.01 ** 2
C2 = 0.03 ** 2


def psnr_direct(a, b):
    h, w, c = a.shape
    total = 0.0
    for i in range(h):
        for j in range(w):
            for k in range(c):
                d = float(a[i, j, k]) - float(b[i, j, k])
                total += d * d
    mse = total / (h * w * c)
    if mse == 0.0:
        return 100.0
    return min(100.0, 10.0 * math.log10(1.0 / mse))


def _weights():
    half = (WINDOW - 1) / 2.0
    g = [math.exp(-((i - half) ** 2) / (2.0 * SIGMA * SIGMA)) for i in range(WINDOW)]
    s = sum(g)
    g = [v / s for v in g]
    return [[g[i] * g[j] for j in range(WINDOW)] for i in range(WINDOW)]


def ssim_direct(a, b):
    h, w, channels = a.shape
    weights = _weights()
    channel_means = []
    for c in range(channels):
        values = []
        for top in range(h - WINDOW + 1):
            for left in range(w - WINDOW + 1):
                mx = my = mxx = myy = mxy = 0.0
                for i in range(WINDOW):
                    for j in range(WINDOW):
                        wt = weights[i][j]
                        x = float(a[top + i, left + j, c])
                        y = float(b[top + i, left + j, c])
                        mx += wt * x
                        my += wt * y
                        mxx += wt * x * x
                        myy += wt * y * y
                        mxy += wt * x * y
                vx = mxx - mx * mx
                vy = myy - my * my
                cov = mxy - mx * my
                num = (2.0 * mx * my + C1) * (2.0 * cov + C2)
                den = (mx * mx + my * my + C1) * (vx + vy + C2)
                values.append(num / den)
        channel_means.append(sum(values) / len(values))
    return sum(channel_means) / len(channel_means)
