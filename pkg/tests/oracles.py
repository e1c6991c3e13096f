"""Slow, obviously-correct reference implementations used only by the tests.

Everything here is written with explicit Python loops over indices and
shares no code with the package under test.
"""

import math


def gap_loop(F):
    c, h, w = len(F), len(F[0]), len(F[0][0])
    out = []
    for k in range(c):
        s = 0.0
        for i in range(h):
            for j in range(w):
                s += F[k][i][j]
        out.append(s / (w * h))
    return out


def cap_loop(F):
    c, h, w = len(F), len(F[0]), len(F[0][0])
    out = [[0.0] * w for _ in range(h)]
    for i in range(h):
        for j in range(w):
            s = 0.0
            for k in range(c):
                s += F[k][i][j]
            out[i][j] = s / c
    return out


def cam_loop(F, weights):
    c, h, w = len(F), len(F[0]), len(F[0][0])
    out = [[0.0] * w for _ in range(h)]
    for i in range(h):
        for j in range(w):
            s = 0.0
            for k in range(c):
                s += weights[k] * F[k][i][j]
            out[i][j] = s
    return out


def fuse_loop(C_M, P_E, C_E, P_M, delta, gamma):
    """Cross fusion written cell by cell."""
    c, h, w = len(C_M), len(P_E), len(P_E[0])
    C_ME = [[[delta * P_E[i][j] + C_M[k] for j in range(w)] for i in range(h)] for k in range(c)]
    P_ME = [[[gamma * C_E[k] + P_M[i][j] for j in range(w)] for i in range(h)] for k in range(c)]
    return C_ME, P_ME


def threshold_loop(values, ratio):
    """Flat list -> 0/1 list: 0 where value >= ratio * max, all ones if max <= 0."""
    peak = max(values)
    if peak <= 0:
        return [1.0] * len(values)
    return [0.0 if v >= ratio * peak else 1.0 for v in values]


def ring_loop(mask):
    """Set of unmasked cells with at least one masked (0) cell among their 8 neighbours."""
    h, w = len(mask), len(mask[0])
    ring = set()
    for i in range(h):
        for j in range(w):
            if mask[i][j] == 0:
                continue
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    s, t = i + di, j + dj
                    if 0 <= s < h and 0 <= t < w and mask[s][t] == 0:
                        ring.add((i, j))
    return ring


def flood_fill_components(mask):
    """8-connected components as lists of (row, col), found by iterative flood fill."""
    h, w = len(mask), len(mask[0])
    seen = [[False] * w for _ in range(h)]
    comps = []
    for i in range(h):
        for j in range(w):
            if mask[i][j] != 1 or seen[i][j]:
                continue
            stack, comp = [(i, j)], []
            seen[i][j] = True
            while stack:
                a, b = stack.pop()
                comp.append((a, b))
                for da in (-1, 0, 1):
                    for db in (-1, 0, 1):
                        s, t = a + da, b + db
                        if 0 <= s < h and 0 <= t < w and mask[s][t] == 1 and not seen[s][t]:
                            seen[s][t] = True
                            stack.append((s, t))
            comps.append(comp)
    return comps


def largest_box_oracle(mask):
    """(x0, y0, x1, y1) of the largest component; ties -> smaller top row, then left column."""
    comps = flood_fill_components(mask)
    if not comps:
        return None
    boxes = []
    for comp in comps:
        rows = [r for r, _ in comp]
        cols = [c for _, c in comp]
        boxes.append((len(comp), min(rows), min(cols), max(cols) + 1, max(rows) + 1))
    boxes.sort(key=lambda b: (-b[0], b[1], b[2]))
    n, y0, x0, x1, y1 = boxes[0]
    return (x0, y0, x1, y1)


def iou_raster(a, b):
    """IoU by counting pixels of half-open boxes (x0, y0, x1, y1)."""
    pa = {(x, y) for x in range(a[0], a[2]) for y in range(a[1], a[3])}
    pb = {(x, y) for x in range(b[0], b[2]) for y in range(b[1], b[3])}
    return len(pa & pb) / len(pa | pb)


def bilinear_point(m, y, x):
    h, w = len(m), len(m[0])
    y0, x0 = min(int(math.floor(y)), h - 1), min(int(math.floor(x)), w - 1)
    y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
    fy, fx = y - y0, x - x0
    return ((1 - fy) * (1 - fx) * m[y0][x0] + (1 - fy) * fx * m[y0][x1]
            + fy * (1 - fx) * m[y1][x0] + fy * fx * m[y1][x1])


def segment_loop(cam, theta):
    flat = [v for row in cam for v in row]
    lo, hi = min(flat), max(flat)
    if hi == lo:
        return [[0.0] * len(cam[0]) for _ in cam]
    return [[1.0 if (v - lo) / (hi - lo) >= theta else 0.0 for v in row] for row in cam]


def central_difference(f, x, step=1e-5):
    """Gradient of scalar ``f`` at numpy array ``x`` by central differences (x restored after)."""
    import numpy as np

    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + step
        fp = f()
        x[idx] = orig - step
        fm = f()
        x[idx] = orig
        grad[idx] = (fp - fm) / (2 * step)
    return grad


def rel_error(a, b):
    """Norm-wise relative error ||a - b|| / max(||a|| + ||b||, tiny)."""
    import numpy as np

    num = np.linalg.norm(np.ravel(a) - np.ravel(b))
    den = np.linalg.norm(np.ravel(a)) + np.linalg.norm(np.ravel(b))
    return 0.0 if den == 0 else num / den


def conv3x3_loop(x, w, b):
    """Same-padded 3x3 cross-correlation on one (c, h, w) image, as nested lists."""
    c, h, wd = len(x), len(x[0]), len(x[0][0])
    o = len(w)
    out = [[[0.0] * wd for _ in range(h)] for _ in range(o)]
    for k in range(o):
        for i in range(h):
            for j in range(wd):
                s = b[k]
                for ch in range(c):
                    for di in range(3):
                        for dj in range(3):
                            a, t = i + di - 1, j + dj - 1
                            if 0 <= a < h and 0 <= t < wd:
                                s += w[k][ch][di][dj] * x[ch][a][t]
                out[k][i][j] = s
    return out


def relu_loop(x):
    return [[[max(v, 0.0) for v in row] for row in ch] for ch in x]


def maxpool2_loop(x):
    return [[[max(ch[2 * i][2 * j], ch[2 * i][2 * j + 1], ch[2 * i + 1][2 * j], ch[2 * i + 1][2 * j + 1])
              for j in range(len(ch[0]) // 2)] for i in range(len(ch) // 2)] for ch in x]


def toy_net_logits_loop(params, image, center=0.5):
    """Logits of the slot-free toy network for one (3, H, W) image."""
    x = [[[v - center for v in row] for row in ch] for ch in image]
    x = maxpool2_loop(relu_loop(conv3x3_loop(x, params["conv1_w"], params["conv1_b"])))
    x = maxpool2_loop(relu_loop(conv3x3_loop(x, params["conv2_w"], params["conv2_b"])))
    x = relu_loop(conv3x3_loop(x, params["conv3_w"], params["conv3_b"]))
    pooled = gap_loop(x)
    return [sum(wk * p for wk, p in zip(row, pooled)) for row in params["fc_w"]]


def marker_template(kind, size):
    """Independent drawing of marker ``kind`` (dot, ring, cross, checker) at ``size``."""
    c = (size - 1) / 2
    t = [[0.0] * size for _ in range(size)]
    for i in range(size):
        for j in range(size):
            r = ((i - c) ** 2 + (j - c) ** 2) ** 0.5
            if kind == 0:
                on = r <= size / 2
            elif kind == 1:
                on = size / 2 - 2 < r <= size / 2
            elif kind == 2:
                on = abs(i - c) <= 1 or abs(j - c) <= 1
            else:
                on = (i // 2 + j // 2) % 2 == 0
            t[i][j] = 1.0 if on else 0.0
    return t


def marker_crop_class(pixels, box, window=8):
    """Nearest-template class from the central ``window`` crop of a marker.

    ``pixels`` is a (3, H, W) uint8 image and ``box`` the marker box.  Marker
    pixels share one exact colour, so the most frequent colour in the box
    marks them.  The crop and each template are compared at native
    resolution by sum of squared differences.
    """
    x0, y0, x1, y1 = box
    size = x1 - x0
    crop = [[tuple(pixels[ch][y][x] for ch in range(3)) for x in range(x0, x1)] for y in range(y0, y1)]
    counts = {}
    for row in crop:
        for px in row:
            counts[px] = counts.get(px, 0) + 1
    ink = max(counts, key=counts.get)
    n = min(window, size)
    off = (size - n) // 2
    cells = [(i, j) for i in range(off, off + n) for j in range(off, off + n)]
    binary = {(i, j): 1.0 if crop[i][j] == ink else 0.0 for i, j in cells}
    dists = []
    for kind in range(4):
        t = marker_template(kind, size)
        dists.append(sum((binary[i, j] - t[i][j]) ** 2 for i, j in cells))
    return dists.index(min(dists))
