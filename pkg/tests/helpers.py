"""Shared test fixtures: synthetic scans and independent reference oracles.

The oracles deliberately use plain Python loops (float64 accumulation for
the conv, literal patch scans for label assignment) so they share no code
path with the kernels under test.
"""

import math
from collections import Counter

import numpy as np

from rangeseg.network import NetworkConfig


def small_config(**overrides):
    """A four-stage network small enough for fast full forwards."""
    base = dict(stem_widths=(4, 4, 4), stage_blocks=(1, 1, 1, 1),
                stage_widths=(4, 8, 8, 8))
    base.update(overrides)
    return NetworkConfig(**base)


def make_scan(rng, n, r_lo=2.0, r_hi=50.0):
    """Random synthetic scan with strictly positive ranges."""
    r = rng.uniform(r_lo, r_hi, n)
    azimuth = rng.uniform(-np.pi, np.pi, n)
    elevation = rng.uniform(np.radians(-28.0), np.radians(6.0), n)
    z = r * np.sin(elevation)
    horiz = r * np.cos(elevation)
    x = horiz * np.cos(azimuth)
    y = horiz * np.sin(azimuth)
    remission = rng.uniform(0.0, 1.0, n)
    return np.column_stack([x, y, z, remission]).astype(np.float32)


def conv_oracle(x, w, b, stride, dilation, padding):
    """Naive quadruple-loop convolution in float64."""
    i_ch, h, width = x.shape
    o_ch, _, kh, kw = w.shape
    sh, sw = stride
    dh, dw = dilation
    ph, pw = padding
    oh = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
    ow = (width + 2 * pw - dw * (kw - 1) - 1) // sw + 1
    xp = np.pad(x.astype(np.float64), ((0, 0), (ph, ph), (pw, pw)))
    out = np.zeros((o_ch, oh, ow))
    for o in range(o_ch):
        for oy in range(oh):
            for ox in range(ow):
                acc = float(b[o])
                for i in range(i_ch):
                    for ky in range(kh):
                        for kx in range(kw):
                            acc += (xp[i, oy * sh + ky * dh, ox * sw + kx * dw]
                                    * float(w[o, i, ky, kx]))
                out[o, oy, ox] = acc
    return out


def normals_oracle(xyz, valid):
    """Literal per-pixel restatement of the normal rule, in float64."""
    _, h, w = xyz.shape
    pts = xyz.astype(np.float64)
    out = np.zeros((3, h, w))
    for y in range(h):
        for x in range(w):
            if not valid[y, x]:
                continue

            def point(yy, xx):
                return pts[:, yy, xx]

            vr = x + 1 < w and valid[y, x + 1]
            vl = x - 1 >= 0 and valid[y, x - 1]
            vd = y + 1 < h and valid[y + 1, x]
            vu = y - 1 >= 0 and valid[y - 1, x]
            if not (vr or vl) or not (vd or vu):
                continue
            if vr and vl:
                dh = point(y, x + 1) - point(y, x - 1)
            elif vr:
                dh = point(y, x + 1) - point(y, x)
            else:
                dh = point(y, x) - point(y, x - 1)
            if vd and vu:
                dv = point(y + 1, x) - point(y - 1, x)
            elif vd:
                dv = point(y + 1, x) - point(y, x)
            else:
                dv = point(y, x) - point(y - 1, x)
            n = np.cross(dh, dv)
            norm = np.linalg.norm(n)
            if norm == 0:
                continue
            n = n / norm
            if np.dot(n, point(y, x)) > 0:
                n = -n
            out[:, y, x] = n
    return out


def nla_oracle(range_image, label_image, rows, cols, ranges, k):
    """Exhaustive patch scan with strict-less float32 comparison."""
    h, w = range_image.shape
    r = k // 2
    out = []
    for i in range(len(rows)):
        cy, cx = int(rows[i]), int(cols[i])
        best = None
        label = int(label_image[cy, cx])
        for yy in range(max(cy - r, 0), min(cy + r, h - 1) + 1):
            for xx in range(max(cx - r, 0), min(cx + r, w - 1) + 1):
                pix = range_image[yy, xx]
                if pix <= 0:
                    continue
                key = abs(np.float32(pix) - np.float32(ranges[i]))
                if best is None or key < best:
                    best = key
                    label = int(label_image[yy, xx])
        out.append(label)
    return np.array(out, np.int32)


def knn_oracle(range_image, label_image, rows, cols, ranges, k,
               n_neighbors, sigma, cutoff, num_classes):
    """Weighted-rank scan: gaussian-scaled range diffs, cutoff, majority."""
    h, w = range_image.shape
    r = k // 2
    cutoff32 = np.float32(cutoff)
    out = []
    for i in range(len(rows)):
        cy, cx = int(rows[i]), int(cols[i])
        candidates = []
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                yy, xx = cy + dy, cx + dx
                if not (0 <= yy < h and 0 <= xx < w):
                    continue
                pix = range_image[yy, xx]
                if pix <= 0:
                    continue
                diff = np.float32(abs(np.float32(pix) - np.float32(ranges[i])))
                if diff > cutoff32:
                    continue
                spatial = np.float32(
                    math.exp((dy * dy + dx * dx) / (2.0 * sigma * sigma)))
                candidates.append((np.float32(diff * spatial), len(candidates),
                                   int(label_image[yy, xx])))
        if not candidates:
            out.append(int(label_image[cy, cx]))
            continue
        candidates.sort(key=lambda t: (t[0], t[1]))
        votes = Counter()
        for key, _slot, lab in candidates[:n_neighbors]:
            votes[lab] += 1
        top = max(votes.values())
        out.append(min(lab for lab, cnt in votes.items() if cnt == top))
    return np.array(out, np.int32)


def constant_class_model(model, class_id):
    """Rewrite the final head conv so every pixel prefers class_id."""
    head = model.head[-1]
    head.weight[:] = 0.0
    head.bias[:] = 0.0
    head.bias[class_id] = 10.0
    return model
