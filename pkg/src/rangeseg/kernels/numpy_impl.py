"""Pure-numpy implementations of the hot kernels.

Selected when RANGESEG_BACKEND=numpy or when numba is unavailable.  Each
function here has a numba twin in `numba_impl` with the same signature and
the same tie-breaking rules; tests exercise both against independent
oracles.
"""

import numpy as np


def conv2d(xp, w, b, sh, sw, dh, dw, oh, ow):
    """Direct convolution of a pre-padded input, one kernel tap at a time.

    xp: (I, Hp, Wp) float32, already zero-padded.
    w:  (O, I, KH, KW) float32; b: (O,) float32.

    Deliberately not im2col + matmul: BLAS accumulation order depends on
    the matrix extents, so the same logical window would round differently
    in a split half than in the whole image.  Accumulating tap products in
    a fixed (i, ky, kx) order gives every output element one float32
    rounding per tap regardless of image width, which keeps haloed split
    inference bit-exact and matches the numba kernel's loop nest.
    """
    o_ch, i_ch, kh, kw = w.shape
    out = np.empty((o_ch, oh, ow), np.float32)
    out[:] = b[:, None, None]
    tmp = np.empty((o_ch, oh, ow), np.float32)
    for i in range(i_ch):
        for ky in range(kh):
            for kx in range(kw):
                ys = ky * dh
                xs = kx * dw
                win = xp[i, ys:ys + (oh - 1) * sh + 1:sh,
                         xs:xs + (ow - 1) * sw + 1:sw]
                np.multiply(w[:, i, ky, kx, None, None], win[None, :, :],
                            out=tmp)
                out += tmp
    return out


def project_scatter(rows, cols, ranges, height, width):
    """Resolve pixel ownership: smallest range wins, ties to the lowest
    point index.  Returns an (H, W) int32 map of point indices (-1 empty).

    Writes points in order of decreasing range (ties: decreasing index) so
    the last write per pixel is the nearest point.
    """
    pixel_point = np.full((height, width), -1, np.int32)
    if rows.size == 0:
        return pixel_point
    idx = np.arange(rows.size, dtype=np.int64)
    order = np.lexsort((-idx, -ranges.astype(np.float64)))
    pixel_point[rows[order], cols[order]] = idx[order]
    return pixel_point


def compute_normals(xyz, valid):
    """Cross-product normals from horizontal/vertical point differences.

    Central differences where both neighbors are valid, one-sided against
    the center otherwise; zero normal when a direction has no valid
    neighbor or the cross product degenerates.  Normals are flipped to
    face the sensor (dot(n, P) <= 0).
    """
    _, h, w = xyz.shape
    vr = np.zeros_like(valid)
    vl = np.zeros_like(valid)
    vd = np.zeros_like(valid)
    vu = np.zeros_like(valid)
    vr[:, :-1] = valid[:, 1:]
    vl[:, 1:] = valid[:, :-1]
    vd[:-1, :] = valid[1:, :]
    vu[1:, :] = valid[:-1, :]

    pr = np.zeros_like(xyz)
    pl = np.zeros_like(xyz)
    pd = np.zeros_like(xyz)
    pu = np.zeros_like(xyz)
    pr[:, :, :-1] = xyz[:, :, 1:]
    pl[:, :, 1:] = xyz[:, :, :-1]
    pd[:, :-1, :] = xyz[:, 1:, :]
    pu[:, 1:, :] = xyz[:, :-1, :]

    def diff(vp, vm, pp, pm):
        both = vp & vm
        only_p = vp & ~vm
        only_m = vm & ~vp
        d = np.zeros_like(xyz)
        d[:, both] = pp[:, both] - pm[:, both]
        d[:, only_p] = pp[:, only_p] - xyz[:, only_p]
        d[:, only_m] = xyz[:, only_m] - pm[:, only_m]
        return d, vp | vm

    dh, has_h = diff(vr, vl, pr, pl)
    dv, has_v = diff(vd, vu, pd, pu)

    n = np.empty_like(xyz)
    n[0] = dh[1] * dv[2] - dh[2] * dv[1]
    n[1] = dh[2] * dv[0] - dh[0] * dv[2]
    n[2] = dh[0] * dv[1] - dh[1] * dv[0]

    norm = np.sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2])
    ok = valid & has_h & has_v & (norm > 0)
    out = np.zeros_like(xyz)
    np.divide(n, norm[None, :, :], out=out, where=ok[None, :, :])

    dot = out[0] * xyz[0] + out[1] * xyz[1] + out[2] * xyz[2]
    flip = dot > 0
    out[:, flip] = -out[:, flip]
    out[:, ~ok] = 0.0
    return out


def nla_assign(range_image, label_image, rows, cols, ranges, k):
    """Nearest-range label per point inside the clamped k x k patch.

    Strict-less-than comparison scanned row-major from the patch top-left,
    so the first minimum wins ties.  Pixels with range <= 0 are empty and
    skipped; if the whole patch is empty the point keeps its own pixel's
    label.
    """
    h, w = range_image.shape
    r = k // 2
    out = label_image[rows, cols].astype(np.int32)
    if rows.size == 0:
        return out
    best = np.full(rows.size, np.inf, np.float32)
    for dy in range(-r, r + 1):
        yy = rows + dy
        in_y = (yy >= 0) & (yy < h)
        yc = np.clip(yy, 0, h - 1)
        for dx in range(-r, r + 1):
            xx = cols + dx
            ok = in_y & (xx >= 0) & (xx < w)
            xc = np.clip(xx, 0, w - 1)
            pix_range = range_image[yc, xc]
            ok &= pix_range > 0
            key = np.abs(pix_range - ranges)
            better = ok & (key < best)
            best = np.where(better, key, best)
            out = np.where(better, label_image[yc, xc], out)
    return out.astype(np.int32)


def knn_assign(range_image, label_image, rows, cols, ranges, k,
               n_neighbors, sigma, cutoff, num_classes):
    """Majority label over the spatially-weighted k nearest patch pixels.

    Ranking key is |range diff| * exp(d^2 / (2 sigma^2)); pixels whose raw
    range diff exceeds the cutoff are discarded.  Majority ties go to the
    smallest class id; points with nothing left keep their own label.
    """
    h, w = range_image.shape
    r = k // 2
    n = rows.size
    own = label_image[rows, cols].astype(np.int32)
    if n == 0:
        return own
    keys = np.full((k * k, n), np.inf, np.float32)
    labs = np.zeros((k * k, n), np.int32)
    cutoff32 = np.float32(cutoff)
    slot = 0
    for dy in range(-r, r + 1):
        yy = rows + dy
        in_y = (yy >= 0) & (yy < h)
        yc = np.clip(yy, 0, h - 1)
        for dx in range(-r, r + 1):
            xx = cols + dx
            ok = in_y & (xx >= 0) & (xx < w)
            xc = np.clip(xx, 0, w - 1)
            pix_range = range_image[yc, xc]
            ok &= pix_range > 0
            diff = np.abs(pix_range - ranges)
            ok &= diff <= cutoff32
            spatial = np.float32(np.exp((dy * dy + dx * dx) / (2.0 * sigma * sigma)))
            keys[slot] = np.where(ok, diff * spatial, np.inf)
            labs[slot] = label_image[yc, xc]
            slot += 1
    order = np.argsort(keys, axis=0, kind="stable")
    cols_idx = np.arange(n)
    votes = np.zeros((num_classes, n), np.int64)
    for j in range(min(n_neighbors, k * k)):
        sel = order[j]
        finite = np.isfinite(keys[sel, cols_idx])
        lab = labs[sel, cols_idx]
        np.add.at(votes, (lab[finite], cols_idx[finite]), 1)
    any_vote = votes.sum(axis=0) > 0
    winner = np.argmax(votes, axis=0).astype(np.int32)
    return np.where(any_vote, winner, own).astype(np.int32)
