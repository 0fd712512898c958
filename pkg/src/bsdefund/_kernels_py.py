"""Pure numpy versions of the compiled kernels.

Same contracts as ``_kernels.pyx``; the Jacobi sweep is vectorised over the
batch axis instead of looping matrix by matrix.
"""

import numpy as np


def jacobi_eigh(a_in, max_sweeps=60, rel_tol=1e-17):
    a = np.array(a_in, dtype=np.float64, order="C", copy=True)
    n, d, _ = a.shape
    v = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    rows = np.arange(n)
    off_mask = ~np.eye(d, dtype=bool)
    for _ in range(max_sweeps):
        sq = a * a
        total = sq.sum(axis=(1, 2))
        # summed directly: total - diagonal cancels once the rotations converge
        off = sq[:, off_mask].sum(axis=1)
        active = (off > rel_tol * rel_tol * total) & (off != 0.0)
        if not active.any():
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[:, p, q]
                rot = active & (apq != 0.0)
                if not rot.any():
                    continue
                safe = np.where(rot, apq, 1.0)
                # huge theta only occurs where the rotation is negligible; t -> 0 there
                with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                    theta = (a[:, q, q] - a[:, p, p]) / (2.0 * safe)
                    root = np.sqrt(theta * theta + 1.0)
                    t = np.where(theta >= 0.0, 1.0 / (theta + root), -1.0 / (-theta + root))
                c = np.where(rot, 1.0 / np.sqrt(t * t + 1.0), 1.0)
                s = np.where(rot, t * c, 0.0)
                cc = c[:, None]
                ss = s[:, None]
                akp = a[:, :, p].copy()
                akq = a[:, :, q].copy()
                a[:, :, p] = cc * akp - ss * akq
                a[:, :, q] = ss * akp + cc * akq
                akp = a[:, p, :].copy()
                akq = a[:, q, :].copy()
                a[:, p, :] = cc * akp - ss * akq
                a[:, q, :] = ss * akp + cc * akq
                vkp = v[:, :, p].copy()
                vkq = v[:, :, q].copy()
                v[:, :, p] = cc * vkp - ss * vkq
                v[:, :, q] = ss * vkp + cc * vkq
    w = np.einsum("nii->ni", a).copy()
    order = np.argsort(-w, axis=1, kind="stable")
    w = np.take_along_axis(w, order, axis=1)
    v = v[rows[:, None], :, order].transpose(0, 2, 1).copy()
    # first component with |v| > 1e-12 made positive
    big = np.abs(v) > 1e-12
    first = np.argmax(big, axis=1)
    lead = np.take_along_axis(v, first[:, None, :], axis=1)[:, 0, :]
    sign = np.where(lead < 0.0, -1.0, 1.0)
    v *= sign[:, None, :]
    return w, v


def funding_fl(y_in, w_in, r_l, r_b, r_ib_in):
    y = np.asarray(y_in, dtype=np.float64)
    w = np.asarray(w_in, dtype=np.float64)
    r_ib = np.asarray(r_ib_in, dtype=np.float64)
    lin = w.sum(axis=1)
    fund = (r_ib * np.maximum(w, 0.0)).sum(axis=1)
    u = y + np.maximum(-w, 0.0).sum(axis=1)
    return r_l * lin - fund + r_l * np.maximum(u, 0.0) - r_b * np.maximum(-u, 0.0)
