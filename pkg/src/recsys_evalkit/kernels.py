"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The public wrappers pick an implementation from ``backend`` ("numba",
"numpy" or None for the process default; see :mod:`recsys_evalkit._accel`).
Both implementations must produce identical results; the test suite checks
this and ``benchmarks/bench_kernels.py`` times them against each other.
"""

import numpy as np

from . import _accel

BACKENDS = ("numba", "numpy")


def _pick(backend):
    if backend is None:
        return "numba" if _accel.USE_NUMBA else "numpy"
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not _accel.HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable")
    return backend


# ---------------------------------------------------------------------------
# L-core peeling


def _peel(indptr, indices, t_indptr, t_indices, n_users, n_items, min_degree):
    deg_u = np.empty(n_users, np.int64)
    deg_i = np.empty(n_items, np.int64)
    for u in range(n_users):
        deg_u[u] = indptr[u + 1] - indptr[u]
    for i in range(n_items):
        deg_i[i] = t_indptr[i + 1] - t_indptr[i]
    alive_u = np.ones(n_users, np.bool_)
    alive_i = np.ones(n_items, np.bool_)
    queue = np.empty(n_users + n_items, np.int64)
    head = 0
    tail = 0
    for u in range(n_users):
        if deg_u[u] < min_degree:
            alive_u[u] = False
            queue[tail] = u
            tail += 1
    for i in range(n_items):
        if deg_i[i] < min_degree:
            alive_i[i] = False
            queue[tail] = n_users + i
            tail += 1
    while head < tail:
        v = queue[head]
        head += 1
        if v < n_users:
            for p in range(indptr[v], indptr[v + 1]):
                i = indices[p]
                if alive_i[i]:
                    deg_i[i] -= 1
                    if deg_i[i] < min_degree:
                        alive_i[i] = False
                        queue[tail] = n_users + i
                        tail += 1
        else:
            i = v - n_users
            for p in range(t_indptr[i], t_indptr[i + 1]):
                u = t_indices[p]
                if alive_u[u]:
                    deg_u[u] -= 1
                    if deg_u[u] < min_degree:
                        alive_u[u] = False
                        queue[tail] = u
                        tail += 1
    return alive_u, alive_i


_peel_nb = _accel.jit(_peel)


def _peel_numpy(indptr, indices, n_users, n_items, min_degree):
    rows = np.repeat(np.arange(n_users), np.diff(indptr))
    cols = np.asarray(indices)
    alive_u = np.ones(n_users, bool)
    alive_i = np.ones(n_items, bool)
    while True:
        edge = alive_u[rows] & alive_i[cols]
        deg_u = np.bincount(rows[edge], minlength=n_users)
        deg_i = np.bincount(cols[edge], minlength=n_items)
        new_u = alive_u & (deg_u >= min_degree)
        new_i = alive_i & (deg_i >= min_degree)
        if np.array_equal(new_u, alive_u) and np.array_equal(new_i, alive_i):
            return alive_u, alive_i
        alive_u, alive_i = new_u, new_i


def lcore_masks(indptr, indices, n_items, min_degree, backend=None):
    """Boolean keep-masks (users, items) of the `min_degree`-core of a CSR graph."""
    indptr = np.asarray(indptr, np.int64)
    indices = np.asarray(indices, np.int64)
    n_users = len(indptr) - 1
    if _pick(backend) == "numpy":
        return _peel_numpy(indptr, indices, n_users, n_items, min_degree)
    # transpose to CSC (item -> users)
    order = np.argsort(indices, kind="stable")
    rows = np.repeat(np.arange(n_users, dtype=np.int64), np.diff(indptr))
    t_indices = rows[order]
    t_indptr = np.zeros(n_items + 1, np.int64)
    np.cumsum(np.bincount(indices, minlength=n_items), out=t_indptr[1:])
    return _peel_nb(indptr, indices, t_indptr, t_indices, n_users, n_items, min_degree)


# ---------------------------------------------------------------------------
# ranks of held-out items


def _ranks(scores, mask_indptr, mask_indices, rel_indptr, rel_indices):
    n_rows, n_items = scores.shape
    out = np.empty(len(rel_indices), np.int64)
    cand = np.ones(n_items, np.bool_)
    for b in range(n_rows):
        s = scores[b]
        for p in range(mask_indptr[b], mask_indptr[b + 1]):
            cand[mask_indices[p]] = False
        for q in range(rel_indptr[b], rel_indptr[b + 1]):
            r = rel_indices[q]
            sr = s[r]
            n_before = 0
            for j in range(n_items):
                if cand[j]:
                    sj = s[j]
                    if sj > sr or (sj == sr and j < r):
                        n_before += 1
            out[q] = n_before + 1
        for p in range(mask_indptr[b], mask_indptr[b + 1]):
            cand[mask_indices[p]] = True
    return out


_ranks_nb = _accel.jit(_ranks)


def _ranks_numpy(scores, mask_indptr, mask_indices, rel_indptr, rel_indices):
    n_rows, n_items = scores.shape
    out = np.empty(len(rel_indices), np.int64)
    idx = np.arange(n_items)
    for b in range(n_rows):
        s = scores[b]
        cand = np.ones(n_items, bool)
        cand[mask_indices[mask_indptr[b] : mask_indptr[b + 1]]] = False
        rel = rel_indices[rel_indptr[b] : rel_indptr[b + 1]]
        if len(rel) == 0:
            continue
        sr = s[rel][:, None]
        before = (s[None, :] > sr) | ((s[None, :] == sr) & (idx[None, :] < rel[:, None]))
        out[rel_indptr[b] : rel_indptr[b + 1]] = (before & cand[None, :]).sum(axis=1) + 1
    return out


def relevant_ranks(scores, mask_indptr, mask_indices, rel_indptr, rel_indices, backend=None):
    """1-based rank of every relevant item among the unmasked candidates.

    Rows of `scores` are users; masks and relevant sets are given in CSR form.
    Ties are broken by ascending item index.
    """
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    args = (
        scores,
        np.asarray(mask_indptr, np.int64),
        np.asarray(mask_indices, np.int64),
        np.asarray(rel_indptr, np.int64),
        np.asarray(rel_indices, np.int64),
    )
    if _pick(backend) == "numba":
        return _ranks_nb(*args)
    return _ranks_numpy(*args)


# ---------------------------------------------------------------------------
# SLIM coordinate descent


def _slim_column(gram, j, l1, l2, positive, tol, max_sweeps):
    n = gram.shape[0]
    w = np.zeros(n)
    q = np.zeros(n)  # gram @ w
    sweeps = 0
    active_only = False
    while sweeps < max_sweeps:
        sweeps += 1
        max_delta = 0.0
        for k in range(n):
            if k == j or (active_only and w[k] == 0.0):
                continue
            gkk = gram[k, k]
            rho = gram[k, j] - q[k] + gkk * w[k]
            if rho > l1:
                new = (rho - l1) / (gkk + l2)
            elif rho < -l1 and not positive:
                new = (rho + l1) / (gkk + l2)
            else:
                new = 0.0
            delta = new - w[k]
            if delta != 0.0:
                w[k] = new
                for m in range(n):
                    q[m] += gram[m, k] * delta
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if max_delta < tol:
            if not active_only:
                break
            active_only = False  # confirm with a full sweep
        else:
            active_only = True
    return w, sweeps


_slim_column_nb = _accel.jit(_slim_column)


def _slim_column_numpy(gram, j, l1, l2, positive, tol, max_sweeps):
    n = gram.shape[0]
    w = np.zeros(n)
    q = np.zeros(n)
    diag = np.diag(gram).copy()
    target = gram[:, j]
    sweeps = 0
    active_only = False
    while sweeps < max_sweeps:
        sweeps += 1
        max_delta = 0.0
        coords = np.flatnonzero(w) if active_only else range(n)
        for k in coords:
            if k == j:
                continue
            rho = target[k] - q[k] + diag[k] * w[k]
            if rho > l1:
                new = (rho - l1) / (diag[k] + l2)
            elif rho < -l1 and not positive:
                new = (rho + l1) / (diag[k] + l2)
            else:
                new = 0.0
            delta = new - w[k]
            if delta != 0.0:
                w[k] = new
                q += gram[:, k] * delta
                max_delta = max(max_delta, abs(delta))
        if max_delta < tol:
            if not active_only:
                break
            active_only = False
        else:
            active_only = True
    return w, sweeps


def slim_column(gram, j, l1, l2, positive=True, tol=1e-4, max_sweeps=100, backend=None):
    """Cyclic coordinate descent for one SLIM column.

    After each full sweep that moved something, sweeps run over the nonzero
    coordinates only until they settle; a full sweep then confirms.

    Minimises ``0.5 w'Gw - G[:, j]'w + l1 |w|_1 + 0.5 l2 |w|^2`` with
    ``w[j] = 0`` (and ``w >= 0`` when `positive`). Returns ``(w, sweeps)``.
    """
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    fn = _slim_column_nb if _pick(backend) == "numba" else _slim_column_numpy
    return fn(gram, int(j), float(l1), float(l2), bool(positive), float(tol), int(max_sweeps))


# ---------------------------------------------------------------------------
# ALS half sweep (implicit feedback, confidence 1 + weight * x)


def _als_half(indptr, indices, fixed, reg, weight):
    n_rows = len(indptr) - 1
    f = fixed.shape[1]
    out = np.zeros((n_rows, f))
    base = fixed.T @ fixed
    for k in range(f):
        base[k, k] += reg
    for u in range(n_rows):
        lo = indptr[u]
        hi = indptr[u + 1]
        if lo == hi:
            continue
        a = base.copy()
        b = np.zeros(f)
        for p in range(lo, hi):
            y = fixed[indices[p]]
            for r in range(f):
                b[r] += (1.0 + weight) * y[r]
                for c in range(f):
                    a[r, c] += weight * y[r] * y[c]
        out[u] = np.linalg.solve(a, b)
    return out


_als_half_nb = _accel.jit(_als_half)


def _als_half_numpy(indptr, indices, fixed, reg, weight):
    n_rows = len(indptr) - 1
    f = fixed.shape[1]
    out = np.zeros((n_rows, f))
    base = fixed.T @ fixed + reg * np.eye(f)
    for u in range(n_rows):
        items = indices[indptr[u] : indptr[u + 1]]
        if len(items) == 0:
            continue
        y = fixed[items]
        a = base + weight * (y.T @ y)
        b = (1.0 + weight) * y.sum(axis=0)
        out[u] = np.linalg.solve(a, b)
    return out


def als_half_sweep(indptr, indices, fixed, reg, weight=1.0, backend=None):
    """Solve every row's weighted ridge system with the other side held fixed."""
    args = (
        np.asarray(indptr, np.int64),
        np.asarray(indices, np.int64),
        np.ascontiguousarray(fixed, dtype=np.float64),
        float(reg),
        float(weight),
    )
    if _pick(backend) == "numba":
        return _als_half_nb(*args)
    return _als_half_numpy(*args)
