"""Numba kernels for the hot loops.

Everything here works on plain float64/int64 arrays with 0-based indices.
The Python-facing modules own validation, seeding and error reporting; the
kernels return status codes instead of raising.

Scaling convention for the fused solver: the penalized objective is

    loss(beta)/nt + lam * sum_t w_t ||theta_t||,

with nt = N*T of the full panel, so the zero-block threshold for block t is
thr_t = nt * lam * w_t / 2 measured against the raw (unnormalized) score.
"""

import numpy as np
from numba import njit

# status codes shared by the kernels
OK = 0
SINGULAR = 1


@njit(cache=True)
def _is_singular(gram):
    """Relative rank check for a small symmetric PSD matrix."""
    k = gram.shape[0]
    if k == 1:
        return gram[0, 0] <= 1e-10
    w = np.linalg.eigvalsh(gram)
    return w[0] <= 1e-10 * max(1.0, w[k - 1])


@njit(cache=True)
def _solve_cell(gram, rhs, use_pinv):
    """Solve gram @ b = rhs; returns (b, singular_flag)."""
    if _is_singular(gram):
        if not use_pinv:
            return np.zeros_like(rhs), True
        return np.dot(np.linalg.pinv(gram), rhs), False
    if gram.shape[0] == 1:
        out = np.empty_like(rhs)
        out[0] = rhs[0] / gram[0, 0]
        return out, False
    return np.linalg.solve(gram, rhs), False


# ---------------------------------------------------------------------------
# GFE (k-means style alternation), level mode
# ---------------------------------------------------------------------------


@njit(cache=True)
def level_group_stats(x, y, labels, G):
    """Per (group, period) Gram matrices and cross moments."""
    N, T, k = x.shape
    S = np.zeros((G, T, k, k))
    v = np.zeros((G, T, k))
    for i in range(N):
        g = labels[i]
        for t in range(T):
            for a in range(k):
                xa = x[i, t, a]
                v[g, t, a] += xa * y[i, t]
                for b in range(k):
                    S[g, t, a, b] += xa * x[i, t, b]
    return S, v


@njit(cache=True)
def level_paths_given_labels(x, y, labels, G, use_pinv):
    """Per-(g, t) least squares given an assignment.

    Returns (beta (G,T,k), status, bad_g, bad_t).
    """
    N, T, k = x.shape
    S, v = level_group_stats(x, y, labels, G)
    beta = np.zeros((G, T, k))
    for g in range(G):
        for t in range(T):
            b, sing = _solve_cell(S[g, t], v[g, t], use_pinv)
            if sing:
                return beta, SINGULAR, g, t
            beta[g, t] = b
    return beta, OK, -1, -1


@njit(cache=True)
def level_unit_ssr(x, y, beta):
    """ssr[i, g] = sum_t (y_it - x_it' beta_{g,t})^2."""
    N, T, k = x.shape
    G = beta.shape[0]
    ssr = np.zeros((N, G))
    for i in range(N):
        for g in range(G):
            acc = 0.0
            for t in range(T):
                fit = 0.0
                for a in range(k):
                    fit += x[i, t, a] * beta[g, t, a]
                r = y[i, t] - fit
                acc += r * r
            ssr[i, g] = acc
    return ssr


@njit(cache=True)
def _reassign(ssr, labels_out):
    """Argmin over groups, ties to the lowest index."""
    N, G = ssr.shape
    for i in range(N):
        best = 0
        val = ssr[i, 0]
        for g in range(1, G):
            if ssr[i, g] < val:
                val = ssr[i, g]
                best = g
        labels_out[i] = best


@njit(cache=True)
def _repair_empty(labels, ssr, G):
    """Move the worst-fit unit (largest own SSR) into each empty group.

    Only units from groups with >= 2 members are eligible.  Returns the
    number of repairs performed.
    """
    N = labels.shape[0]
    sizes = np.zeros(G, dtype=np.int64)
    for i in range(N):
        sizes[labels[i]] += 1
    n_rep = 0
    for g in range(G):
        if sizes[g] > 0:
            continue
        pick = -1
        worst = -1.0
        for i in range(N):
            if sizes[labels[i]] < 2:
                continue
            own = ssr[i, labels[i]]
            if own > worst:
                worst = own
                pick = i
        if pick < 0:
            return -1
        sizes[labels[pick]] -= 1
        labels[pick] = g
        sizes[g] += 1
        n_rep += 1
    return n_rep


@njit(cache=True)
def gfe_level_start(x, y, labels0, G, max_iters, use_pinv):
    """One GFE start: alternate per-cell OLS and reassignment.

    Returns (labels, beta, sse, n_iters, sse_trace, status, bad_g, bad_t,
    bad_size).  sse_trace[j] is the post-refit SSE at iteration j.
    """
    N = x.shape[0]
    labels = labels0.copy()
    new_labels = np.empty_like(labels)
    sse_trace = np.full(max_iters, np.nan)
    beta = np.zeros((G, x.shape[1], x.shape[2]))
    sse = np.inf
    it = 0
    for it in range(max_iters):
        beta, status, bg, bt = level_paths_given_labels(x, y, labels, G, use_pinv)
        if status != OK:
            size = 0
            for i in range(N):
                if labels[i] == bg:
                    size += 1
            return labels, beta, np.inf, it, sse_trace, SINGULAR, bg, bt, size
        ssr = level_unit_ssr(x, y, beta)
        sse = 0.0
        for i in range(N):
            sse += ssr[i, labels[i]]
        sse_trace[it] = sse
        _reassign(ssr, new_labels)
        if _repair_empty(new_labels, ssr, G) < 0:
            return labels, beta, sse, it, sse_trace, SINGULAR, -1, -1, 0
        same = True
        for i in range(N):
            if new_labels[i] != labels[i]:
                same = False
                break
        if same:
            return labels, beta, sse, it + 1, sse_trace, OK, -1, -1, 0
        labels[:] = new_labels
    # max_iters exhausted: refit once more so (labels, beta, sse) agree
    beta, status, bg, bt = level_paths_given_labels(x, y, labels, G, use_pinv)
    if status != OK:
        size = 0
        for i in range(N):
            if labels[i] == bg:
                size += 1
        return labels, beta, np.inf, max_iters, sse_trace, SINGULAR, bg, bt, size
    ssr = level_unit_ssr(x, y, beta)
    sse = 0.0
    for i in range(N):
        sse += ssr[i, labels[i]]
    return labels, beta, sse, max_iters, sse_trace, OK, -1, -1, 0


# ---------------------------------------------------------------------------
# GFE, first-difference mode
# ---------------------------------------------------------------------------


@njit(cache=True)
def fd_group_system(x, y, labels, G):
    """Stacked normal equations of the differenced regression, per group.

    Observation (i, p), p >= 1 (0-based periods), loads +x[i,p] on block p
    and -x[i,p-1] on block p-1 with outcome y[i,p] - y[i,p-1].  Returns
    (H (G,Tk,Tk), d (G,Tk)).
    """
    N, T, k = x.shape
    H = np.zeros((G, T * k, T * k))
    d = np.zeros((G, T * k))
    for i in range(N):
        g = labels[i]
        for p in range(1, T):
            dy = y[i, p] - y[i, p - 1]
            for a in range(k):
                ra = p * k + a
                la = (p - 1) * k + a
                d[g, ra] += x[i, p, a] * dy
                d[g, la] -= x[i, p - 1, a] * dy
                for b in range(k):
                    rb = p * k + b
                    lb = (p - 1) * k + b
                    H[g, ra, rb] += x[i, p, a] * x[i, p, b]
                    H[g, la, lb] += x[i, p - 1, a] * x[i, p - 1, b]
                    H[g, ra, lb] -= x[i, p, a] * x[i, p - 1, b]
                    H[g, la, rb] -= x[i, p - 1, a] * x[i, p, b]
    return H, d


@njit(cache=True)
def fd_paths_given_labels(x, y, labels, G, use_pinv):
    """Coupled least squares on differenced data, one solve per group."""
    N, T, k = x.shape
    H, d = fd_group_system(x, y, labels, G)
    beta = np.zeros((G, T, k))
    for g in range(G):
        Hg = H[g]
        dg = d[g]
        w = np.linalg.eigvalsh(Hg)
        if w[0] <= 1e-10 * max(1.0, w[T * k - 1]):
            if not use_pinv:
                return beta, SINGULAR, g
            sol = np.dot(np.linalg.pinv(Hg), dg)
        else:
            sol = np.linalg.solve(Hg, dg)
        beta[g] = sol.reshape(T, k)
    return beta, OK, -1


@njit(cache=True)
def fd_unit_ssr(x, y, beta):
    """ssr[i, g] over differenced observations p = 1..T-1."""
    N, T, k = x.shape
    G = beta.shape[0]
    ssr = np.zeros((N, G))
    for i in range(N):
        for g in range(G):
            acc = 0.0
            for p in range(1, T):
                fit = 0.0
                for a in range(k):
                    fit += x[i, p, a] * beta[g, p, a] - x[i, p - 1, a] * beta[g, p - 1, a]
                r = (y[i, p] - y[i, p - 1]) - fit
                acc += r * r
            ssr[i, g] = acc
    return ssr


@njit(cache=True)
def gfe_fd_start(x, y, labels0, G, max_iters, use_pinv):
    """One GFE start on the differenced problem."""
    N = x.shape[0]
    labels = labels0.copy()
    new_labels = np.empty_like(labels)
    sse_trace = np.full(max_iters, np.nan)
    beta = np.zeros((G, x.shape[1], x.shape[2]))
    for it in range(max_iters):
        beta, status, bg = fd_paths_given_labels(x, y, labels, G, use_pinv)
        if status != OK:
            size = 0
            for i in range(N):
                if labels[i] == bg:
                    size += 1
            return labels, beta, np.inf, it, sse_trace, SINGULAR, bg, -1, size
        ssr = fd_unit_ssr(x, y, beta)
        sse = 0.0
        for i in range(N):
            sse += ssr[i, labels[i]]
        sse_trace[it] = sse
        _reassign(ssr, new_labels)
        if _repair_empty(new_labels, ssr, G) < 0:
            return labels, beta, sse, it, sse_trace, SINGULAR, -1, -1, 0
        same = True
        for i in range(N):
            if new_labels[i] != labels[i]:
                same = False
                break
        if same:
            return labels, beta, sse, it + 1, sse_trace, OK, -1, -1, 0
        labels[:] = new_labels
    beta, status, bg = fd_paths_given_labels(x, y, labels, G, use_pinv)
    if status != OK:
        size = 0
        for i in range(N):
            if labels[i] == bg:
                size += 1
        return labels, beta, np.inf, max_iters, sse_trace, SINGULAR, bg, -1, size
    ssr = fd_unit_ssr(x, y, beta)
    sse = 0.0
    for i in range(N):
        sse += ssr[i, labels[i]]
    return labels, beta, sse, max_iters, sse_trace, OK, -1, -1, 0


# ---------------------------------------------------------------------------
# Group-soft-threshold block update
# ---------------------------------------------------------------------------


@njit(cache=True)
def group_threshold_update(eigvals, eigvecs, b, thr):
    """Minimize 0.5 theta'A theta - b'theta + thr*||theta|| for PSD A.

    A is given by its eigendecomposition.  Returns (theta, ok).  ok=False
    marks a root-search failure (caller falls back to a majorization step).
    """
    k = b.shape[0]
    bn = 0.0
    for a in range(k):
        bn += b[a] * b[a]
    bn = np.sqrt(bn)
    theta = np.zeros(k)
    if bn <= thr:
        return theta, True
    if thr <= 0.0:
        for a in range(k):
            acc = 0.0
            for j in range(k):
                qb = 0.0
                for c in range(k):
                    qb += eigvecs[c, j] * b[c]
                acc += eigvecs[a, j] * qb / eigvals[j]
            theta[a] = acc
        return theta, True
    # coordinates of b in the eigenbasis
    q = np.zeros(k)
    for j in range(k):
        for c in range(k):
            q[j] += eigvecs[c, j] * b[c]
    # f(nu) = sum q_j^2/(d_j nu + thr)^2 - 1 is strictly decreasing with
    # f(0) > 0; find the unique positive root (nu = ||theta||).
    lo = 0.0
    hi = 1.0
    found = False
    for _ in range(300):
        fhi = -1.0
        for j in range(k):
            den = eigvals[j] * hi + thr
            fhi += q[j] * q[j] / (den * den)
        if fhi < 0.0:
            found = True
            break
        lo = hi
        hi *= 2.0
    if not found:
        return theta, False
    nu = 0.5 * (lo + hi)
    for _ in range(60):
        f = -1.0
        fp = 0.0
        for j in range(k):
            den = eigvals[j] * nu + thr
            f += q[j] * q[j] / (den * den)
            fp -= 2.0 * q[j] * q[j] * eigvals[j] / (den * den * den)
        if f > 0.0:
            lo = nu
        else:
            hi = nu
        if abs(f) < 1e-14:
            break
        if fp != 0.0:
            step = nu - f / fp
        else:
            step = 0.5 * (lo + hi)
        if step <= lo or step >= hi:
            step = 0.5 * (lo + hi)
        nu = step
        if hi - lo < 1e-15 * max(1.0, nu):
            break
    for a in range(k):
        acc = 0.0
        for j in range(k):
            acc += eigvecs[a, j] * q[j] * nu / (eigvals[j] * nu + thr)
        theta[a] = acc
    return theta, True


@njit(cache=True)
def _majorize_step(gram, b, thr, theta, lips):
    """Proximal-gradient fallback on 0.5 theta'A theta - b'theta + thr||theta||."""
    k = b.shape[0]
    z = np.empty(k)
    for a in range(k):
        acc = b[a]
        for c in range(k):
            acc -= gram[a, c] * theta[c]
        z[a] = theta[a] + acc / lips
    zn = 0.0
    for a in range(k):
        zn += z[a] * z[a]
    zn = np.sqrt(zn)
    scale = 0.0
    if zn > 0.0 and zn > thr / lips:
        scale = 1.0 - thr / (lips * zn)
    return z * scale


# ---------------------------------------------------------------------------
# Fused-path BCD, level mode
# ---------------------------------------------------------------------------


@njit(cache=True)
def bcd_fused_level(S, v, yy, nt, thr, theta, tol_theta, tol_obj, max_sweeps, trace, use_trace):
    """Block coordinate descent on the jump parameterization, level mode.

    S (T,k,k) and v (T,k) are the per-period group Gram/cross moments, yy the
    group's total sum of y^2, thr (T,) the per-block zero thresholds with
    thr[0] ignored.  theta (T,k) is updated in place.  When use_trace, the
    objective after every block update is appended to trace.

    Returns (n_sweeps, converged, objective, n_trace, n_fallback).
    """
    T, k = v.shape
    # cumulative-from-the-right Gram per block and its eigendecomposition
    gcum = np.zeros((T, k, k))
    gcum[T - 1] = S[T - 1]
    for s in range(T - 2, -1, -1):
        gcum[s] = gcum[s + 1] + S[s]
    eigval = np.empty((T, k))
    eigvec = np.empty((T, k, k))
    lips = np.empty(T)
    for s in range(T):
        w, vec = np.linalg.eigh(gcum[s])
        eigval[s] = w
        eigvec[s] = vec
        lips[s] = max(w[k - 1], 1e-300)

    beta = np.empty((T, k))
    acc = np.zeros(k)
    for t in range(T):
        acc += theta[t]
        beta[t] = acc
    dvec = np.empty((T, k))
    for t in range(T):
        for a in range(k):
            r = v[t, a]
            for c in range(k):
                r -= S[t, a, c] * beta[t, c]
            dvec[t, a] = r

    def _objective():
        loss = yy
        for t in range(T):
            for a in range(k):
                loss -= beta[t, a] * (v[t, a] + dvec[t, a])
        pen = 0.0
        for t in range(1, T):
            tn = 0.0
            for a in range(k):
                tn += theta[t, a] * theta[t, a]
            pen += thr[t] * np.sqrt(tn)
        return (loss + 2.0 * pen) / nt

    obj = _objective()
    n_trace = 0
    n_fb = 0
    converged = 0
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        prev_obj = obj
        max_change = 0.0
        for s in range(T):
            c = np.zeros(k)
            for t in range(s, T):
                c += dvec[t]
            old = theta[s].copy()
            if s == 0:
                step, _sing = _solve_cell(gcum[0], c, True)
                new = old + step
            else:
                b = c.copy()
                for a in range(k):
                    for cc in range(k):
                        b[a] += gcum[s, a, cc] * old[cc]
                if k == 1:
                    bn = abs(b[0])
                    if bn <= thr[s]:
                        new = np.zeros(1)
                    else:
                        nu = (bn - thr[s]) / gcum[s, 0, 0]
                        new = np.empty(1)
                        new[0] = nu if b[0] > 0 else -nu
                else:
                    new, ok = group_threshold_update(eigval[s], eigvec[s], b, thr[s])
                    if not ok:
                        new = _majorize_step(gcum[s], b, thr[s], old, lips[s])
                        n_fb += 1
            delta = new - old
            dmax = 0.0
            for a in range(k):
                da = abs(delta[a])
                if da > dmax:
                    dmax = da
            if dmax > 0.0:
                theta[s] = new
                for t in range(s, T):
                    beta[t] += delta
                    for a in range(k):
                        r = 0.0
                        for cc in range(k):
                            r += S[t, a, cc] * delta[cc]
                        dvec[t, a] -= r
                if dmax > max_change:
                    max_change = dmax
            if use_trace:
                # incremental objective: quadratic change plus penalty change
                dq = 0.0
                for a in range(k):
                    dq -= 2.0 * c[a] * delta[a]
                    for cc in range(k):
                        dq += delta[a] * gcum[s, a, cc] * delta[cc]
                if s > 0:
                    no = 0.0
                    nn = 0.0
                    for a in range(k):
                        no += old[a] * old[a]
                        nn += new[a] * new[a]
                    dq += 2.0 * thr[s] * (np.sqrt(nn) - np.sqrt(no))
                obj += dq / nt
                if n_trace < trace.shape[0]:
                    trace[n_trace] = obj
                    n_trace += 1
        new_obj = _objective()
        rel = abs(new_obj - prev_obj)
        obj = new_obj
        if max_change < tol_theta:
            converged = 1
            break
        if sweep > 0 and rel <= tol_obj * max(1.0, abs(new_obj)):
            converged = 2
            break
    return sweeps, converged, obj, n_trace, n_fb


# ---------------------------------------------------------------------------
# Fused-path BCD, first-difference mode
# ---------------------------------------------------------------------------


@njit(cache=True)
def fd_fused_stats(x, y, members):
    """Per-period moments of the differenced regression for one group.

    Returns (P, C, pdy, qdy, dy2): P[p] = sum_i x_ip x_ip'; C[p] = sum_i
    x_ip x_{i,p-1}' (p >= 1); pdy[p] = sum_i x_ip dy_ip; qdy[p] = sum_i
    x_{i,p-1} dy_ip; dy2 = total sum of dy^2.
    """
    T, k = x.shape[1], x.shape[2]
    P = np.zeros((T, k, k))
    C = np.zeros((T, k, k))
    pdy = np.zeros((T, k))
    qdy = np.zeros((T, k))
    dy2 = 0.0
    for ii in range(members.shape[0]):
        i = members[ii]
        for p in range(T):
            for a in range(k):
                for b in range(k):
                    P[p, a, b] += x[i, p, a] * x[i, p, b]
        for p in range(1, T):
            dy = y[i, p] - y[i, p - 1]
            dy2 += dy * dy
            for a in range(k):
                pdy[p, a] += x[i, p, a] * dy
                qdy[p, a] += x[i, p - 1, a] * dy
                for b in range(k):
                    C[p, a, b] += x[i, p, a] * x[i, p - 1, b]
    return P, C, pdy, qdy, dy2


@njit(cache=True)
def _fd_block_grams(P, C):
    """Diagonal Hessian blocks A_s of the differenced loss in theta space."""
    T, k = P.shape[0], P.shape[1]
    A = np.zeros((T, k, k))
    # DD_p = sum_i dx_ip dx_ip' for p >= 1
    tail = np.zeros((k, k))
    for s in range(T - 1, -1, -1):
        if s + 1 <= T - 1 and s + 1 >= 1:
            p = s + 1
            for a in range(k):
                for b in range(k):
                    tail[a, b] += P[p, a, b] - C[p, a, b] - C[p, b, a] + P[p - 1, a, b]
        for a in range(k):
            for b in range(k):
                A[s, a, b] = tail[a, b]
        if s >= 1:
            for a in range(k):
                for b in range(k):
                    A[s, a, b] += P[s, a, b]
    return A


@njit(cache=True)
def _fd_scores(P, C, pdy, qdy, beta):
    """Residual moments rho_x[p] = sum_i x_ip r_ip, rho_l[p] = sum_i x_{i,p-1} r_ip."""
    T, k = pdy.shape
    rx = np.zeros((T, k))
    rl = np.zeros((T, k))
    for p in range(1, T):
        for a in range(k):
            accx = pdy[p, a]
            accl = qdy[p, a]
            for c in range(k):
                accx -= P[p, a, c] * beta[p, c]
                accx += C[p, a, c] * beta[p - 1, c]
                accl -= C[p, c, a] * beta[p, c]
                accl += P[p - 1, a, c] * beta[p - 1, c]
            rx[p, a] = accx
            rl[p, a] = accl
    return rx, rl


@njit(cache=True)
def _fd_loss(P, C, pdy, qdy, dy2, beta):
    T, k = pdy.shape
    loss = dy2
    for p in range(1, T):
        for a in range(k):
            loss -= 2.0 * (pdy[p, a] * beta[p, a] - qdy[p, a] * beta[p - 1, a])
            for c in range(k):
                loss += beta[p, a] * P[p, a, c] * beta[p, c]
                loss -= 2.0 * beta[p, a] * C[p, a, c] * beta[p - 1, c]
                loss += beta[p - 1, a] * P[p - 1, a, c] * beta[p - 1, c]
    return loss


@njit(cache=True)
def bcd_fused_fd(P, C, pdy, qdy, dy2, nt, thr, theta, tol_theta, tol_obj, max_sweeps, trace, use_trace):
    """Block coordinate descent on the differenced loss; mirrors bcd_fused_level."""
    T, k = pdy.shape
    A = _fd_block_grams(P, C)
    eigval = np.empty((T, k))
    eigvec = np.empty((T, k, k))
    lips = np.empty(T)
    for s in range(T):
        w, vec = np.linalg.eigh(A[s])
        eigval[s] = w
        eigvec[s] = vec
        lips[s] = max(w[k - 1], 1e-300)

    beta = np.empty((T, k))
    acc = np.zeros(k)
    for t in range(T):
        acc += theta[t]
        beta[t] = acc

    def _objective():
        pen = 0.0
        for t in range(1, T):
            tn = 0.0
            for a in range(k):
                tn += theta[t, a] * theta[t, a]
            pen += thr[t] * np.sqrt(tn)
        return (_fd_loss(P, C, pdy, qdy, dy2, beta) + 2.0 * pen) / nt

    obj = _objective()
    n_trace = 0
    n_fb = 0
    converged = 0
    sweeps = 0
    rx, rl = _fd_scores(P, C, pdy, qdy, beta)
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        prev_obj = obj
        max_change = 0.0
        for s in range(T):
            c = np.zeros(k)
            start = s + 1 if s + 1 > 1 else 1
            for p in range(start, T):
                c += rx[p] - rl[p]
            if s >= 1:
                c += rx[s]
            old = theta[s].copy()
            if s == 0:
                step, _sing = _solve_cell(A[0], c, True)
                new = old + step
            else:
                b = c.copy()
                for a in range(k):
                    for cc in range(k):
                        b[a] += A[s, a, cc] * old[cc]
                if k == 1:
                    bn = abs(b[0])
                    if bn <= thr[s]:
                        new = np.zeros(1)
                    else:
                        nu = (bn - thr[s]) / A[s, 0, 0]
                        new = np.empty(1)
                        new[0] = nu if b[0] > 0 else -nu
                else:
                    new, ok = group_threshold_update(eigval[s], eigvec[s], b, thr[s])
                    if not ok:
                        new = _majorize_step(A[s], b, thr[s], old, lips[s])
                        n_fb += 1
            delta = new - old
            dmax = 0.0
            for a in range(k):
                da = abs(delta[a])
                if da > dmax:
                    dmax = da
            if dmax > 0.0:
                theta[s] = new
                for t in range(s, T):
                    beta[t] += delta
                rx, rl = _fd_scores(P, C, pdy, qdy, beta)
                if dmax > max_change:
                    max_change = dmax
            if use_trace:
                dq = 0.0
                for a in range(k):
                    dq -= 2.0 * c[a] * delta[a]
                    for cc in range(k):
                        dq += delta[a] * A[s, a, cc] * delta[cc]
                if s > 0:
                    no = 0.0
                    nn = 0.0
                    for a in range(k):
                        no += old[a] * old[a]
                        nn += new[a] * new[a]
                    dq += 2.0 * thr[s] * (np.sqrt(nn) - np.sqrt(no))
                obj += dq / nt
                if n_trace < trace.shape[0]:
                    trace[n_trace] = obj
                    n_trace += 1
        new_obj = _objective()
        rel = abs(new_obj - prev_obj)
        obj = new_obj
        if max_change < tol_theta:
            converged = 1
            break
        if sweep > 0 and rel <= tol_obj * max(1.0, abs(new_obj)):
            converged = 2
            break
    return sweeps, converged, obj, n_trace, n_fb
