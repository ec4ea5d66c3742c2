"""Compiled single-chain driver for the sum-of-trees sampler.

Trees live in heap-indexed flat arrays: node ``v`` has children ``2v`` and
``2v+1``; ``feature[v] >= 0`` marks an internal node splitting on that
column, ``-1`` a leaf, ``-2`` an absent slot.  One call runs an entire
chain: burn-in plus retained sweeps, each sweep updating every tree with a
Metropolis-Hastings structural move (GROW 0.25 / PRUNE 0.25 / CHANGE 0.50,
a stump proposing GROW only), redrawing all leaf means from their
conjugate posteriors, then the variance draw (continuous response) or the
truncated-normal latent refresh (probit response).

Acceptance ratios drop terms that are constant across a move's row set;
the retained pieces mirror ``causal_trees.trees.leaf_log_marginal``.
Proposals that would create an empty leaf cell, or grow past
``max_depth``, are rejected outright.

All randomness flows through numba's internal generator seeded once per
chain, which makes a chain a pure function of its inputs.
"""

import math

import numpy as np
from numba import njit

ABSENT = -2
LEAF = -1


@njit(inline="always")
def _depth(v):
    d = 0
    while v > 1:
        v >>= 1
        d += 1
    return d


@njit(inline="always")
def _lm(sw, swr, sigma2, sigma_mu2):
    # leaf log marginal minus terms constant across a move's row set
    prec = sw / sigma2 + 1.0 / sigma_mu2
    t = swr / sigma2
    return -0.5 * np.log(sigma_mu2 * prec) + 0.5 * t * t / prec


@njit(inline="always")
def _tn_above(a):
    # draw standard normal conditioned on being > a
    if a <= 0.0:
        while True:
            x = np.random.standard_normal()
            if x > a:
                return x
    # exponential tail proposal (Robert-style) for a > 0
    lam = 0.5 * (a + np.sqrt(a * a + 4.0))
    while True:
        x = a + np.random.exponential(1.0) / lam
        d = x - lam
        if np.random.random() <= np.exp(-0.5 * d * d):
            return x


@njit(inline="always")
def _phi(x):
    p = 0.5 * (1.0 + math.erf(x / 1.4142135623730951))
    if p < 1e-15:
        p = 1e-15
    elif p > 1.0 - 1e-15:
        p = 1.0 - 1e-15
    return p


@njit(inline="always")
def _count_prunable(feature_j, leaves_j, n_leaf):
    c = 0
    for k in range(n_leaf):
        v = leaves_j[k]
        if (v & 1) == 0 and feature_j[v + 1] == LEAF:
            c += 1
    return c


@njit(cache=True)
def run_chain(
    X,
    y,
    w,
    cutpoints,
    Xpred,
    m,
    alpha,
    beta,
    sigma_mu,
    nu,
    lam,
    burn_in,
    n_draws,
    seed,
    is_probit,
    update_sigma,
    sigma2_init,
    max_depth,
):
    """Run one chain; see module docstring.

    Returns (pred_draws, sigma2_draws, feature, threshold, mu,
    leaf_of_row, g_total, proposed, accepted).  ``pred_draws`` holds, per
    retained sweep, the ensemble sum for every row of ``Xpred``
    (probability-scale for probit).  The trailing arrays snapshot the
    final sampler state for diagnostics.
    """
    np.random.seed(seed)
    N, p = X.shape
    n_cut = cutpoints.shape[1]
    n_pred = Xpred.shape[0]
    S = 1 << (max_depth + 1)
    max_leaves = 1 << max_depth

    feature_a = np.full((m, S), ABSENT, dtype=np.int64)
    threshold_a = np.zeros((m, S))
    mu_a = np.zeros((m, S))
    leaf_of_row = np.ones((m, N), dtype=np.int64)
    leaves = np.zeros((m, max_leaves), dtype=np.int64)
    slot_of_leaf = np.zeros((m, S), dtype=np.int64)
    internal_l = np.zeros((m, max_leaves), dtype=np.int64)
    slot_of_int = np.zeros((m, S), dtype=np.int64)
    n_leaves = np.ones(m, dtype=np.int64)
    n_internal = np.zeros(m, dtype=np.int64)
    for j in range(m):
        feature_a[j, 1] = LEAF
        leaves[j, 0] = 1
        slot_of_leaf[j, 1] = 0

    g_total = np.zeros(N)
    target = np.empty(N)
    if not is_probit:
        for i in range(N):
            target[i] = y[i]
    f_old = np.empty(N)
    r = np.empty(N)
    acc_w = np.empty(max_leaves)
    acc_wr = np.empty(max_leaves)
    old_w = np.empty(max_leaves)
    old_wr = np.empty(max_leaves)
    new_w = np.empty(max_leaves)
    new_wr = np.empty(max_leaves)
    new_n = np.zeros(max_leaves, dtype=np.int64)
    local_of = np.zeros(S, dtype=np.int64)
    subleaf = np.zeros(max_leaves, dtype=np.int64)
    stack = np.zeros(2 * max_leaves + 4, dtype=np.int64)
    cand = np.zeros(max_leaves, dtype=np.int64)
    buf_row = np.zeros(N, dtype=np.int64)
    buf_leaf = np.zeros(N, dtype=np.int64)

    sigma_mu2 = sigma_mu * sigma_mu
    sigma2 = sigma2_init

    pred_draws = np.zeros((n_draws, n_pred))
    sigma2_draws = np.zeros(n_draws)
    proposed = np.zeros(3, dtype=np.int64)
    accepted = np.zeros(3, dtype=np.int64)

    for sweep in range(burn_in + n_draws):
        if is_probit:
            for i in range(N):
                fi = g_total[i]
                if y[i] > 0.5:
                    target[i] = fi + _tn_above(-fi)
                else:
                    target[i] = fi - _tn_above(fi)

        for j in range(m):
            # partial residuals against the rest of the ensemble
            for i in range(N):
                fo = mu_a[j, leaf_of_row[j, i]]
                f_old[i] = fo
                r[i] = target[i] - g_total[i] + fo

            stump = n_leaves[j] == 1
            if stump:
                move = 0
            else:
                u = np.random.random()
                if u < 0.25:
                    move = 0
                elif u < 0.5:
                    move = 1
                else:
                    move = 2
            proposed[move] += 1

            if move == 0:  # GROW
                L = leaves[j, np.random.randint(0, n_leaves[j])]
                d_l = _depth(L)
                col = np.random.randint(0, p)
                cut = np.random.randint(0, n_cut)
                thr = cutpoints[col, cut]
                if d_l < max_depth:
                    sw = 0.0
                    swr = 0.0
                    swl = 0.0
                    swrl = 0.0
                    nlft = 0
                    nrgt = 0
                    for i in range(N):
                        if leaf_of_row[j, i] == L:
                            wi = w[i]
                            ri = r[i]
                            sw += wi
                            swr += wi * ri
                            if X[i, col] <= thr:
                                swl += wi
                                swrl += wi * ri
                                nlft += 1
                            else:
                                nrgt += 1
                    if nlft > 0 and nrgt > 0:
                        dlik = (
                            _lm(swl, swrl, sigma2, sigma_mu2)
                            + _lm(sw - swl, swr - swrl, sigma2, sigma_mu2)
                            - _lm(sw, swr, sigma2, sigma_mu2)
                        )
                        a_d = alpha / (1.0 + d_l) ** beta
                        a_d1 = alpha / (2.0 + d_l) ** beta
                        dprior = (
                            np.log(a_d)
                            + 2.0 * np.log(1.0 - a_d1)
                            - np.log(1.0 - a_d)
                        )
                        npr_new = (
                            _count_prunable(feature_a[j], leaves[j], n_leaves[j]) + 1
                        )
                        if L > 1 and feature_a[j, L ^ 1] == LEAF:
                            npr_new -= 1
                        p_grow = 1.0 if stump else 0.25
                        dprop = (
                            np.log(0.25)
                            - np.log(np.float64(npr_new))
                            - np.log(p_grow)
                            + np.log(np.float64(n_leaves[j]))
                        )
                        if np.log(np.random.random()) < dlik + dprior + dprop:
                            accepted[0] += 1
                            feature_a[j, L] = col
                            threshold_a[j, L] = thr
                            lc = 2 * L
                            rc = lc + 1
                            feature_a[j, lc] = LEAF
                            feature_a[j, rc] = LEAF
                            mu_a[j, lc] = 0.0
                            mu_a[j, rc] = 0.0
                            sl = slot_of_leaf[j, L]
                            leaves[j, sl] = lc
                            slot_of_leaf[j, lc] = sl
                            leaves[j, n_leaves[j]] = rc
                            slot_of_leaf[j, rc] = n_leaves[j]
                            n_leaves[j] += 1
                            internal_l[j, n_internal[j]] = L
                            slot_of_int[j, L] = n_internal[j]
                            n_internal[j] += 1
                            for i in range(N):
                                if leaf_of_row[j, i] == L:
                                    if X[i, col] <= thr:
                                        leaf_of_row[j, i] = lc
                                    else:
                                        leaf_of_row[j, i] = rc

            elif move == 1:  # PRUNE
                c = 0
                for kk in range(n_leaves[j]):
                    v = leaves[j, kk]
                    if (v & 1) == 0 and feature_a[j, v + 1] == LEAF:
                        cand[c] = v >> 1
                        c += 1
                eta = cand[np.random.randint(0, c)]
                lc = 2 * eta
                rc = lc + 1
                swl = 0.0
                swrl = 0.0
                swrt = 0.0
                swrrt = 0.0
                for i in range(N):
                    lv = leaf_of_row[j, i]
                    if lv == lc:
                        swl += w[i]
                        swrl += w[i] * r[i]
                    elif lv == rc:
                        swrt += w[i]
                        swrrt += w[i] * r[i]
                dlik = (
                    _lm(swl + swrt, swrl + swrrt, sigma2, sigma_mu2)
                    - _lm(swl, swrl, sigma2, sigma_mu2)
                    - _lm(swrt, swrrt, sigma2, sigma_mu2)
                )
                d_e = _depth(eta)
                a_d = alpha / (1.0 + d_e) ** beta
                a_d1 = alpha / (2.0 + d_e) ** beta
                dprior = -(
                    np.log(a_d) + 2.0 * np.log(1.0 - a_d1) - np.log(1.0 - a_d)
                )
                nl_new = n_leaves[j] - 1
                p_grow_new = 1.0 if nl_new == 1 else 0.25
                dprop = (
                    np.log(p_grow_new)
                    - np.log(np.float64(nl_new))
                    - np.log(0.25)
                    + np.log(np.float64(c))
                )
                if np.log(np.random.random()) < dlik + dprior + dprop:
                    accepted[1] += 1
                    feature_a[j, eta] = LEAF
                    feature_a[j, lc] = ABSENT
                    feature_a[j, rc] = ABSENT
                    mu_a[j, eta] = 0.0
                    sa = slot_of_leaf[j, lc]
                    leaves[j, sa] = eta
                    slot_of_leaf[j, eta] = sa
                    sb = slot_of_leaf[j, rc]
                    last = n_leaves[j] - 1
                    if sb != last:
                        mvv = leaves[j, last]
                        leaves[j, sb] = mvv
                        slot_of_leaf[j, mvv] = sb
                    n_leaves[j] = last
                    si = slot_of_int[j, eta]
                    lasti = n_internal[j] - 1
                    if si != lasti:
                        mvi = internal_l[j, lasti]
                        internal_l[j, si] = mvi
                        slot_of_int[j, mvi] = si
                    n_internal[j] = lasti
                    for i in range(N):
                        lv = leaf_of_row[j, i]
                        if lv == lc or lv == rc:
                            leaf_of_row[j, i] = eta

            else:  # CHANGE
                eta = internal_l[j, np.random.randint(0, n_internal[j])]
                col = np.random.randint(0, p)
                cut = np.random.randint(0, n_cut)
                thr = cutpoints[col, cut]
                ns = 0
                sp = 1
                stack[0] = eta
                while sp > 0:
                    sp -= 1
                    v = stack[sp]
                    if feature_a[j, v] == LEAF:
                        subleaf[ns] = v
                        ns += 1
                    else:
                        stack[sp] = 2 * v
                        stack[sp + 1] = 2 * v + 1
                        sp += 2
                for kk in range(ns):
                    local_of[subleaf[kk]] = kk
                    old_w[kk] = 0.0
                    old_wr[kk] = 0.0
                    new_w[kk] = 0.0
                    new_wr[kk] = 0.0
                    new_n[kk] = 0
                n_aff = 0
                for i in range(N):
                    lv = leaf_of_row[j, i]
                    vv = lv
                    while vv > eta:
                        vv >>= 1
                    if vv == eta:
                        ko = local_of[lv]
                        old_w[ko] += w[i]
                        old_wr[ko] += w[i] * r[i]
                        if X[i, col] <= thr:
                            node = 2 * eta
                        else:
                            node = 2 * eta + 1
                        while feature_a[j, node] >= 0:
                            if X[i, feature_a[j, node]] <= threshold_a[j, node]:
                                node = 2 * node
                            else:
                                node = 2 * node + 1
                        kn = local_of[node]
                        new_w[kn] += w[i]
                        new_wr[kn] += w[i] * r[i]
                        new_n[kn] += 1
                        buf_row[n_aff] = i
                        buf_leaf[n_aff] = node
                        n_aff += 1
                ok = True
                for kk in range(ns):
                    if new_n[kk] == 0:
                        ok = False
                if ok:
                    dlik = 0.0
                    for kk in range(ns):
                        dlik += _lm(new_w[kk], new_wr[kk], sigma2, sigma_mu2) - _lm(
                            old_w[kk], old_wr[kk], sigma2, sigma_mu2
                        )
                    if np.log(np.random.random()) < dlik:
                        accepted[2] += 1
                        feature_a[j, eta] = col
                        threshold_a[j, eta] = thr
                        for t in range(n_aff):
                            leaf_of_row[j, buf_row[t]] = buf_leaf[t]

            # conjugate redraw of every leaf mean, then ensemble update
            nl = n_leaves[j]
            for kk in range(nl):
                acc_w[kk] = 0.0
                acc_wr[kk] = 0.0
            for i in range(N):
                s = slot_of_leaf[j, leaf_of_row[j, i]]
                acc_w[s] += w[i]
                acc_wr[s] += w[i] * r[i]
            for kk in range(nl):
                prec = acc_w[kk] / sigma2 + 1.0 / sigma_mu2
                mean = (acc_wr[kk] / sigma2) / prec
                mu_a[j, leaves[j, kk]] = mean + np.random.standard_normal() / np.sqrt(
                    prec
                )
            for i in range(N):
                g_total[i] += mu_a[j, leaf_of_row[j, i]] - f_old[i]

        if update_sigma:
            sse = 0.0
            for i in range(N):
                e = target[i] - g_total[i]
                sse += w[i] * e * e
            sigma2 = (nu * lam + sse) / np.random.chisquare(nu + N)

        if sweep >= burn_in:
            d = sweep - burn_in
            sigma2_draws[d] = sigma2
            for q in range(n_pred):
                s = 0.0
                for j in range(m):
                    node = 1
                    while feature_a[j, node] >= 0:
                        if Xpred[q, feature_a[j, node]] <= threshold_a[j, node]:
                            node = 2 * node
                        else:
                            node = 2 * node + 1
                    s += mu_a[j, node]
                if is_probit:
                    pred_draws[d, q] = _phi(s)
                else:
                    pred_draws[d, q] = s

    return (
        pred_draws,
        sigma2_draws,
        feature_a,
        threshold_a,
        mu_a,
        leaf_of_row,
        g_total,
        proposed,
        accepted,
    )
