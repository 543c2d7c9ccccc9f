"""Compiled inner loops for line placement and batched state updates.

The dynamic program places a chain of ``Vn`` line nodes onto an ``N``-node
physical tree.  A cell (v1, n) holds the best objective over placements of
nodes 1..v1 with v1 hosted on n.  Each cell minimizes over the start ``vs``
of the co-located run ending at v1 and over the predecessor host ``m`` of
node vs-1; order preservation restricts m to proper ancestors of n, which
lets the min over m be computed in one sweep down the tree (``D`` below)
instead of a quadratic scan.

Everything carries a leading batch axis ``B`` so that candidate enumeration
for unplaced junction nodes runs as parallel lanes of one kernel call.

Two objective forms share the loop:
  form 0 (MAX):  cell = max(predecessor, node term, run extras), where the
                 node term is max_k (node_a + run load) over loaded resources
                 and connecting-edge costs aggregate by max along the path.
  form 1 (SUM):  cell = predecessor + node term + run extras, node term is
                 sum_k node_a * (expm1(cexp * load)) -- the exponential
                 difference objective -- and path costs aggregate by sum.

Cost conventions: +inf marks forbidden choices; entries of ``eself`` and the
pin/allowed masks inject +inf into a run.  Guards keep inf*0 from producing
NaN.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

F64 = np.float64
I32 = np.int32

INF = math.inf


@njit(cache=True)
def line_dp(form, parent, d, node_a, cexp, econn, eself, pin, allowed,
            J, bp_vs, bp_m):
    """Fill the DP tables for every lane.

    Shapes (B lanes, Vn line nodes, N physical nodes, K resources):
      parent  (N+1,) int32     physical parent indices, parent[1] = 0
      d       (Vn+1, N+1, K)   raw node costs per line node
      node_a  (B, N+1, K)      MAX: additive base; SUM: scale alpha^(load/J)
      cexp    float            SUM only: ln(alpha) / J_hat
      econn   (B, Vn+1, N+1)   transformed cost of line edge j on the link
                               whose child is n
      eself   (Vn+1, N+1)      run extra when edge j is co-located on n
      pin     (B, Vn+1) int32  forced host per line node, 0 = free
      allowed (Vn+1, N+1) bool candidate mask per line node
      J       (B, Vn+1, N+1)   out: optimal conditional costs
      bp_vs   (B, Vn+1, N+1)   out: chosen run start
      bp_m    (B, Vn+1, N+1)   out: chosen predecessor host (0 when vs == 1)

    Ties prefer the smallest run start vs, then the predecessor produced by
    the ancestor sweep (which keeps the deepest strictly-improving ancestor).
    """
    B = node_a.shape[0]
    Vn = d.shape[0] - 1
    N = parent.shape[0] - 1
    K = d.shape[2]

    for b in range(B):
        runsum = np.zeros((N + 1, K), dtype=F64)
        runextra = np.zeros(N + 1, dtype=F64)
        best = np.empty(N + 1, dtype=F64)
        bvs = np.zeros(N + 1, dtype=I32)
        bm = np.zeros(N + 1, dtype=I32)
        D = np.empty(N + 1, dtype=F64)
        Dm = np.zeros(N + 1, dtype=I32)

        for v1 in range(1, Vn + 1):
            for n in range(N + 1):
                best[n] = INF
                bvs[n] = 0
                bm[n] = 0
                runextra[n] = 0.0
                for k in range(K):
                    runsum[n, k] = 0.0

            for vs in range(v1, 0, -1):
                # Extend the co-located run with node vs.
                for n in range(1, N + 1):
                    for k in range(K):
                        runsum[n, k] += d[vs, n, k]
                pv = pin[b, vs]
                if pv != 0:
                    for n in range(1, N + 1):
                        if n != pv:
                            runextra[n] = INF
                for n in range(1, N + 1):
                    if not allowed[vs, n]:
                        runextra[n] = INF
                if vs < v1:
                    # Edge (vs, vs+1) is now interior to the run.
                    if form == 0:
                        for n in range(1, N + 1):
                            s = eself[vs + 1, n]
                            if s > runextra[n]:
                                runextra[n] = s
                    else:
                        for n in range(1, N + 1):
                            runextra[n] += eself[vs + 1, n]

                # Best predecessor value for each target host n:
                # D[n] = min over proper ancestors m of
                #        combine(J[vs-1, m], path cost m -> n).
                if vs > 1:
                    D[1] = INF
                    Dm[1] = 0
                    for n in range(2, N + 1):
                        p = parent[n]
                        e = econn[b, vs, n]
                        if form == 0:
                            va = J[b, vs - 1, p]
                            if e > va:
                                va = e
                            vb = D[p]
                            if e > vb:
                                vb = e
                        else:
                            va = J[b, vs - 1, p] + e
                            vb = D[p] + e
                        if vb <= va:
                            D[n] = vb
                            Dm[n] = Dm[p]
                        else:
                            D[n] = va
                            Dm[n] = p

                for n in range(1, N + 1):
                    if form == 0:
                        nt = 0.0
                        for k in range(K):
                            x = runsum[n, k]
                            if x > 0.0:
                                t = node_a[b, n, k] + x
                                if t > nt:
                                    nt = t
                        cand = nt
                        if runextra[n] > cand:
                            cand = runextra[n]
                        if vs > 1:
                            if D[n] > cand:
                                cand = D[n]
                    else:
                        nt = 0.0
                        for k in range(K):
                            x = runsum[n, k]
                            if x > 0.0:
                                nt += node_a[b, n, k] * math.expm1(cexp * x)
                        cand = nt + runextra[n]
                        if vs > 1:
                            cand = cand + D[n]
                    if cand <= best[n]:
                        best[n] = cand
                        bvs[n] = vs
                        bm[n] = Dm[n] if vs > 1 else 0

            for n in range(1, N + 1):
                J[b, v1, n] = best[n]
                bp_vs[b, v1, n] = bvs[n]
                bp_m[b, v1, n] = bm[n]


@njit(cache=True)
def final_column(J, pin, out_col, out_val):
    """Pick the cheapest host for the last line node per lane.

    A pinned last node forces its column; otherwise ties go to the smallest
    physical index.
    """
    B = J.shape[0]
    Vn = J.shape[1] - 1
    N = J.shape[2] - 1
    for b in range(B):
        pv = pin[b, Vn]
        if pv != 0:
            out_col[b] = pv
            out_val[b] = J[b, Vn, pv]
        else:
            bestn = 1
            bestv = J[b, Vn, 1]
            for n in range(2, N + 1):
                if J[b, Vn, n] < bestv:
                    bestv = J[b, Vn, n]
                    bestn = n
            out_col[b] = bestn
            out_val[b] = bestv


@njit(cache=True)
def backtrack(bp_vs, bp_m, col, assign):
    """Recover the line-node hosts from the backpointer tables, per lane."""
    B = bp_vs.shape[0]
    Vn = bp_vs.shape[1] - 1
    for b in range(B):
        v1 = Vn
        n = col[b]
        while v1 >= 1:
            vs = bp_vs[b, v1, n]
            m = bp_m[b, v1, n]
            for v in range(vs, v1 + 1):
                assign[b, v] = n
            v1 = vs - 1
            n = m


@njit(cache=True)
def accumulate_lines(parent, depth, assign, d, braw, p, q):
    """Add one placed line's raw costs into per-lane state arrays.

    assign (B, Vn+1) hosts per line node; d and braw are the raw per-line
    cost tables.  Node costs land on p[b, host, k]; each line edge adds its
    per-link cost along the physical path between consecutive hosts
    (co-located edges touch no link).
    """
    B = assign.shape[0]
    Vn = assign.shape[1] - 1
    K = d.shape[2]
    for b in range(B):
        for v in range(1, Vn + 1):
            n = assign[b, v]
            for k in range(K):
                p[b, n, k] += d[v, n, k]
        for v in range(2, Vn + 1):
            a = assign[b, v - 1]
            c = assign[b, v]
            while a != c:
                if depth[a] >= depth[c]:
                    q[b, a] += braw[v, a]
                    a = parent[a]
                else:
                    q[b, c] += braw[v, c]
                    c = parent[c]


@njit(cache=True)
def accumulate_edge(parent, depth, a_arr, b_arr, cost_row, self_row, q, bad):
    """Route one application edge per lane and add its per-link costs.

    cost_row[c] is the edge's cost on the link with child c; self_row[n] its
    dummy self-link cost.  Lanes whose route hits an infinite entry (or whose
    co-location is forbidden) are flagged in ``bad``.
    """
    B = a_arr.shape[0]
    for b in range(B):
        a = a_arr[b]
        c = b_arr[b]
        if a == c:
            if math.isinf(self_row[a]):
                bad[b] = True
            continue
        while a != c:
            if depth[a] >= depth[c]:
                cost = cost_row[a]
                if math.isinf(cost):
                    bad[b] = True
                q[b, a] += cost
                a = parent[a]
            else:
                cost = cost_row[c]
                if math.isinf(cost):
                    bad[b] = True
                q[b, c] += cost
                c = parent[c]


@njit(cache=True)
def exp_diff_total(p_after, q_after, p_before, q_before, c, out):
    """Sum of exponential differences over all elements, per lane.

    out[b] = sum_r exp(c * before_r) * expm1(c * (after_r - before_r)).
    Elements the lane did not touch contribute exactly zero.  The before
    arrays carry the same batch axis (callers expand their entry snapshot).
    """
    B = p_after.shape[0]
    N = p_after.shape[1] - 1
    K = p_after.shape[2]
    for b in range(B):
        total = 0.0
        for n in range(1, N + 1):
            for k in range(K):
                w = p_after[b, n, k] - p_before[b, n, k]
                if w > 0.0:
                    total += math.exp(c * p_before[b, n, k]) * math.expm1(c * w)
            w = q_after[b, n] - q_before[b, n]
            if w > 0.0:
                total += math.exp(c * q_before[b, n]) * math.expm1(c * w)
        out[b] = total


@njit(cache=True)
def state_max(p, q, out):
    """Largest entry over all node-resource pairs and links, per lane."""
    B = p.shape[0]
    N = p.shape[1] - 1
    K = p.shape[2]
    for b in range(B):
        worst = 0.0
        for n in range(1, N + 1):
            for k in range(K):
                if p[b, n, k] > worst:
                    worst = p[b, n, k]
            if n >= 2 and q[b, n] > worst:
                worst = q[b, n]
        out[b] = worst
