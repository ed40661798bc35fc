"""Compiled inner loops for chain simulation and mixing-gap search.

Everything here works on plain integer/float arrays so that numba can compile
it in nopython mode. The Python-facing wrappers live in ``engine`` and
``graph``.
"""

import numpy as np
from numba import njit

NEITHER, IN_S, IN_U = 0, 1, 2


@njit(cache=True, nogil=True)
def sample_row(cum, u):
    # smallest j with u < cum[j]; cum[-1] is forced to 1.0 upstream
    k = cum.shape[0]
    j = 0
    while j < k - 1 and u >= cum[j]:
        j += 1
    return j


@njit(cache=True, nogil=True)
def apply_change(w, new, states, type_counts, boundary_counts,
                 out_ptr, out_idx, in_ptr, in_idx, complete, track_boundary):
    old = states[w]
    type_counts[old] -= 1
    type_counts[new] += 1
    states[w] = new
    if not track_boundary:
        return
    if complete:
        k = type_counts.shape[0]
        for i in range(k):
            for j in range(k):
                boundary_counts[i, j] = type_counts[i] * type_counts[j]
            boundary_counts[i, i] -= type_counts[i]
        return
    for p in range(out_ptr[w], out_ptr[w + 1]):
        s = states[out_idx[p]]
        boundary_counts[old, s] -= 1
        boundary_counts[new, s] += 1
    for p in range(in_ptr[w], in_ptr[w + 1]):
        s = states[in_idx[p]]
        boundary_counts[s, old] -= 1
        boundary_counts[s, new] += 1


@njit(cache=True, nogil=True)
def step_once(u0, u1, u2, rho, n, tails, heads, cum_p, cum_phi, states):
    """Return (node, new_state) for one activation; randomness order is fixed."""
    if u0 < rho:
        m = tails.shape[0]
        e = int(u1 * m)
        if e >= m:
            e = m - 1
        w = tails[e]
        new = sample_row(cum_phi[states[heads[e]], states[w]], u2)
    else:
        w = int(u1 * n)
        if w >= n:
            w = n - 1
        new = sample_row(cum_p[states[w]], u2)
    return w, new


@njit(cache=True, nogil=True)
def advance(uniforms, t0, burn_in, thinning, rho, tails, heads, cum_p, cum_phi,
            states, type_counts, boundary_counts, out_ptr, out_idx, in_ptr, in_idx,
            complete, track_boundary, rec_types, rec_boundary, rec_pos):
    """Run ``len(uniforms)`` activations and record every ``thinning``-th one
    after ``burn_in``. Returns the updated record position."""
    n = states.shape[0]
    n_rec = rec_types.shape[0]
    for r in range(uniforms.shape[0]):
        w, new = step_once(uniforms[r, 0], uniforms[r, 1], uniforms[r, 2], rho, n,
                           tails, heads, cum_p, cum_phi, states)
        if new != states[w]:
            apply_change(w, new, states, type_counts, boundary_counts,
                         out_ptr, out_idx, in_ptr, in_idx, complete, track_boundary)
        t = t0 + r + 1
        if t > burn_in and (t - burn_in) % thinning == 0 and rec_pos < n_rec:
            rec_types[rec_pos, :] = type_counts
            if rec_boundary.shape[0] > 0:
                rec_boundary[rec_pos, :, :] = boundary_counts
            rec_pos += 1
    return rec_pos


# --- mixing gap -------------------------------------------------------------

@njit(cache=True, nogil=True)
def _gap_numerator(e_su, s, u, n, m):
    return abs(e_su * n * (n - 1) - s * u * m)


@njit(cache=True, nogil=True)
def _count_out_in_u(w, labels, out_ptr, out_idx):
    c = 0
    for p in range(out_ptr[w], out_ptr[w + 1]):
        if labels[out_idx[p]] == IN_U:
            c += 1
    return c


@njit(cache=True, nogil=True)
def _count_in_from_s(w, labels, in_ptr, in_idx):
    c = 0
    for p in range(in_ptr[w], in_ptr[w + 1]):
        if labels[in_idx[p]] == IN_S:
            c += 1
    return c


@njit(cache=True, nogil=True)
def exact_gap_search(n, m, out_ptr, out_idx, in_ptr, in_idx):
    """Visit all 3**n labelings in reflected ternary Gray order.

    Returns the best integer numerator |E_SU n(n-1) - |S||U| m| and the
    labeling attaining it.
    """
    labels = np.zeros(n, dtype=np.int64)
    direction = np.ones(n, dtype=np.int64)
    best_labels = labels.copy()
    best = 0
    e_su = 0
    s = 0
    u = 0
    total = 1
    for _ in range(n):
        total *= 3
    for k in range(1, total):
        i = 0
        q = k
        while q % 3 == 0:
            q //= 3
            i += 1
        old = labels[i]
        new = old + direction[i]
        if old == IN_S:
            e_su -= _count_out_in_u(i, labels, out_ptr, out_idx)
            s -= 1
        elif old == IN_U:
            e_su -= _count_in_from_s(i, labels, in_ptr, in_idx)
            u -= 1
        labels[i] = new
        if new == IN_S:
            e_su += _count_out_in_u(i, labels, out_ptr, out_idx)
            s += 1
        elif new == IN_U:
            e_su += _count_in_from_s(i, labels, in_ptr, in_idx)
            u += 1
        if new == 0 or new == 2:
            direction[i] = -direction[i]
        val = _gap_numerator(e_su, s, u, n, m)
        if val > best:
            best = val
            best_labels[:] = labels
    return best, best_labels


@njit(cache=True, nogil=True)
def local_gap_search(labels, n, m, out_ptr, out_idx, in_ptr, in_idx):
    """First-improvement hill climbing from ``labels`` (modified in place)."""
    out_to_u = np.zeros(n, dtype=np.int64)
    in_from_s = np.zeros(n, dtype=np.int64)
    s = 0
    u = 0
    e_su = 0
    for w in range(n):
        out_to_u[w] = _count_out_in_u(w, labels, out_ptr, out_idx)
        in_from_s[w] = _count_in_from_s(w, labels, in_ptr, in_idx)
        if labels[w] == IN_S:
            s += 1
            e_su += out_to_u[w]
        elif labels[w] == IN_U:
            u += 1
    current = _gap_numerator(e_su, s, u, n, m)
    improved = True
    while improved:
        improved = False
        for w in range(n):
            a = labels[w]
            for b in range(3):
                if b == a:
                    continue
                de = 0
                ns = s
                nu = u
                if a == IN_S:
                    de -= out_to_u[w]
                    ns -= 1
                elif a == IN_U:
                    de -= in_from_s[w]
                    nu -= 1
                if b == IN_S:
                    de += out_to_u[w]
                    ns += 1
                elif b == IN_U:
                    de += in_from_s[w]
                    nu += 1
                cand = _gap_numerator(e_su + de, ns, nu, n, m)
                if cand > current:
                    # commit the move and refresh neighbor counters
                    if a == IN_U:
                        for p in range(in_ptr[w], in_ptr[w + 1]):
                            out_to_u[in_idx[p]] -= 1
                    elif a == IN_S:
                        for p in range(out_ptr[w], out_ptr[w + 1]):
                            in_from_s[out_idx[p]] -= 1
                    if b == IN_U:
                        for p in range(in_ptr[w], in_ptr[w + 1]):
                            out_to_u[in_idx[p]] += 1
                    elif b == IN_S:
                        for p in range(out_ptr[w], out_ptr[w + 1]):
                            in_from_s[out_idx[p]] += 1
                    labels[w] = b
                    e_su += de
                    s = ns
                    u = nu
                    current = cand
                    improved = True
                    break
    return current
