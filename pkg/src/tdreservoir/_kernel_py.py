"""Pure-numpy micro-step loop, vectorized over neurons.

Same signature and the same floating-point operation order as the compiled
``_kernel.run_steps``; used when the extension is not built or when
``TDRESERVOIR_BACKEND=python``.  ``workers`` is accepted and ignored.
"""

from __future__ import annotations

import numpy as np

from .counter import counter_step_array


def _lookup(tab, k, t):
    a = tab[..., k]
    return a + t * (tab[..., k + 1] - a)


def _index(v, last):
    x = v * float(last)
    k = np.minimum(x.astype(np.int64), last - 1)
    return k, x - k


def run_steps(v, ph_p, ph_n, cint_p, cext_p, cint_n, cext_n, edges, in_phase,
              leak_tab, fpos_tab, fneg_tab, integ_tab, leak_s, integ_s, fire_s,
              nbr, nbr_row, chan, input_row, inc_in, n_micro, step0, one,
              inc_per_hz, single, workers, out):
    N = v.shape[0]
    T = inc_in.shape[0]
    if N == 0 or T == 0:
        return 0
    last = leak_tab.shape[0] - 1
    max_inc = one - 1
    rows = nbr_row
    maxc = 0

    for tt in range(T):
        inc = inc_in[tt]
        for m in range(n_micro):
            in_phase += inc
            e_in = in_phase >= one
            in_phase[e_in] -= one

            g = step0 + tt * n_micro + m
            cur = edges[g & 1]
            prev = edges[(g & 1) ^ 1]

            k, t = _index(v, last)
            v1 = v.copy()
            for s in range(4):
                fired = prev[nbr[:, s]] != 0
                if fired.any():
                    r = rows[:, s]
                    a = integ_tab[r, k]
                    d = integ_s * (a + t * (integ_tab[r, k + 1] - a))
                    v1 = np.where(fired, v1 + d, v1)
            if e_in.size:
                hit = e_in[chan]
                if hit.any():
                    d = integ_s * _lookup(integ_tab[input_row], k, t)
                    v1 = np.where(hit, v1 + d, v1)
            v1 = v1 + leak_s * _lookup(leak_tab, k, t)
            np.clip(v1, 0.0, 1.0, out=v1)
            v[:] = v1

            k, t = _index(v, last)
            f = fire_s * _lookup(fpos_tab, k, t)
            i_p = np.minimum(np.floor(f * inc_per_hz + 0.5).astype(np.int64), max_inc)
            f = fire_s * _lookup(fneg_tab, k, t)
            i_n = np.minimum(np.floor(f * inc_per_hz + 0.5).astype(np.int64), max_inc)
            ph_p += i_p
            ep = ph_p >= one
            ph_p[ep] -= one
            ph_n += i_n
            en = ph_n >= one
            ph_n[en] -= one
            cur[:N] = ep

            counter_step_array(cint_p, cext_p, ep)
            if not single:
                counter_step_array(cint_n, cext_n, en)

        out[tt] = -cext_p if single else cext_n - cext_p
        maxc = max(maxc, int(cint_p.max()), int(cint_n.max()))
    return maxc

