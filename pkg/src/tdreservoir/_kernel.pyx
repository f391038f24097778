# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled micro-step loop.

Mirrors ``_kernel_py.run_steps`` operation for operation; build with
``-ffp-contract=off`` so no fused multiply-adds change the rounding.
"""

from cython.parallel cimport parallel, threadid
cimport openmp
from libc.stdint cimport int64_t, uint8_t
from libc.stdlib cimport malloc, free


cdef extern from *:
    """
    #include <sched.h>
    #ifdef __linux__
    #include <linux/futex.h>
    #include <sys/syscall.h>
    #include <unistd.h>
    #include <limits.h>
    #endif
    /* Sense-reversing barrier.  Waiters spin briefly, then sleep on a futex
       (Linux) or yield, so more workers than cores stays cheap. */
    typedef struct { int count; int sense; int n; } tdr_barrier;
    static void tdr_barrier_init(tdr_barrier* b, int n) { b->count = 0; b->sense = 0; b->n = n; }
    static void tdr_barrier_wait(tdr_barrier* b, int* local_sense) {
        int s = !*local_sense;
        int spin;
        *local_sense = s;
        if (__atomic_add_fetch(&b->count, 1, __ATOMIC_ACQ_REL) == b->n) {
            __atomic_store_n(&b->count, 0, __ATOMIC_RELAXED);
            __atomic_store_n(&b->sense, s, __ATOMIC_RELEASE);
    #ifdef __linux__
            syscall(SYS_futex, &b->sense, FUTEX_WAKE_PRIVATE, INT_MAX, NULL, NULL, 0);
    #endif
            return;
        }
        for (spin = 0; spin < 200; spin++) {
            if (__atomic_load_n(&b->sense, __ATOMIC_ACQUIRE) == s) return;
        }
        while (__atomic_load_n(&b->sense, __ATOMIC_ACQUIRE) != s) {
    #ifdef __linux__
            syscall(SYS_futex, &b->sense, FUTEX_WAIT_PRIVATE, !s, NULL, NULL, 0);
    #else
            sched_yield();
    #endif
        }
    }
    static void tdr_omp_barrier(void) {
        _Pragma("omp barrier")
    }
    """
    ctypedef struct tdr_barrier:
        int n
    void tdr_barrier_init(tdr_barrier* b, int n) nogil
    void tdr_barrier_wait(tdr_barrier* b, int* local_sense) nogil
    void tdr_omp_barrier() nogil

import numpy as np


ctypedef struct Net:
    double* v
    int64_t* ph_p
    int64_t* ph_n
    int64_t* cint_p
    int64_t* cext_p
    int64_t* cint_n
    int64_t* cext_n
    double* leak_tab
    double* fpos_tab
    double* fneg_tab
    double* integ_tab
    double* leak_s
    double* integ_s
    double* fire_s
    int64_t* nbr
    int64_t* nbr_row
    int64_t* chan
    int64_t input_row
    int64_t n_pts
    int64_t one
    int64_t max_inc
    double inc_per_hz
    bint single


cdef inline double _lookup(const double* tab, int64_t k, double t) noexcept nogil:
    cdef double a = tab[k]
    return a + t * (tab[k + 1] - a)


cdef void _step_range(const Net* net, Py_ssize_t lo, Py_ssize_t hi, const uint8_t* prev,
                      uint8_t* cur, const uint8_t* e_in) noexcept nogil:
    # Absent neighbor slots point at index N of the edge buffers, which never
    # fires.  Phase wrap and counter latch are written branch-free.
    cdef double* v = net.v
    cdef int64_t* ph_p = net.ph_p
    cdef int64_t* ph_n = net.ph_n
    cdef int64_t* cint_p = net.cint_p
    cdef int64_t* cext_p = net.cext_p
    cdef int64_t* cint_n = net.cint_n
    cdef int64_t* cext_n = net.cext_n
    cdef const double* leak_tab = net.leak_tab
    cdef const double* fpos_tab = net.fpos_tab
    cdef const double* fneg_tab = net.fneg_tab
    cdef const double* integ_tab = net.integ_tab
    cdef const double* in_tab = net.integ_tab + net.input_row * net.n_pts
    cdef const double* leak_s = net.leak_s
    cdef const double* integ_s = net.integ_s
    cdef const double* fire_s = net.fire_s
    cdef const int64_t* nbr = net.nbr
    cdef const int64_t* nbr_row = net.nbr_row
    cdef const int64_t* chan = net.chan
    cdef int64_t n_pts = net.n_pts
    cdef int64_t last = n_pts - 1
    cdef double dlast = <double>last
    cdef int64_t one = net.one
    cdef int64_t max_inc = net.max_inc
    cdef double inc_per_hz = net.inc_per_hz
    cdef bint single = net.single

    cdef Py_ssize_t i
    cdef double v0, x, t, v1, f, g, fs
    cdef int64_t k, s, inc, p, n, c, ep, en

    for i in range(lo, hi):
        v0 = v[i]
        x = v0 * dlast
        k = <int64_t>x
        k = last - 1 if k > last - 1 else k
        t = x - <double>k
        g = integ_s[i]

        # integration (neighbors, then input), leakage, clamp; all at the old v
        v1 = v0
        for s in range(4):
            if prev[nbr[4 * i + s]]:
                v1 = v1 + g * _lookup(integ_tab + nbr_row[4 * i + s] * n_pts, k, t)
        if e_in[chan[i]]:
            v1 = v1 + g * _lookup(in_tab, k, t)
        v1 = v1 + leak_s[i] * _lookup(leak_tab, k, t)
        v1 = 0.0 if v1 < 0.0 else v1
        v1 = 1.0 if v1 > 1.0 else v1
        v[i] = v1

        # fire
        x = v1 * dlast
        k = <int64_t>x
        k = last - 1 if k > last - 1 else k
        t = x - <double>k
        fs = fire_s[i]

        f = fs * _lookup(fpos_tab, k, t)
        inc = <int64_t>(f * inc_per_hz + 0.5)
        inc = max_inc if inc > max_inc else inc
        p = ph_p[i] + inc
        ep = p >= one
        ph_p[i] = p - ep * one
        cur[i] = <uint8_t>ep

        f = fs * _lookup(fneg_tab, k, t)
        inc = <int64_t>(f * inc_per_hz + 0.5)
        inc = max_inc if inc > max_inc else inc
        n = ph_n[i] + inc
        en = n >= one
        ph_n[i] = n - en * one

        # counters
        c = cint_p[i] + 1
        cext_p[i] = c if ep else cext_p[i]
        cint_p[i] = 0 if ep else c
        if not single:
            c = cint_n[i] + 1
            cext_n[i] = c if en else cext_n[i]
            cint_n[i] = 0 if en else c


cdef void _input_edges(const Net* net, Py_ssize_t C, int64_t n_micro, const int64_t* inc,
                       int64_t* in_phase, uint8_t* e_in) noexcept nogil:
    # input pulse trains for a whole input step
    cdef Py_ssize_t m, c
    cdef uint8_t* e_row
    for m in range(n_micro):
        e_row = e_in + m * C
        for c in range(C):
            in_phase[c] += inc[c]
            if in_phase[c] >= net.one:
                in_phase[c] -= net.one
                e_row[c] = 1
            else:
                e_row[c] = 0


cdef int64_t _sample(const Net* net, Py_ssize_t N, int64_t* out) noexcept nogil:
    cdef Py_ssize_t i
    cdef int64_t maxc = 0
    for i in range(N):
        if net.single:
            out[i] = -net.cext_p[i]
        else:
            out[i] = net.cext_n[i] - net.cext_p[i]
        if net.cint_p[i] > maxc:
            maxc = net.cint_p[i]
        if net.cint_n[i] > maxc:
            maxc = net.cint_n[i]
    return maxc


cdef int64_t _run_parallel(const Net* net, Py_ssize_t N, Py_ssize_t C, Py_ssize_t T, int64_t n_micro,
                           int64_t step0, const int64_t* inc_in, int64_t* in_phase, uint8_t* edges,
                           Py_ssize_t stride, uint8_t* e_in, int64_t* out, int nthreads) noexcept nogil:
    # One parallel region for the whole run; neurons are split into contiguous
    # blocks, one per thread, and threads meet at a barrier after each
    # micro-step.  Input edges and samples are produced by thread 0.
    cdef tdr_barrier bar
    cdef int64_t maxc[1]
    cdef int64_t c, gstep
    cdef int tid, nt, sense
    cdef Py_ssize_t tt, m, lo, hi, blk
    cdef uint8_t* cur
    cdef uint8_t* prev
    maxc[0] = 0
    with parallel(num_threads=nthreads):
        tid = threadid()
        nt = openmp.omp_get_num_threads()
        sense = 0
        if tid == 0:
            tdr_barrier_init(&bar, nt)
        tdr_omp_barrier()
        blk = (N + nt - 1) // nt
        lo = tid * blk
        hi = lo + blk
        if hi > N:
            hi = N
        if lo > N:
            lo = N
        for tt in range(T):
            if tid == 0:
                _input_edges(net, C, n_micro, inc_in + tt * C, in_phase, e_in)
            tdr_barrier_wait(&bar, &sense)
            for m in range(n_micro):
                gstep = step0 + tt * n_micro + m
                cur = edges + (gstep & 1) * stride
                prev = edges + ((gstep & 1) ^ 1) * stride
                _step_range(net, lo, hi, prev, cur, e_in + m * C)
                tdr_barrier_wait(&bar, &sense)
            if tid == 0:
                c = _sample(net, N, out + tt * N)
                if c > maxc[0]:
                    maxc[0] = c
    return maxc[0]


def run_steps(double[::1] v, int64_t[::1] ph_p, int64_t[::1] ph_n,
              int64_t[::1] cint_p, int64_t[::1] cext_p,
              int64_t[::1] cint_n, int64_t[::1] cext_n,
              uint8_t[:, ::1] edges, int64_t[::1] in_phase,
              double[::1] leak_tab, double[::1] fpos_tab, double[::1] fneg_tab,
              double[:, ::1] integ_tab,
              double[::1] leak_s, double[::1] integ_s, double[::1] fire_s,
              int64_t[:, ::1] nbr, int64_t[:, ::1] nbr_row, int64_t[::1] chan,
              int64_t input_row, int64_t[:, ::1] inc_in, int64_t n_micro,
              int64_t step0, int64_t one, double inc_per_hz, bint single,
              int workers, int64_t[:, ::1] out):
    """Run ``inc_in.shape[0]`` input steps of ``n_micro`` micro-steps each.

    Mutates the state arrays in place, writes one sample row per input step
    into ``out`` and returns the largest running count seen (stall check).
    """
    cdef Py_ssize_t N = v.shape[0]
    cdef Py_ssize_t C = in_phase.shape[0]
    cdef Py_ssize_t T = inc_in.shape[0]
    cdef Py_ssize_t tt, m
    cdef Py_ssize_t nblk = workers if 1 < workers < N else (N if workers >= N else 1)
    cdef int64_t gstep, c, maxc = 0
    cdef uint8_t* prev
    cdef uint8_t* cur
    cdef uint8_t* e_in
    cdef Net net

    if N == 0 or T == 0:
        return 0
    net.v = &v[0]
    net.ph_p = &ph_p[0]
    net.ph_n = &ph_n[0]
    net.cint_p = &cint_p[0]
    net.cext_p = &cext_p[0]
    net.cint_n = &cint_n[0]
    net.cext_n = &cext_n[0]
    net.leak_tab = &leak_tab[0]
    net.fpos_tab = &fpos_tab[0]
    net.fneg_tab = &fneg_tab[0]
    net.integ_tab = &integ_tab[0, 0]
    net.leak_s = &leak_s[0]
    net.integ_s = &integ_s[0]
    net.fire_s = &fire_s[0]
    net.nbr = &nbr[0, 0]
    net.nbr_row = &nbr_row[0, 0]
    net.chan = &chan[0]
    net.input_row = input_row
    net.n_pts = leak_tab.shape[0]
    net.one = one
    net.max_inc = one - 1
    net.inc_per_hz = inc_per_hz
    net.single = single

    e_in = <uint8_t*>malloc(n_micro * C)
    if e_in == NULL:
        raise MemoryError()
    try:
        with nogil:
            if nblk > 1:
                maxc = _run_parallel(&net, N, C, T, n_micro, step0, &inc_in[0, 0], &in_phase[0],
                                     &edges[0, 0], edges.shape[1], e_in, &out[0, 0], <int>nblk)
            else:
                for tt in range(T):
                    _input_edges(&net, C, n_micro, &inc_in[tt, 0], &in_phase[0], e_in)
                    for m in range(n_micro):
                        gstep = step0 + tt * n_micro + m
                        cur = &edges[gstep & 1, 0]
                        prev = &edges[(gstep & 1) ^ 1, 0]
                        _step_range(&net, 0, N, prev, cur, e_in + m * C)
                    c = _sample(&net, N, &out[tt, 0])
                    maxc = c if c > maxc else maxc
    finally:
        free(e_in)
    return maxc
