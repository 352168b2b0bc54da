# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot-loop kernels.

Kept in lockstep with ``_kernels_py.py``: same uniform-stream consumption and
the same arithmetic order, so both backends produce bitwise-identical results.
"""


from libc.stdint cimport int64_t


cdef inline double _sample_reward(double mean, int noise_kind,
                                  double noise_param, double u) nogil:
    cdef double r
    if noise_kind == 1:  # uniform_clipped
        r = mean + (2.0 * u - 1.0) * noise_param
    elif noise_kind == 2:  # bernoulli_symmetric
        r = mean + (noise_param if u < 0.5 else -noise_param)
    else:
        r = mean
    if r > 1.0:
        r = 1.0
    if r < -1.0:
        r = -1.0
    return r


cdef inline int _cdf_pick(const double[:, :, ::1] P, int s, int a,
                          double u, int n_states) nogil:
    cdef double acc = 0.0
    cdef int j
    for j in range(n_states):
        acc += P[s, a, j]
        if u < acc:
            return j
    return n_states - 1


cdef inline int _argmax_component(const double[:, :, ::1] w, int z, int s,
                                  int n_actions, double* max_out) nogil:
    cdef double best = w[z, s, 0]
    cdef int arg = 0
    cdef int a
    cdef double v
    for a in range(1, n_actions):
        v = w[z, s, a]
        if v > best:
            best = v
            arg = a
    max_out[0] = best
    return arg


cdef inline int _max_partial_sum(const double[:, :, ::1] w, int z_top, int s,
                                 int n_actions, double* max_out) nogil:
    cdef double best = 0.0
    cdef int z, a, arg = 0
    cdef double v
    for z in range(z_top + 1):
        best += w[z, s, 0]
    for a in range(1, n_actions):
        v = 0.0
        for z in range(z_top + 1):
            v += w[z, s, a]
        if v > best:
            best = v
            arg = a
    max_out[0] = best
    return arg


cdef void _targets(const double[:, :, ::1] w, const double[:, ::1] pow_table,
                   const int64_t[::1] ks, const int64_t[::1] st,
                   const int64_t[::1] at, const double[::1] rt,
                   const int64_t[::1] nst, const unsigned char[::1] terminal,
                   int u, int length, bint multi_step, bint aggregate_mode,
                   int n_scales, int n_actions, double[::1] out) nogil:
    cdef int z, kz, avail, k_eff, j, zz, sb
    cdef bint sb_terminal
    cdef double acc, m0, m_prev, mz
    for z in range(n_scales):
        kz = <int>ks[z] if multi_step else 1
        avail = length - u
        k_eff = kz if kz < avail else avail
        sb = <int>nst[u + k_eff - 1]
        sb_terminal = terminal[sb] != 0
        if z == 0:
            acc = 0.0
            for j in range(k_eff):
                acc += pow_table[0, j] * rt[u + j]
            if not sb_terminal:
                _argmax_component(w, 0, sb, n_actions, &m0)
                acc += pow_table[0, k_eff] * m0
            out[0] = acc
        else:
            acc = 0.0
            for j in range(1, k_eff):
                acc += (pow_table[z, j] - pow_table[z - 1, j]) * rt[u + j]
            if not sb_terminal:
                if aggregate_mode:
                    _max_partial_sum(w, z - 1, sb, n_actions, &m_prev)
                else:
                    m_prev = 0.0
                    for zz in range(z):
                        _argmax_component(w, zz, sb, n_actions, &mz)
                        m_prev += mz
                acc += (pow_table[z, k_eff] - pow_table[z - 1, k_eff]) * m_prev
                _argmax_component(w, z, sb, n_actions, &mz)
                acc += pow_table[z, k_eff] * mz
            out[z] = acc


def run_qdelta_kernel(const double[:, :, ::1] P, const double[:, ::1] r_mean,
                      int noise_kind, double noise_param,
                      const unsigned char[::1] terminal,
                      const int64_t[::1] ks, const double[::1] alphas,
                      const double[:, ::1] pow_table,
                      const double[::1] eps_by_step,
                      const double[:, ::1] uniforms,
                      double[:, :, ::1] w,
                      int episodes, int steps_per_episode, int start_state,
                      bint multi_step, bint aggregate_mode,
                      bint has_oracle, const double[:, ::1] oracle,
                      double[::1] ep_return, double[::1] ep_sup_err,
                      int64_t[::1] st, int64_t[::1] at, double[::1] rt,
                      int64_t[::1] nst, double[::1] targets):
    cdef int n_scales = w.shape[0]
    cdef int n_states = w.shape[1]
    cdef int n_actions = w.shape[2]
    cdef int k_max = 1
    cdef int z, ep, s, a, ns, su, au, s2, a2
    cdef int length, next_update, step, row = 0
    cdef double eps, u0, u1, u2, u3, r, ret, err, v, d, m
    if multi_step:
        for z in range(n_scales):
            if <int>ks[z] > k_max:
                k_max = <int>ks[z]
    for ep in range(episodes):
        s = start_state
        length = 0
        next_update = 0
        ret = 0.0
        for step in range(steps_per_episode):
            if terminal[s]:
                break
            eps = eps_by_step[row]
            u0 = uniforms[row, 0]
            u1 = uniforms[row, 1]
            u2 = uniforms[row, 2]
            u3 = uniforms[row, 3]
            row += 1
            if u0 < eps:
                a = <int>(u1 * n_actions)
                if a >= n_actions:
                    a = n_actions - 1
            else:
                a = _max_partial_sum(w, n_scales - 1, s, n_actions, &m)
            ns = _cdf_pick(P, s, a, u2, n_states)
            r = _sample_reward(r_mean[s, a], noise_kind, noise_param, u3)
            st[length] = s
            at[length] = a
            rt[length] = r
            nst[length] = ns
            length += 1
            ret += r
            if multi_step:
                while next_update + k_max <= length:
                    _targets(w, pow_table, ks, st, at, rt, nst, terminal,
                             next_update, length, True, aggregate_mode,
                             n_scales, n_actions, targets)
                    su = <int>st[next_update]
                    au = <int>at[next_update]
                    for z in range(n_scales):
                        w[z, su, au] += alphas[z] * (targets[z] - w[z, su, au])
                    next_update += 1
            else:
                _targets(w, pow_table, ks, st, at, rt, nst, terminal,
                         length - 1, length, False, aggregate_mode,
                         n_scales, n_actions, targets)
                for z in range(n_scales):
                    w[z, s, a] += alphas[z] * (targets[z] - w[z, s, a])
            s = ns
        if multi_step:
            while next_update < length:
                _targets(w, pow_table, ks, st, at, rt, nst, terminal,
                         next_update, length, True, aggregate_mode,
                         n_scales, n_actions, targets)
                su = <int>st[next_update]
                au = <int>at[next_update]
                for z in range(n_scales):
                    w[z, su, au] += alphas[z] * (targets[z] - w[z, su, au])
                next_update += 1
        ep_return[ep] = ret
        if has_oracle:
            err = 0.0
            for s2 in range(n_states):
                for a2 in range(n_actions):
                    v = 0.0
                    for z in range(n_scales):
                        v += w[z, s2, a2]
                    d = v - oracle[s2, a2]
                    if d < 0.0:
                        d = -d
                    if d > err:
                        err = d
            ep_sup_err[ep] = err
    return row


def phased_kernel(const double[:, :, ::1] P, const double[:, ::1] r_mean,
                  int noise_kind, double noise_param,
                  const int64_t[::1] ks, const double[:, ::1] pow_table,
                  const double[:, :, ::1] w_prev, const double[:, ::1] behavior,
                  bint greedy_flag, const double[:, :, ::1] uniforms,
                  int n_traj, bint literal_bootstrap, double[:, :, ::1] w_out,
                  int64_t[::1] states, int64_t[::1] actions,
                  double[::1] rbuf):
    cdef int n_scales = w_prev.shape[0]
    cdef int n_states = w_prev.shape[1]
    cdef int n_actions = w_prev.shape[2]
    cdef int k_top = 0
    cdef int z, s, a, j, i, si, ai, ns, an, a2, kz, sb, ab
    cdef int traj = 0
    cdef double t, m0, m_prev, mz, best
    for z in range(n_scales):
        if <int>ks[z] > k_top:
            k_top = <int>ks[z]
    for s in range(n_states):
        for a in range(n_actions):
            for z in range(n_scales):
                w_out[z, s, a] = 0.0
            for j in range(n_traj):
                states[0] = s
                actions[0] = a
                for i in range(k_top):
                    si = <int>states[i]
                    ai = <int>actions[i]
                    rbuf[i] = _sample_reward(r_mean[si, ai], noise_kind,
                                             noise_param, uniforms[traj, i, 0])
                    ns = _cdf_pick(P, si, ai, uniforms[traj, i, 1], n_states)
                    states[i + 1] = ns
                    if greedy_flag:
                        best = behavior[ns, 0]
                        an = 0
                        for a2 in range(1, n_actions):
                            if behavior[ns, a2] > best:
                                best = behavior[ns, a2]
                                an = a2
                    else:
                        an = <int>(uniforms[traj, i, 2] * n_actions)
                        if an >= n_actions:
                            an = n_actions - 1
                    actions[i + 1] = an
                traj += 1
                for z in range(n_scales):
                    kz = <int>ks[z]
                    sb = <int>states[kz]
                    ab = <int>actions[kz]
                    if z == 0:
                        t = 0.0
                        for i in range(kz):
                            t += pow_table[0, i] * rbuf[i]
                        _argmax_component(w_prev, 0, sb, n_actions, &m0)
                        t += pow_table[0, kz] * m0
                    else:
                        t = 0.0
                        for i in range(1, kz):
                            t += (pow_table[z, i] - pow_table[z - 1, i]) * rbuf[i]
                        _max_partial_sum(w_prev, z - 1, sb, n_actions, &m_prev)
                        t += (pow_table[z, kz] - pow_table[z - 1, kz]) * m_prev
                        if literal_bootstrap:
                            t += pow_table[z, kz] * w_prev[z, sb, ab]
                        else:
                            _argmax_component(w_prev, z, sb, n_actions, &mz)
                            t += pow_table[z, kz] * mz
                    w_out[z, s, a] += t
            for z in range(n_scales):
                w_out[z, s, a] /= n_traj
