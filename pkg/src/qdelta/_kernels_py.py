"""Pure-Python fallback kernels.

These mirror the compiled kernels in ``_kernels_c.pyx`` operation for
operation: same uniform-stream consumption, same arithmetic order, so both
backends produce bitwise-identical results. Keep the two files in sync.
"""


def _sample_reward(mean, noise_kind, noise_param, u):
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


def _cdf_pick(row, u):
    acc = 0.0
    last = len(row) - 1
    for j in range(last + 1):
        acc += row[j]
        if u < acc:
            return j
    return last


def _argmax_component(w, z, s, n_actions):
    best = w[z, s, 0]
    arg = 0
    for a in range(1, n_actions):
        v = w[z, s, a]
        if v > best:
            best = v
            arg = a
    return arg, best


def _max_partial_sum(w, z_top, s, n_actions):
    """max_a sum_{z <= z_top} w[z, s, a]; returns (argmax, max)."""
    best = 0.0
    for z in range(z_top + 1):
        best += w[z, s, 0]
    arg = 0
    for a in range(1, n_actions):
        v = 0.0
        for z in range(z_top + 1):
            v += w[z, s, a]
        if v > best:
            best = v
            arg = a
    return arg, best


def _targets(w, pow_table, ks, st, at, rt, nst, terminal, u, length,
             multi_step, aggregate_mode, n_scales, n_actions, out):
    for z in range(n_scales):
        kz = ks[z] if multi_step else 1
        avail = length - u
        k_eff = kz if kz < avail else avail
        sb = nst[u + k_eff - 1]
        sb_terminal = terminal[sb] != 0
        if z == 0:
            acc = 0.0
            for j in range(k_eff):
                acc += pow_table[0, j] * rt[u + j]
            if not sb_terminal:
                _, m0 = _argmax_component(w, 0, sb, n_actions)
                acc += pow_table[0, k_eff] * m0
            out[0] = acc
        else:
            acc = 0.0
            for j in range(1, k_eff):
                acc += (pow_table[z, j] - pow_table[z - 1, j]) * rt[u + j]
            if not sb_terminal:
                if aggregate_mode:
                    _, m_prev = _max_partial_sum(w, z - 1, sb, n_actions)
                else:
                    m_prev = 0.0
                    for zz in range(z):
                        _, mz = _argmax_component(w, zz, sb, n_actions)
                        m_prev += mz
                acc += (pow_table[z, k_eff] - pow_table[z - 1, k_eff]) * m_prev
                _, mz = _argmax_component(w, z, sb, n_actions)
                acc += pow_table[z, k_eff] * mz
            out[z] = acc


def run_qdelta_kernel(P, r_mean, noise_kind, noise_param, terminal,
                      ks, alphas, pow_table,
                      eps_by_step, uniforms, w,
                      episodes, steps_per_episode, start_state,
                      multi_step, aggregate_mode,
                      has_oracle, oracle, ep_return, ep_sup_err):
    """In-place tabular Q(delta) learning loop over ``episodes`` episodes.

    ``uniforms`` has one row of four draws per potential step:
    (explore, action, transition, reward noise). ``w`` is the (Z+1, S, A)
    table, updated in place; per-episode returns and sup-norm oracle errors are
    written to the output vectors.
    """
    n_scales, n_states, n_actions = w.shape
    k_max = 1
    if multi_step:
        for z in range(n_scales):
            if ks[z] > k_max:
                k_max = ks[z]
    st = [0] * steps_per_episode
    at = [0] * steps_per_episode
    rt = [0.0] * steps_per_episode
    nst = [0] * steps_per_episode
    targets = [0.0] * n_scales
    row = 0
    for ep in range(episodes):
        s = start_state
        length = 0
        next_update = 0
        ret = 0.0
        for _ in range(steps_per_episode):
            if terminal[s]:
                break
            eps = eps_by_step[row]
            u0 = uniforms[row, 0]
            u1 = uniforms[row, 1]
            u2 = uniforms[row, 2]
            u3 = uniforms[row, 3]
            row += 1
            if u0 < eps:
                a = int(u1 * n_actions)
                if a >= n_actions:
                    a = n_actions - 1
            else:
                a, _ = _max_partial_sum(w, n_scales - 1, s, n_actions)
            ns = _cdf_pick(P[s, a], u2)
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
                    su = st[next_update]
                    au = at[next_update]
                    for z in range(n_scales):
                        w[z, su, au] += alphas[z] * (targets[z] - w[z, su, au])
                    next_update += 1
            else:
                u = length - 1
                _targets(w, pow_table, ks, st, at, rt, nst, terminal,
                         u, length, False, aggregate_mode,
                         n_scales, n_actions, targets)
                for z in range(n_scales):
                    w[z, s, a] += alphas[z] * (targets[z] - w[z, s, a])
            s = ns
        if multi_step:
            while next_update < length:
                _targets(w, pow_table, ks, st, at, rt, nst, terminal,
                         next_update, length, True, aggregate_mode,
                         n_scales, n_actions, targets)
                su = st[next_update]
                au = at[next_update]
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


def phased_kernel(P, r_mean, noise_kind, noise_param,
                  ks, pow_table, w_prev, behavior, greedy_flag,
                  uniforms, n_traj, literal_bootstrap, w_out):
    """One synchronous phase of parallel-sampled multi-step updates.

    For every (s, a) pair, ``n_traj`` trajectories of length max(k_z) start at
    (s, a) (first action pinned), with subsequent actions uniform random or
    greedy on ``behavior``. ``uniforms`` has shape (S*A*n_traj, K, 3) holding
    (reward noise, transition, next action) draws per step. Writes the averaged
    per-scale targets into ``w_out``.
    """
    n_scales, n_states, n_actions = w_prev.shape
    k_top = 0
    for z in range(n_scales):
        if ks[z] > k_top:
            k_top = ks[z]
    states = [0] * (k_top + 1)
    actions = [0] * (k_top + 1)
    rbuf = [0.0] * k_top
    traj = 0
    for s in range(n_states):
        for a in range(n_actions):
            for z in range(n_scales):
                w_out[z, s, a] = 0.0
            for _ in range(n_traj):
                states[0] = s
                actions[0] = a
                for i in range(k_top):
                    si = states[i]
                    ai = actions[i]
                    rbuf[i] = _sample_reward(r_mean[si, ai], noise_kind,
                                             noise_param, uniforms[traj, i, 0])
                    ns = _cdf_pick(P[si, ai], uniforms[traj, i, 1])
                    states[i + 1] = ns
                    if greedy_flag:
                        best = behavior[ns, 0]
                        an = 0
                        for a2 in range(1, n_actions):
                            if behavior[ns, a2] > best:
                                best = behavior[ns, a2]
                                an = a2
                    else:
                        an = int(uniforms[traj, i, 2] * n_actions)
                        if an >= n_actions:
                            an = n_actions - 1
                    actions[i + 1] = an
                traj += 1
                for z in range(n_scales):
                    kz = ks[z]
                    sb = states[kz]
                    ab = actions[kz]
                    if z == 0:
                        t = 0.0
                        for i in range(kz):
                            t += pow_table[0, i] * rbuf[i]
                        _, m0 = _argmax_component(w_prev, 0, sb, n_actions)
                        t += pow_table[0, kz] * m0
                    else:
                        t = 0.0
                        for i in range(1, kz):
                            t += (pow_table[z, i] - pow_table[z - 1, i]) * rbuf[i]
                        _, m_prev = _max_partial_sum(w_prev, z - 1, sb, n_actions)
                        t += (pow_table[z, kz] - pow_table[z - 1, kz]) * m_prev
                        if literal_bootstrap:
                            t += pow_table[z, kz] * w_prev[z, sb, ab]
                        else:
                            _, mz = _argmax_component(w_prev, z, sb, n_actions)
                            t += pow_table[z, kz] * mz
                    w_out[z, s, a] += t
            for z in range(n_scales):
                w_out[z, s, a] /= n_traj
