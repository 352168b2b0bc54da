"""Kernel backend selection.

The compiled extension is used when available; the pure-Python fallback keeps
the package importable from a source tree. ``QDELTA_BACKEND=python`` or
``=compiled`` forces a choice. Both backends consume identical uniform streams
and apply identical arithmetic, so results are bitwise-equal either way.
"""

import os

import numpy as np

from . import _kernels_py

_force = os.environ.get("QDELTA_BACKEND", "").strip().lower()
if _force not in ("", "compiled", "python"):
    raise RuntimeError(f"QDELTA_BACKEND must be 'compiled' or 'python', got {_force!r}")

_kernels_c = None
if _force != "python":
    try:
        from . import _kernels_c
    except ImportError:
        if _force == "compiled":
            raise

BACKEND = "compiled" if _kernels_c is not None else "python"


def _resolve(backend):
    which = backend or BACKEND
    if which not in ("compiled", "python"):
        raise ValueError(f"backend must be 'compiled' or 'python', got {which!r}")
    if which == "compiled" and _kernels_c is None:
        raise RuntimeError("compiled backend requested but not built")
    return which


def run_qdelta_kernel(P, r_mean, noise_kind, noise_param, terminal,
                      ks, alphas, pow_table, eps_by_step, uniforms, w,
                      episodes, steps_per_episode, start_state,
                      multi_step, aggregate_mode, oracle=None,
                      backend=None):
    """Dispatch the tabular learning loop; returns (ep_return, ep_sup_err)."""
    ep_return = np.zeros(episodes)
    ep_sup_err = np.zeros(episodes)
    has_oracle = oracle is not None
    if oracle is None:
        oracle = np.zeros_like(r_mean)
    which = _resolve(backend)
    if which == "compiled":
        n = steps_per_episode
        _kernels_c.run_qdelta_kernel(
            P, r_mean, noise_kind, noise_param, terminal,
            ks, alphas, pow_table, eps_by_step, uniforms, w,
            episodes, steps_per_episode, start_state,
            multi_step, aggregate_mode, has_oracle, oracle,
            ep_return, ep_sup_err,
            np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64),
            np.zeros(n), np.zeros(n, dtype=np.int64),
            np.zeros(w.shape[0]))
    else:
        _kernels_py.run_qdelta_kernel(
            P, r_mean, noise_kind, noise_param, terminal,
            ks, alphas, pow_table, eps_by_step, uniforms, w,
            episodes, steps_per_episode, start_state,
            multi_step, aggregate_mode, has_oracle, oracle,
            ep_return, ep_sup_err)
    return ep_return, ep_sup_err


def phased_kernel(P, r_mean, noise_kind, noise_param, ks, pow_table,
                  w_prev, behavior, greedy_flag, uniforms, n_traj,
                  literal_bootstrap, backend=None):
    """Dispatch one phased update; returns the new (Z+1, S, A) table."""
    w_out = np.zeros_like(w_prev)
    which = _resolve(backend)
    if which == "compiled":
        k_top = int(ks.max())
        _kernels_c.phased_kernel(
            P, r_mean, noise_kind, noise_param, ks, pow_table,
            w_prev, behavior, greedy_flag, uniforms, n_traj,
            literal_bootstrap, w_out,
            np.zeros(k_top + 1, dtype=np.int64),
            np.zeros(k_top + 1, dtype=np.int64), np.zeros(k_top))
    else:
        _kernels_py.phased_kernel(
            P, r_mean, noise_kind, noise_param, ks, pow_table,
            w_prev, behavior, greedy_flag, uniforms, n_traj,
            literal_bootstrap, w_out)
    return w_out
