"""Experiment configuration, dispatch, and CSV/JSON persistence.

A run is fully determined by its config plus master seed: every replicate gets
a hash-derived seed, aggregation is in ascending replicate order, and floats
are printed as shortest round-trip decimals, so rerunning a config reproduces
the CSV byte for byte regardless of worker count.
"""

import csv
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import lambda_returns, linear, phased, ppo, tabular
from .mdp import MdpSpec, RewardNoise, build_random_mdp, build_ring_mdp
from .oracle import NonConvergenceError, value_iteration
from .schedule import TimescaleSchedule
from .seeding import derive_seed

ARTIFACT_VERSION = 1

KINDS = ("solve", "train", "equiv", "contraction", "phased", "ppo")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

_TOP_KEYS = {"kind", "env", "schedule", "params", "master_seed",
             "replicates", "out"}
_SCHEDULE_KINDS = {"train", "equiv", "phased", "ppo"}

_PARAM_KEYS = {
    "solve": {"gamma", "tol"},
    "train": {"episodes", "steps_per_episode", "epsilon", "variant",
              "max_mode", "start_state"},
    "equiv": {"steps", "truncation", "features", "common_argmax"},
    "contraction": {"pairs", "n_pairs", "q_scale", "backup"},
    "phased": {"n", "phases", "delta", "exploration", "literal_bootstrap"},
    "ppo": {"horizon", "iterations", "alpha_omega", "clip_eps", "ratio_mode",
            "epsilon", "steps_per_iteration", "temperature", "eval_episodes"},
}


class ConfigError(ValueError):
    """Invalid experiment config; ``errors`` lists every problem found."""

    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


@dataclass
class ExperimentConfig:
    kind: str
    env: MdpSpec
    schedule: TimescaleSchedule
    params: dict
    master_seed: int
    replicates: int
    out: str
    raw: dict = field(default_factory=dict)


def _build_env(doc, errors):
    if not isinstance(doc, dict):
        errors.append("env: must be an object")
        return None
    try:
        env_type = doc.get("type")
        if env_type == "ring":
            noise_doc = doc.get("noise", {"kind": "none", "param": 0.0})
            return build_ring_mdp(
                int(doc["n_states"]), float(doc["slip_prob"]),
                reward_spec=doc.get("reward", 0.0),
                noise=RewardNoise(noise_doc.get("kind", "none"),
                                  float(noise_doc.get("param", 0.0))),
                terminal_states=tuple(doc.get("terminals", ())))
        if env_type == "random":
            return build_random_mdp(int(doc["n_states"]), int(doc["n_actions"]),
                                    int(doc["seed"]),
                                    reward_scale=float(doc.get("reward_scale", 1.0)))
        if env_type == "file":
            with open(doc["path"], encoding="utf-8") as fh:
                return MdpSpec.from_json(fh.read())
        if "transition" in doc:
            return MdpSpec.from_json(json.dumps(doc))
        errors.append("env: type must be 'ring', 'random', 'file', or an "
                      "inline MDP document")
    except OSError as exc:
        errors.append(f"env: cannot read file: {exc}")
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"env: {exc}")
    return None


def _check_number(params, key, errors, *, required=False, default=None,
                  integer=False, low=None, high=None, low_open=False,
                  high_open=False):
    if key not in params:
        if required:
            errors.append(f"params.{key}: required")
        return default
    v = params[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errors.append(f"params.{key}: must be a number")
        return default
    if integer and int(v) != v:
        errors.append(f"params.{key}: must be an integer")
        return default
    if low is not None and (v <= low if low_open else v < low):
        errors.append(f"params.{key}: must be {'>' if low_open else '>='} {low}")
        return default
    if high is not None and (v >= high if high_open else v > high):
        errors.append(f"params.{key}: must be {'<' if high_open else '<='} {high}")
        return default
    return int(v) if integer else float(v)


def _check_choice(params, key, errors, choices, default):
    v = params.get(key, default)
    if v not in choices:
        errors.append(f"params.{key}: must be one of {sorted(choices)}")
        return default
    return v


def _validate_params(kind, params, errors):
    """Normalize kind-specific params, appending one error per violation."""
    allowed = _PARAM_KEYS.get(kind, set())
    for key in params:
        if key not in allowed:
            errors.append(f"params.{key}: unknown field for kind '{kind}'")
    out = {}
    if kind == "solve":
        out["gamma"] = _check_number(params, "gamma", errors, required=True,
                                     low=0.0, high=1.0, high_open=True)
        out["tol"] = _check_number(params, "tol", errors, default=1e-10,
                                   low=0.0, low_open=True)
    elif kind == "train":
        out["episodes"] = _check_number(params, "episodes", errors,
                                        required=True, integer=True, low=1)
        out["steps_per_episode"] = _check_number(
            params, "steps_per_episode", errors, required=True, integer=True,
            low=1)
        eps = params.get("epsilon")
        if isinstance(eps, (int, float)) and not isinstance(eps, bool):
            if not 0.0 <= eps <= 1.0:
                errors.append("params.epsilon: must lie in [0, 1]")
            out["epsilon"] = float(eps)
        elif (isinstance(eps, list) and len(eps) == 2
              and all(isinstance(e, (int, float)) for e in eps)):
            if not all(0.0 <= e <= 1.0 for e in eps):
                errors.append("params.epsilon: endpoints must lie in [0, 1]")
            out["epsilon"] = (float(eps[0]), float(eps[1]))
        else:
            errors.append("params.epsilon: required scalar or [start, end]")
        out["variant"] = _check_choice(params, "variant", errors,
                                       ("single_step", "multi_step"),
                                       "multi_step")
        out["max_mode"] = _check_choice(params, "max_mode", errors,
                                        (tabular.AGGREGATE, tabular.COMPONENT),
                                        tabular.AGGREGATE)
        out["start_state"] = _check_number(params, "start_state", errors,
                                           default=0, integer=True, low=0)
    elif kind == "equiv":
        out["steps"] = _check_number(params, "steps", errors, required=True,
                                     integer=True, low=0)
        out["truncation"] = _check_number(params, "truncation", errors,
                                          default=64, integer=True, low=1)
        feats = params.get("features", {"kind": "onehot"})
        if not isinstance(feats, dict):
            errors.append("params.features: must be an object")
            feats = {"kind": "onehot"}
        fkind = feats.get("kind", "onehot")
        if fkind not in ("onehot", "random_projection"):
            errors.append("params.features.kind: must be 'onehot' or "
                          "'random_projection'")
        elif fkind == "random_projection":
            if not isinstance(feats.get("d"), int) or feats["d"] < 1:
                errors.append("params.features.d: positive integer required")
            if not isinstance(feats.get("seed"), int):
                errors.append("params.features.seed: integer required")
        out["features"] = feats
        cam = params.get("common_argmax", True)
        if not isinstance(cam, bool):
            errors.append("params.common_argmax: must be a boolean")
            cam = True
        out["common_argmax"] = cam
    elif kind == "contraction":
        pairs = params.get("pairs")
        if (not isinstance(pairs, list) or not pairs
                or not all(isinstance(p, list) and len(p) == 2 for p in pairs)):
            errors.append("params.pairs: required list of [gamma, lambda] pairs")
            pairs = []
        for i, (g, lam) in enumerate(pairs):
            if not 0.0 <= g < 1.0:
                errors.append(f"params.pairs[{i}]: gamma must lie in [0, 1)")
            elif lam < 0.0 or lam * g >= 1.0 or (
                    g > 0.0 and lam >= (1.0 + g) / (2.0 * g)):
                errors.append(f"params.pairs[{i}]: lambda must lie in "
                              "[0, (1 + gamma) / (2 gamma))")
        out["pairs"] = [(float(g), float(lam)) for g, lam in pairs]
        out["n_pairs"] = _check_number(params, "n_pairs", errors, default=1000,
                                       integer=True, low=1)
        out["q_scale"] = _check_number(params, "q_scale", errors, default=10.0,
                                       low=0.0, low_open=True)
        out["backup"] = _check_choice(params, "backup", errors,
                                      ("policy", "optimality"), "policy")
    elif kind == "phased":
        out["n"] = _check_number(params, "n", errors, required=True,
                                 integer=True, low=1)
        out["phases"] = _check_number(params, "phases", errors, required=True,
                                      integer=True, low=1)
        out["delta"] = _check_number(params, "delta", errors, required=True,
                                     low=0.0, high=1.0, low_open=True,
                                     high_open=True)
        out["exploration"] = _check_choice(params, "exploration", errors,
                                           phased.EXPLORATION_MODES, "greedy")
        lit = params.get("literal_bootstrap", True)
        if not isinstance(lit, bool):
            errors.append("params.literal_bootstrap: must be a boolean")
            lit = True
        out["literal_bootstrap"] = lit
    elif kind == "ppo":
        out["horizon"] = _check_number(params, "horizon", errors,
                                       required=True, integer=True, low=1)
        out["iterations"] = _check_number(params, "iterations", errors,
                                          required=True, integer=True, low=0)
        out["alpha_omega"] = _check_number(params, "alpha_omega", errors,
                                           required=True, low=0.0)
        out["clip_eps"] = _check_number(params, "clip_eps", errors,
                                        required=True, low=0.0, high=1.0,
                                        low_open=True, high_open=True)
        out["ratio_mode"] = _check_choice(params, "ratio_mode", errors,
                                          ("paper_q_ratio", "policy_likelihood"),
                                          "policy_likelihood")
        out["epsilon"] = _check_number(params, "epsilon", errors, default=0.1,
                                       low=0.0, high=1.0)
        out["steps_per_iteration"] = _check_number(
            params, "steps_per_iteration", errors, default=None, integer=True,
            low=1)
        out["temperature"] = _check_number(params, "temperature", errors,
                                           default=1.0, low=0.0, low_open=True)
        out["eval_episodes"] = _check_number(params, "eval_episodes", errors,
                                             default=0, integer=True, low=0)
    return out


def parse_config(doc: dict, source: str = "<config>") -> ExperimentConfig:
    """Validate a parsed JSON document, collecting every error before failing."""
    errors = []
    if not isinstance(doc, dict):
        raise ConfigError([f"{source}: top level must be an object"])
    for key in doc:
        if key not in _TOP_KEYS:
            errors.append(f"{key}: unknown field")
    kind = doc.get("kind")
    if kind not in KINDS:
        errors.append(f"kind: must be one of {list(KINDS)}")
        kind = None

    env = _build_env(doc.get("env"), errors) if "env" in doc else None
    if env is None and "env" not in doc:
        errors.append("env: required")

    schedule = None
    if kind in _SCHEDULE_KINDS:
        if "schedule" not in doc:
            errors.append("schedule: required for this kind")
        else:
            try:
                schedule = TimescaleSchedule.from_dict(
                    doc["schedule"], monotone_k=(kind == "phased"))
            except (KeyError, TypeError, ValueError) as exc:
                errors.append(f"schedule: {exc}")

    master_seed = doc.get("master_seed", 0)
    if not isinstance(master_seed, int) or isinstance(master_seed, bool):
        errors.append("master_seed: must be an integer")
        master_seed = 0
    replicates = doc.get("replicates", 1)
    if not isinstance(replicates, int) or isinstance(replicates, bool) \
            or replicates < 1:
        errors.append("replicates: must be a positive integer")
        replicates = 1
    out = doc.get("out", ".")
    if not isinstance(out, str):
        errors.append("out: must be a path string")
        out = "."

    params_doc = doc.get("params", {})
    if not isinstance(params_doc, dict):
        errors.append("params: must be an object")
        params_doc = {}
    params = _validate_params(kind, params_doc, errors) if kind else {}

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(kind, env, schedule, params, master_seed,
                            replicates, out, raw=doc)


def load_config(path: str) -> ExperimentConfig:
    """Read and validate a JSON experiment config from disk."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read: {exc}"])
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            [f"{path}: parse error at line {exc.lineno}, column {exc.colno}: "
             f"{exc.msg}"])
    return parse_config(doc, source=path)


def _fmt(value) -> str:
    """Shortest round-trip text for one CSV cell."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path: str, fieldnames: list, rows: list):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(row.get(name, "")) for name in fieldnames])


def _run_solve(cfg):
    q = value_iteration(cfg.env, cfg.params["gamma"], tol=cfg.params["tol"])
    rows = [{"state": s, "action": a, "q": q.values[s, a]}
            for s in range(cfg.env.n_states)
            for a in range(cfg.env.n_actions)]
    return ["state", "action", "q"], rows, {}


def _run_train(cfg):
    p = cfg.params
    oracle = value_iteration(cfg.env, float(cfg.schedule.gammas[-1]), tol=1e-12)
    rows = []
    for rep in range(cfg.replicates):
        seed = derive_seed(cfg.master_seed, "train-replicate", rep)
        _, metrics = tabular.run_qdelta(
            cfg.env, cfg.schedule, p["episodes"], p["steps_per_episode"],
            p["epsilon"], seed, variant=p["variant"], max_mode=p["max_mode"],
            oracle=oracle, start_state=p["start_state"])
        for m in metrics:
            rows.append({"replicate": rep, **m})
    return (["replicate", "episode", "step", "return", "sup_error", "epsilon"],
            rows, {})


def _run_equiv(cfg):
    p = cfg.params
    feats_doc = p["features"]
    rows = []
    max_dev = 0.0
    for rep in range(cfg.replicates):
        seed = derive_seed(cfg.master_seed, "equiv-replicate", rep)
        features = linear.make_features(feats_doc["kind"], cfg.env,
                                        d=feats_doc.get("d"),
                                        seed=feats_doc.get("seed"))
        report = linear.equivalence_run(cfg.env, features, cfg.schedule,
                                        p["steps"], seed,
                                        truncation=p["truncation"],
                                        common_argmax=p["common_argmax"])
        max_dev = max(max_dev, report["max_dev"])
        for r in report["per_step"]:
            rows.append({"replicate": rep, **r})
    return (["replicate", "step", "dev_inf_norm", "argmax_agreement_flag"],
            rows, {"max_dev": max_dev})


def _run_contraction(cfg):
    p = cfg.params
    rows = []
    for i, (g, lam) in enumerate(p["pairs"]):
        ref = value_iteration(cfg.env, g, tol=1e-12).values.argmax(axis=1)
        seed = derive_seed(cfg.master_seed, "contraction-pair", i)
        rows.append(lambda_returns.audit_contraction(
            cfg.env, g, lam, ref, p["n_pairs"], seed, q_scale=p["q_scale"],
            backup=p["backup"]))
    fields = ["gamma", "lambda", "coefficient_proof", "coefficient_statement",
              "max_ratio", "n_pairs", "within_bound"]
    return fields, rows, {"all_within_bound": all(r["within_bound"] for r in rows)}


def _run_phased(cfg, workers):
    p = cfg.params
    rows, summary = phased.run_phased_experiment(
        cfg.env, cfg.schedule, p["n"], p["phases"], cfg.replicates,
        p["delta"], cfg.master_seed, exploration=p["exploration"],
        literal_bootstrap=p["literal_bootstrap"], workers=workers)
    n_scales = cfg.schedule.n_scales
    fields = (["replicate", "phase", "epsilon", "err_q"]
              + [f"err_w_{z}" for z in range(n_scales)]
              + ["bound3", "bound4", "var_term", "var_reduction",
                 "bias_intro", "violated3", "violated4"])
    return fields, rows, summary


def _run_ppo(cfg):
    p = cfg.params
    rows = []
    summary = {"eval_returns": []}
    for rep in range(cfg.replicates):
        seed = derive_seed(cfg.master_seed, "ppo-replicate", rep)
        actor, _, metrics = ppo.run_ppo_qdelta(
            cfg.env, cfg.schedule, p["horizon"], p["iterations"],
            p["alpha_omega"], p["clip_eps"], seed,
            ratio_mode=p["ratio_mode"], epsilon=p["epsilon"],
            steps_per_iteration=p["steps_per_iteration"],
            temperature=p["temperature"])
        for m in metrics:
            rows.append({"replicate": rep, **m})
        if p["eval_episodes"]:
            summary["eval_returns"].append(ppo.evaluate_actor(
                cfg.env, actor, p["eval_episodes"],
                p["steps_per_iteration"] or 4 * p["horizon"],
                derive_seed(seed, "ppo-eval", 0)))
    n_scales = cfg.schedule.n_scales
    fields = (["replicate", "iteration", "mean_return", "actor_loss"]
              + [f"critic_loss_{z}" for z in range(n_scales)]
              + ["ratio_skips"])
    return fields, rows, summary


def run(cfg: ExperimentConfig, out_dir: str = None, workers: int = None):
    """Execute one experiment; writes <kind>.csv plus a JSON manifest.

    Returns (csv_path, manifest_path). Raises NonConvergenceError for numeric
    failures and OSError for I/O failures; the CLI maps these to exit codes.
    """
    if workers is None:
        env_workers = os.environ.get("QDELTA_WORKERS", "").strip()
        workers = int(env_workers) if env_workers else None
    start = time.monotonic()
    if cfg.kind == "solve":
        fields, rows, summary = _run_solve(cfg)
    elif cfg.kind == "train":
        fields, rows, summary = _run_train(cfg)
    elif cfg.kind == "equiv":
        fields, rows, summary = _run_equiv(cfg)
    elif cfg.kind == "contraction":
        fields, rows, summary = _run_contraction(cfg)
    elif cfg.kind == "phased":
        fields, rows, summary = _run_phased(cfg, workers)
    elif cfg.kind == "ppo":
        fields, rows, summary = _run_ppo(cfg)
    else:
        raise ConfigError([f"kind: unknown kind {cfg.kind!r}"])
    wall = time.monotonic() - start

    out = out_dir or cfg.out
    os.makedirs(out, exist_ok=True)
    csv_path = os.path.join(out, f"{cfg.kind}.csv")
    manifest_path = os.path.join(out, f"{cfg.kind}.manifest.json")
    write_csv(csv_path, fields, rows)
    manifest = {
        "artifact_version": ARTIFACT_VERSION,
        "config": cfg.raw,
        "seed": cfg.master_seed,
        "wall_time": wall,
        "summary": summary,
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=float)
        fh.write("\n")
    return csv_path, manifest_path
