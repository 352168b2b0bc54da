"""The timescale ladder (gamma_z, k_z, lambda_z, alpha_z) and per-scale tables."""

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class TimescaleSchedule:
    """Per-scale parameters for z = 0..Z.

    gammas must be nondecreasing; lambda_z * gamma_z < 1 for every z; alphas in
    (0, 1]. ``monotone_k=True`` additionally requires nondecreasing k_z (the
    assumption behind the phased error-bound decomposition).
    """

    gammas: np.ndarray
    ks: np.ndarray = None
    lambdas: np.ndarray = None
    alphas: np.ndarray = None
    monotone_k: bool = False

    def __post_init__(self):
        self.gammas = np.asarray(self.gammas, dtype=np.float64)
        z = self.gammas.shape[0]
        if self.ks is None:
            self.ks = np.ones(z, dtype=np.int64)
        if self.lambdas is None:
            self.lambdas = np.zeros(z, dtype=np.float64)
        if self.alphas is None:
            self.alphas = np.full(z, 0.1)
        self.ks = np.asarray(self.ks, dtype=np.int64)
        self.lambdas = np.asarray(self.lambdas, dtype=np.float64)
        self.alphas = np.asarray(self.alphas, dtype=np.float64)
        errors = self.validation_errors()
        if errors:
            raise ValueError("; ".join(errors))

    def validation_errors(self) -> list:
        errs = []
        z = self.gammas.shape[0]
        if z == 0:
            return ["schedule needs at least one scale"]
        for arr, name in ((self.ks, "ks"), (self.lambdas, "lambdas"),
                          (self.alphas, "alphas")):
            if arr.shape[0] != z:
                errs.append(f"{name} length {arr.shape[0]} != number of scales {z}")
        if errs:
            return errs
        if np.any(self.gammas < 0.0) or np.any(self.gammas >= 1.0):
            errs.append("every gamma must lie in [0, 1)")
        if np.any(np.diff(self.gammas) < 0.0):
            errs.append("gammas must be nondecreasing")
        if np.any(self.ks < 1):
            errs.append("every k must be a positive integer")
        if self.monotone_k and np.any(np.diff(self.ks) < 0):
            errs.append("ks must be nondecreasing in monotone-k mode")
        if np.any(self.lambdas < 0.0):
            errs.append("every lambda must be nonnegative")
        if np.any(self.lambdas * self.gammas >= 1.0):
            errs.append("lambda_z * gamma_z must be < 1 for every scale")
        if np.any(self.alphas <= 0.0) or np.any(self.alphas > 1.0):
            errs.append("every alpha must lie in (0, 1]")
        return errs

    @property
    def n_scales(self) -> int:
        return self.gammas.shape[0]

    @property
    def k_max(self) -> int:
        return int(self.ks.max())

    def gamma_powers(self, up_to: int) -> np.ndarray:
        """pow[z][j] = gamma_z ** j for j = 0..up_to, built by repeated
        multiplication (kept identical across kernel backends)."""
        z = self.n_scales
        table = np.ones((z, up_to + 1))
        for i in range(z):
            g = float(self.gammas[i])
            acc = 1.0
            for j in range(1, up_to + 1):
                acc *= g
                table[i, j] = acc
        return table

    def to_dict(self) -> dict:
        return {
            "gammas": self.gammas.tolist(),
            "ks": self.ks.tolist(),
            "lambdas": self.lambdas.tolist(),
            "alphas": self.alphas.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict, monotone_k: bool = False) -> "TimescaleSchedule":
        return cls(gammas=np.array(doc["gammas"], dtype=np.float64),
                   ks=doc.get("ks"), lambdas=doc.get("lambdas"),
                   alphas=doc.get("alphas"), monotone_k=monotone_k)

    @classmethod
    def single(cls, gamma, k=1, lam=0.0, alpha=0.1) -> "TimescaleSchedule":
        return cls(gammas=np.array([gamma]), ks=np.array([k]),
                   lambdas=np.array([lam]), alphas=np.array([alpha]))


@dataclass
class DeltaTable:
    """Per-scale tables W[z][s][a]; partial sums reconstruct Q at each gamma_z."""

    w: np.ndarray  # (Z+1, S, A)
    schedule: TimescaleSchedule

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.ndim != 3:
            raise ValueError("w must have shape (Z+1, S, A)")
        if self.w.shape[0] != self.schedule.n_scales:
            raise ValueError("w scale dimension disagrees with schedule")
        if not np.all(np.isfinite(self.w)):
            raise ValueError("DeltaTable entries must be finite")

    @classmethod
    def zeros(cls, schedule: TimescaleSchedule, n_states: int,
              n_actions: int) -> "DeltaTable":
        return cls(np.zeros((schedule.n_scales, n_states, n_actions)), schedule)

    @property
    def n_states(self) -> int:
        return self.w.shape[1]

    @property
    def n_actions(self) -> int:
        return self.w.shape[2]

    def partial_sum(self, z: int) -> np.ndarray:
        """Estimate of Q_{gamma_z}: sum of components W_0..W_z."""
        return self.w[: z + 1].sum(axis=0)

    def reconstruct(self) -> np.ndarray:
        return self.partial_sum(self.schedule.n_scales - 1)

    def copy(self) -> "DeltaTable":
        return DeltaTable(self.w.copy(), self.schedule)

    def to_json(self) -> str:
        return json.dumps({"schedule": self.schedule.to_dict(),
                           "w": self.w.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "DeltaTable":
        doc = json.loads(text)
        return cls(np.array(doc["w"], dtype=np.float64),
                   TimescaleSchedule.from_dict(doc["schedule"]))
