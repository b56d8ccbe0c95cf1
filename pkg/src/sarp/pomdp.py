"""Target-search POMDP with a fully observed robot location and a hidden target.

Beliefs live over the hidden factor only. Policies are alpha-vector sets kept
per robot location and computed by point-based value iteration.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .simworld import DETECTED, NOT_APPLICABLE, NOT_DETECTED, EnvironmentMap, PerceptionModel

log = logging.getLogger(__name__)

GAMMA = 0.99
GO_COST = 10.0
SUCCESS_REWARD = 100.0
FAILURE_PENALTY = -100.0
MAX_JOINT_DISTRACTORS = 3
POLICY_FORMAT_VERSION = 1


class ModelError(ValueError):
    pass


@dataclass
class TargetSearchPomdp:
    """Tabular model. Actions ``0..n-1`` are ``go_i``; action ``n`` terminates.

    move[r, a, r']     P(robot at r' | robot at r, go_a)
    go_reward[r, a]    reward of go_a from r (negative)
    obs[r', h, z]      P(z | hidden state h, robot now at r') for go actions
    terminal[r, h]     terminate reward with the robot at r
    report_mode        terminate reward keyed on the reported belief argmax
                       instead of robot/target co-location
    """

    n_locations: int
    target_of_state: np.ndarray
    legal: list[list[int]]
    move: np.ndarray
    go_reward: np.ndarray
    obs: np.ndarray
    obs_names: list
    success_reward: float = SUCCESS_REWARD
    failure_penalty: float = FAILURE_PENALTY
    gamma: float = GAMMA
    report_mode: bool = False
    query_label: str = ""
    n_distractors: int = 0

    def __post_init__(self):
        n, H = self.n_locations, self.n_hidden
        if not 0 < self.gamma < 1:
            raise ModelError("discount must lie in (0, 1)")
        if self.move.shape != (n, n, n) or self.obs.shape[:2] != (n, H):
            raise ModelError("model arrays have inconsistent shapes")
        for r in range(n):
            for a in self.legal[r]:
                if not np.isclose(self.move[r, a].sum(), 1.0, atol=1e-9):
                    raise ModelError(f"transition row ({r}, go_{a}) does not sum to 1")
        if not np.allclose(self.obs.sum(axis=2), 1.0, atol=1e-9):
            raise ModelError("observation rows must sum to 1")

    @property
    def n_hidden(self) -> int:
        return len(self.target_of_state)

    @property
    def terminate(self) -> int:
        return self.n_locations

    @property
    def n_actions(self) -> int:
        return self.n_locations + 1

    @property
    def actions(self) -> list[str]:
        return [f"go_{i}" for i in range(self.n_locations)] + ["terminate"]

    def action_name(self, a) -> str:
        return self.actions[a]

    def legal_actions(self, r) -> list[int]:
        return self.legal[r] + [self.terminate]

    def obs_index(self, z) -> int:
        if isinstance(z, (int, np.integer)):
            return int(z)
        return self.obs_names.index(z)

    def reward(self, r, a) -> float:
        if a == self.terminate:
            raise ModelError("terminate reward depends on the target; use terminate_reward")
        return float(self.go_reward[r, a])

    def terminate_reward(self, r, target) -> float:
        return self.success_reward if r == target else self.failure_penalty

    def terminal_alphas(self, r) -> np.ndarray:
        """Rows are alpha-vectors of terminating at robot location ``r``."""
        t = self.target_of_state
        if self.report_mode:
            return np.where(t[None, :] == np.arange(self.n_locations)[:, None],
                            self.success_reward, self.failure_penalty)
        return np.where(t == r, self.success_reward, self.failure_penalty)[None, :]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.target_of_state, self.move, self.go_reward, self.obs):
            h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        h.update(json.dumps([self.legal, [str(z) for z in self.obs_names], self.success_reward,
                             self.failure_penalty, self.gamma, self.report_mode]).encode())
        return h.hexdigest()

    def uniform_belief(self) -> np.ndarray:
        return np.full(self.n_hidden, 1.0 / self.n_hidden)

    def target_marginal(self, b) -> np.ndarray:
        return np.bincount(self.target_of_state, weights=b, minlength=self.n_locations)


def _navigation(env: EnvironmentMap, p_move, go_cost, cost_mode, cost_per_meter):
    n = env.n
    legal = [[a for a in range(n) if env.can_go(r, a)] for r in range(n)]
    move = np.zeros((n, n, n))
    go_reward = np.zeros((n, n))
    for r in range(n):
        for a in legal[r]:
            if a == r:
                move[r, a, r] = 1.0
            else:
                move[r, a, a] = p_move
                move[r, a, r] += 1.0 - p_move
            if cost_mode == "fixed" or a == r:
                go_reward[r, a] = -go_cost
            elif cost_mode == "distance":
                go_reward[r, a] = -cost_per_meter * env.distance(r, a)
            else:
                raise ModelError(f"unknown cost mode {cost_mode!r}")
    return legal, move, go_reward


def _sensing(env, sensing_range):
    """sensed[r', l] = 1 when location l is visible from r'."""
    sensed = np.zeros((env.n, env.n), dtype=bool)
    for r in range(env.n):
        sensed[r, env.sensed(r, sensing_range)] = True
    return sensed


def build_pomdp(env: EnvironmentMap, query_label: str, detector: PerceptionModel = PerceptionModel(),
                *, p_move=0.95, go_cost=GO_COST, cost_mode="fixed", cost_per_meter=None,
                success_reward=SUCCESS_REWARD, failure_penalty=FAILURE_PENALTY, gamma=GAMMA,
                report_mode=False) -> TargetSearchPomdp:
    return build_joint_pomdp(env, query_label, 0, detector, p_move=p_move, go_cost=go_cost,
                             cost_mode=cost_mode, cost_per_meter=cost_per_meter,
                             success_reward=success_reward, failure_penalty=failure_penalty,
                             gamma=gamma, report_mode=report_mode)


def build_joint_pomdp(env: EnvironmentMap, query_label: str, k: int,
                      detector: PerceptionModel = PerceptionModel(), distractor_labels=(),
                      *, p_move=0.95, go_cost=GO_COST, cost_mode="fixed", cost_per_meter=None,
                      success_reward=SUCCESS_REWARD, failure_penalty=FAILURE_PENALTY, gamma=GAMMA,
                      report_mode=False) -> TargetSearchPomdp:
    """Hidden state = joint location of the target and ``k`` distractors.

    Hidden index ``h = t + n*d_1 + n^2*d_2 + ...``; observation index has bit j
    set when object j (0 = target) was *not* detected, so ``z = 0`` is
    Detected for k = 0.
    """
    if k < 0 or k > MAX_JOINT_DISTRACTORS:
        raise ModelError(
            f"joint model with {k} distractors refused: hidden states grow as n^(k+1); "
            f"at most {MAX_JOINT_DISTRACTORS} distractors are supported")
    if not query_label:
        raise ModelError("query label must be non-empty")
    n = env.n
    labels = [query_label] + [distractor_labels[j % len(distractor_labels)] for j in range(k)] \
        if k else [query_label]
    cost_per_meter = go_cost if cost_per_meter is None else cost_per_meter
    legal, move, go_reward = _navigation(env, p_move, go_cost, cost_mode, cost_per_meter)
    sensed = _sensing(env, detector.sensing_range).astype(float)

    H = n ** (k + 1)
    coords = np.array(list(itertools.product(range(n), repeat=k + 1)))[:, ::-1]
    # itertools varies the last coordinate fastest; reversed, column 0 is the target
    hidden = (coords * (n ** np.arange(k + 1))).sum(axis=1)
    order = np.argsort(hidden)
    coords = coords[order]
    nz = 2 ** (k + 1)
    obs = np.ones((n, H, nz))
    for j, label in enumerate(labels):
        tp, fp = detector.tp_of(label), detector.fp_of(label)
        p_det = sensed[:, coords[:, j]] * tp + (1 - sensed[:, coords[:, j]]) * fp  # (n, H)
        for z in range(nz):
            missed = (z >> j) & 1
            obs[:, :, z] *= (1 - p_det) if missed else p_det
    if k == 0:
        obs_names = [DETECTED, NOT_DETECTED]
    else:
        obs_names = [tuple(not ((z >> j) & 1) for j in range(k + 1)) for z in range(nz)]
    return TargetSearchPomdp(n, coords[:, 0].astype(np.int64), legal, move, go_reward, obs,
                             obs_names, success_reward, failure_penalty, gamma, report_mode,
                             query_label, k)


def belief_update(b, a, z, model: TargetSearchPomdp, robot_location) -> np.ndarray:
    """Bayes update for a static hidden state; ``robot_location`` is where the
    robot ended up after ``a`` (observations are taken there)."""
    b = np.asarray(b, dtype=float)
    if a == model.terminate:
        if z != NOT_APPLICABLE:
            raise ModelError("terminate yields only NotApplicable")
        return b.copy()
    if z == NOT_APPLICABLE:
        raise ModelError("NotApplicable is only observed after terminate")
    likelihood = model.obs[robot_location, :, model.obs_index(z)]
    post = likelihood * b
    norm = post.sum()
    if norm <= 0:
        raise ModelError(f"observation {z!r} has zero probability under the belief")
    return post / norm


@dataclass(frozen=True)
class SolverConfig:
    belief_points: int = 200
    iterations: int = 60
    # 0 disables the early stop so every run spends the full backup budget
    threshold: float = 1e-3
    seed: int = 0
    rollout_depth: int = 25

    def __post_init__(self):
        if min(self.belief_points, self.iterations, self.rollout_depth) < 1:
            raise ValueError("solver counts must be positive")
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")


@dataclass
class Policy:
    alphas: list[np.ndarray]
    actions: list[np.ndarray]
    model_hash: str = ""
    value_history: list[float] = field(default_factory=list)
    converged: bool = False

    def values(self, b, r) -> np.ndarray:
        return self.alphas[r] @ np.asarray(b, dtype=float)

    def value(self, b, r) -> float:
        return float(self.values(b, r).max())

    def action(self, b, r) -> int:
        vals = self.values(b, r)
        best = vals.max()
        tied = np.flatnonzero(vals >= best - 1e-9 * max(1.0, abs(best)))
        return int(self.actions[r][tied].min())

    def to_dict(self) -> dict:
        return {
            "version": POLICY_FORMAT_VERSION,
            "model_hash": self.model_hash,
            "alphas": [a.tolist() for a in self.alphas],
            "actions": [a.tolist() for a in self.actions],
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path, model: Optional[TargetSearchPomdp] = None) -> "Policy":
        with open(path) as fh:
            data = json.load(fh)
        if data.get("version") != POLICY_FORMAT_VERSION:
            raise ModelError(f"unsupported policy format {data.get('version')!r}")
        if model is not None and data["model_hash"] != model.fingerprint():
            raise ModelError("policy was computed for a different model")
        return cls([np.array(a, dtype=float) for a in data["alphas"]],
                   [np.array(a, dtype=np.int64) for a in data["actions"]], data["model_hash"])


def policy_action(policy: Policy, b, robot_location) -> int:
    return policy.action(b, robot_location)


def target_corners(model: TargetSearchPomdp) -> np.ndarray:
    """Beliefs certain of the target location, uniform over everything else."""
    corners = np.zeros((model.n_locations, model.n_hidden))
    for loc in range(model.n_locations):
        mask = model.target_of_state == loc
        corners[loc, mask] = 1.0 / mask.sum()
    return corners


def _sample_beliefs(model: TargetSearchPomdp, config: SolverConfig, start_beliefs=()):
    """``config.belief_points`` points per robot location: the uniform belief,
    the target corners, then beliefs reached by random-action rollouts."""
    rng = np.random.default_rng(config.seed)
    n, H = model.n_locations, model.n_hidden
    seeds = [model.uniform_belief()] + [np.asarray(b, dtype=float) for b in start_beliefs]
    base = seeds + list(target_corners(model))
    need = max(len(base), config.belief_points)
    points = [list(base) for _ in range(n)]
    for _ in range(50 * need * n):
        if min(len(p) for p in points) >= need:
            break
        r = int(rng.integers(n))
        if rng.random() < 0.7:
            b = seeds[int(rng.integers(len(seeds)))].copy()
        else:
            b = rng.dirichlet(np.ones(H))
        h = int(rng.choice(H, p=b))
        for _ in range(config.rollout_depth):
            a = int(rng.choice(model.legal[r]))
            r = int(rng.choice(n, p=model.move[r, a]))
            z = int(rng.choice(model.obs.shape[2], p=model.obs[r, h]))
            post = model.obs[r, :, z] * b
            if post.sum() <= 0:
                break
            b = post / post.sum()
            if len(points[r]) < need:
                points[r].append(b)
    return [np.unique(np.round(np.array(p), 12), axis=0) for p in points]


def solve(model: TargetSearchPomdp, config: SolverConfig = SolverConfig(),
          start_beliefs=()) -> Policy:
    """Point-based value iteration from the terminate-now lower bound.

    Each point keeps the better of its backed-up vector and its previous best,
    so point values never decrease.
    """
    t0 = time.perf_counter()
    n, H, gamma = model.n_locations, model.n_hidden, model.gamma
    points = _sample_beliefs(model, config, start_beliefs)
    term = model.terminate
    alphas, acts = [], []
    for r in range(n):
        ta = model.terminal_alphas(r)
        alphas.append(ta.astype(float))
        acts.append(np.full(len(ta), term, dtype=np.int64))

    def best_at(r, B):
        vals = B @ alphas[r].T
        idx = vals.argmax(axis=1)
        return alphas[r][idx], acts[r][idx], vals[np.arange(len(B)), idx]

    history = []
    converged = False
    for it in range(config.iterations):
        new_alphas, new_acts, delta, total = [], [], 0.0, 0.0
        for r in range(n):
            B = points[r]
            old_alpha, old_act, old_val = best_at(r, B)
            cand_alpha = [model.terminal_alphas(r)[np.argmax(B @ model.terminal_alphas(r).T, axis=1)]]
            cand_act = [np.full(len(B), term)]
            for a in model.legal[r]:
                future = np.zeros((len(B), H))
                for r2 in np.flatnonzero(model.move[r, a]):
                    p = model.move[r, a, r2]
                    for z in range(model.obs.shape[2]):
                        o = model.obs[r2, :, z]
                        g = alphas[r2] * o  # (K, H)
                        choice = np.argmax(B @ g.T, axis=1)
                        future += p * g[choice]
                cand_alpha.append(model.go_reward[r, a] + gamma * future)
                cand_act.append(np.full(len(B), a))
            cand_alpha = np.stack(cand_alpha)  # (A, M, H)
            cand_act = np.stack(cand_act)
            cand_val = np.einsum("amh,mh->am", cand_alpha, B)
            # ties go to the lowest action index
            order = np.argsort(cand_act[:, 0], kind="stable")
            cand_alpha, cand_act, cand_val = cand_alpha[order], cand_act[order], cand_val[order]
            pick = np.argmax(cand_val >= cand_val.max(axis=0) - 1e-9, axis=0)
            cols = np.arange(len(B))
            new_val = cand_val[pick, cols]
            keep_old = new_val < old_val
            alpha = np.where(keep_old[:, None], old_alpha, cand_alpha[pick, cols])
            act = np.where(keep_old, old_act, cand_act[pick, cols])
            val = np.maximum(new_val, old_val)
            delta = max(delta, float(np.abs(val - old_val).max()))
            total += float(val.sum())
            uniq, first = np.unique(np.round(alpha, 10), axis=0, return_index=True)
            new_alphas.append(alpha[np.sort(first)])
            new_acts.append(act[np.sort(first)])
        alphas, acts = new_alphas, new_acts
        history.append(total)
        if delta < config.threshold:
            converged = True
            break
    if not converged:
        log.info("PBVI stopped after %d iterations without reaching threshold %.2g",
                 config.iterations, config.threshold)
    log.debug("solved %d hidden states in %.2fs", H, time.perf_counter() - t0)
    return Policy(alphas, acts, model.fingerprint(), history, converged)
