"""Dynamics models for MPC and online learning.

Three predictors share the observation-in, observation-out contract: an
identity model (replanning absorbs the error), a heuristic planar-push
model that rigidly translates a point cloud, and a small tanh MLP trained
online by full-batch gradient descent on squared error. Exploration during
data collection samples actions in the noisy neighborhood of a zero-shot
trajectory prior instead of the full action space.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DivergenceError, InvalidInputError
from .trajectory import PushAction, Waypoint
from .sim.tasks import TaskSpec, reset, success_check
from .sim.world import TICK_SECONDS, WorldState, observe, step_waypoint

LEARNING_RATE = 1e-3
HIDDEN_SIZES = (64, 64)
PRIOR_SIGMA = 0.01  # meters of exploration noise around the prior
PRIOR_COUNT = 4  # zero-shot trajectories kept as exploration priors
EPISODES_PER_ROUND = 5
EVAL_SEEDS = 20
MPC_CANDIDATES = 64


# -- predictors -----------------------------------------------------------


def identity_predict(obs: np.ndarray, action: np.ndarray) -> np.ndarray:
    """Assume the world does not change: the MPC replan absorbs the error."""
    obs = np.asarray(obs, dtype=float)
    np.asarray(action, dtype=float)
    return obs.copy()


def push_predict(cloud: np.ndarray, action: PushAction) -> np.ndarray:
    """Rigidly translate a point cloud along the push direction."""
    return np.asarray(cloud, dtype=float) + action.direction * action.distance


class IdentityModel:
    def predict(self, obs, action):
        return identity_predict(obs, action)


class PlanarPushModel:
    def predict_cloud(self, cloud, action: PushAction):
        return push_predict(cloud, action)


# -- learned model --------------------------------------------------------


@dataclass
class LearnedModel:
    """Fully-connected tanh network mapping (obs, action) to the next obs."""

    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @staticmethod
    def create(obs_dim: int, act_dim: int, seed: int = 0, hidden=HIDDEN_SIZES) -> "LearnedModel":
        sizes = (obs_dim + act_dim, *hidden, obs_dim)
        rng = np.random.default_rng(seed)
        weights = [
            rng.normal(0.0, 1.0 / np.sqrt(sizes[i]), size=(sizes[i], sizes[i + 1]))
            for i in range(len(sizes) - 1)
        ]
        biases = [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)]
        return LearnedModel(sizes=sizes, weights=weights, biases=biases)

    def copy(self) -> "LearnedModel":
        return LearnedModel(
            sizes=self.sizes,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.atleast_2d(np.asarray(x, dtype=float))
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.tanh(h)
        return h

    def predict(self, obs: np.ndarray, action: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        x = np.concatenate([obs, np.asarray(action, dtype=float)])
        if x.shape[0] != self.sizes[0]:
            raise InvalidInputError(
                f"model expects input dim {self.sizes[0]}, got {x.shape[0]}"
            )
        return self.forward(x)[0]

    def predict_batch(self, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(obs)
        if len(obs) == 1:
            obs = np.repeat(obs, len(actions), axis=0)
        return self.forward(np.hstack([obs, actions]))

    # -- serialization: layer-sizes header + row-major float64 parameters

    def save(self, path) -> None:
        blob = struct.pack("<4sI", b"VXNN", len(self.sizes))
        blob += struct.pack(f"<{len(self.sizes)}I", *self.sizes)
        for w, b in zip(self.weights, self.biases):
            blob += np.ascontiguousarray(w, dtype="<f8").tobytes()
            blob += np.ascontiguousarray(b, dtype="<f8").tobytes()
        Path(path).write_bytes(blob)

    @staticmethod
    def load(path) -> "LearnedModel":
        raw = Path(path).read_bytes()
        magic, n = struct.unpack_from("<4sI", raw, 0)
        if magic != b"VXNN":
            raise InvalidInputError("not a model checkpoint")
        sizes = struct.unpack_from(f"<{n}I", raw, 8)
        off = 8 + 4 * n
        weights, biases = [], []
        for i in range(n - 1):
            w = np.frombuffer(raw, dtype="<f8", count=sizes[i] * sizes[i + 1], offset=off)
            off += w.nbytes
            b = np.frombuffer(raw, dtype="<f8", count=sizes[i + 1], offset=off)
            off += b.nbytes
            weights.append(w.reshape(sizes[i], sizes[i + 1]).copy())
            biases.append(b.copy())
        return LearnedModel(sizes=tuple(sizes), weights=weights, biases=biases)


def mse_loss(model: LearnedModel, inputs: np.ndarray, targets: np.ndarray) -> float:
    pred = model.forward(inputs)
    return float(np.mean((pred - targets) ** 2))


def gradients(model: LearnedModel, inputs: np.ndarray, targets: np.ndarray):
    """Backprop gradients of the mean squared error over the batch."""
    inputs = np.atleast_2d(inputs)
    targets = np.atleast_2d(targets)
    n, out_dim = targets.shape
    last = len(model.weights) - 1
    activations = [inputs]
    h = inputs
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        h = np.tanh(z) if i < last else z
        activations.append(h)
    delta = 2.0 * (activations[-1] - targets) / (n * out_dim)
    g_w = [None] * len(model.weights)
    g_b = [None] * len(model.biases)
    for i in range(last, -1, -1):
        g_w[i] = activations[i].T @ delta
        g_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (1.0 - activations[i] ** 2)
    return g_w, g_b


def train_step(model: LearnedModel, batch, learning_rate: float = LEARNING_RATE):
    """One full-batch gradient step; returns (updated model, post-step loss)."""
    inputs, targets = batch
    if len(inputs) == 0:
        raise InvalidInputError("training batch is empty")
    g_w, g_b = gradients(model, inputs, targets)
    new = model.copy()
    for i in range(len(new.weights)):
        new.weights[i] -= learning_rate * g_w[i]
        new.biases[i] -= learning_rate * g_b[i]
    loss = mse_loss(new, inputs, targets)
    if not np.isfinite(loss):
        raise DivergenceError(f"loss diverged: {loss}")
    return new, loss


def train_to_convergence(
    model: LearnedModel,
    batch,
    learning_rate: float = LEARNING_RATE,
    max_steps: int = 4000,
    patience: int = 200,
    rel_tol: float = 1e-6,
):
    """Run train_step until the loss plateaus; halves the rate on divergence."""
    lr = learning_rate
    best = np.inf
    since_best = 0
    loss = np.inf
    for _ in range(max_steps):
        try:
            model, loss = train_step(model, batch, lr)
        except DivergenceError:
            lr *= 0.5
            continue
        if loss < best * (1.0 - rel_tol):
            best = loss
            since_best = 0
        else:
            since_best += 1
            if since_best >= patience:
                break
    return model, loss


# -- transitions and exploration ------------------------------------------


@dataclass
class TransitionBuffer:
    capacity: int = 10000
    records: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=list)

    def add(self, obs, action, next_obs) -> None:
        if len(self.records) >= self.capacity:
            self.records.pop(0)
        self.records.append(
            (np.asarray(obs, float), np.asarray(action, float), np.asarray(next_obs, float))
        )

    def __len__(self) -> int:
        return len(self.records)

    def batch(self):
        inputs = np.array([np.concatenate([o, a]) for o, a, _ in self.records])
        targets = np.array([o1 for _, _, o1 in self.records])
        return inputs, targets


@dataclass
class ExplorationPrior:
    """A zero-shot trajectory whose noisy neighborhood defines exploration."""

    waypoints: list[Waypoint]
    sigma: float = PRIOR_SIGMA

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidInputError("prior noise scale must be >= 0")
        if not self.waypoints:
            raise InvalidInputError("prior trajectory is empty")

    def __len__(self) -> int:
        return len(self.waypoints)


def sample_action_with_prior(prior: ExplorationPrior, step_index: int, rng) -> np.ndarray:
    """Prior waypoint at the step (clamped past the end) plus position noise."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    wp = prior.waypoints[min(step_index, len(prior.waypoints) - 1)]
    pos = wp.position + rng.normal(0.0, prior.sigma, size=3)
    return np.array([pos[0], pos[1], pos[2], wp.gripper])


def sample_action_uniform(state: WorldState, rng) -> np.ndarray:
    """Uniform over the action space: a bounded waypoint jump and a coin-flip grip."""
    lo = np.asarray(state.spec.world_min) + 0.02
    hi = np.asarray(state.spec.world_max) - 0.02
    pos = np.clip(state.ee_position + rng.uniform(-0.05, 0.05, size=3), lo, hi)
    return np.array([pos[0], pos[1], pos[2], float(rng.integers(2))])


def _action_waypoint(state: WorldState, action: np.ndarray) -> Waypoint:
    return Waypoint(
        position=action[:3],
        rotation=state.ee_quaternion.copy(),
        velocity_scale=1.0,
        gripper=float(round(action[3])),
    )


# -- articulation-task MPC on a learned model ------------------------------


def articulation_cost(task: TaskSpec, obs_batch: np.ndarray) -> np.ndarray:
    """Predicted-task cost: remaining main-joint travel plus handle-press deficit."""
    target = task.goal["open_success"]
    handle_target = 1.1 * 0.45  # press a little past any latch threshold
    main = obs_batch[:, 9]
    handle = obs_batch[:, 8]
    return np.maximum(0.0, target - main) + 0.3 * np.maximum(0.0, handle_target - handle)


def model_mpc_episode(
    task: TaskSpec,
    seed: int,
    model,
    prior: ExplorationPrior | None,
    rng: np.random.Generator,
    buffer: TransitionBuffer | None = None,
    max_steps: int | None = None,
    candidates: int = MPC_CANDIDATES,
):
    """One closed-loop episode choosing actions by predicted cost.

    Candidate actions come from the prior's noisy neighborhood (or uniform
    without one); the model ranks them, the argmin runs in the simulator.
    Transitions are recorded into `buffer` when given.
    """
    state = reset(task, seed)
    steps = max_steps or (len(prior) + 20 if prior is not None else 80)
    for t in range(steps):
        if success_check(task, state):
            return state, True
        obs = observe(state)
        if prior is not None:
            acts = np.array(
                [sample_action_with_prior(prior, t, rng) for _ in range(candidates)]
            )
        else:
            acts = np.array([sample_action_uniform(state, rng) for _ in range(candidates)])
        preds = model.predict_batch(obs, acts)
        costs = articulation_cost(task, preds)
        action = acts[int(np.argmin(costs))]
        state = step_waypoint(state, _action_waypoint(state, action))
        if buffer is not None:
            buffer.add(obs, action, observe(state))
    return state, success_check(task, state)


def evaluate_model(
    task: TaskSpec,
    model,
    priors: list[ExplorationPrior] | None,
    seeds,
    rng_seed: int = 0,
) -> float:
    """Held-out success rate of model-based MPC over a fixed seed list."""
    wins = 0
    for i, seed in enumerate(seeds):
        rng = np.random.default_rng(rng_seed + 7919 * i)
        prior = priors[i % len(priors)] if priors else None
        _, ok = model_mpc_episode(task, seed, model, prior, rng)
        wins += bool(ok)
    return wins / len(seeds)


@dataclass
class OnlineResult:
    model: LearnedModel
    success_rate: float
    interaction_seconds: float
    transitions: int
    exceeded: bool
    curve: list[dict] = field(default_factory=list)


def online_loop(
    task: TaskSpec,
    priors: list[ExplorationPrior] | None,
    transition_budget: int = 300,
    target_success: float = 0.8,
    seed: int = 0,
    episodes_per_round: int = EPISODES_PER_ROUND,
    eval_seeds: int = EVAL_SEEDS,
) -> OnlineResult:
    """Alternate data collection and model fitting until the task is solved.

    Collection rounds run MPC with the prior-biased sampler (uniform when no
    prior is given), the model is refit on the whole buffer, and held-out
    rollouts measure success. Stops at the target rate or when the
    transition budget is exhausted (reported via `exceeded`).
    """
    if "latched" not in task.goal:
        raise InvalidInputError("online learning targets the latched-articulation tasks")
    obs_dim = len(observe(reset(task, seed)))
    model = LearnedModel.create(obs_dim, 4, seed=seed)
    buffer = TransitionBuffer()
    held_out = [seed + 100000 + 13 * i for i in range(eval_seeds)]
    ticks = 0
    curve: list[dict] = []

    success = evaluate_model(task, model, priors, held_out, rng_seed=seed)
    curve.append({"round": 0, "transitions": 0, "loss": float("nan"), "success": success,
                  "seconds": 0.0})
    if transition_budget <= 0:
        return OnlineResult(model, success, 0.0, 0, exceeded=success < target_success,
                            curve=curve)

    rounds = 0
    while success < target_success and len(buffer) < transition_budget:
        rounds += 1
        for e in range(episodes_per_round):
            if len(buffer) >= transition_budget:
                break
            rng = np.random.default_rng(seed + 1000 * rounds + e)
            prior = priors[(rounds * episodes_per_round + e) % len(priors)] if priors else None
            start = len(buffer)
            end_state, _ = model_mpc_episode(
                task, seed + 50 * rounds + e, model, prior, rng, buffer=buffer
            )
            ticks += len(buffer) - start
        model, loss = train_to_convergence(model, buffer.batch())
        success = evaluate_model(task, model, priors, held_out, rng_seed=seed + rounds)
        curve.append(
            {
                "round": rounds,
                "transitions": len(buffer),
                "loss": loss,
                "success": success,
                "seconds": ticks * TICK_SECONDS,
            }
        )
    exceeded = success < target_success
    return OnlineResult(
        model=model,
        success_rate=success,
        interaction_seconds=ticks * TICK_SECONDS,
        transitions=len(buffer),
        exceeded=exceeded,
        curve=curve,
    )


def write_curve_csv(result: OnlineResult, path) -> None:
    lines = ["round,transitions,loss,success_rate,sim_seconds"]
    for row in result.curve:
        lines.append(
            f"{row['round']},{row['transitions']},{row['loss']:.8g},"
            f"{row['success']:.4f},{row['seconds']:.2f}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def synthesize_priors(task: TaskSpec, count: int = PRIOR_COUNT, base_seed: int = 0,
                      sigma: float = PRIOR_SIGMA) -> list[ExplorationPrior]:
    """Zero-shot trajectory priors: fixture-pipeline rollouts recorded per tick."""
    from .lmp.pipeline import LmpSession, run_instruction

    priors = []
    for k in range(count):
        state = reset(task, base_seed + k)
        session = LmpSession.fixture_mode(task)
        trace = run_instruction(session, state, task.instruction).trace
        wps = [
            Waypoint(position=np.asarray(r["ee"]), gripper=float(r["gripper"]))
            for r in trace.ticks()
        ]
        if not wps:
            wps = [state.ee_pose()]
        priors.append(ExplorationPrior(waypoints=wps, sigma=sigma))
    return priors
