"""Scenario sampling, gradient-descent training and gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..dynamics import QuadParams
from ..errors import TrainingFailure
from ..world import RingSpec
from .features import FeatureNorms
from .loss import LossWeights, batch_loss
from .net import PlannerNet
from .trajectory import PlannerConfig, build_batch


@dataclass
class Scenarios:
    """Batch of (drone state, ring state) training pairs, ground truth."""

    p0: np.ndarray  # (B, 3)
    v0: np.ndarray  # (B, 3)
    ring_s: np.ndarray  # (B,)
    ring_vs: np.ndarray  # (B,)

    def __len__(self):
        return len(self.ring_s)

    def subset(self, idx) -> "Scenarios":
        return Scenarios(self.p0[idx], self.v0[idx], self.ring_s[idx], self.ring_vs[idx])


@dataclass(frozen=True)
class ScenarioBounds:
    drone_low: tuple = (-1.0, -2.0, 1.2)
    drone_high: tuple = (1.0, -1.0, 1.8)
    drone_speed: float = 0.2
    ring_s: tuple = (0.5, 3.5)
    ring_speed: float = 0.5


def sample_scenarios(seed: int, n: int, bounds: ScenarioBounds = ScenarioBounds()) -> Scenarios:
    rng = np.random.default_rng(seed)
    p0 = rng.uniform(bounds.drone_low, bounds.drone_high, (n, 3))
    v0 = rng.uniform(-bounds.drone_speed, bounds.drone_speed, (n, 3))
    ring_s = rng.uniform(*bounds.ring_s, n)
    ring_vs = rng.uniform(-bounds.ring_speed, bounds.ring_speed, n)
    return Scenarios(p0, v0, ring_s, ring_vs)


def scenario_features(sc: Scenarios, spec: RingSpec, norms: FeatureNorms = FeatureNorms()) -> torch.Tensor:
    """Normalized features for heading-zero drones (yaw frame equals world)."""
    ring_pos = spec.rail_start + sc.ring_s[:, None] * spec.direction
    raw = np.concatenate([ring_pos - sc.p0, sc.ring_vs[:, None], sc.v0], axis=1)
    scale = np.array([norms.position] * 3 + [norms.rail_speed] + [norms.velocity] * 3)
    return torch.from_numpy(raw / scale)


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    epochs: int = 200
    batch_size: int = 64
    batches_per_epoch: int = 10
    learning_rate: float = 1e-3
    heldout_seed: int = 10_001
    heldout_size: int = 256
    divergence_factor: float = 1e3


@dataclass
class Problem:
    """Everything besides the network needed to evaluate the loss."""

    spec: RingSpec = field(default_factory=RingSpec)
    params: QuadParams = field(default_factory=QuadParams)
    cfg: PlannerConfig = field(default_factory=PlannerConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    norms: FeatureNorms = field(default_factory=FeatureNorms)


def scenario_losses(net: PlannerNet, sc: Scenarios, problem: Problem) -> torch.Tensor:
    """Per-scenario loss (B,), differentiable w.r.t. the network parameters."""
    x = scenario_features(sc, problem.spec, problem.norms)
    T, offset = net(x)
    t = torch.from_numpy
    batch = build_batch(t(sc.p0), t(sc.v0), torch.zeros(len(sc), 3, dtype=torch.float64),
                        t(sc.ring_s), t(sc.ring_vs), T, offset, problem.spec, problem.cfg)
    return batch_loss(batch, problem.spec, problem.params, problem.cfg, problem.weights)


def mean_loss(net: PlannerNet, sc: Scenarios, problem: Problem) -> float:
    with torch.no_grad():
        return float(scenario_losses(net, sc, problem).mean())


@dataclass
class TrainResult:
    net: PlannerNet
    history: list  # mean training loss per epoch
    initial_heldout: float
    final_heldout: float


def smoothed(history, window: int = 10) -> np.ndarray:
    h = np.asarray(history, dtype=float)
    if len(h) < window:
        return h.copy()
    return np.convolve(h, np.ones(window) / window, mode="valid")


def train(net: PlannerNet, problem: Problem = None, tc: TrainConfig = TrainConfig(), progress=None) -> TrainResult:
    """Mini-batch Adam on the mean loss over a fixed seeded scenario set.

    Gradients come from reverse-mode autodiff through heads, trajectory
    construction and quadrature. ``history`` holds one mean loss per epoch.
    """
    problem = problem or Problem()
    n = tc.batch_size * tc.batches_per_epoch
    data = sample_scenarios(tc.seed, n)
    heldout = sample_scenarios(tc.heldout_seed, tc.heldout_size)
    initial_heldout = mean_loss(net, heldout, problem)
    order_rng = np.random.default_rng(tc.seed + 1)
    opt = torch.optim.Adam(net.parameters(), lr=tc.learning_rate)
    history = []
    reference = None
    for epoch in range(tc.epochs):
        perm = order_rng.permutation(n)
        total = 0.0
        for b in range(tc.batches_per_epoch):
            idx = perm[b * tc.batch_size:(b + 1) * tc.batch_size]
            loss = scenario_losses(net, data.subset(idx), problem).mean()
            value = float(loss.detach())
            if reference is None:
                reference = value
            if not np.isfinite(value) or value > tc.divergence_factor * reference:
                history.append(value)
                raise TrainingFailure(f"loss diverged at epoch {epoch}: {value:.3g}", history)
            if tc.learning_rate > 0:
                opt.zero_grad()
                loss.backward()
                opt.step()
            total += value
        history.append(total / tc.batches_per_epoch)
        if progress is not None:
            progress(epoch, history[-1])
    return TrainResult(net, history, initial_heldout, mean_loss(net, heldout, problem))


def check_gradients(loss_fn, params, epsilon: float = 1e-4, n_checks: int = 100, seed: int = 0,
                    floor: float = 1e-8) -> float:
    """Max relative error between autograd and central differences.

    ``loss_fn()`` must evaluate a scalar tensor from ``params`` (a list of
    leaf tensors). ``n_checks`` flat parameter indices are drawn uniformly.
    The relative error is ``|g_a - g_n| / max(|g_a|, |g_n|, floor)``.
    """
    params = list(params)
    for p in params:
        p.grad = None
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params)
    sizes = [p.numel() for p in params]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(n_checks, total), replace=False)
    offsets = np.cumsum([0] + sizes)
    worst = 0.0
    with torch.no_grad():
        for k in picks:
            j = int(np.searchsorted(offsets, k, side="right") - 1)
            i = int(k - offsets[j])
            flat = params[j].view(-1)
            old = float(flat[i])
            flat[i] = old + epsilon
            up = float(loss_fn())
            flat[i] = old - epsilon
            down = float(loss_fn())
            flat[i] = old
            numeric = (up - down) / (2 * epsilon)
            analytic = float(grads[j].view(-1)[i])
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            worst = max(worst, err)
    return worst


def gradient_check(net: PlannerNet, scenario: Scenarios, epsilon: float = 1e-4, n_checks: int = 100,
                   seed: int = 0, problem: Problem = None) -> float:
    """Check d(mean loss)/d(parameters) of ``net`` on ``scenario``."""
    problem = problem or Problem()
    return check_gradients(lambda: scenario_losses(net, scenario, problem).mean(),
                           list(net.parameters()), epsilon, n_checks, seed)
