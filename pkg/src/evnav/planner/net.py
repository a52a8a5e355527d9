"""Small fully-connected planner network and its flat CSV parameter format."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import torch
from torch import nn

LAYER_SIZES = (7, 32, 32, 3)
PARAM_NAMES = ("l1.weight", "l1.bias", "l2.weight", "l2.bias", "l3.weight", "l3.bias")


class PlannerNet(nn.Module):
    """7 -> 32 -> 32 -> 3 tanh MLP with constrained heads.

    Outputs the traversal time ``T = t_min + softplus(raw0)`` and the crossing
    offset ``r_margin * r / sqrt(1 + |r|^2)`` with ``r = (raw1, raw2)``, in
    ring-plane coordinates. The radial squashing keeps the offset inside the
    open disk of radius ``r_margin`` (a per-component tanh would only bound it
    to a square).
    """

    def __init__(self, seed: int = 0, t_min: float = 0.5, r_margin: float = 0.25,
                 sizes=LAYER_SIZES):
        super().__init__()
        self.seed = int(seed)
        self.t_min = float(t_min)
        self.r_margin = float(r_margin)
        self.sizes = tuple(sizes)
        n_in, h1, h2, n_out = self.sizes
        self.l1 = nn.Linear(n_in, h1, dtype=torch.float64)
        self.l2 = nn.Linear(h1, h2, dtype=torch.float64)
        self.l3 = nn.Linear(h2, n_out, dtype=torch.float64)
        self.reinitialize(seed)

    def reinitialize(self, seed: int):
        """Uniform(+-1/sqrt(fan_in)) weights and biases drawn from a numpy stream."""
        rng = np.random.default_rng(seed)
        with torch.no_grad():
            for layer in (self.l1, self.l2, self.l3):
                bound = 1.0 / math.sqrt(layer.in_features)
                layer.weight.copy_(torch.from_numpy(rng.uniform(-bound, bound, tuple(layer.weight.shape))))
                layer.bias.copy_(torch.from_numpy(rng.uniform(-bound, bound, tuple(layer.bias.shape))))
        self.seed = int(seed)

    def raw(self, x: torch.Tensor) -> torch.Tensor:
        h = torch.tanh(self.l1(x))
        h = torch.tanh(self.l2(h))
        return self.l3(h)

    def heads(self, raw: torch.Tensor):
        T = self.t_min + nn.functional.softplus(raw[..., 0])
        r = raw[..., 1:3]
        offset = self.r_margin * r / torch.sqrt(1.0 + (r * r).sum(-1, keepdim=True))
        return T, offset

    def forward(self, x: torch.Tensor):
        return self.heads(self.raw(x))

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.detach().numpy().ravel() for p in self.parameters()])


def forward_numpy(net: PlannerNet, features) -> tuple[float, np.ndarray]:
    """Evaluate the network on one feature vector without building a graph."""
    with torch.no_grad():
        T, off = net(torch.as_tensor(np.asarray(features, dtype=float)))
    return float(T), off.numpy().copy()


def save_params(net: PlannerNet, path) -> None:
    """Write parameters as ``layer,index,value`` rows with a commented header."""
    lines = [f"# sizes={','.join(str(s) for s in net.sizes)}",
             f"# seed={net.seed}",
             f"# t_min={net.t_min!r}",
             f"# r_margin={net.r_margin!r}",
             "layer,index,value"]
    for name, p in zip(PARAM_NAMES, net.parameters()):
        for i, v in enumerate(p.detach().numpy().ravel()):
            lines.append(f"{name},{i},{float(v)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_params(path) -> PlannerNet:
    meta, rows = {}, {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
                continue
            if line == "layer,index,value":
                continue
            name, idx, value = line.split(",")
            rows.setdefault(name, []).append((int(idx), float(value)))
    try:
        sizes = tuple(int(s) for s in meta["sizes"].split(","))
        net = PlannerNet(seed=int(meta.get("seed", 0)), t_min=float(meta.get("t_min", 0.5)),
                         r_margin=float(meta.get("r_margin", 0.25)), sizes=sizes)
    except (KeyError, ValueError) as exc:
        raise ValueError(f"malformed parameter header in {path}") from exc
    with torch.no_grad():
        for name, p in zip(PARAM_NAMES, net.parameters()):
            entries = sorted(rows.get(name, []))
            if [i for i, _ in entries] != list(range(p.numel())):
                raise ValueError(f"parameter {name} incomplete in {path}")
            p.copy_(torch.tensor([v for _, v in entries], dtype=torch.float64).reshape(p.shape))
    return net


def default_params_path() -> Path:
    return Path(__file__).with_name("default_params.csv")


def load_default() -> PlannerNet:
    return load_params(default_params_path())
