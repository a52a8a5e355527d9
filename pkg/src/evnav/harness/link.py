"""Lossy command link with latency, jitter and in-order delivery."""
from __future__ import annotations

import numpy as np


class LinkModel:
    def __init__(self, latency_mean: float, latency_jitter_std: float, drop_probability: float,
                 rng: np.random.Generator):
        if not 0 <= drop_probability <= 1:
            raise ValueError("drop probability must lie in [0, 1]")
        self.latency_mean = float(latency_mean)
        self.latency_jitter_std = float(latency_jitter_std)
        self.drop_probability = float(drop_probability)
        self.rng = rng
        self.last_send = -np.inf
        self.last_delivery = -np.inf

    @classmethod
    def from_config(cls, cfg, rng):
        return cls(cfg.latency_mean, cfg.latency_jitter_std, cfg.drop_probability, rng)


def link_send(link: LinkModel, message, t_send: float):
    """``(message, t_deliver)`` or ``None`` when the message is dropped.

    Both random draws happen for every message so the stream of draws does
    not depend on outcomes. Delivery times never decrease.
    """
    if t_send < link.last_send:
        raise ValueError("messages must be sent in time order")
    link.last_send = t_send
    u = link.rng.random()
    jitter = link.rng.normal(0.0, 1.0) * link.latency_jitter_std
    if u < link.drop_probability:
        return None
    t_deliver = max(t_send + max(0.0, link.latency_mean + jitter), link.last_delivery)
    link.last_delivery = t_deliver
    return message, t_deliver
