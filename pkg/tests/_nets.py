"""Small randomized networks shared by several test modules."""

import numpy as np

from mhrstyle import numeric
from mhrstyle.policy import NetConfig, PolicyNet

TINY = NetConfig(input_dim=6, width=8, blocks=2, hidden=8, rank=2, modules=3, heads=2)


def randomized_net(cfg=TINY, seed=0, rows=3, dtype=np.float64):
    """Net with nonzero adapters and ``rows`` random routing rows."""
    g = np.random.default_rng(seed)
    net = PolicyNet.create(cfg, np.random.default_rng(seed), np.random.default_rng(seed + 1), dtype=dtype)
    for n in net.params.names("adapter"):
        net.params.params[n] = (0.3 * g.standard_normal(net.params[n].shape)).astype(dtype)
    net.params.params["routing"] = g.standard_normal((rows, cfg.modules, cfg.heads)).astype(dtype)
    net.routing_ids = list(range(rows))
    return net


def loss_and_grads(net, x, y, style):
    def f(_store):
        logits, cache = net.forward(x, style, keep_cache=True)
        loss, d = numeric.cross_entropy_with_grad(logits, y)
        return loss, net.backward(cache, d)
    return f
