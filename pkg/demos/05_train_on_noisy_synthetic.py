# End to end on a small noisy synthetic graph: compare the plain
# chronological/uniform baseline with the two adaptive switches.
# Takes a couple of minutes on one core.

import numpy as np

from tgadapt.graph import chronological_split
from tgadapt.synth import SynthConfig, generate
from tgadapt.training import RunConfig, Trainer

g, labels = generate(SynthConfig(nodes=1500, events=30_000, communities=8,
                                 deprecated_prob=0.1, migrate_frac=0.6,
                                 skew=1.2, seed=5))
print(f"graph: {g.num_nodes} nodes, {g.num_events} events, "
      f"{labels['noise'].mean():.0%} injected noise, "
      f"{labels['migrated'].mean():.0%} migrated nodes")


def train(adaptive_minibatch, adaptive_neighbor):
    cfg = RunConfig(aggregator="graphmixer", finder_policy="uniform",
                    decoder="gatv2", m=15, n=6, batch_size=300, epochs=8,
                    lr=3e-3, sampler_lr=1e-3, hidden=16, enc_dim=8,
                    model_time_dim=16, window=9000, precision="float32",
                    adaptive_minibatch=adaptive_minibatch,
                    adaptive_neighbor=adaptive_neighbor, seeds=(0,))
    split = chronological_split(g, cfg.split_ratios, cfg.window)
    tr = Trainer(g, split, cfg, seed=0)
    for _ in range(cfg.epochs):
        loss = tr.train_epoch()
    mrr = tr.evaluate(split.test_eids(), eval_code=1)
    return loss, mrr


print("\narm                  loss    test MRR")
for name, (mb, nb) in {"baseline": (False, False),
                       "adaptive batches": (True, False),
                       "adaptive neighbors": (False, True),
                       "both": (True, True)}.items():
    loss, mrr = train(mb, nb)
    print(f"{name:20s} {loss:.4f}  {mrr:.4f}")
