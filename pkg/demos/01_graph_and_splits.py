# Build a dynamic graph from an event file, inspect the time-sorted
# adjacency, and carve chronological splits.

import tempfile
from pathlib import Path

import numpy as np

from tgadapt import chronological_split, ingest_events, temporal_neighborhood_size

# a tiny interaction stream: src,dst,ts[,edge features...]
events = """\
0,1,1.0,0.10
1,2,2.0,0.20
0,2,3.0,0.30
2,3,4.0,0.40
0,1,5.0,0.50
3,1,6.0,0.60
"""

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "events.csv"
    path.write_text(events)
    g = ingest_events(path)

print(f"nodes={g.num_nodes} events={g.num_events} d_e={g.d_e}")

# every event shows up in both endpoints' adjacency, sorted by time
for v in range(g.num_nodes):
    nbrs, ts, eids = g.adjacency(v)
    print(f"node {v}: " + ", ".join(f"({u} @ {t:g}, e{e})"
                                    for u, t, e in zip(nbrs, ts, eids)))

# temporal neighborhoods are strict predecessors in time
print("\n|N(1, t)| as t grows:",
      [temporal_neighborhood_size(g, 1, t) for t in np.arange(0.0, 8.0)])

split = chronological_split(g, (0.6, 0.2, 0.2))
print(f"\nsplit: train {split.train_range}, val {split.val_range}, "
      f"test {split.test_range}")
