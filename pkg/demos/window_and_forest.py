# Feed a synthetic stream through the short-term window and a memory forest,
# then look at what survives under a tight token budget.

import numpy as np

from eventforest import MemoryForest, PenaltyWeights, StreamSpec, TokenMatrix, Window, WindowConfig, generate, snapshot

spec = StreamSpec(seed=7, num_events=12, d=32, tokens_per_frame=64)
times, frames, truth = generate(spec)
print("frames", frames.shape, "events", len(truth.event_spans))

# realtime frame at full size, 6 queued frames pooled to 16 tokens each
window = Window(WindowConfig(realtime_tokens=64, shortterm_frames=6, shortterm_tokens_per_frame=16))
forest = MemoryForest(budget=256, weights=PenaltyWeights(0.4, 0.4, 0.2))

for t, f in zip(times, frames):
    for node in window.ingest(TokenMatrix.from_array(f), float(t)):
        merges = forest.insert(node, float(t))
        if merges:
            print(f"t={t:5.0f}  node {node.span} in, {len(merges)} merge(s), roots {len(forest)}")

snap = snapshot(forest, window)
print("snapshot tokens", snap.n_tokens, "of", frames.shape[0] * frames.shape[1])

# each root: time span, timestamp, token count, how often it was merged
for root in forest.roots:
    print(f"{root.span[0]:5.0f}-{root.span[1]:<5.0f} t={root.timestamp:7.2f} n={root.n:3d} c={root.merge_count}")

# the true event boundaries for comparison
print("boundaries", truth.boundaries)

# penalty breakdown of every adjacent pair right now
for k, s in enumerate(forest.pair_scores()):
    print(k, np.round([s.p_s, s.p_m, s.p_t, s.total], 3))
