# Run the forest and the four baselines in lockstep on one stream and print
# the comparison table: compression, event recall and retention by time bucket.

from eventforest.baselines import PolicyKind
from eventforest.harness import RunConfig, compare

base = RunConfig(seed=3, num_events=20, budget=8192)
table = compare([base.replace(policy=k.value) for k in PolicyKind])
print(table.to_text())

# the similarity-only forest and the similarity_merge baseline make the same merges
same = compare([base.replace(w_s=1.0, w_m=0.0, w_t=0.0), base.replace(policy="similarity_merge")])
a, b = (r.to_dict(timing=False) for r in same.records)
a.pop("policy"), b.pop("policy"), a.pop("weights"), b.pop("weights")
print("pemf(1,0,0) == similarity_merge:", a == b)

# a tighter window leaves more room for memory
for frames in (18, 8, 4):
    rec = compare([base.replace(shortterm_frames=frames)]).records[0]
    print(f"shortterm_frames={frames:2d} forest budget {rec.forest_budget:5d} recall {rec.event_recall:.2f}")
