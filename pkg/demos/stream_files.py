# Write a stream to the binary format, read it back, run from the file and
# audit the run against the reference oracles.

import os
import tempfile

import numpy as np

from eventforest.harness import RunConfig, read_stream, run, validate, write_stream
from eventforest.harness.streamio import read_header, write_truth
from eventforest.synth import StreamSpec, generate

spec = StreamSpec(seed=1, num_events=10, d=16, tokens_per_frame=32)
times, frames, truth = generate(spec)

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "demo.evm")
    write_stream(path, times, frames)
    write_truth(path, truth)
    print("header (frames, tokens, dim):", read_header(path), os.path.getsize(path), "bytes")

    t2, f2 = read_stream(path)
    print("bit-exact:", t2.tobytes() == times.tobytes() and f2.tobytes() == frames.tobytes())

    cfg = RunConfig(stream=path, budget=600, shortterm_frames=4, shortterm_tokens=8)
    rec = run(cfg)
    print("ratio", round(rec.compression_ratio, 4), "recall", rec.event_recall)
    print("retention", np.round(rec.retention_curve, 3))

    print(validate(cfg).to_text())
