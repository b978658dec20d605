"""Scratch probe: does the full default net overfit 16 records in budget?"""
import time

import numpy as np

from rhythmnet.data import annotations_to_grid
from rhythmnet.network import NetworkConfig, build, predict_record, trainable_names
from rhythmnet.optim import init_adam
from rhythmnet.rng import derive
from rhythmnet.synth import SynthConfig, synth_generate
from rhythmnet.training import prepare_records, train_epoch

cfg = NetworkConfig()
records = synth_generate(SynthConfig(seed=42, records_per_class=2))[:16]
print("classes:", sorted({seg[2].name for r in records for seg in r.annotations}))
params, _ = build(cfg, derive(7, "overfit"))
cache = prepare_records(records, cfg)
truths = [annotations_to_grid(r, stride=cfg.output_stride) for r in records]
state = init_adam(params, trainable_names(params), lr=0.001)

t0 = time.time()
for epoch in range(1, 301):
    loss = train_epoch(params, cfg, cache, 16, state,
                       derive(7, "shuffle", epoch), derive(7, "drop", epoch))
    if epoch % 5 == 0 or epoch <= 2:
        snap = {k: v.copy() for k, v in params.items()}
        correct = total = 0
        for rec, truth in zip(records, truths):
            grid = predict_record(params, cfg, rec.samples)
            correct += (grid == truth).sum()
            total += len(truth)
        params.update(snap)
        acc = correct / total
        print(f"epoch {epoch:3d} loss {loss:.4f} acc {acc:.4f} "
              f"({time.time()-t0:.0f}s)", flush=True)
        if acc >= 0.99:
            print("TARGET REACHED", flush=True)
            break
print(f"total {time.time()-t0:.0f}s")
