"""Scratch probe: desk-scale criterion with the acceptance seeds."""
import time

import numpy as np

from rhythmnet.data import annotations_to_grid
from rhythmnet.metrics import sequence_scores, set_scores
from rhythmnet.network import NetworkConfig, build, predict_record, trainable_names
from rhythmnet.optim import init_adam
from rhythmnet.rng import derive
from rhythmnet.synth import SynthConfig, synth_generate
from rhythmnet.training import prepare_records, split_by_patient, train_epoch

records = synth_generate(SynthConfig(
    seed=77, records_per_class=60, classes=("SINUS", "AFIB", "VT", "NOISE")))
train_records, val_records = split_by_patient(records, val_fraction=40 / 240,
                                              seed=77)
print(f"train {len(train_records)} val {len(val_records)}")
cfg = NetworkConfig(residual_blocks=4, base_filters=16, widen_every=4,
                    subsample_every=2)
params, _ = build(cfg, derive(8, "desk"))
cache = prepare_records(train_records, cfg)
val_truths = [annotations_to_grid(r, stride=cfg.output_stride)
              for r in val_records]
state = init_adam(params, trainable_names(params), lr=0.001)

t0 = time.time()
for epoch in range(1, 200):
    loss = train_epoch(params, cfg, cache, 32, state,
                       derive(8, "shuffle", epoch), derive(8, "drop", epoch))
    if epoch % 5 == 0:
        snap = {k: v.copy() for k, v in params.items()}
        preds = [predict_record(params, cfg, r.samples) for r in val_records]
        params.update(snap)
        _, seq = sequence_scores(preds, val_truths)
        _, st = set_scores(preds, val_truths)
        print(f"epoch {epoch:3d} loss {loss:.4f} seqF1 {seq.f1:.4f} "
              f"setF1 {st.f1:.4f} ({time.time()-t0:.0f}s)", flush=True)
        if seq.f1 >= 0.90 and st.f1 >= 0.95:
            print("TARGET REACHED", flush=True)
            break
print(f"total {time.time()-t0:.0f}s")
