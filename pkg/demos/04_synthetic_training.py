"""Desk-scale training on synthetic class-conditioned pyramids.

Generates a small labeled dataset (Gaussian class blobs plus noise, shared
across modalities), trains the full stack for a few epochs, and evaluates
held-out accuracy. Takes ~20 s on a laptop CPU.
"""
from gaitfuse import REDUCED_DIMS, SynthConfig, TrainConfig, evaluate, gen_dataset, \
    init_fusion_params, split_dataset, train_head

data = gen_dataset(SynthConfig(n_per_class=60, seed=5))
train_set, val_set = split_dataset(data, val_fraction=0.2, seed=7)
print(f"dataset: {len(train_set)} train / {len(val_set)} held out")

params = init_fusion_params(REDUCED_DIMS, d_e=32, seed=0)
cfg = TrainConfig(epochs=6, lr=5e-4, batch_size=16, seed=0)
trained, log = train_head(train_set, val_set, params, cfg)

for rec in log:
    print(f"  epoch {rec['epoch']} {rec['split']:<5} "
          f"loss {rec['loss']:.4f}  acc {rec['accuracy']:.3f}  lr {rec['lr']:.2e}")

loss, acc = evaluate(val_set, trained)
print(f"held-out: loss {loss:.4f}, accuracy {acc:.3f}")
