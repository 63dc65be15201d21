"""
Training the fusion network
===========================

A small fully connected network learns to map a flattened 4 x 20 report
matrix to the four state bits. Within one class the Byzantine sensors
stay the same, so the network can learn who to distrust.
"""
import tempfile
from pathlib import Path

from byzfuse import ChannelParams, IIDPrior, IndependentAlpha, ScenarioConfig, Unsynchronized, neural
from byzfuse.genesis import Rng, build_dataset, split_dataset
from byzfuse.metrics import evaluate

config = ScenarioConfig(20, 4, IIDPrior(), IndependentAlpha(0.3), Unsynchronized(),
                        ChannelParams(0.1, 1.0, True), label="alpha0.3", honesty_scope="class")
data = build_dataset([config], samples_per_class=200, master_seed=1)
train, test = split_dataset(data, 0.8, Rng(1).fork(0))

spec = neural.NetworkSpec.for_window(20, 4, hidden_sizes=(256, 128, 64), seed=0)
params, history = neural.train(train, spec, neural.TrainConfig(epochs=150, early_stop_loss=1e-4))
print(f"{len(history)} epochs, final training loss {history.losses[-1]:.5f}")

x, y = test.arrays()
est, _ = neural.predict_batch(params, x)
print("test metrics:", evaluate(est, y.astype(int)).to_dict())

# %%
# Checkpoints are plain JSON with exact hexadecimal floats.
with tempfile.TemporaryDirectory() as tmp:
    path = neural.save_checkpoint(params, Path(tmp) / "fusion.json")
    print("round trip exact:", neural.load_checkpoint(path).equals(params))

# %%
# The backward pass agrees with finite differences.
check = neural.gradient_check(neural.NetworkSpec(input_size=12, hidden_sizes=(10, 8), output_size=3))
print("gradient check worst relative error: %.2e" % check.worst)
