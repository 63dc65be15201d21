"""
How much does joint decoding buy?
=================================

Estimate the per-bit error of four fusion rules by Monte Carlo as the
fraction of Byzantine sensors grows.
"""
from byzfuse import ChannelParams, IIDPrior, IndependentAlpha, ScenarioConfig, Unsynchronized, classic, evaluate
from byzfuse.genesis import Rng, generate_batch

channel = ChannelParams(0.1, 1.0, flip_noisy_observation=True)
prior = IIDPrior()
draws = 5_000

print(" alpha     maj   hardis  softis     opt")
for i, alpha in enumerate((0.1, 0.2, 0.3, 0.4)):
    config = ScenarioConfig(20, 4, prior, IndependentAlpha(alpha), Unsynchronized(), channel)
    truth, reports = generate_batch(config, draws, Rng(7).fork(i))
    estimates = {
        "maj": classic.majority_batch(reports, prior)[0],
        "hardis": classic.hardis_batch(reports, prior, channel)[0],
        "softis": classic.softis_batch(reports, prior, channel, alpha)[0],
        "opt": classic.map_batch(reports, prior, config.honesty_model, channel)[0],
    }
    errs = [evaluate(est, truth).per_bit_error for est in estimates.values()]
    print(f"{alpha:6.2f}" + "".join(f"{e:8.4f}" for e in errs))

# %%
# Isolation helps a little; the MAP rule helps most because it uses the
# whole window to work out which sensors are lying.
