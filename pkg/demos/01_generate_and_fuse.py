"""
Generating reports and fusing them
==================================

Twenty sensors watch a binary state for four time steps. Each one is
Byzantine with probability 0.3; honest sensors misreport with
probability 0.1 and Byzantine sensors flip what they see.
"""
import numpy as np

from byzfuse import ChannelParams, IIDPrior, IndependentAlpha, ScenarioConfig, Unsynchronized, classic
from byzfuse.genesis import Rng, generate_sample

config = ScenarioConfig(
    n=20, m=4,
    state_prior=IIDPrior(0.5),
    honesty_model=IndependentAlpha(0.3),
    attack_mode=Unsynchronized(),
    channel=ChannelParams(epsilon=0.1, p_mal=1.0, flip_noisy_observation=True),
    label="demo",
)

# every draw comes from a seeded stream, so this sample is always the same
sample = generate_sample(config, Rng(2024))
print("true state     ", sample.truth.bits)
print("reports (rows are time steps, columns are sensors)")
print(sample.reports.entries)

# %%
# Majority voting looks at each time step on its own. The MAP rule scores
# all 16 candidate state vectors jointly, averaging over who might be lying.
maj = classic.majority_fuse(sample.reports, config.state_prior)
opt = classic.map_fuse(sample.reports, config.state_prior, config.honesty_model, config.channel)
print("majority       ", maj.estimate.bits, np.round(maj.scores, 2))
print("MAP            ", opt.estimate.bits, np.round(opt.scores, 2))
print("MAP log posterior of its choice: %.3f" % opt.log_objective)
