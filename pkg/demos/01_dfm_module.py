"""Walk through the dual-attention focused module on a hand-made feature map.

Run with ``python3 demos/01_dfm_module.py``; each ``# %%`` block is a cell.
"""

# %%
import numpy as np

from dfm_wsol.dfm import DfmConfig, channel_mask, dfm_forward, focus_delta, fuse, position_mask
from dfm_wsol.tensor_core import RngStream, cap, gap

np.set_printoptions(precision=2, suppress=True)

# %% [markdown]
# A 4-channel 6x6 feature map with one hot spot.  Channel 2 responds
# strongly there, so it is the "most discriminative" channel, and the
# spot is the most discriminative position.

# %%
F = np.full((4, 6, 6), 0.2)
F[2, 2:4, 2:4] = 3.0
F[0, 1:5, 1:5] += 0.5
cfg = DfmConfig()

C_A, P_A = gap(F), cap(F)
print("channel attention:", C_A)
print("position attention:\n", P_A)

# %% [markdown]
# Mask maps zero out everything that reaches the threshold fraction of the
# peak.  With alpha = 0.85 only channel 2 is erased; with beta = 0.95 only
# the four hot cells are.

# %%
C_M = channel_mask(C_A, cfg.alpha)
P_M_raw = position_mask(P_A, cfg.beta)
print("channel mask:", C_M)
print("position mask:\n", P_M_raw)

# %% [markdown]
# The neighbour focused matrix puts omega on the ring of cells around the
# erased region, nudging the network toward the object's surroundings.

# %%
print("focus delta:\n", focus_delta(P_M_raw, cfg.omega))
P_M = P_M_raw + focus_delta(P_M_raw, cfg.omega)

# %% [markdown]
# Cross fusion: each mask is softened with the *other* branch's enhancement
# map, so erasing never removes all information.

# %%
C_E, P_E = np.tanh(C_A), np.tanh(P_A)
C_ME, P_ME = fuse(C_M, P_E, C_E, P_M, cfg, *F.shape)
print("fused channel map, channel 2:\n", C_ME[2])
print("fused position map, channel 0:\n", P_ME[0])

# %% [markdown]
# One forward call picks the position branch with probability tau.  In
# eval mode the module is an identity.

# %%
rng = RngStream(0, "dfm-select")
picks = [dfm_forward(F, cfg, rng)[1].selected_branch for _ in range(1000)]
print("position branch share:", picks.count("position") / 1000)
out, _ = dfm_forward(F, cfg, rng, mode="eval")
print("eval output equals input:", np.array_equal(out, F))
