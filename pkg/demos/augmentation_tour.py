"""
Strong augmentation for IQ samples
==================================

A composite draw picks one rotation or flip and then shuffles a few
contiguous segments of the sample.
"""
import numpy as np

from sscsr.augment import AugmentConfig, apply_transform, composite_augment, flip_h, flip_v, permute_segments

s = np.array([1 + 2j, 3 - 1j, -2 + 0.5j, 0.25 - 4j, 1j])

#%%
# Quarter-turn rotations are exact, and four of them are the identity.
r = s
for _ in range(4):
    r = apply_transform(r, "rot90")
print("rot90^4 == identity:", np.array_equal(r, s))

#%%
# Horizontal then vertical flip is the same as a half-turn.
print(flip_h(flip_v(s)))
print(apply_transform(s, "rot180"))

#%%
# Five samples cut into three segments: the first 5 mod 3 = 2 segments get
# the extra element, so the pieces are [0:2], [2:4], [4:5].
print(permute_segments(np.arange(5), 3, order=[2, 0, 1]))

#%%
# The default draw uses the four rotations and two segments.  For
# modulation recognition the six-transform, 64-segment preset is available.
rng = np.random.default_rng(0)
cfg = AugmentConfig()
for _ in range(3):
    print(np.round(composite_augment(s, cfg, rng), 2))
print(AugmentConfig.modulation_preset())
