"""
What each glocal channel sees
=============================

Every sentence is conditioned on a vector mixing two channels: the
bidirectional encoder's output for its image (story context) and the image
feature itself. Switching a channel off removes it from the concatenation,
so the result stops depending on that input at all.
"""

import numpy as np

from glacnet.autodiff import Tensor
from glacnet.glocal import EncoderConfig, GlocalParams, build_glocal
from glacnet.recurrent import LstmParams, encode_bidirectional

rng = np.random.default_rng(0)
d, h, g, n_images = 8, 6, 5, 4
fwd, bwd = LstmParams.init(d, h, rng), LstmParams.init(d, h, rng)
story = rng.standard_normal((n_images, 1, d))


def glocal_vectors(features, **flags):
    cfg = EncoderConfig(feature_dim=d, hidden_size=h, glocal_dim=g, dropout=0.0, **flags)
    params = GlocalParams.init(cfg.concat_width, g, np.random.default_rng(1))
    images = [Tensor(f) for f in features]
    context = encode_bidirectional(images, fwd, bwd)
    return np.stack([v.values.data[0] for v in build_glocal(images, context, params, cfg, False)])


# Change only the last image and see which sentences' vectors move.
edited = story.copy()
edited[-1] += 1.0
for flags in ({}, {"use_global": False}, {"use_local": False}):
    moved = np.abs(glocal_vectors(edited, **flags) - glocal_vectors(story, **flags)).max(axis=1)
    label = ", ".join(f"{k}={v}" for k, v in flags.items()) or "full"
    print(f"{label:18s} change per sentence: " + " ".join(f"{m:.3f}" for m in moved))

# With the global channel off, only the last sentence reacts: each vector now
# sees its own image and nothing else.
