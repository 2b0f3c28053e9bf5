"""
Discouraging repeated words
===========================

During generation a content word already used c times in the story has its
probability divided by 1 + k*c before renormalizing. Function words such as
"the" or "." are exempt. The next word is then the most frequent outcome of
a batch of draws.
"""

import numpy as np

from glacnet.sampler import SamplerConfig, WordCounter, penalize, record_emission

words = ["<pad>", "<start>", "<end>", "the", "dog", "park", "ran"]
probs = np.array([0.0, 0.0, 0.05, 0.25, 0.35, 0.2, 0.15])
counts = WordCounter()
for w in ("the", "dog", "the", "dog", "ran"):
    record_emission(counts, words.index(w))

exempt = {words.index("the")}
for k in (0.0, 0.3, 1.0, 3.0):
    out = penalize(probs, counts, SamplerConfig(k=k, exempt=exempt))
    print(f"k={k:<4}" + "  ".join(f"{w}={p:.3f}" for w, p in zip(words[2:], out[2:])))

# "dog" (seen twice) falls fastest and "ran" (once) less so. The exempt "the"
# and the unseen "park" pick up the freed mass through renormalization.
