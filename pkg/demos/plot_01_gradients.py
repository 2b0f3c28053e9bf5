"""
Checking backprop against finite differences
============================================

The whole model (encoder, glocal stack, cascading decoder) is built from a
handful of numpy ops that record a tape. Here we differentiate one story
loss on a tiny model and compare every parameter's gradient with
numerical differences.
"""

import time

from glacnet.gradcheck import check_model_gradients

# A 6-dim feature, 4-unit encoder, 5-dim glocal vector and an 8-word
# vocabulary keep the numerical pass to a few seconds.
start = time.perf_counter()
report = check_model_gradients(seed=0)
print(f"checked {len(report.worst)} tensors in {time.perf_counter() - start:.1f}s")

# Worst relative error per tensor, largest first
for name, err in sorted(report.worst.items(), key=lambda kv: -kv[1])[:8]:
    print(f"  {name:24s} {err:.2e}")
print("ok" if report.ok else "MISMATCH", "at tolerance", report.tolerance)
