"""
The full pipeline at toy scale
==============================

Denoiser -> raw coherence -> MRF labels -> classifier -> comparison
against the boxcar baseline, with every stage shrunk so the whole script
runs in a few minutes on a laptop CPU. Accuracy at this scale is rough;
demos/05 runs the real protocol.
"""

import time

import numpy as np

from cohclass import evaluate, pipeline, sim

t0 = time.time()
train = sim.generate_dataset(4, 192, seed=1)
test = sim.generate_dataset(2, 192, seed=2)
print(f"simulated 4 train + 2 test images ({time.time()-t0:.0f}s)")

# Stage 1: the bottleneck autoencoder learns to reproduce the signal but
# not the noise (MSE against its own noisy input).
cfg = pipeline.denoiser_config(patches_per_image=60, batch_size=60, epochs=15, seed=3)
denoiser, history = pipeline.train_network(
    pipeline.denoiser_role(), [s.noisy for s in train], cfg,
    progress=lambda e, lr, v: print(f"  denoiser epoch {e}: loss {v:.4f}"),
)
print(f"denoiser loss {history[0]:.3f} -> {history[-1]:.3f} ({time.time()-t0:.0f}s)")

# Stage 2: labels = 7x7 coherence of (noisy, denoised), thresholded at
# 0.6 and cleaned by the exact graph cut.
labels = []
for s in train:
    denoised = pipeline.denoise_image(denoiser, s.noisy)
    labels.append(pipeline.prepare_labels(s.noisy, denoised))
quality = evaluate.average_reports([
    evaluate.classification_metrics(lab, s.truth_mask, method="labels")
    for lab, s in zip(labels, train)
])
print(f"label quality vs ground truth: accuracy {quality.accuracy:.3f}, "
      f"recall {quality.recall:.3f}")

# Stage 3: the separable-conv classifier learns those labels from the raw
# noisy interferogram alone.
cfg = pipeline.classifier_config(patches_per_image=60, batch_size=60, epochs=30, seed=4)
classifier, history = pipeline.train_network(
    pipeline.classifier_role(), [s.noisy for s in train], cfg, labels=labels,
)
print(f"classifier loss {history[0]:.3f} -> {history[-1]:.3f} ({time.time()-t0:.0f}s)")

# Stage 4: score both methods on held-out scenes.
reports = evaluate.compare_methods(test, classifier, denoiser_params=denoiser)
print(evaluate.render_table(reports))
print(f"total {time.time()-t0:.0f}s")
