"""sepsim: desk-scale sepsis early warning.

Simulates future physiological indicator values from right-aligned vital-sign
windows, constrains them to plausible ranges, and classifies sepsis onset,
with clinical score baselines, ablation switches, and saliency exports.
"""

__version__ = "0.1.0"
