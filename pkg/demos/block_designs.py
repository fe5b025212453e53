"""
Optimizing the gains over a whole block
=======================================

The receivers only need to know their gain ``d_i``, which is fixed for a
block of ``T`` slots.  Choosing ``d`` jointly with the per-slot
perturbations gives two convex designs: one minimizing the block-average
power, one minimizing the peak slot energy.  Both are compared here with
the fixed-gain heuristic ``d = zeta * alpha`` and zero forcing.
"""

import numpy as np

from slp import (ChannelState, QamSpec, block_average_design, block_peak_design,
                 draw_symbols, gain_constants, heuristic_gains, precode_block, zf_block)

rng = np.random.default_rng(3)
K, N, T = 8, 8, 20
H = (rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))) / np.sqrt(2)
ch = ChannelState(H)
spec = QamSpec(2)
S = draw_symbols(spec, seed=11, count=K * T).reshape(K, T)
eps = 0.05
gc = gain_constants(1.0, eps)

designs = {
    "ZF": zf_block(ch, S, gc.alpha),
    "heuristic zeta=1": precode_block(ch, spec, S, heuristic_gains(gc, 1.0) * np.ones(K), gc),
    "heuristic zeta=1.2": precode_block(ch, spec, S, heuristic_gains(gc, 1.2) * np.ones(K), gc),
    "block average": block_average_design(ch, spec, S, 1.0, eps),
    "block peak": block_peak_design(ch, spec, S, 1.0, eps),
}

print(f"{'scheme':>20} {'avg power':>10} {'peak':>10}")
for name, des in designs.items():
    print(f"{name:>20} {des.avg_power:10.2f} {des.peak_energy:10.2f}")

# %%
# The average design is never worse than the heuristic on average power,
# and the peak design never has a higher peak than either; the price of a
# flat energy profile is a higher average.

avg, peak = designs["block average"], designs["block peak"]
print("optimal gains / alpha (average design):", np.round(avg.gains / gc.alpha, 3))
print("slot energies, average design:", np.round(avg.energies, 1))
print("slot energies, peak design:   ", np.round(peak.energies, 1))
