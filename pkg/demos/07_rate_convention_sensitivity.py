#!/usr/bin/env python3
"""When does adaptive allocation neutralize heterogeneity? A units story.

The stock scenarios tabulate link rates in KB/s. Against a ~575 MB model
and hundreds of KB of activations per sample, KB/s-scale links make every
round communication-bound by three to four orders of magnitude: the
straggler of *any* policy is whoever drew the slowest link, so widening
the rate options from [10..25] to [5..35] roughly doubles every policy's
round time alike. Cut adaptation cannot buy bandwidth.

This script sweeps a multiplier on the tabulated rates. Once links reach
the MB/s scale, computation and communication carry comparable weight,
and the adaptive planner starts doing what it is built for: soaking up
*compute* heterogeneity with server cycles and softening communication
spread via per-user cuts. Its SH -> LH growth then falls visibly below
the fixed-cut baseline's, and the absolute round times land in the tens
of seconds. The ordering checks (adaptive fastest, relay slowest) hold
at every multiplier; only the heterogeneity-robustness contrast is
regime-dependent, which is why the acceptance suite's criterion 8 fails
at the default 1x convention.
"""

from dataclasses import replace

import esfl
from esfl import SimOptions

arch = esfl.load_builtin("vgg19")
presets = esfl.preset_scenarios()

print("SH vs LH mean one-round time as the rate convention scales up")
print(f"{'rate mult':>10} {'SH esfl (s)':>12} {'LH esfl (s)':>12} "
      f"{'esfl LH/SH':>11} {'sfl LH/SH':>10} {'robust?':>8}")
print("-" * 70)
for mult in (1, 10, 100, 1000, 10000):
    options = SimOptions(kb_bytes=1024.0 * mult)
    reports = {}
    for name in ("SH", "LH"):
        spec = replace(presets[name], rounds=40)
        reports[name] = esfl.run_simulation(spec, ("esfl", "sfl"), arch, options)
    esfl_ratio = (reports["LH"].mean_round_time["esfl"]
                  / reports["SH"].mean_round_time["esfl"])
    sfl_ratio = (reports["LH"].mean_round_time["sfl"]
                 / reports["SH"].mean_round_time["sfl"])
    print(f"{mult:>10} {reports['SH'].mean_round_time['esfl']:>12.2f} "
          f"{reports['LH'].mean_round_time['esfl']:>12.2f} "
          f"{esfl_ratio:>11.3f} {sfl_ratio:>10.3f} "
          f"{str(esfl_ratio < sfl_ratio):>8}")

print("""
takeaways:
 - at 1x (KB/s links) both ratios sit at the ~2x rate-option spread;
   the adaptive planner even tracks it slightly more closely, because
   optimizing cuts flattens the data-volume variation that otherwise
   dilutes the fixed-cut policy's straggler statistics
 - from ~1000x (MB/s links) compute matters, the adaptive ratio drops
   below the fixed-cut ratio, and absolute times reach the scale of
   tens of seconds per round
""")
