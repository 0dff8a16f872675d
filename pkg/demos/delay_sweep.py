"""
Read ratio against server delay
===============================

Sweep the reader <-> server delay for medium traffic at two link rates and
average over a few seeds. The reader holds the channel for the whole round
trip, so a slow server eats into the time other tags could use.
"""
from rfidsim import Scenario, SweepSpec, run_sweep
from rfidsim.experiments import aggregate
from rfidsim.radio import RadioParams

for bandwidth in (128e3, 256e3):
    base = Scenario(radio=RadioParams(bandwidth=bandwidth), duration=60)
    spec = SweepSpec(base, {"delay": [d / 1e3 for d in (0, 5, 10, 15, 20, 25, 50, 100)], "seed": [1, 2, 3]})
    print(f"-- {bandwidth / 1e3:.0f} kbit/s")
    for agg in sorted(aggregate(run_sweep(spec)), key=lambda a: a["server_delay_ms"]):
        print(f"delay {agg['server_delay_ms']:5.0f} ms  read ratio {agg['read_ratio_mean']:.4f}"
              f" +/- {agg['read_ratio_stderr']:.4f}")
