# Wider Diff margins admit more relay candidates and more CTS frames.
from wbanima import experiments
from wbanima.scenario import hall_scenario

sc = hall_scenario(duration=300.0)
grid = {"protocol.diff_margin": [2.0, 5.0, 10.0, 20.0, 40.0]}
for point in experiments.sweep(sc, grid, seeds_count=2):
    m = point["means"]
    print(point["point"]["protocol.diff_margin"], "dB:",
          "pool", round(m["mean_candidate_pool_with"], 2),
          "cts/sf", round(m["cts_per_superframe_with"], 3),
          "SoP", m["sop_with"])
