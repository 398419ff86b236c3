# Subject WBAN with IMA against the same WBAN running the cooperative
# first-CTS scheme, everything else identical.
from wbanima import experiments
from wbanima.scenario import hall_scenario

sc = hall_scenario()
rows = experiments.compare(sc, seeds_count=3)

for r in rows:
    print(r["seed"], "SoP", r["with"]["sop"], "vs", r["without"]["sop"],
          " AVGRE", round(r["with"]["avgre"], 2), "vs", round(r["without"]["avgre"], 2))

means = experiments.comparison_means(rows)
print("mean SoP ratio", round(means["sop_ratio"], 3))
print("CTS per superframe", round(means["cts_per_superframe_with"], 3), "vs",
      round(means["cts_per_superframe_without"], 3))

# the comparison is energy bound: give the sensors a large battery and the
# two schemes deliver about the same
rich = sc.replace(initial_energy=1000.0)
print(experiments.comparison_means(experiments.compare(rich, seeds_count=1))["sop_ratio"])
