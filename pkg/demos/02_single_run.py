# One 3000 s run of the bundled two-WBAN scenario, summarised by hand.
import numpy as np

from wbanima import average_residual_energy, export, run_scenario
from wbanima.scenario import hall_scenario

sc = hall_scenario(seed=7)
report = run_scenario(sc)

for w in range(len(sc.wbans)):
    stats = report.wban_stats[f"wban{w}"]
    print(f"wban{w} ({stats['scheme']}): generated {stats['generated']}, "
          f"delivered {report.final_sop(w)}, relayed {stats['relayed']}, dropped {stats['dropped']}")

avgre = report.avgre_series(0)
t = np.array(avgre.times)
e = np.array(avgre.values)
print("AVGRE every 500 s:", dict(zip(t[::50].tolist(), e[::50].round(2).tolist())))
print("first sensor death:", min((v["death_time_s"] for v in report.energy_ledger.values()
                                  if v["death_time_s"] is not None), default=None))
print("AVGRE at the end:", average_residual_energy(report, 0, sc.duration))

# residual energy of every sensor of the subject WBAN as a matrix (time x node)
labels = report.sensors["wban0"]
energy = np.array([report.residual_energy[n].values for n in labels]).T
print(energy.shape, energy[-1].round(3))

export(report, "csv", "single_run_out")
