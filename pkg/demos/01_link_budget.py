# How far can a body sensor talk before the link falls apart?
import numpy as np

from wbanima import ChannelModel, dbm_to_mw, path_loss_db, sinr_db

model = ChannelModel()
tx_power = -10.0          # dBm
noise = model.noise_floor_dbm

distances = np.array([0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0])
for d in distances:
    rx = tx_power - path_loss_db(float(d), model)
    print(f"{d:5.2f} m  rx {rx:7.2f} dBm  snr {rx - noise:6.2f} dB")

# one neighbour WBAN talking at the same time
desired = tx_power - path_loss_db(0.8, model)
for gap in (1.0, 2.0, 3.0):
    interferer = tx_power - path_loss_db(gap, model)
    print(f"interferer at {gap} m -> sinr {sinr_db(desired, [interferer], noise):.2f} dB")

# the same number done by hand in milliwatts
ratio = dbm_to_mw(desired) / (dbm_to_mw(noise) + dbm_to_mw(tx_power - path_loss_db(2.0, model)))
print("by hand:", 10 * np.log10(ratio))

# shadowing spreads the link budget: share of 3 m links under 17.3 dB SNR
rng = np.random.default_rng(0)
snr = tx_power - path_loss_db(3.0, model) + rng.normal(0, model.shadowing_sigma_db, 100_000) - noise
print("outage at 3 m:", np.mean(snr <= 17.3))
