"""
Simulated transmitters
======================

Every device sends QPSK through the same root-raised-cosine shaper and then
through its own slightly nonlinear power amplifier.  The amplifier is the
only thing that tells devices apart.
"""
import numpy as np

from sscsr import sigsim

#%%
# The shaping filter has unit energy and, matched with itself, gives back the
# transmitted symbols exactly when nothing else touches the waveform.
taps = sigsim.rrc_taps(0.35, span_symbols=8, oversample=8)
print("taps", taps.size, "energy", np.sum(taps**2))

rng = np.random.default_rng(0)
symbols = sigsim.generate_symbols("QPSK", 512, rng)
rx = sigsim.matched_filter(sigsim.pulse_shape(symbols, taps, 8), taps)[::8]
print("symbol errors without noise:", np.sum(sigsim.qpsk_decide(rx) != symbols))

#%%
# Device fingerprints are Saleh amplifier curves.  Compare the output
# amplitude and phase shift of three devices over a range of input levels.
profiles = sigsim.draw_profiles(3, seed=1)
r = np.linspace(0, 2, 5)
for p in profiles:
    out = sigsim.apply_pa(r.astype(complex), p)
    print(f"device {p.device_id}: |out| {np.round(np.abs(out), 3)}  phase {np.round(np.angle(out), 3)}")

#%%
# Noise is calibrated against the amplifier output, so an 18 dB sample
# really is 18 dB above its own noise floor.
cfg = sigsim.SimConfig(sample_len=1024, snr_db=18.0, seed=2)
clean_cfg = sigsim.SimConfig(sample_len=1024, snr_db=None, seed=2)
clean = np.concatenate([sigsim.simulate_sample(clean_cfg, profiles[0], i) for i in range(50)])
noisy = np.concatenate([sigsim.simulate_sample(cfg, profiles[0], i) for i in range(50)])
print(f"measured SNR {sigsim.measured_snr_db(clean, noisy):.2f} dB")

#%%
# A whole dataset: 3:1:1 train/val/test per device, everything keyed by seed.
ds = sigsim.simulate_dataset(sigsim.SimConfig(num_devices=4, samples_per_class=50, sample_len=256, seed=3))
print(ds.counts())
