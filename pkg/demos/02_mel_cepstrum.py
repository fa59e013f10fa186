"""Compress spectral envelopes into warped mel-cepstra and see how much detail
each order keeps.

    python demos/02_mel_cepstrum.py
"""
import numpy as np

from sanitone import toy
from sanitone.features import (FeatureStats, denormalize, log_spectral_distortion, mcep_to_sp,
                               normalize, sp_to_mcep)
from sanitone.vocoder import analyze


def main():
    a = analyze(toy.vowel(120.0, [(500, 70), (1500, 90), (2500, 120)], duration_s=0.6))
    v = a.f0.voiced
    sp = a.spectral_envelope[v]

    # Higher orders track the envelope more closely; 24 is the working default.
    for order in (8, 16, 24, 40):
        m = sp_to_mcep(sp, order)
        lsd = log_spectral_distortion(sp, mcep_to_sp(m, a.fft_size))
        print(f"order {order:2d}: median distortion {np.median(lsd):5.2f} dB")

    # The warping constant bends the frequency axis toward the mel scale.
    for alpha in (0.0, 0.42, 0.6):
        m = sp_to_mcep(sp, 24, alpha)
        print(f"alpha {alpha:.2f}: median distortion "
              f"{np.median(log_spectral_distortion(sp, mcep_to_sp(m, a.fft_size))):5.2f} dB")

    # Training works on per-dimension standardized coefficients.
    m = sp_to_mcep(sp)
    stats = FeatureStats.fit([m])
    z = normalize(m, stats)
    print(f"standardized: mean {np.abs(z.coeffs.mean(0)).max():.1e}, std {z.coeffs.std(0).mean():.3f}; "
          f"round trip exact to {np.abs(denormalize(z, stats).coeffs - m.coeffs).max():.1e}")


if __name__ == "__main__":
    main()
