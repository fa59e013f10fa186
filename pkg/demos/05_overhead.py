"""Time the sanitize-then-upload path against a plain upload, stage by stage.

    python demos/05_overhead.py [--runs N]
"""
import argparse

import numpy as np

from sanitone import bench
from sanitone import cyclegan as cg
from sanitone import toy
from sanitone.features import F0Stats, FeatureStats
from sanitone.signal_io import resample


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--runs", type=int, default=5)
    runs = ap.parse_args().runs

    # Timing does not depend on training, so an untrained default-size filter will do.
    filt = cg.freeze(cg.build_model(cg.Arch()), F0Stats(np.log(170.0), 0.15, 1),
                     F0Stats(np.log(120.0), 0.1, 1), FeatureStats(np.zeros(25), np.ones(25)))
    clip = resample(toy.toy_utterance(toy.toy_speakers(1)[0], True, 0), 44100)
    print(f"input {clip.duration_s:.2f} s at {clip.sample_rate_hz} Hz, "
          f"filter {filt.generator.n_params()} parameters")

    for mode in ("baseline", "filtered"):
        rep = bench.measure_overhead(clip, filt, mode, runs)
        print(f"{mode}:")
        for stage, (med, lo, hi) in rep.summary().items():
            print(f"  {stage:10s} median {1000 * med:8.1f} ms  (min {1000 * lo:.1f}, max {1000 * hi:.1f})")
        print(f"  peak memory {rep.peak_mem_bytes() / 2 ** 20:.0f} MiB")


if __name__ == "__main__":
    main()
