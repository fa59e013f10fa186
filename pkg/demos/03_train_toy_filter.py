"""Train an emotion filter on two synthetic speaking styles, freeze it and
apply it to a held-out "emotional" utterance.

    python demos/03_train_toy_filter.py [--iterations N] [--out DIR]
"""
import argparse
import tempfile
from pathlib import Path

import numpy as np

from sanitone import cyclegan as cg
from sanitone import experiment as ex
from sanitone.features import compute_f0_stats
from sanitone.pipeline import sanitize
from sanitone.signal_io import write_wav
from sanitone.vocoder import analyze


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iterations", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=tempfile.mkdtemp(prefix="sanitone-"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    # X is the raised-pitch, brighter style; Y is the plain one.
    corpus = ex.make_toy_corpus(args.seed, n_train=20, n_test=3)
    a_x, a_y, z_x, z_y, stats = ex.training_features(corpus)
    print(f"{len(z_x)} + {len(z_y)} training utterances, {sum(len(z) for z in z_x + z_y)} frames")

    cfg = cg.TrainConfig(iterations=args.iterations, identity_cutoff_iter=args.iterations // 3,
                         seed=args.seed)
    report = max(args.iterations // 5, 1)

    def progress(it, losses):
        if (it + 1) % report == 0:
            print(f"  iteration {it + 1:5d}: generator {losses.total_g:7.3f}  "
                  f"discriminators {losses.total_d:6.3f}  cycle {losses.cycle:6.3f}")

    model, history = cg.train(z_x, z_y, cfg, progress=progress)

    # Only the emotional-to-neutral generator and the statistics ship.
    f0_x, f0_y = compute_f0_stats([a.f0 for a in a_x]), compute_f0_stats([a.f0 for a in a_y])
    filt = cg.freeze(model, f0_x, f0_y, stats)
    cg.save_filter(filt, out / "toy.eflt")
    print(f"filter {len(cg.dumps_filter(filt)) / 1024:.0f} KiB, "
          f"full checkpoint {len(cg.dumps_model(model)) / 1024:.0f} KiB")

    for k, (_, w) in enumerate(corpus.test_x):
        clean = sanitize(w, filt)
        before, after = analyze(w).f0, analyze(clean).f0
        print(f"utterance {k}: median F0 {np.median(before.values_hz[before.voiced]):.0f} Hz -> "
              f"{np.median(after.values_hz[after.voiced]):.0f} Hz "
              f"(neutral style centre {np.exp(f0_y.mean_log_f0):.0f} Hz)")
        write_wav(out / f"emotional_{k}.wav", w)
        write_wav(out / f"sanitized_{k}.wav", clean)
    print(f"wrote filter and audio to {out}")


if __name__ == "__main__":
    main()
