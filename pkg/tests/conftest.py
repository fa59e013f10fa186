from pathlib import Path

import numpy as np
import pytest

from sanitone import cyclegan as cg
from sanitone import toy
from sanitone.features import F0Stats, FeatureStats
from sanitone.pipeline import Corpus, parse_ravdess_filename, split_corpus, write_manifest
from sanitone.signal_io import write_wav

TINY = cg.Arch(feature_dim=25, gen_channels=(8, 8), res_blocks=1, disc_channels=(8, 8))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def vowel_130():
    return toy.vowel(130.0, [(700, 80), (1200, 100), (2600, 150)], duration_s=1.0)


def identity_filter(arch=TINY, f0=F0Stats(np.log(120.0), 0.1, 100)):
    m = cg.build_model(arch, seed=0)
    cg.set_identity(m.gen_xy)
    stats = FeatureStats(np.zeros(arch.feature_dim), np.ones(arch.feature_dim))
    return cg.freeze(m, f0, f0, stats)


CLI_CONFIG = """\
[arch]
gen_channels = 8, 8
res_blocks = 1
disc_channels = 8, 8
[train]
iterations = 6
identity_cutoff_iter = 2
segment_frames = 64
[paths]
corpus = manifest.csv
cache = cache
filter = filter.eflt
"""
TEXT = {1: "kids are talking by the door", 2: "dogs are sitting by the door"}


def make_workspace(root, config=CLI_CONFIG):
    """Twelve toy utterances under RAVDESS names, a split manifest, transcripts
    for three platforms and a tiny-model config, all below ``root``."""
    speakers = toy.toy_speakers(2, 0)
    entries = []
    for k in range(12):
        emotional = k % 2 == 1
        actor, statement = k % 4 // 2 + 1, k // 4 % 2 + 1
        name = f"03-01-{5 if emotional else 1:02d}-01-{statement:02d}-{k // 8 + 1:02d}-{actor:02d}.wav"
        path = root / "audio" / name
        path.parent.mkdir(exist_ok=True)
        write_wav(path, toy.toy_utterance(speakers[actor - 1], emotional, 300 + k))
        entries.append(parse_ravdess_filename(path))
    write_manifest(split_corpus(Corpus(entries), 6, 6, seed=0), root / "manifest.csv")
    for d in ("refs", "hyp_raw", "hyp_cloud", "hyp_edge"):
        (root / d).mkdir()
        for e in entries:
            text = TEXT[e.statement_id]
            if d == "hyp_cloud" and e.actor_id == 1:
                text = text.replace("door", "floor")
            (root / d / (Path(e.path).stem + ".txt")).write_text(text + "\n")
    (root / "c.toml").write_text(config)
    return root


ACCEPTANCE = {}


@pytest.fixture
def verdict(request):
    """Record one acceptance line; a test that dies before recording counts as FAIL."""
    number = request.node.get_closest_marker("criterion").args[0]

    def record(ok, detail):
        ACCEPTANCE[number] = (bool(ok), detail)
        return bool(ok)

    yield record
    if number not in ACCEPTANCE:
        ACCEPTANCE[number] = (False, "did not complete")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
