import numpy as np
import pytest

from sanitone import bench
from sanitone.signal_io import read_wav, resample, write_wav

from conftest import identity_filter


@pytest.fixture(scope="module")
def filt():
    return identity_filter()


@pytest.fixture(scope="module")
def clip():
    from sanitone import toy
    return resample(toy.vowel(130.0, [(700, 80), (1200, 100)], 0.5), 44100)


def test_baseline_has_no_filter_stages(clip):
    rep = bench.measure_overhead(clip, None, "baseline", runs=2)
    assert rep.stage_names == ["load", "upload"]
    assert not any(s.split(":")[1] in bench.FILTER_STAGES for _, s, _, _ in rep.rows())


def test_filtered_stage_arithmetic(clip, filt):
    rep = bench.measure_overhead(clip, filt, "filtered", runs=3)
    assert rep.stage_names == ["load", "preprocess", "convert", "generate", "upload"]
    for r in rep.runs:
        assert all(v >= 0 for v in r.stages.values())
        assert sum(r.stages[s] for s in bench.FILTER_STAGES) > 0
        assert r.total >= sum(r.stages.values()) - 1e-6
        assert r.peak_mem_bytes > 0
        for name, (a, b) in r.windows.items():
            assert b >= a


def test_five_runs_summary(clip, filt):
    rep = bench.measure_overhead(clip, filt, "filtered", runs=5)
    assert len(rep.runs) == 5
    for med, lo, hi in rep.summary().values():
        assert lo <= med <= hi


def test_sink_and_csv(clip, filt, tmp_path):
    sink = bench.Sink(directory=tmp_path / "up")
    reps = [bench.measure_overhead(clip, None, "baseline", 1, sink),
            bench.measure_overhead(clip, filt, "filtered", 1, sink)]
    out = read_wav(tmp_path / "up" / "run0.wav")
    assert out.sample_rate_hz == 16000        # filtered run overwrote the baseline upload
    bench.write_report_csv(reps, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "run,stage,millis,peak_mem_bytes"
    assert [l.split(",")[1] for l in lines[1:]] == [
        "baseline:load", "baseline:upload", "baseline:total", "filtered:load",
        "filtered:preprocess", "filtered:convert", "filtered:generate", "filtered:upload",
        "filtered:total"]


def test_path_source(clip, filt, tmp_path):
    write_wav(tmp_path / "in.wav", clip)
    rep = bench.measure_overhead(tmp_path / "in.wav", filt, "filtered", 1)
    assert rep.runs[0].stages["load"] > 0


def test_bad_arguments(clip, filt):
    with pytest.raises(ValueError):
        bench.measure_overhead(clip, filt, "turbo")
    with pytest.raises(ValueError):
        bench.measure_overhead(clip, filt, runs=0)
    with pytest.raises(ValueError):
        bench.measure_overhead(clip, None, "filtered")


def test_energy_integration(tmp_path):
    (tmp_path / "m.csv").write_text("epoch_millis,watts\n1000,2\n3000,2\n2000,4\n")
    t, w = bench.read_meter_csv(tmp_path / "m.csv")
    assert t.tolist() == [1.0, 2.0, 3.0] and w.tolist() == [2.0, 4.0, 2.0]
    assert bench.integrate_energy(t, w, 1.0, 3.0) == pytest.approx(6.0)
    assert bench.integrate_energy(t, w, 1.5, 2.0) == pytest.approx(0.5 * 3.5)
    assert bench.integrate_energy(t, w, 3.0, 1.0) == 0.0


def test_stage_energy_covers_every_window(clip, filt, tmp_path):
    rep = bench.measure_overhead(clip, filt, "filtered", 2)
    t0 = rep.runs[0].windows["total"][0] - 1
    t = np.array([t0, t0 + 1000.0])
    rows = bench.stage_energy(rep, t, np.array([5.0, 5.0]))
    assert len(rows) == 2 * 6
    for run, stage, joules in rows:
        name = stage.split(":")[1]
        a, b = rep.runs[run].windows[name]
        assert joules == pytest.approx(5.0 * (b - a))
    bench.write_energy_csv(rows, tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().startswith("run,stage,joules\n")
