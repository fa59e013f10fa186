"""Stage timing of the sanitize-then-upload path against a plain upload.

A run is split into

load       decode the input WAV
preprocess resample and analyse        (filtered mode only)
convert    apply the filter            (filtered mode only)
generate   resynthesize                (filtered mode only)
upload     encode and hand the result to a sink (directory, URL or memory)
"""
from __future__ import annotations

import csv
import io
import os
import resource
import sys
import time
import urllib.request
from dataclasses import dataclass, field

import numpy as np

from .cyclegan import FrozenFilter
from .pipeline import check_filter, convert, generate, output_length, preprocess
from .signal_io import Waveform, read_wav, write_wav

FILTER_STAGES = ("preprocess", "convert", "generate")
MODES = ("baseline", "filtered")


def peak_memory_bytes() -> int:
    rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return int(rss if sys.platform == "darwin" else rss * 1024)


@dataclass
class RunRecord:
    stages: dict          # stage -> seconds, in execution order
    windows: dict         # stage -> (epoch start, epoch end) in seconds
    total: float
    peak_mem_bytes: int


@dataclass
class OverheadReport:
    mode: str
    runs: list = field(default_factory=list)

    @property
    def stage_names(self):
        return list(self.runs[0].stages) if self.runs else []

    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.runs])

    def summary(self):
        """stage -> (median, min, max) seconds, plus the run total."""
        out = {}
        for name in self.stage_names + ["total"]:
            v = np.array([r.total if name == "total" else r.stages[name] for r in self.runs])
            out[name] = (float(np.median(v)), float(v.min()), float(v.max()))
        return out

    def peak_mem_bytes(self) -> int:
        return max((r.peak_mem_bytes for r in self.runs), default=0)

    def rows(self):
        for i, r in enumerate(self.runs):
            for name, sec in list(r.stages.items()) + [("total", r.total)]:
                yield i, f"{self.mode}:{name}", 1000.0 * sec, r.peak_mem_bytes


CSV_COLUMNS = ("run", "stage", "millis", "peak_mem_bytes")


def write_report_csv(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rep in reports:
            for run, stage, millis, mem in rep.rows():
                w.writerow([run, stage, f"{millis:.3f}", mem])


class Sink:
    """Where the upload stage sends bytes: a directory, an HTTP URL or nowhere."""

    def __init__(self, directory=None, url=None, timeout=30.0):
        self.directory, self.url, self.timeout = directory, url, timeout
        if directory is not None:
            os.makedirs(directory, exist_ok=True)

    def send(self, name: str, payload: bytes) -> None:
        if self.directory is not None:
            with open(os.path.join(self.directory, name), "wb") as fh:
                fh.write(payload)
        if self.url is not None:
            req = urllib.request.Request(self.url, data=payload, method="POST",
                                         headers={"Content-Type": "audio/wav"})
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                resp.read()


def _encode(w: Waveform) -> bytes:
    buf = io.BytesIO()
    write_wav(buf, w)
    return buf.getvalue()


def measure_overhead(source, f: FrozenFilter | None, mode: str = "filtered", runs: int = 5,
                     sink: Sink | None = None, seed: int = 0) -> OverheadReport:
    """Time ``runs`` repetitions of the chosen path.

    ``source`` is a WAV path or a :class:`Waveform` (encoded to WAV bytes once,
    outside the timed region, so the load stage always decodes).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if mode == "filtered":
        if f is None:
            raise ValueError("filtered mode needs a filter")
        check_filter(f)
    blob = _encode(source) if isinstance(source, Waveform) else None
    sink = sink or Sink()
    report = OverheadReport(mode)
    for i in range(runs):
        stages, windows = {}, {}
        t_run = time.perf_counter()
        epoch0 = time.time()

        def timed(name, fn, *args):
            e0, t0 = time.time(), time.perf_counter()
            out = fn(*args)
            stages[name] = time.perf_counter() - t0
            windows[name] = (e0, e0 + stages[name])
            return out

        w = timed("load", read_wav, io.BytesIO(blob) if blob is not None else source)
        if mode == "filtered":
            a, m = timed("preprocess", preprocess, w, f)
            a = timed("convert", convert, a, m, f)
            w = timed("generate", generate, a, output_length(w), seed)
        timed("upload", lambda x: sink.send(f"run{i}.wav", _encode(x)), w)
        total = time.perf_counter() - t_run
        windows["total"] = (epoch0, epoch0 + total)
        report.runs.append(RunRecord(stages, windows, total, peak_memory_bytes()))
    return report


# ---------------------------------------------------------------------------
# external power meter
# ---------------------------------------------------------------------------

def read_meter_csv(path):
    """``epoch_millis,watts`` rows (header optional) -> (seconds, watts), time-sorted."""
    t, p = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                t.append(float(row[0]) / 1000.0)
                p.append(float(row[1]))
            except ValueError:
                if t:
                    raise
                continue  # header
    order = np.argsort(t, kind="stable")
    return np.asarray(t)[order], np.asarray(p)[order]


def integrate_energy(times, watts, start: float, end: float) -> float:
    """Joules over [start, end] of the piecewise-linear power trace."""
    if end <= start or len(times) == 0:
        return 0.0
    inside = times[(times > start) & (times < end)]
    grid = np.concatenate([[start], inside, [end]])
    return float(np.trapezoid(np.interp(grid, times, watts), grid))


def stage_energy(report: OverheadReport, times, watts):
    """(run, stage, joules) for every timed window of every run."""
    out = []
    for i, r in enumerate(report.runs):
        for name, (a, b) in r.windows.items():
            out.append((i, f"{report.mode}:{name}", integrate_energy(times, watts, a, b)))
    return out


def write_energy_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "stage", "joules"])
        for run, stage, joules in rows:
            w.writerow([run, stage, f"{joules:.6f}"])
