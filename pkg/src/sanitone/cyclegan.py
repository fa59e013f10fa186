"""Cycle-consistent adversarial mapping between two mel-cepstral domains.

X is the emotional domain and Y the neutral one. ``gen_xy`` is the direction
that gets deployed; the other three networks only exist for training.
Features enter the networks normalized, shaped ``(batch, dims, frames)``.
"""
from __future__ import annotations

import json
import struct
import time
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .errors import CorruptFile, EmptyCorpus, InvalidArch, ShapeMismatch, ValidationError, VersionMismatch
from .features import DEFAULT_ALPHA, DEFAULT_ORDER, F0Stats, FeatureStats, McepSequence
from .vocoder import VocoderConfig

FORMAT_VERSION = 1
FILTER_MAGIC = b"EFLT"
CHECKPOINT_MAGIC = b"ECKP"


@dataclass(frozen=True)
class Arch:
    """Layer widths of the generator and discriminator families.

    ``gen_channels[0]`` is the width after the input layer; every further
    entry adds a stride-2 downsampling stage, mirrored by an upsampling stage
    on the way out.
    """

    feature_dim: int = DEFAULT_ORDER + 1
    gen_channels: tuple = (24, 48, 48)
    res_blocks: int = 3
    io_kernel: int = 7
    resample_kernel: int = 5
    res_kernel: int = 3
    disc_channels: tuple = (32, 64, 64, 64)
    disc_kernel: int = 3

    def __post_init__(self):
        object.__setattr__(self, "gen_channels", tuple(int(c) for c in self.gen_channels))
        object.__setattr__(self, "disc_channels", tuple(int(c) for c in self.disc_channels))
        if self.feature_dim < 1 or not self.gen_channels or not self.disc_channels:
            raise InvalidArch("feature_dim and channel lists must be non-empty/positive")
        if min(self.gen_channels + self.disc_channels) < 1:
            raise InvalidArch("channel widths must be positive")
        for k in (self.io_kernel, self.resample_kernel, self.res_kernel, self.disc_kernel):
            if k < 1 or k % 2 == 0:
                raise InvalidArch(f"kernel sizes must be odd and positive, got {k}")
        if self.res_blocks < 0:
            raise InvalidArch("res_blocks must be >= 0")

    @property
    def time_multiple(self) -> int:
        return 2 ** (len(self.gen_channels) - 1)

    def receptive_field(self) -> int:
        """Receptive field of the generator in frames."""
        rf, jump = 1, 1
        rf += self.io_kernel - 1
        for _ in self.gen_channels[1:]:
            rf += (self.resample_kernel - 1) * jump
            jump *= 2
        rf += self.res_blocks * 2 * (self.res_kernel - 1) * jump
        for _ in self.gen_channels[1:]:
            rf += (self.resample_kernel - 1) * jump
            jump //= 2
        return rf + self.io_kernel - 1

    def to_dict(self):
        return asdict(self) | {"gen_channels": list(self.gen_channels),
                               "disc_channels": list(self.disc_channels)}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidArch(str(exc)) from exc


def generator_layers(arch: Arch):
    """The body of a generator; the network adds its input back at the end."""
    ch = arch.gen_channels
    body = [("in", nn.GatedConv1d(arch.feature_dim, ch[0], arch.io_kernel))]
    for i in range(1, len(ch)):
        body.append((f"down{i}", nn.GatedConv1d(ch[i - 1], ch[i], arch.resample_kernel,
                                                stride=2, norm=True)))
    c = ch[-1]
    for j in range(arch.res_blocks):
        body.append((f"res{j}", nn.Residual([
            ("glu", nn.GatedConv1d(c, c, arch.res_kernel, norm=True)),
            ("conv", nn.Conv1d(c, c, arch.res_kernel)),
            ("norm", nn.InstanceNorm1d(c)),
        ])))
    for i in range(len(ch) - 1, 0, -1):
        out = ch[i - 1]
        body.append((f"up{i}", nn.Sequential([
            ("conv", nn.Conv1d(ch[i], 4 * out, arch.resample_kernel)),
            ("shuffle", nn.PixelShuffle1d(2)),
            ("norm", nn.InstanceNorm1d(2 * out)),
            ("glu", nn.GLU()),
        ])))
    body.append(("out", nn.Conv1d(ch[0], arch.feature_dim, arch.io_kernel)))
    return [("skip", nn.Residual(body))]


def discriminator_layers(arch: Arch):
    ch = (arch.feature_dim,) + arch.disc_channels
    layers = [(f"glu{i}", nn.GatedConv1d(ch[i], ch[i + 1], arch.disc_kernel,
                                         stride=1 if i == 0 else 2))
              for i in range(len(ch) - 1)]
    layers.append(("head", nn.Conv1d(ch[-1], 1, arch.disc_kernel)))
    return layers


def make_generator(arch: Arch, params=None, seed=0) -> nn.Network:
    return nn.Network(generator_layers(arch), params, seed)


def make_discriminator(arch: Arch, params=None, seed=0) -> nn.Network:
    return nn.Network(discriminator_layers(arch), params, seed)


def set_identity(gen: nn.Network) -> nn.Network:
    """Zero the output layer so the generator returns its input unchanged."""
    gen.params["skip.out.weight"][:] = 0.0
    gen.params["skip.out.bias"][:] = 0.0
    return gen


@dataclass
class CycleGanModel:
    gen_xy: nn.Network
    gen_yx: nn.Network
    disc_x: nn.Network
    disc_y: nn.Network
    arch: Arch

    def networks(self):
        return {"gen_xy": self.gen_xy, "gen_yx": self.gen_yx,
                "disc_x": self.disc_x, "disc_y": self.disc_y}

    def n_params(self) -> int:
        return sum(net.n_params() for net in self.networks().values())


def build_model(arch: Arch = Arch(), seed: int = 0) -> CycleGanModel:
    if not isinstance(arch, Arch):
        raise InvalidArch("arch must be an Arch")
    seeds = np.random.SeedSequence(seed).generate_state(4)
    return CycleGanModel(make_generator(arch, seed=seeds[0]), make_generator(arch, seed=seeds[1]),
                         make_discriminator(arch, seed=seeds[2]),
                         make_discriminator(arch, seed=seeds[3]), arch)


# ---------------------------------------------------------------------------
# training configuration and losses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 7500
    lr_generator: float = 2e-4
    lr_discriminator: float = 1e-4
    lambda_cycle: float = 10.0
    lambda_identity: float = 5.0
    identity_cutoff_iter: int = 2500
    segment_frames: int = 128
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ValidationError("iterations", "must be >= 0")
        for key in ("lr_generator", "lr_discriminator"):
            if not getattr(self, key) >= 0:
                raise ValidationError(key, "must be >= 0")
        for key in ("lambda_cycle", "lambda_identity"):
            if not getattr(self, key) >= 0:
                raise ValidationError(key, "must be >= 0")
        if self.identity_cutoff_iter < 0:
            raise ValidationError("identity_cutoff_iter", "must be >= 0")
        if self.segment_frames < 1:
            raise ValidationError("segment_frames", "must be positive")
        if self.batch_size < 1:
            raise ValidationError("batch_size", "must be positive")


@dataclass(frozen=True)
class LossBundle:
    adv_g: float
    adv_d: float
    cycle: float
    identity: float
    total_g: float
    total_d: float

    def to_dict(self):
        return asdict(self)


def _batched(a, dim):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3 or a.shape[1] != dim:
        raise ShapeMismatch(f"expected (batch, {dim}, frames), got {a.shape}")
    return a


def _lsq(out, target):
    diff = out - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def _l1(a, b):
    diff = a - b
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


def compute_losses(m: CycleGanModel, x, y, cfg: TrainConfig = TrainConfig(),
                   iteration: int = 0) -> LossBundle:
    """All loss terms for the current weights, without gradients."""
    x = _batched(x, m.arch.feature_dim)
    y = _batched(y, m.arch.feature_dim)
    fake_y, fake_x = m.gen_xy(x), m.gen_yx(y)
    adv_d = (_lsq(m.disc_y(y), 1.0)[0] + _lsq(m.disc_y(fake_y), 0.0)[0]
             + _lsq(m.disc_x(x), 1.0)[0] + _lsq(m.disc_x(fake_x), 0.0)[0])
    adv_g = _lsq(m.disc_y(fake_y), 1.0)[0] + _lsq(m.disc_x(fake_x), 1.0)[0]
    cycle = _l1(m.gen_yx(fake_y), x)[0] + _l1(m.gen_xy(fake_x), y)[0]
    identity = 0.0
    if iteration < cfg.identity_cutoff_iter:
        identity = _l1(m.gen_xy(y), y)[0] + _l1(m.gen_yx(x), x)[0]
    total_g = adv_g + cfg.lambda_cycle * cycle + cfg.lambda_identity * identity
    return LossBundle(adv_g, adv_d, cycle, identity, total_g, adv_d)


def _disc_grads(d: nn.Network, real, fake):
    """Least-squares discriminator loss on a real and a fake batch, one pass."""
    b = real.shape[0]
    out, cache = d.forward(np.concatenate([real, fake]))
    l_real, g_real = _lsq(out[:b], 1.0)
    l_fake, g_fake = _lsq(out[b:], 0.0)
    _, grads = d.backward(cache, np.concatenate([g_real, g_fake]))
    return l_real + l_fake, grads


def generator_grads(m: CycleGanModel, x, y, cfg: TrainConfig, iteration: int, fwd=None):
    """Generator-side losses and gradients for both generators.

    ``fwd`` may hold the already computed ``(G(x), cache, F(y), cache)``.
    """
    G, F = m.gen_xy, m.gen_yx
    fake_y, c_g1, fake_x, c_f1 = fwd if fwd is not None else (*G.forward(x), *F.forward(y))
    rec_x, c_f2 = F.forward(fake_y)
    rec_y, c_g2 = G.forward(fake_x)
    dy_out, c_dy = m.disc_y.forward(fake_y)
    dx_out, c_dx = m.disc_x.forward(fake_x)
    adv_y, g_adv_y = _lsq(dy_out, 1.0)
    adv_x, g_adv_x = _lsq(dx_out, 1.0)
    cyc_x, g_cyc_x = _l1(rec_x, x)
    cyc_y, g_cyc_y = _l1(rec_y, y)
    lc, li = cfg.lambda_cycle, cfg.lambda_identity

    d_fake_y, _ = m.disc_y.backward(c_dy, g_adv_y)
    d_fake_x, _ = m.disc_x.backward(c_dx, g_adv_x)
    d, gF = F.backward(c_f2, lc * g_cyc_x)
    d_fake_y = d_fake_y + d
    d, gG = G.backward(c_g2, lc * g_cyc_y)
    d_fake_x = d_fake_x + d
    gG = nn.add_grads(gG, G.backward(c_g1, d_fake_y)[1])
    gF = nn.add_grads(gF, F.backward(c_f1, d_fake_x)[1])

    identity = 0.0
    if iteration < cfg.identity_cutoff_iter:
        id_y, c_g3 = G.forward(y)
        id_x, c_f3 = F.forward(x)
        l_y, g_y = _l1(id_y, y)
        l_x, g_x = _l1(id_x, x)
        identity = l_y + l_x
        gG = nn.add_grads(gG, G.backward(c_g3, li * g_y)[1])
        gF = nn.add_grads(gF, F.backward(c_f3, li * g_x)[1])
    adv_g = adv_y + adv_x
    cycle = cyc_x + cyc_y
    total = adv_g + lc * cycle + li * identity
    return (adv_g, cycle, identity, total), gG, gF


@dataclass
class OptimizerStates:
    gen_xy: nn.AdamState
    gen_yx: nn.AdamState
    disc_x: nn.AdamState
    disc_y: nn.AdamState

    @classmethod
    def for_model(cls, m: CycleGanModel):
        return cls(*(nn.AdamState.zeros_like(net.params) for net in
                     (m.gen_xy, m.gen_yx, m.disc_x, m.disc_y)))


def train_step(m: CycleGanModel, states: OptimizerStates, batch_x, batch_y,
               cfg: TrainConfig, iteration: int):
    """One update: both discriminators first, then both generators.

    The reported ``adv_d`` is measured before the discriminator update; the
    generator terms are measured after it, against the updated discriminators.
    """
    if not 0 <= iteration < max(cfg.iterations, 1):
        raise ValueError(f"iteration {iteration} outside [0, {cfg.iterations})")
    x = _batched(batch_x, m.arch.feature_dim)
    y = _batched(batch_y, m.arch.feature_dim)
    fake_y, c_g1 = m.gen_xy.forward(x)
    fake_x, c_f1 = m.gen_yx.forward(y)

    ld_y, g_dy = _disc_grads(m.disc_y, y, fake_y)
    ld_x, g_dx = _disc_grads(m.disc_x, x, fake_x)
    nn.adam_step(m.disc_y.params, g_dy, states.disc_y, cfg.lr_discriminator)
    nn.adam_step(m.disc_x.params, g_dx, states.disc_x, cfg.lr_discriminator)

    # generators are unchanged by the discriminator step, so their forward
    # caches are still valid
    (adv_g, cycle, identity, total_g), gG, gF = generator_grads(
        m, x, y, cfg, iteration, (fake_y, c_g1, fake_x, c_f1))
    nn.adam_step(m.gen_xy.params, gG, states.gen_xy, cfg.lr_generator)
    nn.adam_step(m.gen_yx.params, gF, states.gen_yx, cfg.lr_generator)
    adv_d = ld_x + ld_y
    return m, states, LossBundle(adv_g, adv_d, cycle, identity, total_g, adv_d)


@dataclass
class TrainHistory:
    losses: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    padded: list = field(default_factory=list)   # (domain, index) of utterances shorter than a segment

    def __len__(self):
        return len(self.losses)


def _as_matrix(s):
    return s.coeffs if isinstance(s, McepSequence) else np.asarray(s, dtype=np.float64)


def _segment(seq, frames, rng):
    n = seq.shape[0]
    if n < frames:
        out = np.zeros((frames, seq.shape[1]))
        out[:n] = seq
        return out.T
    start = int(rng.integers(0, n - frames + 1))
    return seq[start:start + frames].T


def train(corpus_x, corpus_y, cfg: TrainConfig = TrainConfig(), arch: Arch = Arch(),
          model: CycleGanModel | None = None, progress=None):
    """Train on normalized feature sequences, sampling one random segment per
    domain and batch slot at every iteration."""
    xs = [_as_matrix(s) for s in corpus_x]
    ys = [_as_matrix(s) for s in corpus_y]
    if not xs or not ys:
        raise EmptyCorpus("both domains need at least one utterance")
    if model is None:
        model = build_model(arch, cfg.seed)
    arch = model.arch
    for s in xs + ys:
        if s.ndim != 2 or s.shape[1] != arch.feature_dim:
            raise ShapeMismatch(f"features must be frames x {arch.feature_dim}, got {s.shape}")
    if cfg.segment_frames % arch.time_multiple:
        raise ValidationError("segment_frames", f"must be a multiple of {arch.time_multiple}")
    if cfg.segment_frames < arch.receptive_field():
        raise ValidationError("segment_frames",
                              f"shorter than the receptive field {arch.receptive_field()}")

    history = TrainHistory()
    history.padded = [("x", i) for i, s in enumerate(xs) if len(s) < cfg.segment_frames]
    history.padded += [("y", i) for i, s in enumerate(ys) if len(s) < cfg.segment_frames]
    states = OptimizerStates.for_model(model)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    for it in range(cfg.iterations):
        t0 = time.perf_counter()
        bx = np.stack([_segment(xs[rng.integers(len(xs))], cfg.segment_frames, rng)
                       for _ in range(cfg.batch_size)])
        by = np.stack([_segment(ys[rng.integers(len(ys))], cfg.segment_frames, rng)
                       for _ in range(cfg.batch_size)])
        _, _, losses = train_step(model, states, bx, by, cfg, it)
        history.losses.append(losses)
        history.seconds.append(time.perf_counter() - t0)
        if progress is not None:
            progress(it, losses)
    return model, history


# ---------------------------------------------------------------------------
# inference and serialization
# ---------------------------------------------------------------------------

def run_generator(gen: nn.Network, arch: Arch, z: np.ndarray) -> np.ndarray:
    """Map a normalized ``frames x dims`` matrix through a generator.

    The sequence is edge-padded to a multiple of the downsampling factor and
    cropped back afterwards.
    """
    z = np.asarray(z)
    if z.ndim != 2 or z.shape[1] != arch.feature_dim:
        raise ShapeMismatch(f"expected frames x {arch.feature_dim}, got {z.shape}")
    n = z.shape[0]
    if n == 0:
        return z.copy()
    dtype = next(iter(gen.params.values())).dtype
    pad = -n % arch.time_multiple
    xin = np.pad(z.astype(dtype, copy=False), ((0, pad), (0, 0)), mode="edge")
    return gen(xin.T[None])[0].T[:n]


@dataclass(frozen=True, eq=False)
class FrozenFilter:
    """Everything needed to sanitize a waveform, and nothing else."""

    generator: nn.Network
    arch: Arch
    f0_source: F0Stats
    f0_target: F0Stats
    feature_stats: FeatureStats
    vocoder: VocoderConfig = VocoderConfig()
    mcep_order: int = DEFAULT_ORDER
    mcep_alpha: float = DEFAULT_ALPHA
    energy_passthrough: bool = False
    version: int = FORMAT_VERSION

    @property
    def dtype(self):
        return next(iter(self.generator.params.values())).dtype

    def convert(self, z: np.ndarray) -> np.ndarray:
        return run_generator(self.generator, self.arch, z)

    def astype(self, dtype) -> "FrozenFilter":
        return FrozenFilter(self.generator.copy(dtype), self.arch, self.f0_source, self.f0_target,
                            self.feature_stats, self.vocoder, self.mcep_order, self.mcep_alpha,
                            self.energy_passthrough, self.version)

    def header(self):
        return {"kind": "filter", "arch": self.arch.to_dict(),
                "f0_source": self.f0_source.to_dict(), "f0_target": self.f0_target.to_dict(),
                "feature_stats": self.feature_stats.to_dict(), "vocoder": asdict(self.vocoder),
                "mcep": {"order": self.mcep_order, "alpha": self.mcep_alpha,
                         "energy_passthrough": self.energy_passthrough}}


def freeze(m: CycleGanModel, f0_source: F0Stats, f0_target: F0Stats,
           feature_stats: FeatureStats, vocoder: VocoderConfig = VocoderConfig(),
           mcep_order: int = DEFAULT_ORDER, mcep_alpha: float = DEFAULT_ALPHA,
           energy_passthrough: bool = False) -> FrozenFilter:
    if feature_stats.dim != m.arch.feature_dim:
        raise ShapeMismatch("feature statistics do not match the model's feature width")
    return FrozenFilter(m.gen_xy.copy(), m.arch, f0_source, f0_target, feature_stats,
                        vocoder, mcep_order, float(mcep_alpha), bool(energy_passthrough))


def _pack(magic: bytes, header: dict, tensors) -> bytes:
    """magic | u32 version | u64 header length | JSON header | blobs | CRC32."""
    header = dict(header)
    header["tensors"] = [{"name": k, "shape": list(v.shape), "dtype": v.dtype.str.replace("=", "<")}
                         for k, v in tensors]
    for t in header["tensors"]:
        if t["dtype"] not in ("<f4", "<f8"):
            raise ValueError(f"unsupported tensor dtype {t['dtype']}")
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [magic, struct.pack("<IQ", FORMAT_VERSION, len(text)), text]
    parts += [np.ascontiguousarray(v, dtype=t["dtype"]).tobytes()
              for (_, v), t in zip(tensors, header["tensors"])]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def _unpack(data: bytes, magic: bytes):
    if len(data) < 20 or data[:4] != magic:
        raise CorruptFile("bad magic bytes")
    version, hlen = struct.unpack_from("<IQ", data, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"format version {version}, this build reads {FORMAT_VERSION}")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc:
        raise CorruptFile("checksum mismatch")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
        pos = 16 + hlen
        tensors = {}
        for t in header["tensors"]:
            dt = np.dtype(t["dtype"])
            count = int(np.prod(t["shape"], dtype=np.int64))
            arr = np.frombuffer(data, dtype=dt, count=count, offset=pos).reshape(t["shape"])
            tensors[t["name"]] = arr.astype(dt.newbyteorder("="))
            pos += count * dt.itemsize
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"unreadable payload: {exc}") from exc
    if pos != len(data) - 4:
        raise CorruptFile("payload length disagrees with header")
    return header, tensors


def dumps_filter(f: FrozenFilter) -> bytes:
    return _pack(FILTER_MAGIC, f.header(), list(f.generator.params.items()))


def loads_filter(data: bytes) -> FrozenFilter:
    header, tensors = _unpack(data, FILTER_MAGIC)
    try:
        arch = Arch.from_dict(header["arch"])
        gen = make_generator(arch, params=tensors)
        return FrozenFilter(gen, arch, F0Stats.from_dict(header["f0_source"]),
                            F0Stats.from_dict(header["f0_target"]),
                            FeatureStats.from_dict(header["feature_stats"]),
                            VocoderConfig(**header["vocoder"]),
                            int(header["mcep"]["order"]), float(header["mcep"]["alpha"]),
                            bool(header["mcep"]["energy_passthrough"]))
    except (KeyError, TypeError, ShapeMismatch) as exc:
        raise CorruptFile(f"inconsistent filter header: {exc}") from exc


def save_filter(f: FrozenFilter, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_filter(f))


def load_filter(path) -> FrozenFilter:
    with open(path, "rb") as fh:
        return loads_filter(fh.read())


def dumps_model(m: CycleGanModel, extra: dict | None = None) -> bytes:
    """Full checkpoint: all four networks plus free-form metadata."""
    tensors = [(f"{name}/{k}", v) for name, net in m.networks().items()
               for k, v in net.params.items()]
    return _pack(CHECKPOINT_MAGIC, {"kind": "model", "arch": m.arch.to_dict(),
                                    "extra": extra or {}}, tensors)


def loads_model(data: bytes):
    """Inverse of :func:`dumps_model`; returns ``(model, extra)``."""
    header, tensors = _unpack(data, CHECKPOINT_MAGIC)
    arch = Arch.from_dict(header["arch"])

    def part(name):
        prefix = name + "/"
        return {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}

    try:
        m = CycleGanModel(make_generator(arch, part("gen_xy")), make_generator(arch, part("gen_yx")),
                          make_discriminator(arch, part("disc_x")),
                          make_discriminator(arch, part("disc_y")), arch)
    except (KeyError, ShapeMismatch) as exc:
        raise CorruptFile(f"inconsistent checkpoint: {exc}") from exc
    return m, header["extra"]
