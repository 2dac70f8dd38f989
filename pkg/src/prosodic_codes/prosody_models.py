"""Phrase-level encoder/decoder models over normalised log-F0 features.

Two variants share one architecture:

* ``"ae"``: a deterministic autoencoder; phrase embeddings are later
  clustered with k-means.
* ``"vamp"``: a VAE whose prior is a uniform mixture of the encoder's
  posteriors for ``K`` learned pseudo-input *sequences* of fixed, varied
  lengths.

The encoder is clocked per frame over the whole utterance; the latent for a
phrase is read at the phrase's last frame.  The decoder sees, per frame, the
latent of the phrase containing that frame concatenated with a one-hot phone
identity.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (DurationMismatch, FormatError, RangeOutOfBounds, ShapeMismatch,
                     WrongModelKind)
from .f0_features import NormStats
from .neural_core import (Adam, ParamStore, SequenceStack, TrainSchedule, kl_weight_at,
                          lr_at, read_container, write_container)

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
CHECKPOINT_VERSION = 1
DEFAULT_PSEUDO_LENGTHS = tuple(L for L in range(50, 501, 50) for _ in range(2))


@dataclass
class LatentPosterior:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        if self.mu.shape != self.sigma.shape:
            raise ShapeMismatch("mu and sigma shapes differ")
        if np.any(self.sigma <= 0):
            raise ValueError("sigma must be positive")


@dataclass
class TrainingExample:
    """One utterance ready for the network."""

    features: np.ndarray          # (T, 3)
    phone_ids: np.ndarray         # (T,) int
    ranges: list                  # phrase [start, end) frame ranges
    utt_id: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.phone_ids = np.asarray(self.phone_ids, dtype=np.int64)
        T = self.features.shape[0]
        if self.phone_ids.shape != (T,):
            raise DurationMismatch(f"{T} feature frames but {self.phone_ids.size} phone frames")
        check_ranges(self.ranges, T)

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]


def check_ranges(ranges, T: int):
    if not ranges:
        raise RangeOutOfBounds("at least one phrase range is required")
    prev_end = 0
    for s, e in ranges:
        if not (0 <= s < e <= T):
            raise RangeOutOfBounds(f"range ({s}, {e}) outside [0, {T})")
        if s < prev_end:
            raise RangeOutOfBounds(f"range ({s}, {e}) overlaps or is out of order")
        prev_end = e


def frame_phrase_index(ranges, T: int) -> np.ndarray:
    """Phrase index for every frame.

    Frames before the first phrase belong to it; frames in a gap belong to
    the preceding phrase.
    """
    idx = np.zeros(T, dtype=np.int64)
    for p, (s, _) in enumerate(ranges):
        idx[s:] = p
    return idx


@dataclass
class Batch:
    x: np.ndarray            # (T, B, 3)
    mask: np.ndarray         # (T, B) 1.0 on real frames
    phone_ids: np.ndarray    # (T, B)
    phrase_idx: np.ndarray   # (T, B) index into the batch's phrase list
    end_t: np.ndarray        # (P,) last frame of each phrase
    end_b: np.ndarray        # (P,) batch column of each phrase
    n_frames: int = 0


def make_batch(examples) -> Batch:
    T = max(ex.n_frames for ex in examples)
    B = len(examples)
    x = np.zeros((T, B, 3))
    mask = np.zeros((T, B))
    phones = np.zeros((T, B), dtype=np.int64)
    pidx = np.zeros((T, B), dtype=np.int64)
    end_t, end_b = [], []
    for b, ex in enumerate(examples):
        n = ex.n_frames
        x[:n, b] = ex.features
        mask[:n, b] = 1.0
        phones[:n, b] = ex.phone_ids
        local = frame_phrase_index(ex.ranges, n)
        offset = len(end_t)
        pidx[:n, b] = local + offset
        pidx[n:, b] = offset + len(ex.ranges) - 1
        for _, e in ex.ranges:
            end_t.append(e - 1)
            end_b.append(b)
    return Batch(x, mask, phones, pidx, np.array(end_t, dtype=np.int64),
                 np.array(end_b, dtype=np.int64), int(mask.sum()))


# ---------------------------------------------------------------------------
# Densities


def reparameterize(post: LatentPosterior, noise) -> np.ndarray:
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != post.mu.shape:
        raise ShapeMismatch(f"noise shape {noise.shape} != latent shape {post.mu.shape}")
    return post.mu + post.sigma * noise


def gaussian_log_density(z, mu, logvar):
    """Diagonal Gaussian log density, summed over the last axis."""
    return -0.5 * np.sum(LOG_2PI + logvar + (z - mu) ** 2 / np.exp(logvar), axis=-1)


def mixture_log_density(z, means, logvars):
    """log of the uniform mixture ``(1/K) sum_k N(z; means[k], exp(logvars[k]))``.

    ``z`` may be (D,) or (N, D); returns a scalar or (N,) array.
    """
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    Z = np.atleast_2d(z)
    comp = gaussian_log_density(Z[:, None, :], means[None], logvars[None])  # (N, K)
    top = comp.max(axis=1, keepdims=True)
    out = top[:, 0] + np.log(np.exp(comp - top).sum(axis=1)) - math.log(means.shape[0])
    return out[0] if single else out


def kl_mc_estimate(post: LatentPosterior, z, prior_means, prior_logvars):
    """Single-sample estimate ``log q(z|x) - log p(z)`` (per row for batched input)."""
    logq = gaussian_log_density(z, post.mu, 2.0 * np.log(post.sigma))
    return logq - mixture_log_density(z, prior_means, prior_logvars)


def ae_loss(x, xhat, mask=None):
    """Mean squared error over unmasked frames and all streams."""
    x = np.asarray(x, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if x.shape != xhat.shape:
        raise ShapeMismatch(f"{x.shape} vs {xhat.shape}")
    if mask is None:
        return float(np.mean((xhat - x) ** 2))
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != x.shape[:-1]:
        raise ShapeMismatch(f"mask {mask.shape} does not match frames {x.shape[:-1]}")
    denom = mask.sum() * x.shape[-1]
    return float(((xhat - x) ** 2 * mask[..., None]).sum() / denom)


def vae_loss(x, xhat, post: LatentPosterior, z, beta, prior_means, prior_logvars, mask=None):
    """``(total, recon, kl)`` with KL averaged over phrases."""
    z = np.atleast_2d(z)
    if z.shape != np.atleast_2d(post.mu).shape:
        raise ShapeMismatch("one latent sample per phrase posterior is required")
    recon = ae_loss(x, xhat, mask)
    kl = float(np.mean(kl_mc_estimate(post, z, prior_means, prior_logvars)))
    return recon + beta * kl, recon, kl


# ---------------------------------------------------------------------------
# The model


class ProsodyModel:
    """Encoder/decoder pair, plus pseudo-inputs for the ``vamp`` kind."""

    def __init__(self, kind: str, phones, latent_dim: int = 16, ff_units: int = 256,
                 rnn_units: int = 64, rnn_layers: int = 3, pseudo_lengths=None, seed: int = 0):
        if kind not in ("ae", "vamp"):
            raise WrongModelKind(f"unknown model kind {kind!r}")
        self.kind = kind
        self.phones = list(phones)
        self.phone_index = {p: i for i, p in enumerate(self.phones)}
        self.latent_dim = latent_dim
        self.ff_units, self.rnn_units, self.rnn_layers = ff_units, rnn_units, rnn_layers
        self.seed = seed
        rng = np.random.default_rng([seed, 0])
        self.store = ParamStore()
        enc_out = latent_dim if kind == "ae" else 2 * latent_dim
        self.encoder = SequenceStack(self.store, "encoder", 3, enc_out, rng,
                                     ff_units, rnn_units, rnn_layers)
        self.decoder = SequenceStack(self.store, "decoder", latent_dim + len(self.phones), 3,
                                     rng, ff_units, rnn_units, rnn_layers)
        self.pseudo_lengths = ()
        self.pseudo = []
        if kind == "vamp":
            self.pseudo_lengths = tuple(int(L) for L in (pseudo_lengths or DEFAULT_PSEUDO_LENGTHS))
            for k, L in enumerate(self.pseudo_lengths):
                self.pseudo.append(self.store.add(f"pseudo.{k:03d}", rng.normal(size=(L, 3))))

    @property
    def is_vamp(self) -> bool:
        return self.kind == "vamp"

    @property
    def n_phones(self) -> int:
        return len(self.phones)

    def hyperparameters(self) -> dict:
        return {"kind": self.kind, "phones": self.phones, "latent_dim": self.latent_dim,
                "ff_units": self.ff_units, "rnn_units": self.rnn_units,
                "rnn_layers": self.rnn_layers, "pseudo_lengths": list(self.pseudo_lengths),
                "seed": self.seed}

    # -- pseudo-inputs ------------------------------------------------------

    def init_pseudo_inputs(self, examples, rng: np.random.Generator, method: str = "frames"):
        """Initialise pseudo-inputs from training features.

        ``"frames"`` draws every frame independently from the pooled training
        frames; ``"utterance"`` resamples one random training utterance to
        each pseudo-input's length.
        """
        if method == "frames":
            pool = np.concatenate([ex.features for ex in examples])
            for p, L in zip(self.pseudo, self.pseudo_lengths):
                p.value[...] = pool[rng.integers(pool.shape[0], size=L)]
            return
        if method != "utterance":
            raise ValueError(f"unknown pseudo-input init {method!r}")
        for p, L in zip(self.pseudo, self.pseudo_lengths):
            src = examples[int(rng.integers(len(examples)))].features
            pos = np.linspace(0.0, src.shape[0] - 1, L)
            grid = np.arange(src.shape[0])
            p.value[...] = np.stack([np.interp(pos, grid, src[:, c]) for c in range(3)], axis=1)

    def _pseudo_batch(self):
        Lmax = max(self.pseudo_lengths)
        K = len(self.pseudo)
        x = np.zeros((Lmax, K, 3))
        for k, p in enumerate(self.pseudo):
            x[: p.value.shape[0], k] = p.value
        return x

    def prior_components(self, with_cache: bool = False):
        """Means and log-variances of the mixture prior's K components."""
        if not self.is_vamp:
            raise WrongModelKind("only vamp models have a learned prior")
        out, cache = self.encoder.forward(self._pseudo_batch())
        ends = np.array(self.pseudo_lengths) - 1
        g = out[ends, np.arange(len(self.pseudo))]
        D = self.latent_dim
        means, logvars = g[:, :D], g[:, D:]
        if with_cache:
            return means, logvars, (cache, out.shape, ends)
        return means, logvars

    def _prior_backward(self, dmeans, dlogvars, pcache):
        cache, shape, ends = pcache
        dout = np.zeros(shape)
        K = len(self.pseudo)
        dout[ends, np.arange(K), : self.latent_dim] = dmeans
        dout[ends, np.arange(K), self.latent_dim :] = dlogvars
        dx = self.encoder.backward(dout, cache)
        for k, p in enumerate(self.pseudo):
            p.grad += dx[: p.value.shape[0], k]

    def vamp_log_prior(self, z):
        means, logvars = self.prior_components()
        return mixture_log_density(z, means, logvars)

    # -- encoding / decoding ----------------------------------------------

    def _encode_batch(self, batch: Batch):
        out, cache = self.encoder.forward(batch.x)
        return out[batch.end_t, batch.end_b], (cache, out.shape)

    def encode_phrases(self, features, ranges):
        """Latent output at the last frame of each phrase range.

        Returns an ``(P, D)`` array for the AE and a :class:`LatentPosterior`
        for the VAE.
        """
        x = features.frames if hasattr(features, "frames") else np.asarray(features, float)
        T = x.shape[0]
        check_ranges(ranges, T)
        out, _ = self.encoder.forward(x[:, None, :])
        ends = np.array([e - 1 for _, e in ranges])
        g = out[ends, 0]
        if self.kind == "ae":
            return g
        D = self.latent_dim
        return LatentPosterior(g[:, :D], np.exp(0.5 * g[:, D:]))

    def phone_ids(self, phones) -> np.ndarray:
        from .errors import UnknownPhone

        try:
            return np.array([self.phone_index[p] for p in phones], dtype=np.int64)
        except KeyError as exc:
            raise UnknownPhone(f"phone {exc.args[0]!r} is not in the model inventory") from None

    def _decoder_input(self, codes, batch: Batch):
        T, B = batch.phone_ids.shape
        din = np.zeros((T, B, self.latent_dim + self.n_phones))
        din[..., : self.latent_dim] = codes[batch.phrase_idx]
        onehot = din[..., self.latent_dim :]
        tt, bb = np.indices((T, B))
        onehot[tt, bb, batch.phone_ids] = 1.0
        return din

    def _decode_batch(self, codes, batch: Batch):
        y, cache = self.decoder.forward(self._decoder_input(codes, batch))
        return y, cache

    def _decode_backward(self, dy, cache, batch: Batch, n_codes: int):
        din = self.decoder.backward(dy, cache)
        dcodes = np.zeros((n_codes, self.latent_dim))
        np.add.at(dcodes, batch.phrase_idx.reshape(-1),
                  din[..., : self.latent_dim].reshape(-1, self.latent_dim))
        return dcodes

    def decode(self, codes, phone_ids, ranges=None) -> np.ndarray:
        """Feature means ``(T, 3)`` for one utterance.

        ``phone_ids`` is the frame-level phone index sequence (or a
        ``(phones, durations)`` pair to upsample); ``codes`` holds one latent
        per phrase.
        """
        if isinstance(phone_ids, tuple) and len(phone_ids) == 2:
            phone_ids = self.upsample_phones(*phone_ids)
        phone_ids = np.asarray(phone_ids, dtype=np.int64)
        T = phone_ids.size
        codes = np.atleast_2d(np.asarray(codes, dtype=np.float64))
        if codes.shape[1] != self.latent_dim:
            raise ShapeMismatch(f"codes must have width {self.latent_dim}")
        if ranges is None:
            if codes.shape[0] != 1:
                raise RangeOutOfBounds("phrase ranges are required for more than one code")
            ranges = [(0, T)]
        if ranges[-1][1] > T:
            raise DurationMismatch(f"phrase ranges end at {ranges[-1][1]} but only {T} frames")
        check_ranges(ranges, T)
        if len(ranges) != codes.shape[0]:
            raise RangeOutOfBounds(f"{codes.shape[0]} codes for {len(ranges)} phrases")
        ex = TrainingExample(np.zeros((T, 3)), phone_ids, list(ranges))
        y, _ = self._decode_batch(codes, make_batch([ex]))
        return y[:, 0]

    def upsample_phones(self, phones, durations) -> np.ndarray:
        ids = self.phone_ids(phones)
        durations = np.asarray(durations, dtype=np.int64)
        if durations.shape != ids.shape or np.any(durations <= 0):
            raise DurationMismatch("one positive duration per phone is required")
        return np.repeat(ids, durations)

    def embed(self, example: TrainingExample) -> np.ndarray:
        """Deterministic phrase embeddings: AE ``z`` or VAE posterior mean."""
        out = self.encode_phrases(example.features, example.ranges)
        return out if self.kind == "ae" else out.mu

    def reconstruct(self, example: TrainingExample) -> np.ndarray:
        """Decode an utterance from its own (oracle) phrase embeddings."""
        return self.decode(self.embed(example), example.phone_ids, example.ranges)

    # -- loss over a batch ----------------------------------------------------

    def loss_and_grad(self, batch: Batch, beta: float = 0.0, noise=None, backward: bool = True):
        """Batch loss; accumulates gradients into ``self.store`` when ``backward``.

        Returns ``(total, recon, kl)``; ``kl`` is 0.0 for the AE.  ``noise``
        is the standard-normal draw per phrase (VAE only).
        """
        g, enc_cache = self._encode_batch(batch)
        P = g.shape[0]
        D = self.latent_dim
        kl = 0.0
        if self.is_vamp:
            mu, logvar = g[:, :D], g[:, D:]
            sigma = np.exp(0.5 * logvar)
            eps = np.zeros((P, D)) if noise is None else np.asarray(noise, dtype=np.float64)
            z = mu + sigma * eps
            pmeans, plogvars, pcache = self.prior_components(with_cache=True)
            comp = gaussian_log_density(z[:, None, :], pmeans[None], plogvars[None])  # (P, K)
            top = comp.max(axis=1, keepdims=True)
            w = np.exp(comp - top)
            lse = top[:, 0] + np.log(w.sum(axis=1))
            w /= w.sum(axis=1, keepdims=True)
            logp = lse - math.log(pmeans.shape[0])
            logq = -0.5 * np.sum(LOG_2PI + logvar + eps ** 2, axis=1)
            kl = float(np.mean(logq - logp))
        else:
            z = g

        y, dec_cache = self._decode_batch(z, batch)
        diff = (y - batch.x) * batch.mask[..., None]
        denom = 3.0 * batch.mask.sum()
        recon = float((diff ** 2).sum() / denom)
        total = recon + beta * kl
        if not backward:
            return total, recon, kl

        dz = self._decode_backward(2.0 * diff / denom, dec_cache, batch, P)
        if self.is_vamp:
            pvars = np.exp(plogvars)
            delta = z[:, None, :] - pmeans[None]                       # (P, K, D)
            # d(-log p)/dz and the prior-component gradients, scaled by beta/P
            scale = beta / P
            dlogp_dz = -(w[..., None] * delta / pvars[None]).sum(axis=1)
            dz_kl = -scale * dlogp_dz
            dmeans = -scale * (w[..., None] * delta / pvars[None]).sum(axis=0)
            dplogvars = -scale * (w[..., None] * (-0.5 + 0.5 * delta ** 2 / pvars[None])).sum(axis=0)
            dz_total = dz + dz_kl
            dmu = dz_total
            dlogvar = dz_total * 0.5 * sigma * eps - 0.5 * scale
            dg = np.concatenate([dmu, dlogvar], axis=1)
            self._prior_backward(dmeans, dplogvars, pcache)
        else:
            dg = dz
        cache, shape = enc_cache
        dout = np.zeros(shape)
        dout[batch.end_t, batch.end_b] = dg
        self.encoder.backward(dout, cache)
        return total, recon, kl


# ---------------------------------------------------------------------------
# Checkpoints


@dataclass
class ModelCheckpoint:
    model: ProsodyModel
    norm_stats: NormStats | None = None
    schedule: TrainSchedule | None = None
    extra: dict = field(default_factory=dict)

    def save(self, path):
        meta = {"format": "prosodic-codes-checkpoint", "version": CHECKPOINT_VERSION,
                "hyperparameters": self.model.hyperparameters(),
                "norm_stats": None if self.norm_stats is None else dict(self.norm_stats.__dict__),
                "schedule": None if self.schedule is None else dict(self.schedule.__dict__),
                "extra": self.extra}
        write_container(path, self.model.store.values_dict(), meta)

    @classmethod
    def load(cls, path) -> "ModelCheckpoint":
        arrays, meta = read_container(path)
        if meta.get("format") != "prosodic-codes-checkpoint":
            raise FormatError("not a model checkpoint", path)
        if meta.get("version") != CHECKPOINT_VERSION:
            raise FormatError(f"unsupported checkpoint version {meta.get('version')}", path)
        hp = meta["hyperparameters"]
        model = ProsodyModel(hp["kind"], hp["phones"], hp["latent_dim"], hp["ff_units"],
                             hp["rnn_units"], hp["rnn_layers"], hp["pseudo_lengths"] or None,
                             hp["seed"])
        model.store.load_values(arrays)
        stats = NormStats(**meta["norm_stats"]) if meta.get("norm_stats") else None
        sched = TrainSchedule(**meta["schedule"]) if meta.get("schedule") else None
        return cls(model, stats, sched, meta.get("extra") or {})


# ---------------------------------------------------------------------------
# Training


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    beta: float
    recon: float
    kl: float
    wall_time: float

    def to_line(self) -> str:
        return (f"epoch={self.epoch} lr={self.lr!r} beta={self.beta!r} recon={self.recon!r} "
                f"kl={self.kl!r} wall_time={self.wall_time:.3f}")


def length_buckets(examples, batch_size: int) -> list[list[int]]:
    """Indices grouped into batches of similar length (stable sort by length)."""
    order = sorted(range(len(examples)), key=lambda i: (examples[i].n_frames, i))
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


def train(kind: str, examples, phones, schedule: TrainSchedule | None = None, seed: int = 0,
          latent_dim: int = 16, ff_units: int = 256, rnn_units: int = 64, rnn_layers: int = 3,
          pseudo_lengths=None, norm_stats: NormStats | None = None, on_epoch=None,
          checkpoint_every: int = 0, checkpoint_path=None, pseudo_init: str = "frames"):
    """Train an AE or VAMP model; returns ``(ModelCheckpoint, [EpochMetrics])``.

    Deterministic given ``seed``: batches are length-bucketed once and
    visited in a seeded random order each epoch; VAE noise comes from its
    own seeded stream.  ``checkpoint_path`` may contain ``{epoch}``.
    """
    examples = list(examples)
    if not examples:
        raise ValueError("no training examples")
    schedule = schedule or TrainSchedule()
    batches = length_buckets(examples, schedule.batch_size)
    schedule = replace(schedule, batches_per_epoch=len(batches))
    model = ProsodyModel(kind, phones, latent_dim, ff_units, rnn_units, rnn_layers,
                         pseudo_lengths, seed)
    if model.is_vamp:
        model.init_pseudo_inputs(examples, np.random.default_rng([seed, 3]), pseudo_init)
    built = [make_batch([examples[i] for i in idx]) for idx in batches]
    order_rng = np.random.default_rng([seed, 1])
    noise_rng = np.random.default_rng([seed, 2])
    opt = Adam(model.store)
    history = []
    step = 0
    for epoch in range(schedule.total_epochs):
        t0 = time.perf_counter()
        beta = kl_weight_at(epoch, schedule)
        frames = recon_sum = kl_sum = 0.0
        n_phr = 0
        lr = 0.0
        for bi in order_rng.permutation(len(built)):
            batch = built[bi]
            step += 1
            lr = lr_at(step, schedule)
            noise = None
            if model.is_vamp:
                noise = noise_rng.standard_normal((batch.end_t.size, latent_dim))
            model.store.zero_grad()
            _, recon, kl = model.loss_and_grad(batch, beta, noise)
            opt.step(lr)
            frames += batch.n_frames
            recon_sum += recon * batch.n_frames
            kl_sum += kl * batch.end_t.size
            n_phr += batch.end_t.size
        m = EpochMetrics(epoch, lr, beta, recon_sum / frames, kl_sum / n_phr if model.is_vamp else 0.0,
                         time.perf_counter() - t0)
        history.append(m)
        log.info(m.to_line())
        if on_epoch is not None:
            on_epoch(m)
        if checkpoint_every and checkpoint_path and (epoch + 1) % checkpoint_every == 0:
            ModelCheckpoint(model, norm_stats, schedule).save(
                str(checkpoint_path).format(epoch=epoch + 1))
    return ModelCheckpoint(model, norm_stats, schedule), history
