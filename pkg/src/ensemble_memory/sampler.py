"""Monte Carlo engine: write -> store -> retrieve -> detect, trial by trial."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import CountRecord, ExperimentConfig, PulseProfile, ValidatedConfig, validate
from .detection import ChannelModel, detect_many, thin
from .retrieval import retrieval_efficiency, retrieve_finite_depth, retrieve_ideal, storage_survival
from .write import mode_mean, spin_profile, stokes_flux

# Trials per rng stream. Streams are keyed by (seed, block, stage), so the
# batch depends only on the seed, never on how blocks are spread over workers.
BLOCK_SIZE = 65536

_STAGE_WRITE, _STAGE_MEMORY, _STAGE_STOKES, _STAGE_ANTISTOKES = range(4)

COLUMNS = ("true_stokes", "true_spin", "retrieved", "s1", "s2", "as1", "as2")


@dataclass(frozen=True)
class ProtocolModel:
    """Scalars and pulse shapes the sampler needs, computed once per config."""

    config: ValidatedConfig
    per_mode_mean: float
    storage_survival: float
    retrieval_efficiency: float
    stokes_pulse: PulseProfile | None = None
    antistokes_pulse: PulseProfile | None = None

    @property
    def stokes_channel(self) -> ChannelModel:
        c = self.config
        return ChannelModel(c.stokes_efficiency, c.stokes_background, c.dead_time)

    @property
    def antistokes_channel(self) -> ChannelModel:
        c = self.config
        return ChannelModel(c.antistokes_efficiency, c.antistokes_background, c.dead_time)


def prepare(config: ExperimentConfig | ValidatedConfig, retrieval_eff: float | None = None) -> ProtocolModel:
    """Run the deterministic stages (write growth, EIT retrieval) once."""
    config = validate(config)
    per_mode = mode_mean(config.collective_rate, config.write_duration)
    profile = spin_profile(config)
    stokes_pulse = antistokes_pulse = None
    if config.dead_time > 0:
        stokes_pulse = stokes_flux(config)
        if config.retrieval_model == "ideal":
            shape = profile if profile.total > 0 else profile.uniform(1.0)
            antistokes_pulse = retrieve_ideal(shape, config.retrieve_coupling).antistokes_flux
        else:
            result = retrieve_finite_depth(profile if profile.total > 0 else profile.uniform(1.0), config)
            antistokes_pulse = result.antistokes_flux
            if retrieval_eff is None:
                retrieval_eff = result.efficiency
    if retrieval_eff is None:
        retrieval_eff = retrieval_efficiency(config, profile if profile.total > 0 else None)
    if not 0.0 <= retrieval_eff <= 1.0:
        raise ValueError(f"retrieval efficiency must lie in [0, 1], got {retrieval_eff}")
    return ProtocolModel(
        config=config,
        per_mode_mean=per_mode,
        storage_survival=storage_survival(config),
        retrieval_efficiency=float(retrieval_eff),
        stokes_pulse=stokes_pulse,
        antistokes_pulse=antistokes_pulse,
    )


@dataclass
class TrialBatch:
    """Columnar record store; one row per trial."""

    true_stokes: np.ndarray
    true_spin: np.ndarray
    retrieved: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    as1: np.ndarray
    as2: np.ndarray
    config: ValidatedConfig | None = None
    seed: int | None = None

    def __len__(self) -> int:
        return self.s1.size

    def __getitem__(self, i: int) -> CountRecord:
        return CountRecord(*(int(getattr(self, c)[i]) for c in COLUMNS))

    def __iter__(self) -> Iterator[CountRecord]:
        for i in range(len(self)):
            yield self[i]

    @property
    def records(self) -> list[CountRecord]:
        return list(self)

    @property
    def stokes(self) -> np.ndarray:
        return self.s1 + self.s2

    @property
    def antistokes(self) -> np.ndarray:
        return self.as1 + self.as2

    def subset(self, mask: np.ndarray) -> "TrialBatch":
        return TrialBatch(*(getattr(self, c)[mask] for c in COLUMNS), config=self.config, seed=self.seed)

    @classmethod
    def from_counts(cls, s1, s2, as1, as2, config=None) -> "TrialBatch":
        """Batch from detector counts alone; latent columns are unknown (-1)."""
        s1, s2, as1, as2 = (np.asarray(x, dtype=np.int64) for x in (s1, s2, as1, as2))
        unknown = np.full(s1.size, -1, dtype=np.int64)
        return cls(unknown, unknown.copy(), unknown.copy(), s1, s2, as1, as2, config=config)

    @classmethod
    def concatenate(cls, parts: list["TrialBatch"], config=None, seed=None) -> "TrialBatch":
        return cls(*(np.concatenate([getattr(p, c) for p in parts]) for c in COLUMNS), config=config, seed=seed)


def _sample(model: ProtocolModel, size: int, rngs) -> TrialBatch:
    write_rng, memory_rng, stokes_rng, antistokes_rng = rngs
    modes = model.config.mode_count
    # Per-mode Bose-Einstein numbers; every Stokes photon flips one spin.
    p = 1.0 / (1.0 + model.per_mode_mean)
    per_mode = write_rng.geometric(p, size=(modes, size)) - 1
    true_stokes = per_mode.sum(axis=0).astype(np.int64)
    true_spin = true_stokes.copy()
    stored = thin(true_spin, model.storage_survival, memory_rng)
    retrieved = thin(stored, model.retrieval_efficiency, memory_rng)
    s1, s2 = detect_many(true_stokes, model.stokes_channel, stokes_rng, model.stokes_pulse)
    as1, as2 = detect_many(retrieved, model.antistokes_channel, antistokes_rng, model.antistokes_pulse)
    return TrialBatch(true_stokes, true_spin, retrieved, s1, s2, as1, as2)


def block_streams(seed: int, block: int) -> tuple[np.random.Generator, ...]:
    return tuple(
        np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block, stage))))
        for stage in (_STAGE_WRITE, _STAGE_MEMORY, _STAGE_STOKES, _STAGE_ANTISTOKES)
    )


def _run_block(args) -> TrialBatch:
    model, seed, block, size = args
    return _sample(model, size, block_streams(seed, block))


def sample_trial(config: ExperimentConfig | ValidatedConfig | ProtocolModel, rng: np.random.Generator) -> CountRecord:
    """One full protocol trial drawn from ``rng``."""
    model = config if isinstance(config, ProtocolModel) else prepare(config)
    return _sample(model, 1, (rng, rng, rng, rng))[0]


def run_batch(
    config: ExperimentConfig | ValidatedConfig | ProtocolModel,
    trials: int,
    workers: int = 1,
    seed: int | None = None,
) -> TrialBatch:
    """Sample ``trials`` independent trials, reproducibly from ``seed``.

    ``seed`` defaults to the config's ``rng_seed``. The result is identical
    for any ``workers`` count.
    """
    if int(trials) != trials or trials < 1:
        raise ValueError(f"trials must be a positive integer, got {trials}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    model = config if isinstance(config, ProtocolModel) else prepare(config)
    seed = model.config.rng_seed if seed is None else int(seed)
    jobs = []
    for block, start in enumerate(range(0, int(trials), BLOCK_SIZE)):
        jobs.append((model, seed, block, min(BLOCK_SIZE, int(trials) - start)))
    if workers == 1 or len(jobs) == 1:
        parts = [_run_block(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block, jobs))
    return TrialBatch.concatenate(parts, config=model.config, seed=seed)
