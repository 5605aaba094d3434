"""Training loop with warm-up and periodically refreshed pruned selections.

Epochs are numbered from 1. Epochs ``1..warmup`` train on the whole pool.
A prune event fires at every epoch ``e > warmup`` with
``(e - warmup) % prune_every == 0``: the full pool is embedded with the
parameters at the start of epoch ``e``, pruned, and the new selection takes
effect from epoch ``e + 1``. Epoch ``e`` itself still trains on the previous
selection, which is what lets pruning run on a worker thread while the epoch
trains; the synchronous path produces the same selections.

The total epoch count stretches so the number of processed batches matches
an unpruned ``budget_epochs`` run (see ``epochs_for_budget``).
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .embeddings import EmbeddingMatrix, atomic_write, random_subset
from .evaluation import DEFAULT_K, probe
from .pruner import PruneConfig, prune, target_size
from .rng import SeededRng
from .selection import Selection

HISTORY_COLUMNS = ("epoch", "sel_size", "train_loss", "val_loss", "probe_metric", "prune_event")


def epochs_for_budget(budget_epochs: int, warmup: int, keep: float) -> int:
    """Epochs needed so a run pruned to ``keep`` sees as many batches as ``budget_epochs`` unpruned.

    ``warmup + ceil((budget_epochs - warmup) / keep)``; ``keep`` is read as the
    decimal it prints as, so 0.3 means exactly 3/10.
    """
    if not keep > 0:
        raise ValueError(f"keep must be > 0, got {keep}")
    if keep > 1:
        raise ValueError(f"keep must be <= 1, got {keep}")
    if warmup > budget_epochs:
        raise ValueError("warmup exceeds the epoch budget")
    return warmup + math.ceil(Fraction(budget_epochs - warmup) / Fraction(repr(float(keep))))


@dataclass(frozen=True)
class CurriculumConfig:
    budget_epochs: int = 60
    warmup: int = 6
    prune_every: int = 1
    prune: PruneConfig = PruneConfig()
    eta_sequence: tuple[float, ...] = ()
    probe_every: int = 0
    seed: int = 0
    val_fraction: float = 0.05
    concurrent: bool = False

    def __post_init__(self):
        object.__setattr__(self, "eta_sequence", tuple(float(x) for x in self.eta_sequence))
        if self.warmup < 1:
            raise ValueError("warmup must be >= 1")
        if self.prune_every < 1:
            raise ValueError("prune_every must be >= 1")
        if self.budget_epochs < self.warmup:
            raise ValueError("budget_epochs must be >= warmup")
        if any(not 0 <= x <= 1 for x in self.eta_sequence):
            raise ValueError("eta_sequence values must lie in [0, 1]")
        if self.probe_every < 0:
            raise ValueError("probe_every must be >= 0")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must be in [0, 1)")

    @property
    def total_epochs(self) -> int:
        return epochs_for_budget(self.budget_epochs, self.warmup, self.prune.rho)

    def is_prune_epoch(self, epoch: int) -> bool:
        return epoch > self.warmup and (epoch - self.warmup) % self.prune_every == 0

    def event_epochs(self) -> list[int]:
        return [e for e in range(1, self.total_epochs + 1) if self.is_prune_epoch(e)]


@dataclass
class ProbeSet:
    """Labelled raw inputs for k-NN probing of the current encoder."""

    train: EmbeddingMatrix
    test: EmbeddingMatrix
    k: int = DEFAULT_K
    metric: str = "euclidean"

    def evaluate(self, trainer, params) -> float:
        return probe(
            trainer.embed(params, self.train),
            self.train.labels,
            trainer.embed(params, self.test),
            self.test.labels,
            self.k,
            metric=self.metric,
        ).metric


@dataclass
class EpochRecord:
    epoch: int
    sel_size: int
    train_loss: float
    val_loss: float | None
    probe_metric: float | None
    prune_event: bool


@dataclass
class RunHistory:
    records: list[EpochRecord]
    params: object
    selections: list[Selection] = field(default_factory=list)
    pool: np.ndarray | None = None
    val_indices: np.ndarray | None = None

    @property
    def pool_size(self) -> int:
        return int(self.pool.size)

    def budget_used(self) -> float:
        """Sum over epochs of the trained fraction of the pool."""
        return math.fsum(r.sel_size / self.pool_size for r in self.records)

    def final_probe(self) -> float | None:
        return self.records[-1].probe_metric if self.records else None

    def to_csv(self, header_lines=()) -> str:
        out = io.StringIO()
        for line in header_lines:
            out.write(f"# {line}\n")
        w = csv.writer(out, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for r in self.records:
            w.writerow([
                r.epoch,
                r.sel_size,
                repr(r.train_loss),
                "" if r.val_loss is None else repr(r.val_loss),
                "" if r.probe_metric is None else repr(r.probe_metric),
                int(r.prune_event),
            ])
        return out.getvalue()

    def write_csv(self, path, header_lines=()) -> None:
        atomic_write(path, self.to_csv(header_lines))


def split_validation(n: int, fraction: float, rng: SeededRng):
    """Return (pool indices, held-out validation indices), both sorted."""
    n_val = target_size(fraction, n) if fraction > 0 else 0
    if n_val == 0:
        return np.arange(n, dtype=np.int64), np.empty(0, dtype=np.int64)
    val = random_subset(n, n_val, rng)
    mask = np.ones(n, dtype=bool)
    mask[val] = False
    return np.flatnonzero(mask), val


def run_ssl_ord(
    config: CurriculumConfig,
    trainer,
    data: EmbeddingMatrix,
    probe_set: ProbeSet | None = None,
    on_selection=None,
) -> RunHistory:
    """Train with scheduled re-pruning; returns per-epoch history and final params.

    ``trainer`` provides ``init_params(d_in, rng)``, ``train_epoch(params,
    data, selection, rng)``, ``evaluate_loss(params, data, rng)`` and
    ``embed(params, data)``. ``on_selection`` is called with each new
    Selection (indices in the original dataset) as soon as it is ready.
    """
    root = SeededRng(config.seed)
    pool, val_idx = split_validation(data.n, config.val_fraction, root.split("val-split"))
    pool_data = data.take(pool)
    val_data = data.take(val_idx) if val_idx.size >= 2 else None

    params = trainer.init_params(data.d, root.split("init"))
    total = config.total_epochs
    current = None  # local indices into pool_data; None = the whole pool
    records: list[EpochRecord] = []
    selections: list[Selection] = []
    n_events = 0
    executor = ThreadPoolExecutor(max_workers=1) if config.concurrent else None

    def do_prune(snapshot, epoch, eta):
        return prune(snapshot, config.prune, epoch=epoch, eta=eta, rng=root.split("prune", epoch))

    try:
        for e in range(1, total + 1):
            event = config.is_prune_epoch(e)
            pending = None
            if event:
                eta = (
                    config.eta_sequence[n_events]
                    if n_events < len(config.eta_sequence)
                    else config.prune.eta
                )
                n_events += 1
                snapshot = trainer.embed(params, pool_data)
                if executor is not None:
                    pending = executor.submit(do_prune, snapshot, e, eta)
                else:
                    pending = do_prune(snapshot, e, eta)

            sel_size = pool.size if current is None else int(current.size)
            params, train_loss = trainer.train_epoch(params, pool_data, current, root.split("train", e))

            if event:
                local = pending.result() if executor is not None else pending
                current = local.indices
                mapped = Selection(
                    pool[local.indices],
                    epoch=local.epoch,
                    rho=local.rho,
                    eta=local.eta,
                    seed=local.seed,
                    source_hash=local.source_hash,
                    cluster_sizes=local.cluster_sizes,
                    quotas=local.quotas,
                )
                selections.append(mapped)
                if on_selection is not None:
                    on_selection(mapped)

            val_loss = (
                trainer.evaluate_loss(params, val_data, root.split("val-aug"))
                if val_data is not None
                else None
            )
            probe_metric = None
            if probe_set is not None and (
                e == total or (config.probe_every and e % config.probe_every == 0)
            ):
                probe_metric = probe_set.evaluate(trainer, params)
            records.append(EpochRecord(e, int(sel_size), train_loss, val_loss, probe_metric, event))
    finally:
        if executor is not None:
            executor.shutdown(wait=True)
    return RunHistory(records, params, selections, pool, val_idx)
