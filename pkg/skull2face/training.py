'''Triplet-loss optimization of the skull head'''

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import trange

from skull2face.data import TripletSet
from skull2face.errors import DimMismatch, DivergenceError, InvalidInputError
from skull2face.features import AugmentedFeatureSampler, FeatureTable
from skull2face.log import get_logger
from skull2face.model import ModelCheckpoint, ProjectionHead
from skull2face.nn import SGD, Dataloader, Tensor, TripletLoss
from skull2face.utils import PathLike, moving_average, write_csv

logger = get_logger(__name__)

Distance = Literal['squared', 'euclidean']


class TrainConfig(BaseModel):
    r'''Hyperparameters of a training run.

        ``alpha`` is the triplet margin and ``batch_size`` the number of triplets
        averaged per gradient step (the last batch of an epoch may be smaller).'''
    model_config = ConfigDict(frozen=True, extra='forbid')

    alpha: float = Field(0.2, gt=0)
    learning_rate: float = Field(0.05, ge=0)
    epochs: int = Field(200, ge=1)
    batch_size: int = Field(32, ge=1)
    seed: int = Field(0, ge=0)
    shuffle: bool = True
    distance: Distance = 'squared'
    accuracy_margin: bool = False


@dataclass
class TrainReport:
    losses: List[float] = field(default_factory=list)
    train_accuracy: List[float] = field(default_factory=list)
    val_accuracy: List[float] = field(default_factory=list)
    wall_time: float = 0.

    @property
    def final_val_accuracy(self) -> Optional[float]:
        return self.val_accuracy[-1] if self.val_accuracy else None

    @property
    def final_train_accuracy(self) -> Optional[float]:
        return self.train_accuracy[-1] if self.train_accuracy else None

    def write_csv(self, path: PathLike) -> None:
        header = ['epoch', 'mean_loss', 'train_accuracy']
        columns = [self.losses, self.train_accuracy]
        if self.val_accuracy:
            header.append('val_accuracy')
            columns.append(self.val_accuracy)
        write_csv(path, header, ([epoch + 1] + [float(c[epoch]) for c in columns]
                                 for epoch in range(len(self.losses))))

    def plot(self, path: PathLike) -> None:
        import matplotlib
        matplotlib.use('Agg')
        import matplotlib.pyplot as plt

        fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(10, 4))
        epochs = np.arange(1, len(self.losses) + 1)
        ax_loss.plot(epochs, self.losses, label='mean loss')
        smooth = moving_average(self.losses, n=5)
        ax_loss.plot(epochs[len(epochs) - len(smooth):], smooth, label='moving average')
        ax_loss.set_xlabel('epoch')
        ax_loss.set_ylabel('triplet loss')
        ax_loss.legend()
        ax_acc.plot(epochs, self.train_accuracy, label='train')
        if self.val_accuracy:
            ax_acc.plot(epochs, self.val_accuracy, label='validation')
        ax_acc.set_xlabel('epoch')
        ax_acc.set_ylabel('triplet accuracy')
        ax_acc.set_ylim(0., 1.05)
        ax_acc.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def _as_batch(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=np.float64))


def triplet_loss(e_a, e_p, e_n, alpha: float, distance: Distance = 'squared') -> float:
    r'''``max(0, d(a,p) + alpha - d(a,n))`` averaged over the batch.

        Args:
            e_a, e_p, e_n: (dim,) embeddings or (batch, dim) stacks of them
            alpha (float): margin, > 0
            distance (str): 'squared' Euclidean (default) or plain 'euclidean'

        Returns:
            the mean hinge as a float'''
    a, p, n = _as_batch(e_a), _as_batch(e_p), _as_batch(e_n)
    if not a.shape == p.shape == n.shape:
        raise DimMismatch(f'embedding shapes differ: {a.shape}, {p.shape}, {n.shape}')
    loss = TripletLoss(alpha, squared=distance == 'squared')
    return loss(Tensor(a), Tensor(p), Tensor(n)).item()


def loss_gradient(head: ProjectionHead, feat_a, e_p, e_n, alpha: float,
                  distance: Distance = 'squared') -> Dict[str, np.ndarray]:
    r'''Gradient of the mean triplet loss with respect to every head parameter.

        The face embeddings ``e_p`` / ``e_n`` are constants. Inactive triplets
        contribute exactly zero. ``head`` itself is left untouched.'''
    x, p, n = _as_batch(feat_a), _as_batch(e_p), _as_batch(e_n)
    if x.shape[1] != head.d_in:
        raise DimMismatch(f'head expects {head.d_in}-dim features, got {x.shape[1]}')
    if p.shape != (x.shape[0], head.d_out) or n.shape != p.shape:
        raise DimMismatch(f'face embeddings must be ({x.shape[0]}, {head.d_out}), got {p.shape}, {n.shape}')
    model = head.copy()
    model.zero_grad()
    loss = TripletLoss(alpha, squared=distance == 'squared')(model(Tensor(x)), Tensor(p), Tensor(n))
    loss.backward()
    return {name: param.grad.data.copy() for name, param in model.named_parameters()}


def _distances(e_a: np.ndarray, e_b: np.ndarray, distance: Distance) -> np.ndarray:
    d = ((e_a - e_b) ** 2).sum(axis=1)
    return d if distance == 'squared' else np.sqrt(d)


def _accuracy(model: ProjectionHead, matrix: np.ndarray,
              idx: Tuple[np.ndarray, np.ndarray, np.ndarray], distance: Distance, margin: float) -> float:
    a_idx, p_idx, n_idx = idx
    if len(a_idx) == 0:
        return float('nan')
    # each row is embedded once, then gathered per triplet
    embedded = model.embed(matrix)
    e_a = embedded[a_idx]
    d_ap = _distances(e_a, matrix[p_idx], distance)
    d_an = _distances(e_a, matrix[n_idx], distance)
    return float(np.mean(d_ap + margin < d_an))


def _resolve(triplets: TripletSet, features: FeatureTable) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    return (features.index_of(t.anchor for t in triplets),
            features.index_of(t.positive for t in triplets),
            features.index_of(t.negative for t in triplets))


def triplet_accuracy(head: ProjectionHead, triplets: TripletSet, features: FeatureTable,
                     distance: Distance = 'squared', margin: float = 0.) -> float:
    r'''Fraction of triplets ranked correctly, ``d(a,p) + margin < d(a,n)``.

        ``margin`` 0 is the plain ranking test; pass the training margin for the
        margin-inclusive variant.'''
    _check_dims(head, features)
    return _accuracy(head, features.matrix, _resolve(triplets, features),
                     distance, margin)


def _check_dims(head: ProjectionHead, features: FeatureTable) -> None:
    if head.d_in != features.dim:
        raise DimMismatch(f'head expects {head.d_in}-dim features, table has dim {features.dim}')
    if head.d_out != features.dim:
        raise DimMismatch(f'head embeds into {head.d_out} dims but face features have dim {features.dim}')


def _parameter_norm(model: ProjectionHead) -> float:
    return float(np.sqrt(sum((p.data ** 2).sum() for p in model.parameters())))


def train(cfg: TrainConfig, triplets: TripletSet, features: FeatureTable, head: ProjectionHead,
          validation: Optional[TripletSet] = None,
          sampler: Optional[AugmentedFeatureSampler] = None,
          progress: bool = False) -> Tuple[ModelCheckpoint, TrainReport]:
    r'''Mini-batch gradient descent on the mean triplet loss.

        Only the skull head is optimized; face features enter as constants. Every
        epoch reshuffles the triplet order with a generator seeded by ``cfg.seed``
        (when ``cfg.shuffle``), steps once per batch with the mean batch gradient,
        then records the epoch's mean loss and the train (and validation) accuracy.
        The caller's ``head`` is not modified.

        Args:
            cfg (TrainConfig): hyperparameters
            triplets (TripletSet): training triplets
            features (FeatureTable): rows for every triplet sample
            head (ProjectionHead): initial parameters
            validation (TripletSet): optional, scored after every epoch
            sampler (AugmentedFeatureSampler): optional per-epoch augmented features
            progress (bool): show a progress bar

        Raises:
            UnresolvedSample: a triplet sample has no feature row
            DivergenceError: the loss became non-finite'''
    if len(triplets) == 0:
        raise InvalidInputError('cannot train on an empty TripletSet')
    _check_dims(head, features)
    train_idx = _resolve(triplets, features)
    val_idx = _resolve(validation, features) if validation is not None and len(validation) else None

    model = head.copy().train()
    criterion = TripletLoss(cfg.alpha, squared=cfg.distance == 'squared')
    optimizer = SGD(model.parameters(), lr=cfg.learning_rate)
    loader = Dataloader(len(triplets), cfg.batch_size, shuffle=cfg.shuffle,
                        rng=np.random.default_rng(cfg.seed))
    margin = cfg.alpha if cfg.accuracy_margin else 0.
    a_idx, p_idx, n_idx = train_idx

    report = TrainReport()
    start = time.perf_counter()
    matrix = features.matrix
    for epoch in trange(cfg.epochs, desc='train', disable=not progress, leave=False):
        if sampler is not None:
            matrix = sampler.sample(epoch).matrix
        total = 0.
        for batch, idx in enumerate(loader):
            optimizer.zero_grad()
            anchors = model(Tensor(matrix[a_idx[idx]]))
            loss = criterion(anchors, Tensor(matrix[p_idx[idx]]), Tensor(matrix[n_idx[idx]]))
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(f'non-finite loss {value} at epoch {epoch + 1}, batch {batch + 1}',
                                      epoch=epoch + 1, batch=batch + 1, loss=str(value),
                                      parameter_norm=_parameter_norm(model))
            loss.backward()
            optimizer.step()
            total += value * len(idx)

        report.losses.append(total / len(triplets))
        # accuracy is measured on the un-augmented features
        report.train_accuracy.append(_accuracy(model, features.matrix, train_idx,
                                               cfg.distance, margin))
        if val_idx is not None:
            report.val_accuracy.append(_accuracy(model, features.matrix, val_idx,
                                                 cfg.distance, margin))
        logger.debug('epoch %d: loss %.6f, train accuracy %.4f', epoch + 1,
                     report.losses[-1], report.train_accuracy[-1])

    report.wall_time = time.perf_counter() - start
    logger.info('trained %d epochs on %d triplets: loss %.6f, train accuracy %.4f%s',
                cfg.epochs, len(triplets), report.losses[-1], report.train_accuracy[-1],
                '' if report.final_val_accuracy is None
                else f', validation accuracy {report.final_val_accuracy:.4f}')
    checkpoint = ModelCheckpoint(model.eval(), cfg.seed, cfg.model_dump())
    return checkpoint, report
