import numpy as np
from typing import Iterator, Optional


class Dataloader:
    r'''Yields mini-batches of row indices into a training set.

        Args:
            size (int): number of examples
            batch_size (int): examples per batch; the last batch may be smaller
            shuffle (bool): reshuffle the order at the start of every pass
            rng (np.random.Generator): source of the shuffles (required when shuffling)'''
    def __init__(self, size: int, batch_size: int,
                 shuffle: bool = False,
                 rng: Optional[np.random.Generator] = None) -> None:
        if batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {batch_size}")
        if shuffle and rng is None:
            raise ValueError("a shuffling Dataloader needs a seeded rng")
        self.size = size
        self.batch_size = batch_size
        self.shuffle = shuffle
        self.rng = rng

    def __iter__(self) -> Iterator[np.ndarray]:
        order = self.rng.permutation(self.size) if self.shuffle else np.arange(self.size)
        for start in range(0, self.size, self.batch_size):
            yield order[start:start + self.batch_size]

    def __len__(self) -> int:
        return -(-self.size // self.batch_size)
