from skull2face.nn.tensor import Tensor
from skull2face.nn.module import Module
from skull2face.nn.functional import triplet_margin_loss


class TripletLoss(Module):
    def __init__(self, alpha: float, squared: bool = True) -> None:
        super().__init__()
        if not alpha > 0:
            raise ValueError(f"margin must be positive, got {alpha}")
        self.alpha = alpha
        self.squared = squared

    def forward(self, anchor: Tensor, positive: Tensor, negative: Tensor) -> Tensor:
        return triplet_margin_loss(anchor, positive, negative, self.alpha, self.squared)
