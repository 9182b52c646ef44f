'''Auto-differentiation engine the trainable head is built on'''

from skull2face.nn.tensor import Tensor
from skull2face.nn.parameter import Parameter
from skull2face.nn.module import Module, Linear
from skull2face.nn.activation import ReLU
from skull2face.nn.optim import SGD, Optimizer_base
from skull2face.nn.criterion import TripletLoss
from skull2face.nn.dataloader import Dataloader
