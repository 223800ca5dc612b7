from typing import List, Sequence

import torch
from torch import nn


class Mlp(nn.Module):
    """
    Fully connected network with tanh hidden layers and an identity head.
    The actor reads the head as logits, the critic as a scalar value.
    """

    def __init__(self, sizes: Sequence[int]):
        super().__init__()
        if len(sizes) < 2 or any(n < 1 for n in sizes):
            raise ValueError(f"layer sizes must be >= 2 positive integers, got {list(sizes)}")
        self.sizes: List[int] = [int(n) for n in sizes]
        self.layers = nn.ModuleList(nn.Linear(n_in, n_out) for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]))
        self.act = nn.Tanh()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers[:-1]:
            x = self.act(layer(x))
        return self.layers[-1](x)

    @property
    def parameter_count(self) -> int:
        return sum((n_in + 1) * n_out for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]))


def actor_network(input_size: int, n_actions: int, hidden: Sequence[int]) -> Mlp:
    return Mlp([input_size, *hidden, n_actions])


def critic_network(input_size: int, hidden: Sequence[int]) -> Mlp:
    return Mlp([input_size, *hidden, 1])
