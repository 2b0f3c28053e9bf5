"""LSTM cell and the bi-directional image-sequence encoder."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import ContractError, ShapeError, Tensor, add, concat, linear, mul, sigmoid, tanh


@dataclass
class LstmParams:
    """Gate weights stacked in the order [input, forget, candidate, output].

    ``w_ih`` is (4h, d), ``w_hh`` is (4h, h), ``bias`` is (4h,).
    """

    w_ih: Tensor
    w_hh: Tensor
    bias: Tensor

    def __post_init__(self):
        four_h, _ = self.w_ih.shape
        if four_h % 4 or self.w_hh.shape != (four_h, four_h // 4) or self.bias.shape != (four_h,):
            raise ShapeError(
                f"inconsistent LSTM shapes: w_ih {self.w_ih.shape}, "
                f"w_hh {self.w_hh.shape}, bias {self.bias.shape}"
            )

    @property
    def hidden_size(self) -> int:
        return self.w_hh.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_ih.shape[1]

    def tensors(self) -> dict[str, Tensor]:
        return {"w_ih": self.w_ih, "w_hh": self.w_hh, "bias": self.bias}

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: np.random.Generator) -> "LstmParams":
        bound = 1.0 / np.sqrt(hidden_size)
        bias = np.zeros(4 * hidden_size)
        bias[hidden_size : 2 * hidden_size] = 1.0
        return cls(
            Tensor(rng.uniform(-bound, bound, (4 * hidden_size, input_size)), requires_grad=True),
            Tensor(rng.uniform(-bound, bound, (4 * hidden_size, hidden_size)), requires_grad=True),
            Tensor(bias, requires_grad=True),
        )

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "LstmParams":
        return cls(
            Tensor(np.zeros((4 * hidden_size, input_size)), requires_grad=True),
            Tensor(np.zeros((4 * hidden_size, hidden_size)), requires_grad=True),
            Tensor(np.zeros(4 * hidden_size), requires_grad=True),
        )


@dataclass
class LstmState:
    h: Tensor
    c: Tensor

    def __post_init__(self):
        if self.h.shape != self.c.shape:
            raise ShapeError(f"hidden {self.h.shape} and cell {self.c.shape} differ")


def zero_state(hidden_size: int, batch: int = 1) -> LstmState:
    return LstmState(Tensor(np.zeros((batch, hidden_size))), Tensor(np.zeros((batch, hidden_size))))


def lstm_step(x: Tensor, state: LstmState, params: LstmParams) -> LstmState:
    """One LSTM recurrence over a (batch, d) input."""
    n = params.hidden_size
    if x.ndim != 2 or x.shape[1] != params.input_size:
        raise ShapeError(f"lstm input {x.shape} does not match input size {params.input_size}")
    if state.h.shape != (x.shape[0], n):
        raise ShapeError(f"lstm state {state.h.shape} does not match ({x.shape[0]}, {n})")
    gates = add(linear(x, params.w_ih, params.bias), linear(state.h, params.w_hh))
    i = sigmoid(gates[:, :n])
    f = sigmoid(gates[:, n : 2 * n])
    g = tanh(gates[:, 2 * n : 3 * n])
    o = sigmoid(gates[:, 3 * n :])
    c = add(mul(f, state.c), mul(i, g))
    h = mul(o, tanh(c))
    return LstmState(h, c)


def encode_bidirectional(
    features: Sequence[Tensor], fwd: LstmParams, bwd: LstmParams
) -> list[Tensor]:
    """Per-position outputs ``[forward_t, backward_t]`` of width 2h.

    ``features`` holds S tensors of shape (batch, d). Both directions start
    from the zero state.
    """
    if len(features) == 0:
        raise ContractError("cannot encode an empty image sequence")
    dims = {f.shape for f in features}
    if len(dims) != 1:
        raise ShapeError(f"feature vectors disagree in shape: {sorted(dims)}")
    batch = features[0].shape[0]
    s = len(features)

    state = zero_state(fwd.hidden_size, batch)
    forward_h = []
    for x in features:
        state = lstm_step(x, state, fwd)
        forward_h.append(state.h)

    state = zero_state(bwd.hidden_size, batch)
    backward_h: list[Tensor] = [None] * s  # type: ignore[list-item]
    for t in reversed(range(s)):
        state = lstm_step(features[t], state, bwd)
        backward_h[t] = state.h

    return [concat([forward_h[t], backward_h[t]], axis=1) for t in range(s)]
