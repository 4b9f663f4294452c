"""Recurrent cell and small layer helpers built on the tensor primitives."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .params import ParamStore
from .tensor import (Tensor, add, concat, matmul, mul, narrow, relu, sigmoid,
                     tanh)


def create_gru(store: ParamStore, prefix: str, d_x: int, d_h: int,
               rng: np.random.Generator) -> None:
    """Allocate GRU weights under ``prefix``.

    Gate weights for update and reset are fused into one matrix pair so a
    step costs four matmuls instead of six.
    """
    store.create(f"{prefix}.w_gates", (d_x, 2 * d_h), rng, fan_in=d_x)
    store.create(f"{prefix}.u_gates", (d_h, 2 * d_h), rng, fan_in=d_h)
    store.create(f"{prefix}.b_gates", (2 * d_h,), rng, fan_in=0)
    store.create(f"{prefix}.w_cand", (d_x, d_h), rng, fan_in=d_x)
    store.create(f"{prefix}.u_cand", (d_h, d_h), rng, fan_in=d_h)
    store.create(f"{prefix}.b_cand", (d_h,), rng, fan_in=0)


def gru_step(h: Tensor, x: Tensor, params: dict[str, Tensor]) -> Tensor:
    """One GRU recurrence step on 1-D state ``h`` and input ``x``.

    h' = (1 - z) * h + z * cand, with update gate z, reset gate r and
    candidate tanh(x W + (r * h) U + b). At all-zero parameters this halves
    the state: z = 0.5, cand = 0.
    """
    d_h = h.data.shape[-1]
    if params["u_cand"].data.shape[0] != d_h:
        raise ShapeError(
            f"state width {d_h} does not match cell size "
            f"{params['u_cand'].data.shape[0]}")
    gates = sigmoid(add(add(matmul(x, params["w_gates"]),
                            matmul(h, params["u_gates"])),
                        params["b_gates"]))
    z = narrow(gates, 0, 0, d_h)
    r = narrow(gates, 0, d_h, 2 * d_h)
    cand = tanh(add(add(matmul(x, params["w_cand"]),
                        matmul(mul(r, h), params["u_cand"])),
                    params["b_cand"]))
    return add(mul(sub_one(z), h), mul(z, cand))


def sub_one(t: Tensor) -> Tensor:
    return add(mul(t, -1.0), 1.0)


def gru_params(store: ParamStore, prefix: str) -> dict[str, Tensor]:
    keys = ("w_gates", "u_gates", "b_gates", "w_cand", "u_cand", "b_cand")
    return {k: store[f"{prefix}.{k}"] for k in keys}


def run_gru(seq: Tensor, params: dict[str, Tensor], d_h: int) -> Tensor:
    """Consume a [length x d_x] sequence row by row; return the final state."""
    h = Tensor(np.zeros(d_h, dtype=seq.data.dtype))
    for t in range(seq.data.shape[0]):
        x_t = narrow(seq, 0, t, t + 1)
        h = gru_step(h, _as_vector(x_t), params)
    return h


def _as_vector(row: Tensor) -> Tensor:
    from .tensor import reshape
    return reshape(row, (row.data.shape[-1],))


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


def feed_forward(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    return linear(relu(linear(x, w1, b1)), w2, b2)
