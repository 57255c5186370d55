"""Parameter containers, layers, the Adam update, and gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor


class Parameter(Tensor):
    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class Module:
    """Container discovering parameters/submodules from instance attributes."""

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            key = f"{prefix}.{name}" if prefix else name
            if isinstance(value, Parameter):
                yield key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(key)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{key}.{i}")
                    elif isinstance(item, Parameter):
                        yield f"{key}.{i}", item

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype) -> "Module":
        """Cast all parameters in place; grads are dropped."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise ShapeError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, p in params.items():
            if state[name].shape != p.data.shape:
                raise ShapeError(f"{name}: shape {state[name].shape} != {p.data.shape}")
            p.data = state[name].astype(p.data.dtype)

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}


class Linear(Module):
    """y = x @ W + b with W of shape [in, out]."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 bias: bool = True, zero_init: bool = False, dtype=T.DEFAULT_DTYPE):
        if zero_init:
            w = np.zeros((in_features, out_features))
        else:
            w = rng.standard_normal((in_features, out_features)) / np.sqrt(in_features)
        self.weight = Parameter(w, dtype=dtype)
        self.bias = Parameter(np.zeros(out_features), dtype=dtype) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        lead = x.shape[:-1]
        flat = T.reshape(x, (-1, x.shape[-1])) if x.ndim != 2 else x
        y = T.matmul(flat, self.weight)
        if self.bias is not None:
            y = T.add(y, self.bias)
        if x.ndim != 2:
            y = T.reshape(y, lead + (self.weight.shape[1],))
        return y


class LayerNorm(Module):
    def __init__(self, dim: int, dtype=T.DEFAULT_DTYPE):
        self.gamma = Parameter(np.ones(dim), dtype=dtype)
        self.beta = Parameter(np.zeros(dim), dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm_affine(x, self.gamma, self.beta)


# ------------------------------------------------------------- optimizer

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update over aligned parameter/gradient lists."""
    if len(params) != len(grads):
        raise ShapeError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step_count
    c2 = 1.0 - b2 ** state.step_count
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ShapeError(f"grad shape {g.shape} != param shape {p.data.shape}")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        p.data = p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


class Adam:
    """Thin stateful wrapper over adam_step for a fixed parameter list."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


# ----------------------------------------------------------- grad check

@dataclass
class GradCheckReport:
    max_rel_err: float
    worst: str
    checked: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


def grad_check(model_closure, inputs: dict[str, Tensor], tol: float = 1e-4,
               step: float = 1e-5, max_coords: int = 24, atol: float = 1e-6,
               rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare backprop gradients of a scalar closure to central differences.

    The closure is re-evaluated with individually perturbed coordinates, so
    it must be deterministic; inputs should be float64 tensors. Coordinates
    where both gradients are below atol count as exact (finite differences
    cannot resolve relative error against a zero gradient).
    """
    rng = rng or np.random.default_rng(0)
    for t in inputs.values():
        t.grad = None
    loss = model_closure()
    loss.backward()
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.data))
                for k, t in inputs.items()}

    worst = ""
    max_err = 0.0
    checked = 0
    for name, t in inputs.items():
        n = t.data.size
        coords = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
        flat = t.data.reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + step
            f_plus = model_closure().item()
            flat[c] = orig - step
            f_minus = model_closure().item()
            flat[c] = orig
            fd = (f_plus - f_minus) / (2.0 * step)
            ad = float(analytic[name].reshape(-1)[c])
            denom = max(abs(fd), abs(ad))
            err = 0.0 if denom < atol else abs(fd - ad) / denom
            checked += 1
            if err > max_err:
                max_err = err
                worst = f"{name}[{c}]"
    return GradCheckReport(max_rel_err=max_err, worst=worst, checked=checked, tol=tol)
