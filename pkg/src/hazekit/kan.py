"""Kolmogorov-Arnold layers: matrices of learnable univariate spline activations.

Each edge (q, p) carries

    phi_{q,p}(x) = base_scale[q,p] * base(x) + spline_scale[q,p] * sum_i coef[q,p,i] B_i(x)

with base = silu by default and cubic B-splines B_i on a uniform grid over
[-g, g]. Outside the grid the spline part continues linearly from the
boundary value and slope.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


BASE_FUNCTIONS = {"silu": F.silu, "identity": lambda x: x}


def make_knots(grid_size: int, order: int, grid_range: float) -> torch.Tensor:
    """Uniform knot vector over [-g, g] extended by ``order`` knots on each side."""
    h = 2.0 * grid_range / grid_size
    idx = torch.arange(-order, grid_size + order + 1, dtype=torch.float64)
    return idx * h - grid_range


def bspline_basis(x: torch.Tensor, knots: torch.Tensor, order: int) -> torch.Tensor:
    """Cox-de Boor recursion. Returns (..., n_basis) with n_basis = len(knots) - order - 1."""
    knots = knots.to(x.dtype)
    x = x.unsqueeze(-1)
    bases = ((x >= knots[:-1]) & (x < knots[1:])).to(x.dtype)
    for k in range(1, order + 1):
        left = (x - knots[: -(k + 1)]) / (knots[k:-1] - knots[: -(k + 1)])
        right = (knots[k + 1 :] - x) / (knots[k + 1 :] - knots[1:-k])
        bases = left * bases[..., :-1] + right * bases[..., 1:]
    return bases


def bspline_basis_deriv(x: torch.Tensor, knots: torch.Tensor, order: int) -> torch.Tensor:
    """First derivative of each order-``order`` basis function at x."""
    knots = knots.to(x.dtype)
    lower = bspline_basis(x, knots, order - 1)
    d_left = order / (knots[order:-1] - knots[: -(order + 1)])
    d_right = order / (knots[order + 1 :] - knots[1:-order])
    return d_left * lower[..., :-1] - d_right * lower[..., 1:]


def _cubic_weights(s: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Values and d/ds of the four cubic pieces active on a knot span, s in [0, 1]."""
    s2, s3 = s * s, s * s * s
    w = torch.stack([
        (1 - s) ** 3,
        3 * s3 - 6 * s2 + 4,
        -3 * s3 + 3 * s2 + 3 * s + 1,
        s3,
    ], dim=-1) / 6
    dw = torch.stack([
        -3 * (1 - s) ** 2,
        9 * s2 - 12 * s,
        -9 * s2 + 6 * s + 3,
        3 * s2,
    ], dim=-1) / 6
    return w, dw


def _uniform_cubic_basis(x: torch.Tensor, grid_size: int, grid_range: float) -> torch.Tensor:
    """Closed-form cubic basis on the uniform extended grid, linear outside [-g, g]."""
    order = 3
    h = 2.0 * grid_range / grid_size
    xc = x.clamp(-grid_range, grid_range)
    u = (xc + grid_range) / h + order
    # NaN inputs get an arbitrary valid span so the NaN reaches the output through the weights
    span = u.detach().floor().clamp(order, grid_size + order - 1).nan_to_num(nan=float(order))
    s = u - span
    w, dw = _cubic_weights(s)
    w = w + ((x - xc) / h).unsqueeze(-1) * dw
    idx = span.long().unsqueeze(-1) - order + torch.arange(order + 1, device=x.device)
    basis = torch.zeros(*x.shape, grid_size + order, dtype=x.dtype, device=x.device)
    return basis.scatter_add(-1, idx, w)


def extrapolated_basis(x: torch.Tensor, knots: torch.Tensor, order: int, grid_range: float) -> torch.Tensor:
    """Basis values with linear continuation outside [-g, g].

    Inside the grid this equals ``bspline_basis``; outside, B(xc) + (x - xc) B'(xc)
    with xc the clamped input, so any coefficient combination extends linearly.
    """
    if order == 3:
        return _uniform_cubic_basis(x, len(knots) - 2 * order - 1, grid_range)
    xc = x.clamp(-grid_range, grid_range)
    values = bspline_basis(xc, knots, order)
    outside = (x != xc).unsqueeze(-1)
    if bool(outside.any()):
        slope = bspline_basis_deriv(xc, knots, order)
        values = torch.where(outside, values + (x - xc).unsqueeze(-1) * slope, values)
    return values


@dataclass
class SplineActivation:
    """A single learnable univariate function phi(x)."""

    coefficients: np.ndarray
    grid_size: int = 5
    order: int = 3
    grid_range: float = 1.0
    base_scale: float = 1.0
    spline_scale: float = 1.0
    base: str = "silu"

    def __post_init__(self):
        if self.base not in BASE_FUNCTIONS:
            raise ValueError(f"unknown base function {self.base!r}")
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        if self.grid_size < 1 or self.order < 1:
            raise ValueError("grid_size and order must be positive")
        if self.coefficients.shape != (self.grid_size + self.order,):
            raise ValueError(
                f"expected {self.grid_size + self.order} coefficients, got {self.coefficients.shape}"
            )

    @property
    def knots(self) -> np.ndarray:
        return make_knots(self.grid_size, self.order, self.grid_range).numpy()


def eval_activation(act: SplineActivation, x):
    """Evaluate ``act`` elementwise; returns an array of the same shape as ``x``."""
    xt = torch.as_tensor(np.asarray(x, dtype=np.float64))
    knots = make_knots(act.grid_size, act.order, act.grid_range)
    basis = extrapolated_basis(xt, knots, act.order, act.grid_range)
    spline = basis @ torch.as_tensor(act.coefficients)
    out = act.base_scale * BASE_FUNCTIONS[act.base](xt) + act.spline_scale * spline
    return out.numpy()


def fit_coefficients(fn, grid_size: int = 5, order: int = 3, grid_range: float = 1.0, n_samples: int = 101) -> np.ndarray:
    """Least-squares spline coefficients approximating ``fn`` on [-g, g]."""
    xs = torch.linspace(-grid_range, grid_range, n_samples, dtype=torch.float64)
    knots = make_knots(grid_size, order, grid_range)
    basis = bspline_basis(xs, knots, order)
    target = torch.as_tensor(np.asarray(fn(xs.numpy()), dtype=np.float64))
    return torch.linalg.lstsq(basis, target.unsqueeze(-1)).solution.squeeze(-1).numpy()


class KanLayer(nn.Module):
    """n_out x n_in matrix of spline activations; out_q = sum_p phi_{q,p}(in_p)."""

    def __init__(self, n_in: int, n_out: int, grid_size: int = 5, order: int = 3, grid_range: float = 1.0, base: str = "silu"):
        super().__init__()
        if base not in BASE_FUNCTIONS:
            raise ValueError(f"unknown base function {base!r}")
        self.base = base
        if n_in < 1 or n_out < 1:
            raise ValueError(f"layer widths must be positive, got n_in={n_in}, n_out={n_out}")
        if grid_size < 1 or order < 1:
            raise ValueError(f"grid_size and order must be positive, got {grid_size}, {order}")
        self.n_in, self.n_out = n_in, n_out
        self.grid_size, self.order, self.grid_range = grid_size, order, float(grid_range)
        n_basis = grid_size + order
        self.register_buffer("knots", make_knots(grid_size, order, grid_range).float(), persistent=False)
        self.coef = nn.Parameter(torch.zeros(n_out, n_in, n_basis))
        self.base_scale = nn.Parameter(torch.ones(n_out, n_in))
        self.spline_scale = nn.Parameter(torch.ones(n_out, n_in))

    def activation(self, q: int, p: int) -> SplineActivation:
        return SplineActivation(
            coefficients=self.coef[q, p].detach().double().numpy(),
            grid_size=self.grid_size,
            order=self.order,
            grid_range=self.grid_range,
            base_scale=float(self.base_scale[q, p].detach()),
            spline_scale=float(self.spline_scale[q, p].detach()),
            base=self.base,
        )

    def set_activation(self, q: int, p: int, act: SplineActivation) -> None:
        if (act.grid_size, act.order, act.grid_range, act.base) != (self.grid_size, self.order, self.grid_range, self.base):
            raise ValueError("activation grid or base function does not match the layer")
        with torch.no_grad():
            self.coef[q, p] = torch.as_tensor(act.coefficients)
            self.base_scale[q, p] = act.base_scale
            self.spline_scale[q, p] = act.spline_scale

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.n_in:
            raise ValueError(f"expected input width {self.n_in}, got {x.shape[-1]}")
        lead = x.shape[:-1]
        x = x.reshape(-1, self.n_in)
        basis = extrapolated_basis(x, self.knots, self.order, self.grid_range)  # (B, n_in, n_basis)
        weights = self.coef * self.spline_scale.unsqueeze(-1)
        out = BASE_FUNCTIONS[self.base](x) @ self.base_scale.t() + basis.reshape(x.shape[0], basis.shape[1] * basis.shape[2]) @ weights.reshape(self.n_out, -1).t()
        return out.reshape(*lead, self.n_out)

    def extra_repr(self) -> str:
        return f"n_in={self.n_in}, n_out={self.n_out}, grid_size={self.grid_size}, order={self.order}"


class KanStack(nn.Module):
    """Composition of KAN layers, applied first to last."""

    def __init__(self, layers: Sequence[KanLayer]):
        super().__init__()
        layers = list(layers)
        if not layers:
            raise ValueError("a KAN stack needs at least one layer")
        for i, (a, b) in enumerate(zip(layers, layers[1:])):
            if a.n_out != b.n_in:
                raise ValueError(f"layer {i} outputs {a.n_out} features but layer {i + 1} expects {b.n_in}")
        self.layers = nn.ModuleList(layers)

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


def init_kan_layer(
    n_in: int,
    n_out: int,
    grid_size: int = 5,
    order: int = 3,
    range_g: float = 1.0,
    rng_seed: int = 0,
    base: str = "silu",
) -> KanLayer:
    """Layer with small uniform spline coefficients, unit base and spline scales."""
    if grid_size < order + 2:
        raise ValueError(f"grid_size must be at least order + 2 = {order + 2}, got {grid_size}")
    layer = KanLayer(n_in, n_out, grid_size, order, range_g, base)
    gen = torch.Generator().manual_seed(rng_seed)
    bound = 0.1 / math.sqrt(n_in)
    with torch.no_grad():
        layer.coef.copy_((torch.rand(layer.coef.shape, generator=gen) * 2 - 1) * bound)
    return layer


def build_stack(widths: Sequence[int], grid_sizes: Sequence[int] | int = 5, order: int = 3, range_g: float = 1.0, rng_seed: int = 0) -> KanStack:
    """Stack with layer i mapping widths[i] -> widths[i+1]."""
    n_layers = len(widths) - 1
    if isinstance(grid_sizes, int):
        grid_sizes = [grid_sizes] * n_layers
    if len(grid_sizes) != n_layers:
        raise ValueError(f"need {n_layers} grid sizes, got {len(grid_sizes)}")
    return KanStack(
        init_kan_layer(a, b, g, order, range_g, rng_seed + i)
        for i, (a, b, g) in enumerate(zip(widths, widths[1:], grid_sizes))
    )


def kan_layer_forward(layer: KanLayer, x) -> torch.Tensor:
    return layer(torch.as_tensor(x))


def kan_forward(stack: KanStack, x) -> torch.Tensor:
    return stack(torch.as_tensor(x))


def kan_gradients(stack: KanStack, x, output_cotangent) -> tuple[dict[str, torch.Tensor], torch.Tensor]:
    """Gradients of <cotangent, stack(x)> w.r.t. every parameter and the input."""
    x = torch.as_tensor(x).detach().clone().requires_grad_(True)
    out = stack(x)
    cot = torch.as_tensor(output_cotangent, dtype=out.dtype)
    if cot.shape != out.shape:
        raise ValueError(f"cotangent shape {tuple(cot.shape)} does not match output {tuple(out.shape)}")
    names, params = zip(*stack.named_parameters())
    grads = torch.autograd.grad((out * cot).sum(), (*params, x), allow_unused=True)
    param_grads = {
        n: (g if g is not None else torch.zeros_like(p)) for n, p, g in zip(names, params, grads[:-1])
    }
    input_grad = grads[-1] if grads[-1] is not None else torch.zeros_like(x)
    return param_grads, input_grad
