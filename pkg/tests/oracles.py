"""Independent reference computations used by several test modules."""
import numpy as np
import torch


def central_difference_grads(fn, tensors, h=1e-5):
    """Gradients of scalar ``fn()`` w.r.t. each tensor by central differences, element by element."""
    grads = []
    with torch.no_grad():
        for t in tensors:
            g = torch.zeros_like(t)
            flat, gflat = t.view(-1), g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                up = float(fn())
                flat[i] = orig - h
                down = float(fn())
                flat[i] = orig
                gflat[i] = (up - down) / (2 * h)
            grads.append(g)
    return grads


def rel_error(analytic, numeric):
    """max |a - n| / max(max |n|, 1e-8), computed per tensor."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return float(np.max(np.abs(a - n)) / max(np.max(np.abs(n)), 1e-8)) if a.size else 0.0


def gradcheck_module(module, inputs, cotangent=None, h=1e-5):
    """Compare autograd against central differences for every parameter and the inputs.

    Returns {name: relative error}. ``module`` must already be in float64.
    """
    inputs = [x.detach().clone() for x in inputs]
    with torch.no_grad():
        out = module(*inputs)
    if cotangent is None:
        cotangent = torch.randn(out.shape, dtype=out.dtype, generator=torch.Generator().manual_seed(1))

    def objective():
        return (module(*inputs) * cotangent).sum()

    named = list(module.named_parameters())
    for x in inputs:
        x.requires_grad_(True)
    for _, p in named:
        p.grad = None
    objective().backward()
    analytic = [p.grad.clone() for _, p in named] + [x.grad.clone() for x in inputs]
    for x in inputs:
        x.requires_grad_(False)
    numeric = central_difference_grads(objective, [p.data for _, p in named] + inputs, h)
    names = [n for n, _ in named] + [f"input{i}" for i in range(len(inputs))]
    return {n: rel_error(a, b) for n, a, b in zip(names, analytic, numeric)}


def naive_conv2d_same(x, kernel):
    """Direct single-channel 2D correlation with replicate padding, written as loops."""
    h, w = x.shape
    k = kernel.shape[0]
    r = k // 2
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for a in range(k):
                for b in range(k):
                    ii = min(max(i + a - r, 0), h - 1)
                    jj = min(max(j + b - r, 0), w - 1)
                    acc += kernel[a, b] * x[ii, jj]
            out[i, j] = acc
    return out
