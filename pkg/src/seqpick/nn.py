"""Small differentiable networks with explicit forward/backward passes.

Layers: 2-D convolution (im2col), dense, ReLU, flatten, bilinear upsample.
Parameters live in one flat float64 vector per network; gradients mirror it.
Everything is deterministic for a fixed seed and checked against central
finite differences in the test suite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


# ---------------------------------------------------------------------------
# layer specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel: int = 3
    stride: int = 1


@dataclass(frozen=True)
class Dense:
    out_dim: int


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Upsample:
    factor: int = 2


_SPEC_TYPES = {"Conv": Conv, "Dense": Dense, "ReLU": ReLU, "Flatten": Flatten,
               "Upsample": Upsample}


def _spec_to_dict(spec):
    return {"type": type(spec).__name__, **spec.__dict__}


def _spec_from_dict(d):
    d = dict(d)
    cls = _SPEC_TYPES[d.pop("type")]
    return cls(**d)


# ---------------------------------------------------------------------------
# shape algebra
# ---------------------------------------------------------------------------

def conv_out_hw(h, w, kernel, stride):
    p = kernel // 2
    return ((h + 2 * p - kernel) // stride + 1,
            (w + 2 * p - kernel) // stride + 1)


def _bilinear_matrix(n_in, factor):
    """(n_in*factor, n_in) interpolation matrix; rows sum to 1."""
    n_out = n_in * factor
    W = np.zeros((n_out, n_in))
    for i in range(n_out):
        x = (i + 0.5) / factor - 0.5
        x = min(max(x, 0.0), n_in - 1.0)
        lo = int(math.floor(x))
        hi = min(lo + 1, n_in - 1)
        t = x - lo
        W[i, lo] += 1.0 - t
        W[i, hi] += t
    return W


# ---------------------------------------------------------------------------
# conv helpers
# ---------------------------------------------------------------------------

def _im2col(x, kernel, stride):
    # x: (N, C, H, W) already padded -> (N, C*k*k, OH*OW)
    n, c, h, w = x.shape
    oh = (h - kernel) // stride + 1
    ow = (w - kernel) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(x, (kernel, kernel), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride, :, :]  # (N, C, OH, OW, k, k)
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kernel * kernel, oh * ow)
    return np.ascontiguousarray(cols), oh, ow


def _col2im(dcols, x_shape, kernel, stride):
    # inverse scatter of _im2col; x_shape is the padded input shape
    n, c, h, w = x_shape
    oh = (h - kernel) // stride + 1
    ow = (w - kernel) // stride + 1
    dx = np.zeros(x_shape)
    d = dcols.reshape(n, c, kernel, kernel, oh, ow)
    for ki in range(kernel):
        for kj in range(kernel):
            dx[:, :, ki:ki + oh * stride:stride, kj:kj + ow * stride:stride] += d[:, :, ki, kj]
    return dx


# ---------------------------------------------------------------------------
# network
# ---------------------------------------------------------------------------

class Network:
    """Layered approximator with a flat parameter vector and exact backprop.

    ``input_shape`` is (C, H, W) for convolutional stacks or (D,) for dense
    ones. Forward accepts batched input (N, *input_shape).
    """

    def __init__(self, input_shape, layers, seed=0):
        self.input_shape = tuple(int(s) for s in input_shape)
        self.layers = list(layers)
        self._plan = []   # per-layer dicts: kind, shapes, param slices
        self._build()
        self.params = np.zeros(self.n_params)
        self.grads = np.zeros(self.n_params)
        self._init_params(seed)

    # -- construction --------------------------------------------------

    def _build(self):
        shape = self.input_shape
        offset = 0
        for spec in self.layers:
            entry = {"spec": spec, "in_shape": shape}
            if isinstance(spec, Conv):
                c, h, w = shape
                oh, ow = conv_out_hw(h, w, spec.kernel, spec.stride)
                n_w = spec.out_channels * c * spec.kernel * spec.kernel
                entry["w"] = slice(offset, offset + n_w)
                offset += n_w
                entry["b"] = slice(offset, offset + spec.out_channels)
                offset += spec.out_channels
                entry["fan_in"] = c * spec.kernel * spec.kernel
                shape = (spec.out_channels, oh, ow)
            elif isinstance(spec, Dense):
                (d,) = shape
                n_w = spec.out_dim * d
                entry["w"] = slice(offset, offset + n_w)
                offset += n_w
                entry["b"] = slice(offset, offset + spec.out_dim)
                offset += spec.out_dim
                entry["fan_in"] = d
                shape = (spec.out_dim,)
            elif isinstance(spec, Flatten):
                shape = (int(np.prod(shape)),)
            elif isinstance(spec, Upsample):
                c, h, w = shape
                entry["Wr"] = _bilinear_matrix(h, spec.factor)
                entry["Wc"] = _bilinear_matrix(w, spec.factor)
                shape = (c, h * spec.factor, w * spec.factor)
            elif isinstance(spec, ReLU):
                pass
            else:
                raise TypeError(f"unknown layer spec {spec!r}")
            entry["out_shape"] = shape
            self._plan.append(entry)
        self.output_shape = shape
        self.n_params = offset

    def _init_params(self, seed):
        rng = np.random.default_rng(seed)
        for entry in self._plan:
            if "w" in entry:
                limit = 1.0 / math.sqrt(entry["fan_in"])
                n = entry["w"].stop - entry["w"].start
                self.params[entry["w"]] = rng.uniform(-limit, limit, size=n)
                # biases start at zero

    # -- forward / backward --------------------------------------------

    def forward(self, x):
        """Returns (output, cache); cache feeds exactly one backward pass."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.shape == self.input_shape
        if squeeze:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} != expected {self.input_shape}")
        cache = []
        for entry in self._plan:
            spec = entry["spec"]
            if isinstance(spec, Conv):
                p = spec.kernel // 2
                n, c, h, w_in = x.shape
                xp = np.zeros((n, c, h + 2 * p, w_in + 2 * p))
                xp[:, :, p:p + h, p:p + w_in] = x
                cols, oh, ow = _im2col(xp, spec.kernel, spec.stride)
                W = self.params[entry["w"]].reshape(spec.out_channels, -1)
                b = self.params[entry["b"]]
                out = np.matmul(W, cols) + b[None, :, None]
                cache.append({"cols": cols, "xp_shape": xp.shape})
                x = out.reshape(n, spec.out_channels, oh, ow)
            elif isinstance(spec, Dense):
                W = self.params[entry["w"]].reshape(spec.out_dim, -1)
                b = self.params[entry["b"]]
                cache.append({"x": x})
                x = x @ W.T + b
            elif isinstance(spec, ReLU):
                mask = x > 0.0
                cache.append({"mask": mask})
                x = x * mask
            elif isinstance(spec, Flatten):
                cache.append({"shape": x.shape})
                x = x.reshape(x.shape[0], -1)
            elif isinstance(spec, Upsample):
                cache.append({})
                x = np.matmul(np.matmul(entry["Wr"], x), entry["Wc"].T)
        if squeeze:
            return x[0], (cache, True)
        return x, (cache, False)

    def backward(self, cache, output_gradient):
        """Backpropagate; returns (param_gradient, input_gradient).

        ``self.grads`` is also overwritten with the parameter gradient.
        """
        layer_caches, squeezed = cache
        g = np.asarray(output_gradient, dtype=np.float64)
        if squeezed:
            g = g[None]
        grads = np.zeros(self.n_params)
        for entry, lc in zip(reversed(self._plan), reversed(layer_caches)):
            spec = entry["spec"]
            if isinstance(spec, Conv):
                n = g.shape[0]
                gout = g.reshape(n, spec.out_channels, -1)
                W = self.params[entry["w"]].reshape(spec.out_channels, -1)
                grads[entry["w"]] = np.matmul(gout, lc["cols"].transpose(0, 2, 1)) \
                    .sum(axis=0).ravel()
                grads[entry["b"]] = gout.sum(axis=(0, 2))
                dcols = np.matmul(W.T, gout)
                dxp = _col2im(dcols, lc["xp_shape"], spec.kernel, spec.stride)
                p = spec.kernel // 2
                c, h, w = entry["in_shape"]
                g = dxp[:, :, p:p + h, p:p + w]
            elif isinstance(spec, Dense):
                W = self.params[entry["w"]].reshape(spec.out_dim, -1)
                grads[entry["w"]] = (g.T @ lc["x"]).ravel()
                grads[entry["b"]] = g.sum(axis=0)
                g = g @ W
            elif isinstance(spec, ReLU):
                g = g * lc["mask"]
            elif isinstance(spec, Flatten):
                g = g.reshape(lc["shape"])
            elif isinstance(spec, Upsample):
                g = np.matmul(np.matmul(entry["Wr"].T, g), entry["Wc"])
        self.grads[:] = grads
        if squeezed:
            return grads, g[0]
        return grads, g

    # -- persistence ----------------------------------------------------

    def copy(self):
        clone = Network.__new__(Network)
        clone.input_shape = self.input_shape
        clone.layers = list(self.layers)
        clone._plan = self._plan  # shared read-only plan
        clone.n_params = self.n_params
        clone.output_shape = self.output_shape
        clone.params = self.params.copy()
        clone.grads = np.zeros(self.n_params)
        return clone

    def save(self, path):
        header = {"input_shape": list(self.input_shape),
                  "layers": [_spec_to_dict(s) for s in self.layers]}
        with open(path, "wb") as fh:
            fh.write(json.dumps(header).encode() + b"\n")
            fh.write(self.params.astype("<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode())
            raw = fh.read()
        net = cls(tuple(header["input_shape"]),
                  [_spec_from_dict(d) for d in header["layers"]], seed=0)
        params = np.frombuffer(raw, dtype="<f8")
        if params.size != net.n_params:
            raise ValueError(f"checkpoint has {params.size} params, expected {net.n_params}")
        net.params[:] = params
        return net


# ---------------------------------------------------------------------------
# optimizer and losses
# ---------------------------------------------------------------------------

class Adam:
    """Adaptive-moment optimizer over a network's flat parameter vector."""

    def __init__(self, n_params, learning_rate=1e-4, beta1=0.9, beta2=0.999,
                 epsilon=1e-8):
        self.first_moment = np.zeros(n_params)
        self.second_moment = np.zeros(n_params)
        self.step_count = 0
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon

    def step(self, params, grads):
        self.step_count += 1
        self.first_moment = self.beta1 * self.first_moment + (1 - self.beta1) * grads
        self.second_moment = (self.beta2 * self.second_moment
                              + (1 - self.beta2) * grads * grads)
        m_hat = self.first_moment / (1 - self.beta1 ** self.step_count)
        v_hat = self.second_moment / (1 - self.beta2 ** self.step_count)
        params -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


def adam_step(net, opt):
    """One optimizer step using the gradients currently stored on the net."""
    opt.step(net.params, net.grads)


def softmax_cross_entropy(logits, target):
    """Loss -log softmax(logits)[target] and its gradient w.r.t. logits."""
    logits = np.asarray(logits, dtype=np.float64).ravel()
    if not 0 <= target < logits.size:
        raise IndexError(f"target {target} out of range for {logits.size} logits")
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    probs = exp / exp.sum()
    loss = -(shifted[target] - math.log(exp.sum()))
    grad = probs.copy()
    grad[target] -= 1.0
    return loss, grad


# ---------------------------------------------------------------------------
# default architectures
# ---------------------------------------------------------------------------

def q_network(obs_hw, seed=0):
    """Encoder-decoder conv stack mapping (2, H, W) to per-pixel scores (1, H, W).

    H and W must be divisible by 4 (two stride-2 stages)."""
    h, w = obs_hw
    if h % 4 or w % 4:
        raise ValueError("observation height/width must be divisible by 4")
    layers = [
        Conv(8, 3, 1), ReLU(),
        Conv(16, 3, 2), ReLU(),
        Conv(16, 3, 2), ReLU(),
        Upsample(2),
        Conv(8, 3, 1), ReLU(),
        Upsample(2),
        Conv(1, 3, 1),
    ]
    return Network((2, h, w), layers, seed=seed)


def discriminator_network(obs_hw, hidden=64, channels=7, seed=0):
    """Conv + dense discriminator over observation-pair tensors.

    The default seven channels are (s, s', s' - s, changed-flag plane);
    the explicit change planes let the network key on what happened in
    the transition, not just how the scene looks."""
    h, w = obs_hw
    layers = [
        Conv(8, 3, 2), ReLU(),
        Conv(16, 3, 2), ReLU(),
        Flatten(),
        Dense(hidden), ReLU(),
        Dense(1),
    ]
    return Network((channels, h, w), layers, seed=seed)


def finite_difference_grads(net, loss_fn, h=1e-5):
    """Central finite differences of ``loss_fn(net)`` over all parameters."""
    grads = np.zeros(net.n_params)
    for i in range(net.n_params):
        orig = net.params[i]
        net.params[i] = orig + h
        lp = loss_fn(net)
        net.params[i] = orig - h
        lm = loss_fn(net)
        net.params[i] = orig
        grads[i] = (lp - lm) / (2 * h)
    return grads
