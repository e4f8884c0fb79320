"""Fully connected tanh networks of scalar time, with exact derivatives.

The parameters of every network in an ensemble live in one flat vector
``theta``.  Layout, per network and per layer: the weight matrix (out x in,
row-major) followed by the bias vector.

Two derivative paths are provided.  The time derivative of the outputs is
propagated forward alongside the values (a tangent pass seeded with
``dt/dt = 1``).  Gradients with respect to ``theta`` come from a fused
reverse pass through both the value and the tangent, so losses that contain
``du/dt`` get the mixed second derivative exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Var, grad

__all__ = [
    "SubNetwork", "NetworkEnsemble", "LayoutError", "init_ensemble", "forward",
    "forward_with_time_derivative", "param_gradient", "value_and_gradient",
    "SYMBOLIC", "CONVENTIONAL", "DEFAULT_HIDDEN", "input_map",
]

SYMBOLIC = "symbolic"
CONVENTIONAL = "conventional"

# 2 x (1*10+10 + 10*10+10 + 10*10+10 + 10*1+1) = 502, and 1*20+20 + 3*(20*20+20) + 20*2+2 = 1342
DEFAULT_HIDDEN = {SYMBOLIC: (10, 10, 10), CONVENTIONAL: (20, 20, 20, 20)}


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class SubNetwork:
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 2 or any(d <= 0 for d in dims):
            raise ValueError(f"invalid layer dims {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def param_count(self) -> int:
        return sum(a * b + b for a, b in zip(self.dims[:-1], self.dims[1:]))

    def unflatten(self, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Split this network's slice of ``theta`` into ``(W, b)`` views."""
        layers = []
        pos = 0
        for n_in, n_out in zip(self.dims[:-1], self.dims[1:]):
            W = theta[pos:pos + n_in * n_out].reshape(n_out, n_in)
            pos += n_in * n_out
            b = theta[pos:pos + n_out]
            pos += n_out
            layers.append((W, b))
        return layers

    @staticmethod
    def flatten(layers) -> np.ndarray:
        return np.concatenate([np.concatenate([np.ravel(W), np.ravel(b)]) for W, b in layers])


@dataclass(frozen=True)
class NetworkEnsemble:
    mode: str
    members: tuple[SubNetwork, ...]
    theta: np.ndarray = field(compare=False, repr=False)
    # fixed affine map applied to t before the first layer: (t - t_shift) * t_scale
    t_shift: float = 0.0
    t_scale: float = 1.0

    def __post_init__(self):
        if self.mode not in (SYMBOLIC, CONVENTIONAL):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not (np.isfinite(self.t_shift) and np.isfinite(self.t_scale) and self.t_scale > 0):
            raise ValueError(f"invalid input map shift={self.t_shift} scale={self.t_scale}")
        object.__setattr__(self, "members", tuple(self.members))
        theta = np.asarray(self.theta, dtype=float)
        object.__setattr__(self, "theta", theta)
        self.check(theta)

    @property
    def param_count(self) -> int:
        return sum(m.param_count for m in self.members)

    @property
    def n_outputs(self) -> int:
        return sum(m.dims[-1] for m in self.members)

    @property
    def offsets(self) -> list[int]:
        out = [0]
        for m in self.members:
            out.append(out[-1] + m.param_count)
        return out

    def layout(self) -> str:
        return f"{self.mode}:" + ",".join("-".join(map(str, m.dims)) for m in self.members)

    def check(self, theta):
        n = np.shape(theta.value if isinstance(theta, Var) else theta)
        if n != (self.param_count,):
            raise LayoutError(f"theta has shape {n}, ensemble {self.layout()} needs ({self.param_count},)")

    def with_theta(self, theta) -> "NetworkEnsemble":
        return NetworkEnsemble(self.mode, self.members, np.array(theta, dtype=float),
                               self.t_shift, self.t_scale)

    def unflatten(self, theta=None):
        theta = self.theta if theta is None else theta
        off = self.offsets
        return [m.unflatten(theta[off[i]:off[i + 1]]) for i, m in enumerate(self.members)]


def input_map(t0: float, t1: float) -> tuple[float, float]:
    """Shift and scale sending ``[t0, t1]`` onto ``[-1, 1]``."""
    if not t1 > t0:
        raise ValueError(f"empty domain [{t0}, {t1}]")
    return 0.5 * (t0 + t1), 2.0 / (t1 - t0)


def init_ensemble(mode: str, n_states: int, hidden=None, seed: int = 0,
                  domain: tuple[float, float] | None = None) -> NetworkEnsemble:
    """Glorot-uniform weights, zero biases, reproducible from ``seed``.

    Symbolic mode builds one single-output network per state; conventional
    mode one network with ``n_states`` outputs.  When ``domain`` is given the
    time input is mapped affinely onto [-1, 1] before the first layer, which
    keeps the first tanh layer out of saturation on long horizons.
    """
    if mode not in DEFAULT_HIDDEN:
        raise ValueError(f"unknown mode {mode!r}")
    hidden = tuple(DEFAULT_HIDDEN[mode] if hidden is None else hidden)
    if not hidden:
        raise ValueError("no hidden layer widths given")
    if any(int(w) <= 0 for w in hidden):
        raise ValueError(f"hidden widths must be positive, got {hidden}")
    if n_states <= 0:
        raise ValueError("need at least one state")
    if mode == SYMBOLIC:
        members = [SubNetwork((1, *hidden, 1)) for _ in range(n_states)]
    elif mode == CONVENTIONAL:
        members = [SubNetwork((1, *hidden, n_states))]
    else:
        raise ValueError(f"unknown mode {mode!r}")

    rng = np.random.default_rng(seed)
    chunks = []
    for m in members:
        for n_in, n_out in zip(m.dims[:-1], m.dims[1:]):
            limit = np.sqrt(6.0 / (n_in + n_out))
            chunks.append(rng.uniform(-limit, limit, size=n_in * n_out))
            chunks.append(np.zeros(n_out))
    shift, scale = (0.0, 1.0) if domain is None else input_map(*domain)
    return NetworkEnsemble(mode, members, np.concatenate(chunks), shift, scale)


# ---------------------------------------------------------------------------
# single network passes; t has shape (N,)


def _mlp_forward(layers, t, shift=0.0, scale=1.0):
    a = ((t - shift) * scale)[:, None]
    da = np.full_like(a, scale)
    cache = []
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        z = a @ W.T + b
        dz = da @ W.T
        if i == last:
            cache.append((a, da, None, None, None))
            return z, dz, cache
        h = np.tanh(z)
        s = 1.0 - h * h
        cache.append((a, da, h, s, dz))
        a, da = h, s * dz


def _mlp_backward(layers, cache, gz, gdz):
    """Reverse pass given cotangents of the output value and its time derivative."""
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        a, da, _, _, _ = cache[i]
        gW = gz.T @ a + gdz.T @ da
        grads[i] = (gW, gz.sum(axis=0))
        if i == 0:
            break
        ga = gz @ W
        gda = gdz @ W
        # undo the activation of the previous layer: h = tanh(z), dh = s * dz, s = 1 - h^2
        _, _, h, s, dz_prev = cache[i - 1]
        gz = ga * s - 2.0 * gda * dz_prev * h * s
        gdz = gda * s
    return grads


def _ensemble_eval(ens, theta, t):
    outs, douts, caches = [], [], []
    for layers in ens.unflatten(theta):
        z, dz, cache = _mlp_forward(layers, t, ens.t_shift, ens.t_scale)
        outs.append(z)
        douts.append(dz)
        caches.append((layers, cache))
    return np.concatenate(outs, axis=1), np.concatenate(douts, axis=1), caches


def _ensemble_node(ens, theta: Var, t):
    u, du, caches = _ensemble_eval(ens, theta.value, t)
    widths = [m.dims[-1] for m in ens.members]
    off = ens.offsets

    def vjp(g):
        out = np.empty(ens.param_count)
        col = 0
        for k, (layers, cache) in enumerate(caches):
            w = widths[k]
            parts = _mlp_backward(layers, cache, g[0][:, col:col + w], g[1][:, col:col + w])
            out[off[k]:off[k + 1]] = SubNetwork.flatten(parts)
            col += w
        return out

    node = Var(np.stack([u, du]), [(theta, vjp)])
    return node[0], node[1]


def _as_times(t):
    arr = np.asarray(t, dtype=float)
    return arr.reshape(-1), arr.ndim == 0


def forward_with_time_derivative(ens: NetworkEnsemble, t, theta=None):
    """Outputs ``u(t)`` and their exact time derivative ``du/dt``.

    ``t`` may be a scalar (results have shape ``(n,)``) or a 1-d array
    (shape ``(N, n)``).  Passing a `Var` for ``theta`` records the pass on the
    tape for `param_gradient`.
    """
    theta = ens.theta if theta is None else theta
    ens.check(theta)
    times, scalar = _as_times(t)
    if isinstance(theta, Var):
        u, du = _ensemble_node(ens, theta, times)
    else:
        u, du, _ = _ensemble_eval(ens, np.asarray(theta, dtype=float), times)
    if scalar:
        return u[0], du[0]
    return u, du


def forward(ens: NetworkEnsemble, t, theta=None):
    return forward_with_time_derivative(ens, t, theta)[0]


def value_and_gradient(closure, theta):
    """Evaluate a scalar tape closure and its exact gradient at ``theta``."""
    leaf = Var(np.array(theta, dtype=float))
    out = closure(leaf)
    if not isinstance(out, Var):
        return float(out), np.zeros_like(leaf.value)
    if out.value.shape != ():
        raise ValueError(f"closure must return a scalar, got shape {out.value.shape}")
    (g,) = grad(out, leaf)
    return float(out.value), g


def param_gradient(closure, theta) -> np.ndarray:
    return value_and_gradient(closure, theta)[1]
