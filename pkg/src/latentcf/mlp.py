"""Minimal feed-forward network engine with hand-written reverse-mode gradients.

Supports exactly the compositions the rest of the package needs: a stack of
(optionally spectrally normalized) linear layers with softplus or relu hidden
activations and a single output logit.  Provides input gradients, parameter
gradients for the binary cross-entropy loss and for a stochastic squared
input-gradient penalty, an Adam update, power-iteration spectral norm
estimation, and bit-exact checkpoint IO.

Inputs are flat float64 vectors; callers flatten (length, dim) embeddings
row-major, zeroing padded rows first.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_embedding, check_pad_mask, check_rng

CHECKPOINT_MAGIC = b"LCFNET1\n"


def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus(x, beta: float = 1.0):
    """(1/beta) * log(1 + exp(beta*x)), stable for large |x|."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return np.logaddexp(0.0, beta * np.asarray(x, dtype=np.float64)) / beta


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    u: np.ndarray  # (out,) power-iteration left vector
    v: np.ndarray  # (in,) power-iteration right vector

    @property
    def shape(self):
        return self.weight.shape


@dataclass
class MLPParams:
    layers: list[Layer]
    beta: float = 1.0
    activation: str = "softplus"  # "softplus" | "relu"
    spectral_norm: bool = False

    @property
    def n_inputs(self) -> int:
        return self.layers[0].weight.shape[1]

    def copy(self) -> "MLPParams":
        return MLPParams(
            layers=[
                Layer(l.weight.copy(), l.bias.copy(), l.u.copy(), l.v.copy())
                for l in self.layers
            ],
            beta=self.beta,
            activation=self.activation,
            spectral_norm=self.spectral_norm,
        )


def init_mlp(
    layer_sizes,
    rng=None,
    activation: str = "softplus",
    spectral_norm: bool = False,
    beta: float = 1.0,
    hidden_bias: float = 0.0,
) -> MLPParams:
    """He-initialized network for the given [n_in, hidden..., n_out] sizes.

    hidden_bias shifts hidden-layer biases at init; positive values start
    softplus units in their responsive near-linear regime instead of the
    half-slope region around zero.
    """
    if activation not in ("softplus", "relu"):
        raise ValueError(f"unknown activation {activation!r}")
    if len(layer_sizes) < 2:
        raise ValueError("need at least an input and an output size")
    rng = check_rng(rng)
    layers = []
    n_layers = len(layer_sizes) - 1
    for i, (n_in, n_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        w = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in))
        b = np.full(n_out, hidden_bias if i < n_layers - 1 else 0.0)
        u = _normalize(rng.normal(size=n_out))
        v = _normalize(w.T @ u)
        layers.append(Layer(w, b, u, v))
    return MLPParams(layers=layers, beta=beta, activation=activation, spectral_norm=spectral_norm)


def _normalize(x, eps: float = 0.0):
    n = np.linalg.norm(x)
    if n == 0.0:
        return x
    return x / (n + eps)


def spectral_norm_estimate(weight, iters: int, u):
    """Power-iteration estimate of the largest singular value.

    Returns (sigma, u_updated); a zero matrix yields sigma 0 with u unchanged.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    w = np.asarray(weight, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if np.linalg.norm(u) == 0.0:
        raise ValueError("u must be nonzero")
    if not np.any(w):
        return 0.0, u
    v = None
    for _ in range(iters):
        v = _normalize(w.T @ u)
        u = _normalize(w @ v)
    sigma = float(u @ w @ v)
    return sigma, u


def refresh_spectral(params: MLPParams, iters: int = 1, project: bool = False) -> None:
    """Advance each layer's power iteration in place (training-time use).

    With project=True the raw weight is also divided by max(sigma, 1).  The
    normalized forward pass is scale-invariant in the raw weight, so without
    projection optimizer noise inflates ||W|| and silently anneals the
    effective learning rate to zero.
    """
    for layer in params.layers:
        if not np.any(layer.weight):
            continue
        u = layer.u
        v = layer.v
        for _ in range(iters):
            v = _normalize(layer.weight.T @ u)
            u = _normalize(layer.weight @ v)
        layer.u = u
        layer.v = v
        if project:
            sigma = float(u @ layer.weight @ v)
            if sigma > 1.0:
                layer.weight = layer.weight / sigma


def layer_sigma(layer: Layer) -> float:
    """sigma = u' W v with the stored iteration vectors held constant."""
    return float(layer.u @ layer.weight @ layer.v)


def _effective_weights(params: MLPParams):
    """Per-layer (W_eff, sigma, divided) with W_eff = W / max(sigma, 1)."""
    out = []
    for layer in params.layers:
        if params.spectral_norm:
            sigma = layer_sigma(layer)
            if sigma > 1.0:
                out.append((layer.weight / sigma, sigma, True))
            else:
                out.append((layer.weight, sigma, False))
        else:
            out.append((layer.weight, None, False))
    return out


def fold_spectral(params: MLPParams, iters: int = 50) -> None:
    """Divide each weight by a converged sigma estimate and freeze the flag.

    After folding, forward passes are plain affine maps; every layer's true
    operator norm is <= 1 up to power-iteration slack.
    """
    if not params.spectral_norm:
        return
    for layer in params.layers:
        sigma, u = spectral_norm_estimate(layer.weight, iters, layer.u)
        layer.u = u
        layer.v = _normalize(layer.weight.T @ u) if np.any(layer.weight) else layer.v
        if sigma > 1.0:
            layer.weight = layer.weight / sigma
    params.spectral_norm = False


def _activation_fns(params: MLPParams):
    if params.activation == "softplus":
        beta = params.beta

        def act(a):
            return softplus(a, beta)

        def act_prime(a):
            return sigmoid(beta * a)

        def act_second(a):
            s = sigmoid(beta * a)
            return beta * s * (1.0 - s)

    else:  # relu

        def act(a):
            return np.maximum(a, 0.0)

        def act_prime(a):
            return (a > 0.0).astype(np.float64)

        def act_second(a):
            return np.zeros_like(a)

    return act, act_prime, act_second


def flatten_embedding(z, pad_mask=None) -> np.ndarray:
    """Row-major flattening with padded rows zeroed beforehand."""
    z = check_embedding(z)
    mask = check_pad_mask(pad_mask, z.shape[0])
    if mask is not None:
        z = np.where(mask[:, None], z, 0.0)
    return z.reshape(-1)


def _forward(params: MLPParams, X, dropout_masks=None):
    """Batch forward; X is (B, n_in).  Returns (logits, cache)."""
    act, act_prime, _ = _activation_fns(params)
    effs = _effective_weights(params)
    n_layers = len(params.layers)
    h = X
    hs = [h]  # layer inputs, post-dropout
    pre = []  # pre-activations
    for i, layer in enumerate(params.layers):
        w_eff, _, _ = effs[i]
        a = h @ w_eff.T + layer.bias
        pre.append(a)
        if i < n_layers - 1:
            h = act(a)
            if dropout_masks is not None:
                h = h * dropout_masks[i]
            hs.append(h)
    logits = pre[-1][:, 0]
    cache = {"hs": hs, "pre": pre, "effs": effs, "dropout": dropout_masks}
    return logits, cache


def _raw_weight_grad(layer: Layer, w_eff_grad, w_eff, sigma, divided):
    """Map a gradient w.r.t. W/max(sigma,1) back to the raw weight.

    sigma = u' W v is linear in W for the stored u, v, so the division
    contributes a rank-one correction when it is active.
    """
    if not divided:
        return w_eff_grad
    inner = float(np.sum(w_eff_grad * w_eff))
    return (w_eff_grad - inner * np.outer(layer.u, layer.v)) / sigma


def _backward(params: MLPParams, cache, dlogits):
    """Backprop dlogits (B,) through a cached forward.

    Returns (dX, grads) where grads is a list of (dW_raw, db) per layer.
    """
    _, act_prime, _ = _activation_fns(params)
    hs, pre, effs, dropout = cache["hs"], cache["pre"], cache["effs"], cache["dropout"]
    n_layers = len(params.layers)
    grads = [None] * n_layers
    abar = dlogits[:, None]  # gradient w.r.t. the output pre-activation
    for i in range(n_layers - 1, -1, -1):
        w_eff, sigma, divided = effs[i]
        dw_eff = abar.T @ hs[i]
        db = abar.sum(axis=0)
        grads[i] = (_raw_weight_grad(params.layers[i], dw_eff, w_eff, sigma, divided), db)
        hbar = abar @ w_eff
        if i > 0:
            if dropout is not None:
                hbar = hbar * dropout[i - 1]
            abar = hbar * act_prime(pre[i - 1])
        else:
            dX = hbar
    return dX, grads


def mlp_forward(params: MLPParams, z, pad_mask=None) -> float:
    """Scalar logit for one embedding (inference mode, no dropout)."""
    x = flatten_embedding(z, pad_mask)
    if x.shape[0] != params.n_inputs:
        raise ValueError(
            f"flattened input has {x.shape[0]} entries, network expects {params.n_inputs}"
        )
    logits, _ = _forward(params, x[None, :])
    return float(logits[0])


def batch_logits(params: MLPParams, X) -> np.ndarray:
    """Logits for a (B, n_in) batch of pre-flattened inputs."""
    logits, _ = _forward(params, np.asarray(X, dtype=np.float64))
    return logits


def input_gradient(params: MLPParams, z, pad_mask=None) -> np.ndarray:
    """Exact gradient of the logit w.r.t. every entry of z (shape of z).

    Padded rows receive zero gradient.
    """
    z = check_embedding(z)
    x = flatten_embedding(z, pad_mask)
    logits, cache = _forward(params, x[None, :])
    dX, _ = _backward(params, cache, np.ones(1))
    g = dX[0].reshape(z.shape)
    mask = check_pad_mask(pad_mask, z.shape[0])
    if mask is not None:
        g = np.where(mask[:, None], g, 0.0)
    return g


def batch_input_gradients(params: MLPParams, X) -> np.ndarray:
    """Logit gradients for a (B, n_in) batch, returned as (B, n_in)."""
    X = np.asarray(X, dtype=np.float64)
    logits, cache = _forward(params, X)
    dX, _ = _backward(params, cache, np.ones(X.shape[0]))
    return dX


def bce_with_logits(logits, y):
    """Elementwise log(1 + exp(l)) - y*l, the stable binary cross-entropy."""
    logits = np.asarray(logits, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return np.logaddexp(0.0, logits) - y * logits


def bce_loss_and_grads(params: MLPParams, X, y, dropout_masks=None):
    """Mean BCE over the batch plus parameter gradients and input gradients."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    logits, cache = _forward(params, X, dropout_masks)
    loss = float(np.mean(bce_with_logits(logits, y)))
    dlogits = (sigmoid(logits) - y) / X.shape[0]
    dX, grads = _backward(params, cache, dlogits)
    return loss, grads, dX


def jvp_logit(params: MLPParams, x, tangents) -> np.ndarray:
    """Directional derivatives of the logit at x along each tangent row."""
    x = np.asarray(x, dtype=np.float64)
    tangents = np.atleast_2d(np.asarray(tangents, dtype=np.float64))
    act, act_prime, _ = _activation_fns(params)
    effs = _effective_weights(params)
    n_layers = len(params.layers)
    h = x
    t = tangents
    for i, layer in enumerate(params.layers):
        w_eff, _, _ = effs[i]
        a = w_eff @ h + layer.bias
        tau = t @ w_eff.T
        if i < n_layers - 1:
            t = act_prime(a)[None, :] * tau
            h = act(a)
    return tau[:, 0]


def hutchinson_frob_sq(params: MLPParams, z, n_probes: int, rng, pad_mask=None) -> float:
    """Rademacher-probe estimate of the squared input-gradient norm.

    Each probe contributes (v' grad)^2 computed by a forward-mode sweep; the
    mean over probes is an unbiased estimate of ||grad||^2 for the scalar
    logit.
    """
    if n_probes < 1:
        raise ValueError("n_probes must be >= 1")
    rng = check_rng(rng)
    x = flatten_embedding(z, pad_mask)
    probes = rng.integers(0, 2, size=(n_probes, x.shape[0])).astype(np.float64) * 2.0 - 1.0
    g = jvp_logit(params, x, probes)
    return float(np.mean(g * g))


def jacobian_penalty_and_grads(params: MLPParams, X, probes):
    """Mean squared directional derivative of the logit, with parameter grads.

    X is (B, n_in); probes is (B, P, n_in).  The penalty is
    mean_{b,p} (probes[b,p] . grad_x logit(x_b))^2, evaluated without dropout,
    and the returned gradients are exact (double backprop through the
    forward-mode sweep).
    """
    X = np.asarray(X, dtype=np.float64)
    probes = np.asarray(probes, dtype=np.float64)
    B, P, n_in = probes.shape
    act, act_prime, act_second = _activation_fns(params)
    effs = _effective_weights(params)
    n_layers = len(params.layers)

    # Primal and tangent forward passes, keeping everything needed for reverse.
    hs = [X]  # (B, n_l)
    pres = []
    taus = []  # (B, P, n_l)
    ts = [probes]
    h = X
    t = probes
    for i, layer in enumerate(params.layers):
        w_eff, _, _ = effs[i]
        n_out, n_in = w_eff.shape
        a = h @ w_eff.T + layer.bias
        pres.append(a)
        tau = (t.reshape(B * P, n_in) @ w_eff.T).reshape(B, P, n_out)
        taus.append(tau)
        if i < n_layers - 1:
            h = act(a)
            hs.append(h)
            t = act_prime(a)[:, None, :] * tau
            ts.append(t)
    g = taus[-1][:, :, 0]  # (B, P)
    penalty = float(np.mean(g * g))

    # Reverse pass.  The tangent chain carries per-probe adjoints (taubar,
    # tbar); the primal chain is shared across probes, so its adjoints (abar,
    # hbar) sum over the probe axis.
    gbar = 2.0 * g / (B * P)
    taubar = gbar[:, :, None]  # (B, P, 1) at the output layer
    abar = np.zeros((B, params.layers[-1].weight.shape[0]))
    grads = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        w_eff, sigma, divided = effs[i]
        n_out, n_in = w_eff.shape
        dw_eff = taubar.reshape(B * P, n_out).T @ ts[i].reshape(B * P, n_in)
        dw_eff += abar.T @ hs[i]
        db = abar.sum(axis=0)
        grads[i] = (_raw_weight_grad(params.layers[i], dw_eff, w_eff, sigma, divided), db)
        if i > 0:
            tbar = (taubar.reshape(B * P, n_out) @ w_eff).reshape(B, P, n_in)
            hbar = abar @ w_eff  # (B, n_in_i)
            s = act_prime(pres[i - 1])
            s2 = act_second(pres[i - 1])
            taubar = s[:, None, :] * tbar
            abar = s2 * (taus[i - 1] * tbar).sum(axis=1) + s * hbar
    return penalty, grads


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_init(params: MLPParams, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    m = [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in params.layers]
    v = [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in params.layers]
    return AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, m=m, v=v)


def adam_step(state: AdamState, params: MLPParams, grads) -> None:
    """Standard bias-corrected Adam update, applied in place."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for i, layer in enumerate(params.layers):
        gw, gb = grads[i]
        mw, mb = state.m[i]
        vw, vb = state.v[i]
        mw *= b1
        mw += (1 - b1) * gw
        mb *= b1
        mb += (1 - b1) * gb
        vw *= b2
        vw += (1 - b2) * gw * gw
        vb *= b2
        vb += (1 - b2) * gb * gb
        layer.weight -= state.lr * (mw / c1) / (np.sqrt(vw / c2) + state.eps)
        layer.bias -= state.lr * (mb / c1) / (np.sqrt(vb / c2) + state.eps)


def add_grads(a, b, scale: float = 1.0):
    """a + scale*b for two parameter-gradient lists."""
    return [(ga_w + scale * gb_w, ga_b + scale * gb_b) for (ga_w, ga_b), (gb_w, gb_b) in zip(a, b)]


def grads_finite(grads) -> bool:
    return all(np.all(np.isfinite(gw)) and np.all(np.isfinite(gb)) for gw, gb in grads)


def save_params(params: MLPParams, path) -> None:
    """Versioned binary checkpoint: JSON header + row-major float64 arrays."""
    header = {
        "layer_sizes": [list(l.weight.shape) for l in params.layers],
        "beta": params.beta,
        "activation": params.activation,
        "spectral_norm": params.spectral_norm,
    }
    blob = io.BytesIO()
    blob.write(CHECKPOINT_MAGIC)
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    blob.write(struct.pack("<I", len(head)))
    blob.write(head)
    for layer in params.layers:
        for arr in (layer.weight, layer.bias, layer.u, layer.v):
            blob.write(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    with open(path, "wb") as fh:
        fh.write(blob.getvalue())


def load_params(path) -> MLPParams:
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path} is not a network checkpoint")
    off = len(CHECKPOINT_MAGIC)
    (head_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    header = json.loads(raw[off : off + head_len].decode("utf-8"))
    off += head_len
    layers = []
    for n_out, n_in in header["layer_sizes"]:
        parts = []
        for shape in ((n_out, n_in), (n_out,), (n_out,), (n_in,)):
            count = int(np.prod(shape))
            arr = np.frombuffer(raw, dtype=np.float64, count=count, offset=off).reshape(shape)
            off += count * 8
            parts.append(arr.copy())
        layers.append(Layer(*parts))
    return MLPParams(
        layers=layers,
        beta=float(header["beta"]),
        activation=header["activation"],
        spectral_norm=bool(header["spectral_norm"]),
    )
