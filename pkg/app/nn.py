# app/nn.py

"""
Minimal feed-forward networks with explicit backpropagation.

Provides the ``Mlp`` used by both policy levels, an adaptive-moment optimizer state,
target-network tracking (``soft_update``) and a finite-difference gradient checker.
Everything is float64 and seeded through ``numpy.random.Generator`` instances.
"""

import logging
import numpy as np

from app.exceptions import NumericalError, ShapeError

ACTIVATIONS = ('identity', 'relu', 'sigmoid', 'tanh')
DEFAULT_HIDDEN = (64, 64)


def _activate(name, z):
    if name == 'identity':
        return z
    if name == 'relu':
        return np.maximum(z, 0.0)
    if name == 'sigmoid':
        # Split by sign so large |z| never overflows exp.
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if name == 'tanh':
        return np.tanh(z)
    raise ValueError(f"Unknown activation '{name}'")


def _activate_grad(name, z, a):
    """Derivative of the activation, given pre-activation ``z`` and output ``a``."""
    if name == 'identity':
        return np.ones_like(z)
    if name == 'relu':
        return np.where(z > 0, 1.0, 0.0)
    if name == 'sigmoid':
        return a * (1.0 - a)
    if name == 'tanh':
        return 1.0 - a * a
    raise ValueError(f"Unknown activation '{name}'")


class Mlp:
    """
    Fully connected network: rectifier hidden layers and a configurable output activation.

    Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``x`` of shape
    ``(batch, fan_in)`` maps through ``x @ W + b``. A 1-D input is treated as a batch of one
    and the result is returned 1-D again.

    Args:
        layer_sizes (sequence of int): Input dim, hidden dims, output dim.
        output_activation (str): One of ``ACTIVATIONS``.
        rng (numpy.random.Generator, optional): Source for the uniform
            ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` initialization.
        weights, biases (list of arrays, optional): Explicit parameters; skip initialization.
    """

    def __init__(self, layer_sizes, output_activation='identity', rng=None, weights=None, biases=None):
        layer_sizes = tuple(int(n) for n in layer_sizes)
        if len(layer_sizes) < 2 or any(n < 1 for n in layer_sizes):
            raise ShapeError(f"layer_sizes must hold at least two positive integers, got {layer_sizes}")
        if output_activation not in ACTIVATIONS:
            raise ValueError(f"Unknown output activation '{output_activation}'")
        self.layer_sizes = layer_sizes
        self.hidden_activation = 'relu'
        self.output_activation = output_activation

        if weights is None or biases is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            weights, biases = [], []
            for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
                bound = 1.0 / np.sqrt(fan_in)
                weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
                biases.append(rng.uniform(-bound, bound, size=fan_out))
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64).reshape(-1) for b in biases]
        self._check_shapes()

    def _check_shapes(self):
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError("Parameter count does not match layer_sizes")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if w.shape != expected or b.shape != (expected[1],):
                raise ShapeError(f"Layer {i}: weights {w.shape} / biases {b.shape}, expected {expected}")

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    @property
    def output_dim(self):
        return self.layer_sizes[-1]

    def parameters(self):
        """Parameters in canonical order ``[W0, b0, W1, b1, ...]`` (live references)."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params

    def copy(self):
        return Mlp(self.layer_sizes, self.output_activation,
                   weights=[w.copy() for w in self.weights],
                   biases=[b.copy() for b in self.biases])

    def same_architecture(self, other):
        return (self.layer_sizes == other.layer_sizes
                and self.output_activation == other.output_activation)

    def flat(self):
        return np.concatenate([p.ravel() for p in self.parameters()])

    def _as_batch(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        batch = x.reshape(1, -1) if single else x
        if batch.ndim != 2 or batch.shape[1] != self.input_dim:
            raise ShapeError(f"Expected input of width {self.input_dim}, got shape {x.shape}")
        return batch, single

    def _forward_cached(self, batch):
        activations = [batch]
        pre_activations = []
        last = len(self.weights) - 1
        a = batch
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = _activate(self.output_activation if i == last else self.hidden_activation, z)
            pre_activations.append(z)
            activations.append(a)
        return a, pre_activations, activations

    def forward(self, x):
        """
        Evaluate the network.

        Args:
            x (array): ``(input_dim,)`` or ``(batch, input_dim)``.

        Returns:
            numpy.ndarray: ``(output_dim,)`` or ``(batch, output_dim)``.
        """
        batch, single = self._as_batch(x)
        out, _, _ = self._forward_cached(batch)
        return out[0] if single else out

    __call__ = forward

    def backward(self, x, upstream_gradient):
        """
        Backpropagate ``upstream_gradient`` (dLoss/dOutput) through the network at ``x``.

        The forward pass is recomputed, so no state is kept between calls. Parameter
        gradients are summed over the batch.

        Returns:
            tuple: (list of parameter gradients in ``parameters()`` order, input gradient).
        """
        batch, single = self._as_batch(x)
        upstream = np.asarray(upstream_gradient, dtype=np.float64)
        upstream = upstream.reshape(1, -1) if upstream.ndim == 1 else upstream
        if upstream.shape != (batch.shape[0], self.output_dim):
            raise ShapeError(
                f"Upstream gradient shape {np.shape(upstream_gradient)} does not match output "
                f"({batch.shape[0]}, {self.output_dim})")

        _, pre_activations, activations = self._forward_cached(batch)
        last = len(self.weights) - 1
        grads = [None] * (2 * len(self.weights))
        delta = upstream * _activate_grad(self.output_activation, pre_activations[last], activations[last + 1])
        for i in range(last, -1, -1):
            grads[2 * i] = activations[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            upstream_prev = delta @ self.weights[i].T
            if i > 0:
                delta = upstream_prev * _activate_grad(self.hidden_activation, pre_activations[i - 1], activations[i])
        input_gradient = upstream_prev[0] if single else upstream_prev
        return grads, input_gradient


def forward(net, x):
    return net.forward(x)


def backward(net, x, upstream_gradient):
    return net.backward(x, upstream_gradient)


class OptimizerState:
    """
    Moment accumulators for one network.

    ``mode='adam'`` applies bias-corrected adaptive moment estimation; ``mode='sgd'``
    applies a plain gradient step with the same learning rate.
    """

    def __init__(self, net, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8, mode='adam'):
        if mode not in ('adam', 'sgd'):
            raise ValueError(f"Unknown optimizer mode '{mode}'")
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.mode = mode
        self.step_count = 0
        self.first_moment = [np.zeros_like(p) for p in net.parameters()]
        self.second_moment = [np.zeros_like(p) for p in net.parameters()]

    def copy(self, net=None):
        clone = OptimizerState.__new__(OptimizerState)
        clone.__dict__.update(self.__dict__)
        clone.first_moment = [m.copy() for m in self.first_moment]
        clone.second_moment = [v.copy() for v in self.second_moment]
        return clone


def _layer_label(param_index):
    kind = 'weights' if param_index % 2 == 0 else 'biases'
    return f"layer {param_index // 2} {kind}"


def optimizer_step(net, grads, state):
    """
    Apply one update to ``net`` in place.

    Raises:
        ShapeError: If gradients and parameters disagree in shape.
        NumericalError: If a gradient, or an updated parameter, is not finite.

    Returns:
        tuple: (net, state), both updated in place.
    """
    params = net.parameters()
    if len(grads) != len(params) or len(state.first_moment) != len(params):
        raise ShapeError(f"Expected {len(params)} gradient arrays, got {len(grads)}")
    for i, (p, g) in enumerate(zip(params, grads)):
        if np.shape(g) != p.shape:
            raise ShapeError(f"Gradient for {_layer_label(i)} has shape {np.shape(g)}, expected {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"Non-finite gradient in {_layer_label(i)}", layer=_layer_label(i))

    state.step_count += 1
    t = state.step_count
    for i, (p, g) in enumerate(zip(params, grads)):
        if state.mode == 'sgd':
            p -= state.learning_rate * g
            continue
        m = state.first_moment[i]
        v = state.second_moment[i]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)

    for i, p in enumerate(params):
        if not np.all(np.isfinite(p)):
            raise NumericalError(f"Non-finite parameter in {_layer_label(i)} after update", layer=_layer_label(i))
    return net, state


def soft_update(target, online, tau):
    """Move every target parameter to ``(1 - tau) * target + tau * online`` in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if not target.same_architecture(online):
        raise ShapeError(f"Architecture mismatch: {target.layer_sizes} vs {online.layer_sizes}")
    for p_target, p_online in zip(target.parameters(), online.parameters()):
        p_target[...] = (1.0 - tau) * p_target + tau * p_online
    return target


def relative_error(analytic, numeric, floor=1e-6):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    return np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), floor)


def gradient_check(net, x, h=1e-5):
    """
    Compare backpropagated gradients of ``0.5 * sum(net(x)**2)`` with central differences.

    Returns:
        float: Largest relative error over every parameter and input component.
    """
    x = np.array(x, dtype=np.float64)

    def loss():
        return 0.5 * float(np.sum(np.square(net.forward(x))))

    analytic, input_grad = net.backward(x, net.forward(x))
    worst = 0.0
    for p, g in zip(net.parameters(), analytic):
        numeric = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            original = p[idx]
            p[idx] = original + h
            up = loss()
            p[idx] = original - h
            down = loss()
            p[idx] = original
            numeric[idx] = (up - down) / (2.0 * h)
        worst = max(worst, float(np.max(relative_error(g, numeric))))

    numeric_input = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        original = x[idx]
        x[idx] = original + h
        up = loss()
        x[idx] = original - h
        down = loss()
        x[idx] = original
        numeric_input[idx] = (up - down) / (2.0 * h)
    return max(worst, float(np.max(relative_error(input_grad, numeric_input))))


def random_gradient_checks(n_networks=20, seed=0, max_dim=8):
    """
    Run ``gradient_check`` on ``n_networks`` random small networks.

    Returns:
        list of dict: One record per network with ``seed``, ``layer_sizes``,
        ``output_activation`` and ``max_relative_error``.
    """
    results = []
    for k in range(n_networks):
        rng = np.random.default_rng([seed, k])
        depth = int(rng.integers(1, 3))
        sizes = [int(n) for n in rng.integers(1, max_dim + 1, size=depth + 2)]
        activation = ('identity', 'sigmoid', 'tanh')[k % 3]
        net = Mlp(sizes, activation, rng=rng)
        x = rng.normal(size=(int(rng.integers(1, 4)), sizes[0]))
        error = gradient_check(net, x)
        logging.debug(f"Gradient check {k}: sizes={sizes} activation={activation} max_rel_err={error:.3e}")
        results.append({
            'seed': k,
            'layer_sizes': tuple(sizes),
            'output_activation': activation,
            'max_relative_error': error,
        })
    return results
