"""Feedforward network container: generation, evaluation, serialization, norms.

Networks are plain weight/bias stacks with a scalar activation applied
element-wise on every hidden layer and a linear output layer.  All values are
float64 and immutable after construction, so a Network can be shared freely
across worker processes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ActivationSpec",
    "Network",
    "NetworkFormatError",
    "NetworkShapeError",
    "NetworkDataError",
    "SpectralNormError",
    "eval_forward",
    "eval_forward_batch",
    "gaussian_network",
    "random_network",
    "spectral_norm",
    "naive_lip",
    "scale_weights",
    "save_network",
    "load_network",
]

POWER_ITERATION_CAP = 10_000

# Weight entries of generated networks are Gaussian with this variance.
GAUSSIAN_WEIGHT_VARIANCE = 0.5


class NetworkFormatError(ValueError):
    """Network file cannot be parsed or has an invalid schema."""


class NetworkShapeError(NetworkFormatError):
    """Weight/bias shapes are inconsistent with the declared layer sizes."""


class NetworkDataError(NetworkFormatError):
    """Network contains non-finite entries or invalid activation data."""


class SpectralNormError(RuntimeError):
    """Power iteration did not reach the requested tolerance.

    Carries the best estimate found so far in ``best_estimate``.
    """

    def __init__(self, message: str, best_estimate: float):
        super().__init__(message)
        self.best_estimate = best_estimate


@dataclass(frozen=True)
class ActivationSpec:
    """Scalar activation with slope (sector) bounds ``[lo, hi]``.

    ``relu`` and ``tanh`` are concrete activations and always carry the
    sector (0, 1).  Kind ``sector`` describes only the bound and has no
    evaluable nonlinearity.
    """

    kind: str
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in ("relu", "tanh", "sector"):
            raise NetworkDataError(f"unknown activation kind {self.kind!r}")
        if self.kind in ("relu", "tanh") and (self.lo, self.hi) != (0.0, 1.0):
            raise NetworkDataError(
                f"{self.kind} activation has sector (0, 1), "
                f"got ({self.lo}, {self.hi})"
            )
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise NetworkDataError("sector bounds must be finite")
        if self.lo > self.hi:
            raise NetworkDataError(
                f"sector lower bound {self.lo} exceeds upper bound {self.hi}"
            )

    @staticmethod
    def relu() -> "ActivationSpec":
        return ActivationSpec("relu", 0.0, 1.0)

    @staticmethod
    def tanh() -> "ActivationSpec":
        return ActivationSpec("tanh", 0.0, 1.0)

    @staticmethod
    def sector(lo: float, hi: float) -> "ActivationSpec":
        return ActivationSpec("sector", float(lo), float(hi))


@dataclass(frozen=True, eq=False)
class Network:
    """Feedforward network with K >= 2 layers.

    ``layer_sizes`` has K+1 entries (n_1, ..., n_K, m).  ``weights[k]`` maps
    layer k+1 inputs to layer k+2 inputs, i.e. has shape
    (layer_sizes[k+1], layer_sizes[k]).
    """

    layer_sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activation: ActivationSpec

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 3:
            raise NetworkShapeError(
                f"need at least 2 layers (3 size entries), got {len(sizes)}"
            )
        if any(s < 1 for s in sizes):
            raise NetworkShapeError(f"layer sizes must be positive: {sizes}")
        K = len(sizes) - 1
        if len(self.weights) != K or len(self.biases) != K:
            raise NetworkShapeError(
                f"expected {K} weight and bias entries, got "
                f"{len(self.weights)} and {len(self.biases)}"
            )
        ws, bs = [], []
        for k in range(K):
            W = np.ascontiguousarray(np.asarray(self.weights[k], dtype=np.float64))
            b = np.ascontiguousarray(np.asarray(self.biases[k], dtype=np.float64))
            if W.shape != (sizes[k + 1], sizes[k]):
                raise NetworkShapeError(
                    f"weight W_{k + 1} has shape {W.shape}, expected "
                    f"{(sizes[k + 1], sizes[k])}"
                )
            if b.shape != (sizes[k + 1],):
                raise NetworkShapeError(
                    f"bias b_{k + 1} has shape {b.shape}, expected "
                    f"({sizes[k + 1]},)"
                )
            if not np.all(np.isfinite(W)):
                raise NetworkDataError(f"weight W_{k + 1} has non-finite entries")
            if not np.all(np.isfinite(b)):
                raise NetworkDataError(f"bias b_{k + 1} has non-finite entries")
            W.setflags(write=False)
            b.setflags(write=False)
            ws.append(W)
            bs.append(b)
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "weights", tuple(ws))
        object.__setattr__(self, "biases", tuple(bs))

    @property
    def depth(self) -> int:
        """Number of layers K (K-1 hidden + linear output)."""
        return len(self.layer_sizes) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def zero_bias(self) -> bool:
        return all(not b.any() for b in self.biases)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.layer_sizes == other.layer_sizes
            and self.activation == other.activation
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )


def _apply_activation(kind: str, u: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(u, 0.0)
    if kind == "tanh":
        return np.tanh(u)
    raise ValueError(
        f"activation kind {kind!r} has no concrete nonlinearity to evaluate"
    )


def eval_forward(net: Network, x) -> np.ndarray:
    """Evaluate the network on one input vector.

    Raises ValueError on input length mismatch or when the activation kind
    is ``sector`` (a bound, not an evaluable function).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise ValueError(
            f"input has shape {x.shape}, expected ({net.input_dim},)"
        )
    K = net.depth
    h = x
    for k in range(K - 1):
        h = _apply_activation(net.activation.kind, net.weights[k] @ h + net.biases[k])
    return net.weights[K - 1] @ h + net.biases[K - 1]


def eval_forward_batch(net: Network, X) -> np.ndarray:
    """Evaluate the network on rows of ``X`` (shape (batch, n_1))."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ValueError(f"batch has shape {X.shape}, expected (*, {net.input_dim})")
    K = net.depth
    H = X
    for k in range(K - 1):
        H = _apply_activation(net.activation.kind, H @ net.weights[k].T + net.biases[k])
    return H @ net.weights[K - 1].T + net.biases[K - 1]


def gaussian_network(layer_sizes, seed: int, kind: str = "relu") -> Network:
    """Network with i.i.d. Gaussian weights (variance 1/2) and zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    rng = np.random.default_rng(seed)
    std = math.sqrt(GAUSSIAN_WEIGHT_VARIANCE)
    weights = [
        rng.normal(0.0, std, size=(sizes[k + 1], sizes[k]))
        for k in range(len(sizes) - 1)
    ]
    biases = [np.zeros(sizes[k + 1]) for k in range(len(sizes) - 1)]
    act = ActivationSpec.tanh() if kind == "tanh" else ActivationSpec(kind)
    return Network(sizes, tuple(weights), tuple(biases), act)


def random_network(width: int, depth: int, seed: int) -> Network:
    """Random benchmark network W{width}-D{depth}: 2-dim input/output, relu.

    ``depth`` counts layers K (K-1 hidden layers of the given width), so the
    size profile is (2, width, ..., width, 2) with depth-1 interior entries.
    """
    if width < 1:
        raise ValueError(f"width must be >= 1, got {width}")
    if depth < 2:
        raise ValueError(f"depth must be >= 2, got {depth}")
    sizes = (2,) + (width,) * (depth - 1) + (2,)
    return gaussian_network(sizes, seed, kind="relu")


def spectral_norm(M, tol: float = 1e-10) -> float:
    """Largest singular value of ``M`` by power iteration on M^T M.

    Deterministic start vector (normalized all-ones; a fixed ramp vector if
    the all-ones start lies in the null space).  Raises SpectralNormError
    carrying the best estimate if the relative change has not dropped below
    ``tol`` within the iteration cap.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if M.size == 0 or not M.any():
        return 0.0
    G = M.T @ M
    n = G.shape[0]
    starts = [np.ones(n), np.arange(1.0, n + 1.0)]
    for v in starts:
        v = v / np.linalg.norm(v)
        sigma = 0.0
        stalled = False
        for _ in range(POWER_ITERATION_CAP):
            w = G @ v
            nw = np.linalg.norm(w)
            if nw == 0.0:
                stalled = True  # start vector in the null space; try next
                break
            v = w / nw
            sigma_new = math.sqrt(float(v @ (G @ v)))
            if abs(sigma_new - sigma) <= tol * max(sigma_new, 1e-300):
                return sigma_new
            sigma = sigma_new
        if not stalled:
            raise SpectralNormError(
                f"power iteration did not converge to rel. tol {tol} within "
                f"{POWER_ITERATION_CAP} iterations (best estimate {sigma})",
                best_estimate=sigma,
            )
    return 0.0  # all deterministic starts annihilated: M^T M v = 0


def naive_lip(net: Network, tol: float = 1e-10) -> float:
    """Product of per-layer spectral norms: the layer-wise Lipschitz bound."""
    out = 1.0
    for W in net.weights:
        out *= spectral_norm(W, tol=tol)
    return out


def scale_weights(net: Network, factors) -> Network:
    """New network with W_k replaced by factors[k] * W_k (biases untouched).

    Intended for solver conditioning.  For positively homogeneous activations
    (relu) with zero biases the true Lipschitz constant scales by the product
    of the factors, so bounds computed on the scaled network can be mapped
    back exactly.
    """
    factors = [float(c) for c in factors]
    if len(factors) != net.depth:
        raise ValueError(f"expected {net.depth} factors, got {len(factors)}")
    if any(c <= 0 for c in factors):
        raise ValueError(f"scale factors must be positive: {factors}")
    weights = tuple(c * W for c, W in zip(factors, net.weights))
    return Network(net.layer_sizes, weights, net.biases, net.activation)


_NETWORK_KEYS = {"layer_sizes", "weights", "biases", "activation"}
_ACTIVATION_KEYS = {"kind", "lo", "hi"}


def save_network(net: Network, path) -> None:
    """Write the network as JSON (full float round-trip precision)."""
    doc = {
        "layer_sizes": list(net.layer_sizes),
        "weights": [W.tolist() for W in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "activation": {
            "kind": net.activation.kind,
            "lo": net.activation.lo,
            "hi": net.activation.hi,
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_network(path) -> Network:
    """Load and validate a network JSON file.

    Distinguishes parse failures (NetworkFormatError), shape mismatches
    (NetworkShapeError, naming the offending layer), and non-finite entries
    (NetworkDataError).  Unknown keys are rejected.
    """
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise NetworkFormatError(f"cannot parse network file: {exc}") from exc
    if not isinstance(doc, dict):
        raise NetworkFormatError("network file must contain a JSON object")
    unknown = set(doc) - _NETWORK_KEYS
    if unknown:
        raise NetworkFormatError(f"unknown keys in network file: {sorted(unknown)}")
    missing = _NETWORK_KEYS - set(doc)
    if missing:
        raise NetworkFormatError(f"missing keys in network file: {sorted(missing)}")
    act_doc = doc["activation"]
    if not isinstance(act_doc, dict) or "kind" not in act_doc:
        raise NetworkFormatError('"activation" must be an object with a "kind"')
    unknown = set(act_doc) - _ACTIVATION_KEYS
    if unknown:
        raise NetworkFormatError(f"unknown activation keys: {sorted(unknown)}")
    kind = act_doc["kind"]
    if kind in ("relu", "tanh"):
        # lo/hi optional; when present they must agree with the fixed sector
        lo = float(act_doc.get("lo", 0.0))
        hi = float(act_doc.get("hi", 1.0))
    elif kind == "sector":
        if "lo" not in act_doc or "hi" not in act_doc:
            raise NetworkFormatError('sector activation requires "lo" and "hi"')
        lo = float(act_doc["lo"])
        hi = float(act_doc["hi"])
    else:
        raise NetworkDataError(f"unknown activation kind {kind!r}")
    activation = ActivationSpec(kind, lo, hi)
    try:
        return Network(
            tuple(doc["layer_sizes"]),
            tuple(np.asarray(W, dtype=np.float64) for W in doc["weights"]),
            tuple(np.asarray(b, dtype=np.float64) for b in doc["biases"]),
            activation,
        )
    except (ValueError, TypeError) as exc:
        if isinstance(exc, NetworkFormatError):
            raise
        raise NetworkFormatError(f"malformed network arrays: {exc}") from exc
