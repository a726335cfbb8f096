"""The GNN-ASE network with hand-written analytic gradients.

Architecture: linear embedding -> graph convolution (ReLU) -> dropout ->
graph convolution (ReLU) -> three heads (anomaly sigmoid, severity
ReLU-MLP, type softmax). Aggregation normalizes each edge weight by the
square root of both endpoints' weighted degrees, with a weight-1 self-loop
added per node.

Training is plain seeded SGD on a multi-task loss: binary cross-entropy
for anomaly, mean squared error for severity, cross-entropy over fault
classes masked to anomalous nodes. After each epoch the edge weights of
every training graph are blended toward the cosine similarity of the
first convolution's hidden vectors (dynamic edge reweighting); weights
are constants as far as the gradients are concerned.

The severity branch reads the trunk output but its loss gradient stops
there by default: the trunk is trained by the detection losses alone, so
removing the severity head (the no_severity ablation) cannot change
anomaly or type behavior. Set severity_to_trunk=True for a fully coupled
multi-task trunk instead.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import (
    EmptyDataset,
    FeatureDimMismatch,
    InvalidConfigValue,
    NegativeWeight,
    RecordingTooShort,
    ShapeMismatch,
)
from .features import Standardizer, WindowFeatures, WindowSpec, extract_windows, feature_names
from .graphs import TYPE_CLASSES, SignalGraph, build_graph
from .numerics import derive_seed, make_rng
from .preprocess import FilterSpec, filter_recording
from .simulate import Recording

ABLATIONS = ("full", "no_reweight", "no_severity", "no_freq_features")

# Names of the frequency-domain feature columns; the no_freq_features
# variant must not see them.
FREQ_NAME_MARKERS = ("f_dom", "h_spec")

CHECKPOINT_FORMAT = "gnnase-checkpoint-v1"


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters; defaults follow the reference architecture."""

    embed_dim: int = 128
    gcn1_dim: int = 64
    gcn2_dim: int = 64
    severity_dim: int = 32
    type_classes: int = 3
    learning_rate: float = 0.01
    # "cosine" anneals the step size from learning_rate to ~0 across the run;
    # "constant" keeps it fixed. Annealing settles the severity regression,
    # which otherwise wanders under late-epoch SGD noise.
    lr_schedule: str = "cosine"
    dropout_p: float = 0.5
    beta: float = 0.3
    epochs: int = 400
    batch_size: int = 10
    lambda_anomaly: float = 1.0
    lambda_severity: float = 1.0
    lambda_type: float = 1.0
    ablation: str = "full"
    seed: int = 0
    # When True the severity loss trains the shared trunk too; the default
    # keeps the trunk independent so no_severity is output-identical.
    severity_to_trunk: bool = False
    # 0 = scalar ReLU regression head; > 0 switches the severity head to a
    # softmax over this many severity bins.
    severity_bins: int = 0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise InvalidConfigValue(f"beta must lie in [0, 1], got {self.beta}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise InvalidConfigValue(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.ablation not in ABLATIONS:
            raise InvalidConfigValue(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.learning_rate <= 0:
            raise InvalidConfigValue(f"learning_rate must be positive, got {self.learning_rate}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise InvalidConfigValue(
                f"lr_schedule must be 'constant' or 'cosine', got {self.lr_schedule!r}"
            )
        if min(self.lambda_anomaly, self.lambda_severity, self.lambda_type) < 0:
            raise InvalidConfigValue("loss weights must be nonnegative")
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidConfigValue(
                f"epochs must be >= 0 and batch_size >= 1, got {self.epochs}, {self.batch_size}"
            )
        if self.severity_bins < 0:
            raise InvalidConfigValue(f"severity_bins must be >= 0, got {self.severity_bins}")

    @property
    def severity_out_dim(self) -> int:
        return self.severity_bins if self.severity_bins > 0 else 1


@dataclass
class ModelState:
    """Learned parameters plus training-time bookkeeping."""

    params: dict[str, np.ndarray]
    feature_dim: int
    epoch: int = 0
    # Final per-graph edge weights after reweighting, keyed by graph id;
    # informational only, inference always starts from fresh weights.
    edge_weights: dict[str, list[float]] = field(default_factory=dict)


@dataclass
class Diagnosis:
    """Per-node outputs plus mean-pooled graph-level decisions."""

    node_anomaly: np.ndarray
    node_severity: np.ndarray | None
    node_type: np.ndarray
    anomaly_probability: float
    is_anomalous: bool
    severity_score: float | None
    type_distribution: np.ndarray
    predicted_type: str


@dataclass(frozen=True)
class PipelineSettings:
    """Featurization settings a trained model depends on."""

    window: WindowSpec = WindowSpec()
    filter: FilterSpec | None = FilterSpec()
    neighbors: int = 4
    include_frequency: bool = True


def _param_specs(feature_dim: int, config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Parameter tensors in a fixed order (order fixes the init streams)."""
    return [
        ("W_embed", (feature_dim, config.embed_dim)),
        ("b_embed", (config.embed_dim,)),
        ("W_gcn1", (config.embed_dim, config.gcn1_dim)),
        ("b_gcn1", (config.gcn1_dim,)),
        ("W_gcn2", (config.gcn1_dim, config.gcn2_dim)),
        ("b_gcn2", (config.gcn2_dim,)),
        ("W_anom", (config.gcn2_dim, 1)),
        ("b_anom", (1,)),
        ("W_sev1", (config.gcn2_dim, config.severity_dim)),
        ("b_sev1", (config.severity_dim,)),
        ("W_sev2", (config.severity_dim, config.severity_out_dim)),
        ("b_sev2", (config.severity_out_dim,)),
        ("W_type", (config.gcn2_dim, config.type_classes)),
        ("b_type", (config.type_classes,)),
    ]


def init_state(feature_dim: int, config: ModelConfig) -> ModelState:
    """Glorot-uniform weights, zero biases.

    Every tensor draws from its own seed stream derived from the config
    seed and the tensor name, so adding or skipping one tensor can never
    shift the values of another.
    """
    params: dict[str, np.ndarray] = {}
    for name, shape in _param_specs(feature_dim, config):
        if name.startswith("b_"):
            params[name] = np.zeros(shape)
            continue
        fan_in, fan_out = shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        rng = make_rng(derive_seed(config.seed, "init", name))
        params[name] = rng.uniform(-bound, bound, size=shape)
    return ModelState(params=params, feature_dim=feature_dim)


def _aggregation(n_nodes: int, edges: list[tuple[int, int, float]]):
    """Symmetric normalized-adjacency entries (rows, cols, vals).

    Includes both directions of every edge and a weight-1 self-loop per
    node; vals carry w_ij / sqrt(d_i d_j) with weighted degrees that count
    the self-loop.
    """
    degree = np.ones(n_nodes)
    for i, j, w in edges:
        if w < 0:
            raise NegativeWeight(f"edge ({i}, {j}) has negative weight {w}")
        degree[i] += w
        degree[j] += w
    rows, cols, vals = [], [], []
    inv_sqrt = 1.0 / np.sqrt(degree)
    for i, j, w in edges:
        norm = w * inv_sqrt[i] * inv_sqrt[j]
        rows.extend((i, j))
        cols.extend((j, i))
        vals.extend((norm, norm))
    for i in range(n_nodes):
        rows.append(i)
        cols.append(i)
        vals.append(1.0 * inv_sqrt[i] * inv_sqrt[i])
    return np.array(rows), np.array(cols), np.array(vals)


def _aggregate(agg, h: np.ndarray) -> np.ndarray:
    rows, cols, vals = agg
    out = np.zeros_like(h)
    np.add.at(out, rows, vals[:, None] * h[cols])
    return out


def gcn_layer(h: np.ndarray, graph: SignalGraph, W: np.ndarray, activation: str = "relu") -> np.ndarray:
    """One graph convolution: normalized aggregation, linear map, activation.

    Args:
        h: Node features, shape (n_nodes, in_dim).
        graph: Supplies the weighted edges; self-loops are added here.
        W: Weight matrix, shape (in_dim, out_dim).
        activation: "relu" or "identity".

    Raises:
        ShapeMismatch: If h does not match the graph or W.
        NegativeWeight: If any edge weight is negative.
    """
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != graph.n_nodes:
        raise ShapeMismatch(f"h has shape {h.shape}, expected ({graph.n_nodes}, in_dim)")
    if W.shape[0] != h.shape[1]:
        raise ShapeMismatch(f"W rows {W.shape[0]} do not match feature dim {h.shape[1]}")
    if activation not in ("relu", "identity"):
        raise InvalidConfigValue(f"unknown activation {activation!r}")
    out = _aggregate(_aggregation(graph.n_nodes, graph.edges), h) @ W
    return np.maximum(out, 0.0) if activation == "relu" else out


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - np.max(z, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=1, keepdims=True)


def _dropout_mask(shape, p: float, seed: int) -> np.ndarray:
    """Inverted dropout: entries are 0 or 1/(1-p), unbiased in expectation."""
    rng = make_rng(seed)
    return (rng.random(size=shape) >= p) / (1.0 - p)


def _forward_cache(
    X: np.ndarray,
    agg,
    params: dict[str, np.ndarray],
    config: ModelConfig,
    train_mode: bool,
    dropout_mask: np.ndarray | None,
    dropout_seed: int,
    severity_input: np.ndarray | None = None,
) -> dict:
    if X.shape[1] != params["W_embed"].shape[0]:
        raise ShapeMismatch(
            f"feature dim {X.shape[1]} does not match W_embed rows {params['W_embed'].shape[0]}"
        )
    cache: dict = {"X": X, "agg": agg}
    cache["E"] = X @ params["W_embed"] + params["b_embed"]
    cache["A1"] = _aggregate(agg, cache["E"])
    cache["Z1"] = cache["A1"] @ params["W_gcn1"] + params["b_gcn1"]
    cache["H1"] = np.maximum(cache["Z1"], 0.0)
    if train_mode and config.dropout_p > 0.0:
        mask = dropout_mask if dropout_mask is not None else _dropout_mask(
            cache["H1"].shape, config.dropout_p, dropout_seed
        )
    else:
        mask = np.ones_like(cache["H1"])
    cache["mask"] = mask
    cache["D1"] = cache["H1"] * mask
    cache["A2"] = _aggregate(agg, cache["D1"])
    cache["Z2"] = cache["A2"] @ params["W_gcn2"] + params["b_gcn2"]
    cache["H2"] = np.maximum(cache["Z2"], 0.0)

    cache["za"] = cache["H2"] @ params["W_anom"] + params["b_anom"]
    cache["prob"] = expit(cache["za"])
    cache["zt"] = cache["H2"] @ params["W_type"] + params["b_type"]
    cache["type_probs"] = _softmax(cache["zt"])

    if config.ablation != "no_severity":
        sev_in = cache["H2"] if severity_input is None else severity_input
        cache["sev_in"] = sev_in
        cache["zs1"] = sev_in @ params["W_sev1"] + params["b_sev1"]
        cache["S1"] = np.maximum(cache["zs1"], 0.0)
        cache["zs2"] = cache["S1"] @ params["W_sev2"] + params["b_sev2"]
        if config.severity_bins > 0:
            cache["sev_probs"] = _softmax(cache["zs2"])
            centers = (np.arange(config.severity_bins) + 0.5) / config.severity_bins
            cache["sev"] = cache["sev_probs"] @ centers[:, None]
        else:
            cache["sev"] = np.maximum(cache["zs2"], 0.0)
    return cache


def _diagnosis_from_cache(cache: dict, config: ModelConfig) -> Diagnosis:
    prob = cache["prob"][:, 0]
    type_probs = cache["type_probs"]
    mean_type = np.mean(type_probs, axis=0)
    node_sev = cache["sev"][:, 0] if config.ablation != "no_severity" else None
    return Diagnosis(
        node_anomaly=prob,
        node_severity=node_sev,
        node_type=type_probs,
        anomaly_probability=float(np.mean(prob)),
        is_anomalous=bool(np.mean(prob) > 0.5),
        severity_score=float(np.mean(node_sev)) if node_sev is not None else None,
        type_distribution=mean_type,
        predicted_type=TYPE_CLASSES[int(np.argmax(mean_type))],
    )


def forward(
    graph: SignalGraph,
    state: ModelState,
    config: ModelConfig,
    train_mode: bool = False,
    dropout_mask: np.ndarray | None = None,
    dropout_seed: int = 0,
    edges: list[tuple[int, int, float]] | None = None,
) -> tuple[Diagnosis, dict]:
    """Run the network over one graph.

    Args:
        graph: Input graph; its stored edges are used unless ``edges``
            overrides them (the training loop passes reweighted copies).
        train_mode: Enables dropout; draw is deterministic in dropout_seed.
        dropout_mask: Optional precomputed mask (gradient checks freeze it).

    Returns:
        (Diagnosis, cache of intermediate activations for the backward pass).
    """
    agg = _aggregation(graph.n_nodes, edges if edges is not None else graph.edges)
    cache = _forward_cache(
        graph.feature_matrix(), agg, state.params, config, train_mode, dropout_mask, dropout_seed
    )
    return _diagnosis_from_cache(cache, config), cache


def _targets(graph: SignalGraph, config: ModelConfig):
    y_anom = np.array([[float(t.anomaly)] for t in graph.node_targets])
    y_sev = np.array([[t.severity] for t in graph.node_targets])
    mask = np.array([float(t.anomaly) for t in graph.node_targets])
    onehot = np.zeros((graph.n_nodes, config.type_classes))
    for i, t in enumerate(graph.node_targets):
        if t.fault_type is not None:
            onehot[i, TYPE_CLASSES.index(t.fault_type)] = 1.0
    return y_anom, y_sev, mask, onehot


def loss_and_grads(
    graph: SignalGraph,
    state: ModelState,
    config: ModelConfig,
    train_mode: bool = True,
    dropout_mask: np.ndarray | None = None,
    dropout_seed: int = 0,
    edges: list[tuple[int, int, float]] | None = None,
    frozen_severity_input: np.ndarray | None = None,
) -> tuple[float, dict, dict]:
    """Multi-task loss and analytic gradients for one graph.

    The loss is
    ``lambda_anomaly * BCE + lambda_severity * MSE + lambda_type * CE``
    with BCE and MSE averaged over all nodes and CE averaged over the
    anomalous nodes only (a healthy node has no fault class).

    By default the severity branch reads the trunk through a stop-gradient:
    its MSE trains only W_sev1/W_sev2. Finite-difference checks of that
    regime pass ``frozen_severity_input`` (the unperturbed trunk output) so
    the differentiated function matches the analytic one. With
    ``severity_to_trunk=True`` the coupling is live and no freezing is
    needed.

    Returns:
        (total loss, per-component dict, gradient dict keyed like params).
    """
    agg = _aggregation(graph.n_nodes, edges if edges is not None else graph.edges)
    cache = _forward_cache(
        graph.feature_matrix(),
        agg,
        state.params,
        config,
        train_mode,
        dropout_mask,
        dropout_seed,
        severity_input=frozen_severity_input,
    )

    n = graph.n_nodes
    params = state.params
    y_anom, y_sev, type_mask, onehot = _targets(graph, config)
    n_anom = float(np.sum(type_mask))

    # Binary cross-entropy through softplus keeps large logits stable.
    za = cache["za"]
    bce = float(np.mean(np.logaddexp(0.0, za) - y_anom * za))

    if n_anom > 0:
        logp = np.log(np.maximum(cache["type_probs"], 1e-300))
        ce = float(-np.sum(onehot * logp * type_mask[:, None]) / n_anom)
    else:
        ce = 0.0

    components = {"anomaly": bce, "type": ce}
    grads = {name: np.zeros_like(p) for name, p in params.items()}

    dza = config.lambda_anomaly * (cache["prob"] - y_anom) / n
    dzt = config.lambda_type * (cache["type_probs"] - onehot) * type_mask[:, None]
    dzt = dzt / n_anom if n_anom > 0 else np.zeros_like(dzt)

    H2 = cache["H2"]
    grads["W_anom"] = H2.T @ dza
    grads["b_anom"] = dza.sum(axis=0)
    grads["W_type"] = H2.T @ dzt
    grads["b_type"] = dzt.sum(axis=0)
    dH2 = dza @ params["W_anom"].T + dzt @ params["W_type"].T

    if config.ablation != "no_severity":
        if config.severity_bins > 0:
            centers = (np.arange(config.severity_bins) + 0.5) / config.severity_bins
            target_bins = np.clip(
                (y_sev[:, 0] * config.severity_bins).astype(int), 0, config.severity_bins - 1
            )
            sev_onehot = np.zeros((n, config.severity_bins))
            sev_onehot[np.arange(n), target_bins] = 1.0
            logp = np.log(np.maximum(cache["sev_probs"], 1e-300))
            mse = float(-np.sum(sev_onehot * logp) / n)
            dzs2 = config.lambda_severity * (cache["sev_probs"] - sev_onehot) / n
        else:
            diff = cache["sev"] - y_sev
            mse = float(np.mean(diff**2))
            dsev = config.lambda_severity * 2.0 * diff / n
            dzs2 = dsev * (cache["zs2"] > 0)
        components["severity"] = mse
        S1 = cache["S1"]
        grads["W_sev2"] = S1.T @ dzs2
        grads["b_sev2"] = dzs2.sum(axis=0)
        dS1 = dzs2 @ params["W_sev2"].T
        dzs1 = dS1 * (cache["zs1"] > 0)
        sev_in = cache["sev_in"]
        grads["W_sev1"] = sev_in.T @ dzs1
        grads["b_sev1"] = dzs1.sum(axis=0)
        if config.severity_to_trunk:
            dH2 = dH2 + dzs1 @ params["W_sev1"].T
    else:
        components["severity"] = 0.0

    dZ2 = dH2 * (cache["Z2"] > 0)
    grads["W_gcn2"] = cache["A2"].T @ dZ2
    grads["b_gcn2"] = dZ2.sum(axis=0)
    dA2 = dZ2 @ params["W_gcn2"].T
    dD1 = _aggregate(cache["agg"], dA2)  # aggregation matrix is symmetric
    dH1 = dD1 * cache["mask"]
    dZ1 = dH1 * (cache["Z1"] > 0)
    grads["W_gcn1"] = cache["A1"].T @ dZ1
    grads["b_gcn1"] = dZ1.sum(axis=0)
    dA1 = dZ1 @ params["W_gcn1"].T
    dE = _aggregate(cache["agg"], dA1)
    grads["W_embed"] = cache["X"].T @ dE
    grads["b_embed"] = dE.sum(axis=0)

    total = (
        config.lambda_anomaly * bce
        + config.lambda_type * ce
        + config.lambda_severity * components["severity"]
    )
    return total, components, grads


def loss_value(
    graph: SignalGraph,
    state: ModelState,
    config: ModelConfig,
    train_mode: bool = True,
    dropout_mask: np.ndarray | None = None,
    dropout_seed: int = 0,
    edges: list[tuple[int, int, float]] | None = None,
    frozen_severity_input: np.ndarray | None = None,
) -> float:
    """Loss alone; the evaluation target for finite-difference checks."""
    total, _, _ = loss_and_grads(
        graph,
        state,
        config,
        train_mode=train_mode,
        dropout_mask=dropout_mask,
        dropout_seed=dropout_seed,
        edges=edges,
        frozen_severity_input=frozen_severity_input,
    )
    return total


def reweight_edges(
    edges: list[tuple[int, int, float]],
    h1: np.ndarray,
    beta: float,
) -> list[tuple[int, int, float]]:
    """Blend edge weights toward hidden-vector similarity.

    new = (1 - beta) * old + beta * f with f = (1 + cosine(h1_i, h1_j)) / 2,
    clamped into [0, 1]. A node whose hidden vector is (near) zero has no
    usable direction; its pairs fall back to the neutral f = 0.5.

    Raises:
        InvalidConfigValue: If beta lies outside [0, 1].
    """
    if not 0.0 <= beta <= 1.0:
        raise InvalidConfigValue(f"beta must lie in [0, 1], got {beta}")
    norms = np.linalg.norm(h1, axis=1)
    out = []
    for i, j, w in edges:
        if norms[i] <= 1e-12 or norms[j] <= 1e-12:
            f = 0.5
        else:
            c = float(np.clip(np.dot(h1[i], h1[j]) / (norms[i] * norms[j]), -1.0, 1.0))
            f = (1.0 + c) / 2.0
        out.append((i, j, float(np.clip((1.0 - beta) * w + beta * f, 0.0, 1.0))))
    return out


def _gcn1_hidden(graph: SignalGraph, state: ModelState, edges) -> np.ndarray:
    """Eval-mode activations of the first convolution (reweighting input)."""
    agg = _aggregation(graph.n_nodes, edges)
    E = graph.feature_matrix() @ state.params["W_embed"] + state.params["b_embed"]
    Z1 = _aggregate(agg, E) @ state.params["W_gcn1"] + state.params["b_gcn1"]
    return np.maximum(Z1, 0.0)


def _check_feature_dims(dataset: list[SignalGraph], config: ModelConfig) -> int:
    dims = {g.nodes[0].x.shape[0] for g in dataset}
    if len(dims) != 1:
        raise FeatureDimMismatch(f"graphs carry mixed feature dims: {sorted(dims)}")
    if config.ablation == "no_freq_features":
        for g in dataset:
            bad = [n for n in g.feature_names if any(m in n for m in FREQ_NAME_MARKERS)]
            if bad:
                raise FeatureDimMismatch(
                    f"no_freq_features expects time-domain features only, found {bad[:2]}"
                )
    return dims.pop()


def _graph_key(index: int, graph: SignalGraph) -> str:
    return f"{index}:{graph.source}"


def evaluate_anomaly_accuracy(
    dataset: list[SignalGraph], state: ModelState, config: ModelConfig
) -> float:
    """Graph-level anomaly accuracy in eval mode (thresholded mean prob)."""
    if not dataset:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    correct = 0
    for g in dataset:
        diagnosis, _ = forward(g, state, config, train_mode=False)
        truth = bool(g.node_targets[0].anomaly)
        correct += int(diagnosis.is_anomalous == truth)
    return correct / len(dataset)


def effective_learning_rate(config: ModelConfig, epoch: int) -> float:
    """Step size for one epoch under the configured schedule."""
    if config.lr_schedule == "constant" or config.epochs <= 1:
        return config.learning_rate
    progress = epoch / config.epochs
    return config.learning_rate * 0.5 * (1.0 + np.cos(np.pi * progress))


def train(
    dataset: list[SignalGraph],
    config: ModelConfig,
    val_dataset: list[SignalGraph] | None = None,
) -> tuple[ModelState, list[dict]]:
    """Seeded mini-batch SGD over per-recording graphs.

    Per epoch: shuffle, accumulate batch-mean gradients, update, then
    (unless the no_reweight ablation) blend every graph's edge weights
    toward first-layer hidden similarity. Input graphs are not mutated;
    the loop works on copies of their edge lists.

    Returns:
        (final state, per-epoch log of loss and validation accuracy).

    Raises:
        EmptyDataset: If the training split is empty.
        FeatureDimMismatch: If graphs disagree on dimension or carry
            frequency features under the no_freq_features ablation.
    """
    if not dataset:
        raise EmptyDataset("training requires at least one graph")
    dim = _check_feature_dims(dataset, config)
    state = init_state(dim, config)
    edge_lists = [list(g.edges) for g in dataset]

    log: list[dict] = []
    for epoch in range(config.epochs):
        order = make_rng(derive_seed(config.seed, "shuffle", str(epoch))).permutation(len(dataset))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grad_sum = {name: np.zeros_like(p) for name, p in state.params.items()}
            for idx in batch:
                idx = int(idx)
                total, _, grads = loss_and_grads(
                    dataset[idx],
                    state,
                    config,
                    train_mode=True,
                    dropout_seed=derive_seed(config.seed, "dropout", str(epoch), str(idx)),
                    edges=edge_lists[idx],
                )
                epoch_losses.append(total)
                for name in grad_sum:
                    grad_sum[name] += grads[name]
            scale = effective_learning_rate(config, epoch) / len(batch)
            for name in state.params:
                state.params[name] -= scale * grad_sum[name]

        if config.ablation != "no_reweight" and config.beta > 0.0:
            for idx, g in enumerate(dataset):
                h1 = _gcn1_hidden(g, state, edge_lists[idx])
                edge_lists[idx] = reweight_edges(edge_lists[idx], h1, config.beta)

        entry = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses))}
        if val_dataset:
            entry["val_accuracy"] = evaluate_anomaly_accuracy(val_dataset, state, config)
        log.append(entry)

    state.epoch = config.epochs
    state.edge_weights = {
        _graph_key(i, g): [w for _, _, w in edge_lists[i]] for i, g in enumerate(dataset)
    }
    return state, log


def recording_to_graph(
    recording: Recording,
    pipeline: PipelineSettings,
    standardizer: Standardizer | None = None,
) -> SignalGraph:
    """Preprocess -> featurize -> standardize -> graph, for one recording."""
    rec = recording
    if pipeline.filter is not None:
        rec = filter_recording(rec, pipeline.filter)
    windows = extract_windows(rec, pipeline.window, pipeline.include_frequency)
    if standardizer is not None:
        windows = [
            WindowFeatures(x=standardizer.transform(w.x), window_index=w.window_index, source=w.source)
            for w in windows
        ]
    names = feature_names(include_frequency=pipeline.include_frequency)
    return build_graph(windows, rec.label, k=pipeline.neighbors, feature_names=names)


def diagnose(
    recording: Recording,
    state: ModelState,
    config: ModelConfig,
    pipeline: PipelineSettings,
    standardizer: Standardizer | None = None,
) -> Diagnosis:
    """Full inference on one raw recording.

    Runs the training-time pipeline (filter, window, standardize, graph)
    and an eval-mode forward pass. Edge weights are the fresh cosine
    weights; reweighting is a training-time mechanism only.

    Raises:
        RecordingTooShort: If the recording cannot fill one window.
    """
    if recording.n_samples < pipeline.window.window_len:
        raise RecordingTooShort(
            f"recording has {recording.n_samples} samples, below window_len "
            f"{pipeline.window.window_len}"
        )
    graph = recording_to_graph(recording, pipeline, standardizer)
    diagnosis, _ = forward(graph, state, config, train_mode=False)
    return diagnosis


def pipeline_to_json(pipeline: PipelineSettings) -> dict:
    return {
        "window": {"window_len": pipeline.window.window_len, "hop": pipeline.window.hop},
        "filter": None
        if pipeline.filter is None
        else {"cutoff": pipeline.filter.cutoff, "order": pipeline.filter.order},
        "neighbors": pipeline.neighbors,
        "include_frequency": pipeline.include_frequency,
    }


def pipeline_from_json(blob: dict) -> PipelineSettings:
    return PipelineSettings(
        window=WindowSpec(**blob["window"]),
        filter=None if blob["filter"] is None else FilterSpec(**blob["filter"]),
        neighbors=blob["neighbors"],
        include_frequency=blob["include_frequency"],
    )


def save_checkpoint(
    path: str | Path,
    state: ModelState,
    config: ModelConfig,
    pipeline: PipelineSettings | None = None,
    standardizer: Standardizer | None = None,
) -> None:
    """Write a JSON checkpoint that restores bit-identical behavior.

    Tensors are stored as row-major flat lists of 64-bit floats; JSON float
    text round-trips exactly, so a save/load cycle changes nothing.
    """
    blob = {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(config),
        "feature_dim": state.feature_dim,
        "epoch": state.epoch,
        "pipeline": None if pipeline is None else pipeline_to_json(pipeline),
        "standardizer": None if standardizer is None else standardizer.to_json(),
        "params": {
            name: {"shape": list(p.shape), "data": [float(v) for v in p.ravel()]}
            for name, p in state.params.items()
        },
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(blob, fh)
        fh.write("\n")


def load_checkpoint(
    path: str | Path,
) -> tuple[ModelState, ModelConfig, PipelineSettings | None, Standardizer | None]:
    with open(path) as fh:
        blob = json.load(fh)
    if blob.get("format") != CHECKPOINT_FORMAT:
        raise InvalidConfigValue(f"unrecognized checkpoint format {blob.get('format')!r}")
    config = ModelConfig(**blob["config"])
    params = {
        name: np.array(entry["data"], dtype=float).reshape(entry["shape"])
        for name, entry in blob["params"].items()
    }
    state = ModelState(params=params, feature_dim=blob["feature_dim"], epoch=blob["epoch"])
    pipeline = None if blob["pipeline"] is None else pipeline_from_json(blob["pipeline"])
    standardizer = (
        None if blob["standardizer"] is None else Standardizer.from_json(blob["standardizer"])
    )
    return state, config, pipeline, standardizer
