"""Parameter initialization, optimization, the epoch loop, and checkpoints.

Training is deterministic: the seed fixes initialization, epoch shuffling and
therefore the whole trajectory. Gradient accumulation is sequential within a
batch so repeated runs are bit-identical.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .attention import LevelParams
from .classifier import (
    GlobalHeadParams,
    forward_document,
    global_loss,
    local_loss,
    total_loss,
)
from .corpus import (
    PAD,
    EmbeddingTable,
    Vocabulary,
    encode_document,
    level_targets,
)
from .errors import (
    ConfigError,
    EmptyDataset,
    FingerprintError,
    NonFiniteError,
    NonFiniteLoss,
    ParseError,
    ShapeMismatch,
    VersionError,
)
from .hierarchy import LabelHierarchy
from .metrics import au_prc, collect_scores, pr_curve
from .tensor import GradientTape, Matrix

CHECKPOINT_VERSION = 1
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    seed: int = 0
    learning_rate: float = 1e-3
    optimizer: str = "adam"              # "adam" or "sgd"
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    max_len: int = 256                   # tokens kept per document
    embed_dim: int = 100                 # word/label embedding width
    component_dim: int | None = None     # defaults to embed_dim
    components: int | list[int] = 64     # per level, int applies to all
    hidden_dim: int | None = None        # global head hidden width, defaults to embed_dim
    alpha: float = 0.5                   # local weight in the blended prediction
    variant: str = "full"                # full | nc | local_only | global_only
    freeze_embeddings: bool = False
    relevance_activation: str = "tanh"   # word/label projection: tanh | linear
    leaky_slope: float = 0.01
    clip_norm: float = 5.0
    min_count: int = 1
    target_metric: float | None = None   # stop once validation AU(PRC) reaches this

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        positive = {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "max_len": self.max_len,
            "embed_dim": self.embed_dim,
            "min_count": self.min_count,
            "clip_norm": self.clip_norm,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.patience < 0:
            raise ConfigError(f"patience must be >= 0, got {self.patience}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.variant not in ("full", "nc", "local_only", "global_only"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.relevance_activation not in ("tanh", "linear"):
            raise ConfigError(
                f"unknown relevance_activation {self.relevance_activation!r}"
            )
        if not 0.0 < self.leaky_slope < 1.0:
            raise ConfigError(f"leaky_slope must be in (0, 1), got {self.leaky_slope}")
        if self.target_metric is not None and not 0.0 < self.target_metric <= 1.0:
            raise ConfigError(f"target_metric must be in (0, 1], got {self.target_metric}")
        if isinstance(self.components, list):
            if any(int(m) < 1 for m in self.components):
                raise ConfigError("components must all be >= 1")
        elif int(self.components) < 1:
            raise ConfigError("components must be >= 1")

    def components_per_level(self, depth: int) -> list[int]:
        if isinstance(self.components, list):
            if len(self.components) != depth:
                raise ConfigError(
                    f"components list has {len(self.components)} entries for depth {depth}"
                )
            return [int(m) for m in self.components]
        return [int(self.components)] * depth

    @property
    def comp_dim(self) -> int:
        return self.embed_dim if self.component_dim is None else self.component_dim

    @property
    def hid_dim(self) -> int:
        return self.embed_dim if self.hidden_dim is None else self.hidden_dim


@dataclass
class ModelParams:
    """All trainable tensors plus enough context to run them.

    Every tensor is registered exactly once on ``tape``; the vocabulary and
    hierarchy fingerprint travel with the parameters so checkpoints are
    self-contained.
    """

    tape: GradientTape
    embedding: Matrix
    levels: list[LevelParams]
    global_head: GlobalHeadParams
    config: TrainConfig
    vocab: Vocabulary
    hierarchy_fingerprint: str
    level_sizes: list[int] = field(default_factory=list)

    def named_tensors(self) -> dict[str, Matrix]:
        return self.tape.parameters

    def trainable_names(self) -> list[str]:
        names = list(self.tape.parameters)
        if self.config.freeze_embeddings:
            names.remove("embedding")
        return names

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: m.data.copy() for name, m in self.tape.parameters.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, m in self.tape.parameters.items():
            m.data[...] = state[name]


def _glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def init_params(
    cfg: TrainConfig,
    hier: LabelHierarchy,
    vocab: Vocabulary,
    embeddings: EmbeddingTable,
) -> ModelParams:
    """Deterministically initialize all trainable tensors from cfg.seed.

    Component and label embeddings start uniform in [-0.1, 0.1]; weight
    matrices use a scaled-uniform fan-in/fan-out scheme; biases start at zero.

    Raises ConfigError when the embedding table width disagrees with cfg.
    """
    if embeddings.dim != cfg.embed_dim:
        raise ConfigError(
            f"embedding table is {embeddings.dim}-dimensional, config says {cfg.embed_dim}"
        )
    if embeddings.size != vocab.size:
        raise ConfigError(
            f"embedding table has {embeddings.size} rows for a vocabulary of {vocab.size}"
        )
    d, dc, dh = cfg.embed_dim, cfg.comp_dim, cfg.hid_dim
    comps = cfg.components_per_level(hier.depth)
    rng = np.random.default_rng(cfg.seed)
    tape = GradientTape()
    embedding = tape.parameter("embedding", embeddings.vectors)

    levels: list[LevelParams] = []
    for h in range(1, hier.depth + 1):
        q = len(hier.labels_at_level(h))
        m = comps[h - 1]
        prefix = f"level{h}"
        levels.append(LevelParams(
            components=tape.parameter(f"{prefix}.components", rng.uniform(-0.1, 0.1, (m, dc))),
            label_emb=tape.parameter(f"{prefix}.label_emb", rng.uniform(-0.1, 0.1, (q, d))),
            fw_W=tape.parameter(f"{prefix}.fw_W", _glorot(rng, 2 * d, dc)),
            fw_b=tape.parameter(f"{prefix}.fw_b", np.zeros((1, dc))),
            fl_W=tape.parameter(f"{prefix}.fl_W", _glorot(rng, d, dc)),
            fl_b=tape.parameter(f"{prefix}.fl_b", np.zeros((1, dc))),
            fm_W=tape.parameter(f"{prefix}.fm_W", _glorot(rng, d, d)),
            fm_b=tape.parameter(f"{prefix}.fm_b", np.zeros((1, d))),
            W=tape.parameter(f"{prefix}.W", _glorot(rng, d, d)),
            b=tape.parameter(f"{prefix}.b", np.zeros((1, d))),
        ))

    total_labels = hier.num_labels
    global_head = GlobalHeadParams(
        W1=tape.parameter("global.W1", _glorot(rng, hier.depth * d, dh)),
        b1=tape.parameter("global.b1", np.zeros((1, dh))),
        W2=tape.parameter("global.W2", _glorot(rng, dh, total_labels)),
        b2=tape.parameter("global.b2", np.zeros((1, total_labels))),
    )
    return ModelParams(
        tape=tape,
        embedding=embedding,
        levels=levels,
        global_head=global_head,
        config=cfg,
        vocab=vocab,
        hierarchy_fingerprint=hier.fingerprint(),
        level_sizes=list(hier.level_sizes()),
    )


# -- optimizer ----------------------------------------------------------------

def make_optimizer_state(cfg: TrainConfig, params: ModelParams) -> dict:
    state: dict = {"kind": cfg.optimizer, "t": 0}
    if cfg.optimizer == "adam":
        state["m"] = {n: np.zeros(params.tape.parameters[n].shape)
                      for n in params.trainable_names()}
        state["v"] = {n: np.zeros(params.tape.parameters[n].shape)
                      for n in params.trainable_names()}
    return state


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place when their global norm exceeds max_norm."""
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm > 0:
        factor = max_norm / total
        for name in grads:
            grads[name] = grads[name] * factor
    return total


def optimizer_step(
    params: ModelParams,
    grads: dict[str, np.ndarray],
    state: dict,
    cfg: TrainConfig,
) -> dict:
    """Apply one update in place; the PAD embedding row is never touched."""
    lr = cfg.learning_rate
    state["t"] += 1
    t = state["t"]
    for name in params.trainable_names():
        tensor = params.tape.parameters[name]
        g = grads[name]
        if g.shape != tensor.shape:
            raise ShapeMismatch(f"gradient {g.shape} for parameter {name} {tensor.shape}")
        if name == "embedding":
            g = g.copy()
            g[PAD, :] = 0.0
        if state["kind"] == "sgd":
            tensor.data -= lr * g
        else:
            m = state["m"][name] = ADAM_BETA1 * state["m"][name] + (1 - ADAM_BETA1) * g
            v = state["v"][name] = ADAM_BETA2 * state["v"][name] + (1 - ADAM_BETA2) * g * g
            m_hat = m / (1 - ADAM_BETA1 ** t)
            v_hat = v / (1 - ADAM_BETA2 ** t)
            tensor.data -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        if name == "embedding":
            tensor.data[PAD, :] = 0.0
    return state


# -- loss over a batch ----------------------------------------------------------

def batch_loss(params: ModelParams, docs, hier: LabelHierarchy) -> Matrix:
    """Mean per-document loss for ``docs`` under the configured variant."""
    cfg = params.config
    p_levels_batch, z_levels_batch = [], []
    p_g_batch, z_all_batch = [], []
    for doc in docs:
        ids, mask = encode_document(doc, params.vocab, cfg.max_len)
        scores, _ = forward_document(ids, mask, params)
        z_levels = level_targets(doc, hier)
        p_levels_batch.append(scores.local)
        z_levels_batch.append(z_levels)
        p_g_batch.append(scores.global_scores)
        z_all_batch.append(np.concatenate(z_levels))
    if cfg.variant == "global_only":
        return global_loss(p_g_batch, z_all_batch)
    local = local_loss(p_levels_batch, z_levels_batch)
    if cfg.variant == "local_only":
        return local
    return total_loss(local, global_loss(p_g_batch, z_all_batch))


def validation_auprc(params: ModelParams, docs, hier: LabelHierarchy) -> float:
    blended, _, _ = collect_scores(params, docs, hier)
    return au_prc(pr_curve(blended))


def train(
    cfg: TrainConfig,
    train_docs,
    valid_docs,
    hier: LabelHierarchy,
    vocab: Vocabulary,
    embeddings: EmbeddingTable,
) -> tuple[ModelParams, list[dict]]:
    """Fit the model; returns the best-validation parameters and the history.

    Each epoch shuffles with the seeded generator, walks mini-batches,
    backpropagates the configured loss and steps the optimizer. Validation
    AU(PRC) decides the best snapshot; training stops after ``patience``
    consecutive epochs without improvement or at ``max_epochs``.

    Raises EmptyDataset for an empty training split and NonFiniteLoss if the
    loss leaves the reals.
    """
    train_docs = list(train_docs)
    valid_docs = list(valid_docs)
    if not train_docs:
        raise EmptyDataset("training split is empty")
    if not valid_docs:
        raise EmptyDataset("validation split is empty")

    params = init_params(cfg, hier, vocab, embeddings)
    state = make_optimizer_state(cfg, params)
    rng = np.random.default_rng(cfg.seed)
    history: list[dict] = []
    best_metric = -np.inf
    best_state = params.snapshot()
    stale = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_docs))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_docs[i] for i in order[start:start + cfg.batch_size]]
            params.tape.reset()
            try:
                loss = batch_loss(params, batch, hier)
            except NonFiniteError as exc:
                raise NonFiniteLoss(
                    f"non-finite values at epoch {epoch}, batch at doc {start}: {exc}"
                ) from exc
            value = loss.item()
            grads = params.tape.backward(loss)
            clip_gradients(grads, cfg.clip_norm)
            optimizer_step(params, grads, state, cfg)
            epoch_loss += value * len(batch)
        params.tape.reset()

        metric = validation_auprc(params, valid_docs, hier)
        improved = metric > best_metric
        if improved:
            best_metric = metric
            best_state = params.snapshot()
            stale = 0
        else:
            stale += 1
        history.append({
            "epoch": epoch,
            "train_loss": epoch_loss / len(train_docs),
            "valid_auprc": metric,
            "best": bool(improved),
        })
        if cfg.target_metric is not None and metric >= cfg.target_metric:
            break
        if stale >= cfg.patience:
            break

    params.load_state(best_state)
    params.tape.reset()
    return params, history


# -- persistence ---------------------------------------------------------------

def save_checkpoint(params: ModelParams, path) -> None:
    """Write a JSON checkpoint; float values round-trip exactly."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(params.config),
        "hierarchy_fingerprint": params.hierarchy_fingerprint,
        "level_sizes": params.level_sizes,
        "vocabulary": params.vocab.tokens_in_order(),
        "tensors": {
            name: {"shape": list(m.shape), "values": m.data.reshape(-1).tolist()}
            for name, m in params.tape.parameters.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path, hier: LabelHierarchy | None = None) -> ModelParams:
    """Rebuild ModelParams from a checkpoint written by :func:`save_checkpoint`.

    When ``hier`` is given its fingerprint must match the one embedded in the
    file; a mismatch raises FingerprintError.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid checkpoint ({exc.msg})") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ParseError(f"{path}: not a checkpoint file")
    if doc["format_version"] != CHECKPOINT_VERSION:
        raise VersionError(f"unknown checkpoint format version {doc['format_version']!r}")
    if hier is not None and doc["hierarchy_fingerprint"] != hier.fingerprint():
        raise FingerprintError(
            "checkpoint was trained against a different hierarchy"
        )
    cfg_dict = dict(doc["config"])
    try:
        cfg = TrainConfig(**cfg_dict)
    except TypeError as exc:
        raise ParseError(f"{path}: bad config section ({exc})") from None
    vocab = Vocabulary(index={tok: i for i, tok in enumerate(doc["vocabulary"])})
    tensors = doc["tensors"]

    def arr(name: str) -> np.ndarray:
        entry = tensors[name]
        rows, cols = entry["shape"]
        values = np.array(entry["values"], dtype=np.float64)
        if values.size != rows * cols:
            raise ParseError(f"{path}: tensor {name} has {values.size} values for shape {entry['shape']}")
        return values.reshape(rows, cols)

    tape = GradientTape()
    embedding = tape.parameter("embedding", arr("embedding"))
    level_sizes = [int(s) for s in doc["level_sizes"]]
    levels = []
    for h in range(1, len(level_sizes) + 1):
        prefix = f"level{h}"
        levels.append(LevelParams(
            components=tape.parameter(f"{prefix}.components", arr(f"{prefix}.components")),
            label_emb=tape.parameter(f"{prefix}.label_emb", arr(f"{prefix}.label_emb")),
            fw_W=tape.parameter(f"{prefix}.fw_W", arr(f"{prefix}.fw_W")),
            fw_b=tape.parameter(f"{prefix}.fw_b", arr(f"{prefix}.fw_b")),
            fl_W=tape.parameter(f"{prefix}.fl_W", arr(f"{prefix}.fl_W")),
            fl_b=tape.parameter(f"{prefix}.fl_b", arr(f"{prefix}.fl_b")),
            fm_W=tape.parameter(f"{prefix}.fm_W", arr(f"{prefix}.fm_W")),
            fm_b=tape.parameter(f"{prefix}.fm_b", arr(f"{prefix}.fm_b")),
            W=tape.parameter(f"{prefix}.W", arr(f"{prefix}.W")),
            b=tape.parameter(f"{prefix}.b", arr(f"{prefix}.b")),
        ))
    global_head = GlobalHeadParams(
        W1=tape.parameter("global.W1", arr("global.W1")),
        b1=tape.parameter("global.b1", arr("global.b1")),
        W2=tape.parameter("global.W2", arr("global.W2")),
        b2=tape.parameter("global.b2", arr("global.b2")),
    )
    return ModelParams(
        tape=tape,
        embedding=embedding,
        levels=levels,
        global_head=global_head,
        config=cfg,
        vocab=vocab,
        hierarchy_fingerprint=doc["hierarchy_fingerprint"],
        level_sizes=level_sizes,
    )
