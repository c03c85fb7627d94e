"""Training loop: MSE objective plus the hyperspherical energy penalty.

The protocol is two-phase. Phase one trains with Adam on random fixed-length
crops, augmenting each crop by attenuating the vocals with a uniform factor
and resynthesizing the mixture; after every epoch (a fixed iteration count)
the full validation split is scored and training stops once the validation
loss has not improved for `patience_epochs` epochs. Phase two (fine-tuning)
restarts from the best phase-one parameters with the batch size doubled, a
much smaller learning rate, and a fresh optimizer state, keeping whichever
checkpoint scores best overall.

Everything is driven by one master seed: sampling and augmentation get
independent child streams, and the stream consumption per iteration is
fixed, so runs with different patience settings see identical batches.
"""

import csv
import dataclasses
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .energy import MheConfig, mhe_penalty
from .errors import EmptyDataset, InvalidConfig, LengthMismatch, ShapeMismatch
from .net import NetConfig, SepNet, backward_batch, collect_filter_banks, forward_batch

LAMBDA_MODES = ("half_inv_L", "inv_L", "one", "custom", "off")


@dataclass(frozen=True)
class FinetuneConfig:
    enabled: bool = True
    batch_multiplier: int = 2
    learning_rate: float = 1e-5
    max_epochs: int | None = None


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    iterations_per_epoch: int = 1000
    patience_epochs: int = 10
    max_epochs: int | None = None
    lambda_mode: str = "inv_L"
    lambda_value: float | None = None
    mhe: MheConfig = field(default_factory=MheConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    augment_range: tuple[float, float] = (0.7, 1.0)
    include_output_layer: bool = False
    loss_on_both: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.batch_size < 1:
            raise InvalidConfig(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise InvalidConfig("learning_rate must be positive")
        for name, beta in (("beta1", self.beta1), ("beta2", self.beta2)):
            if not 0.0 <= beta < 1.0:
                raise InvalidConfig(f"{name} must lie in [0, 1), got {beta}")
        if not self.adam_epsilon > 0:
            raise InvalidConfig("adam_epsilon must be positive")
        if self.iterations_per_epoch < 1:
            raise InvalidConfig("iterations_per_epoch must be >= 1")
        if self.patience_epochs < 1:
            raise InvalidConfig("patience_epochs must be >= 1")
        if self.max_epochs is not None and self.max_epochs < 0:
            raise InvalidConfig("max_epochs must be None or >= 0")
        if self.lambda_mode not in LAMBDA_MODES:
            raise InvalidConfig(f"lambda_mode must be one of {LAMBDA_MODES}, got {self.lambda_mode!r}")
        if self.lambda_mode == "custom":
            if self.lambda_value is None or self.lambda_value < 0:
                raise InvalidConfig("custom lambda_mode needs a non-negative lambda_value")
        low, high = self.augment_range
        if not (0.0 < low <= high <= 1.0):
            raise InvalidConfig(f"augment_range must satisfy 0 < low <= high <= 1, got {self.augment_range}")
        if self.finetune.batch_multiplier < 1:
            raise InvalidConfig("finetune.batch_multiplier must be >= 1")
        if not self.finetune.learning_rate > 0:
            raise InvalidConfig("finetune.learning_rate must be positive")
        if self.seed < 0:
            raise InvalidConfig("seed must be non-negative")


def resolve_lambda(cfg: TrainConfig, hidden_layers: int) -> float:
    """Penalty weight for a given hidden-layer count L."""
    if cfg.lambda_mode == "off":
        return 0.0
    if hidden_layers < 1:
        raise InvalidConfig("lambda resolution needs at least one hidden layer")
    if cfg.lambda_mode == "half_inv_L":
        return 1.0 / (2 * hidden_layers)
    if cfg.lambda_mode == "inv_L":
        return 1.0 / hidden_layers
    if cfg.lambda_mode == "one":
        return 1.0
    return float(cfg.lambda_value)


@dataclass
class AdamState:
    first: list[np.ndarray]
    second: list[np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, in place."""
    if len(params) != len(grads) or len(params) != len(state.first):
        raise ShapeMismatch("params, grads and state must have matching lengths")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} does not match parameter {p.shape}")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, state.first, state.second):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def augment(
    vocals: np.ndarray,
    accompaniment: np.ndarray,
    rng: np.random.Generator,
    low: float = 0.7,
    high: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Attenuate the vocals by u ~ Uniform[low, high] and remix.

    Returns (attenuated vocals, rebuilt mixture); the target and the input
    stay consistent because the mixture is recomputed from the new vocals.
    """
    vocals = np.asarray(vocals, dtype=np.float64)
    accompaniment = np.asarray(accompaniment, dtype=np.float64)
    if vocals.shape != accompaniment.shape:
        raise LengthMismatch(
            f"vocals shape {vocals.shape} does not match accompaniment {accompaniment.shape}"
        )
    u = rng.uniform(low, high)
    attenuated = u * vocals
    return attenuated, accompaniment + attenuated


def compute_loss(
    net: SepNet, batch: tuple[np.ndarray, np.ndarray], cfg: TrainConfig
) -> tuple[float, float, float, list[np.ndarray]]:
    """Loss, its MSE and penalty parts, and gradients for one batch.

    batch is (mixtures, target_vocals), both (B, input_len). Gradients are
    interleaved [d_weights, d_bias, ...] in net.parameters() order, with
    the energy gradients already added into the conv weight slots.
    """
    mixtures, targets = batch
    mixtures = np.asarray(mixtures, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if mixtures.shape != targets.shape:
        raise ShapeMismatch(f"mixtures {mixtures.shape} vs targets {targets.shape}")
    if mixtures.ndim != 2 or mixtures.shape[0] < 1:
        raise ShapeMismatch(f"batch must be non-empty (B, T), got {mixtures.shape}")
    vocals, cache = forward_batch(net, mixtures)
    err = vocals - targets
    mse = float(np.mean(err * err))
    if cfg.loss_on_both:
        # The accompaniment error is the negated vocal error (both sources
        # share the mixture), so averaging the two terms changes neither
        # the value nor the gradient; computed literally anyway.
        acc_err = (mixtures - vocals) - (mixtures - targets)
        mse = 0.5 * (mse + float(np.mean(acc_err * acc_err)))
    d_vocals = (2.0 / err.size) * err
    grads = backward_batch(net, cache, d_vocals)
    banks = collect_filter_banks(net, include_output=cfg.include_output_layer)
    lam = resolve_lambda(cfg, len(banks))
    if lam == 0.0:
        return mse, mse, 0.0, grads
    penalty, bank_grads = mhe_penalty(banks, cfg.mhe, lam)
    for bank, g in zip(banks, bank_grads):
        grads[2 * bank.layer_id] += g.reshape(net.layers[bank.layer_id].weights.shape)
    return mse + penalty, mse, penalty, grads


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    mhe_penalty: float
    val_loss: float
    lambda_h: float
    seconds: float
    val_mse: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)

    def __post_init__(self):
        epochs = [r.epoch for r in self.records]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise InvalidConfig("log epochs must be strictly increasing")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "mse", "mhe_penalty", "val_loss", "lambda", "seconds", "val_mse"])
            for r in self.records:
                writer.writerow(
                    [r.epoch, repr(r.train_mse), repr(r.mhe_penalty), repr(r.val_loss),
                     repr(r.lambda_h), repr(r.seconds), repr(r.val_mse)]
                )


@dataclass
class TrainResult:
    net: SepNet
    log: TrainLog
    best_epoch: int
    best_val_loss: float


class EarlyStopper:
    """Tracks the best validation loss; stops after `patience` flat epochs.

    Improvement is strict. With the best at epoch b, training stops once
    epoch - b >= patience, so a run whose loss last improved at epoch 5
    with patience 10 trains through epoch 15 and then halts.
    """

    def __init__(self, patience: int, best_loss: float = np.inf, best_epoch: int = 0):
        self.patience = patience
        self.best_loss = best_loss
        self.best_epoch = best_epoch

    def observe(self, epoch: int, loss: float) -> bool:
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = epoch
            return True
        return False

    def should_stop(self, epoch: int) -> bool:
        return epoch - self.best_epoch >= self.patience


def _eligible(songs, window: int):
    return [s for s in songs if s.mixture.size >= window]


def _sample_batch(songs, cfg: TrainConfig, window: int, rng_sample, rng_aug):
    """One training batch of augmented random crops.

    Per item the stream use is fixed (two integer draws and one uniform),
    so batch sequences are reproducible independent of song lengths.
    """
    low, high = cfg.augment_range
    mixtures = np.empty((cfg.batch_size, window))
    targets = np.empty((cfg.batch_size, window))
    for i in range(cfg.batch_size):
        song = songs[int(rng_sample.integers(len(songs)))]
        offset = int(rng_sample.integers(song.mixture.size - window + 1))
        voc = song.vocals[offset : offset + window]
        acc = song.accompaniment[offset : offset + window]
        targets[i], mixtures[i] = augment(voc, acc, rng_aug, low, high)
    return mixtures, targets


def validation_mse(net: SepNet, songs, batch_size: int) -> float:
    """Mean squared vocal error over consecutive windows of every song."""
    window = net.config.input_len
    total_sq = 0.0
    total_n = 0
    for song in songs:
        n_win = song.mixture.size // window
        usable = n_win * window
        mix = song.mixture[:usable].reshape(n_win, window)
        voc = song.vocals[:usable].reshape(n_win, window)
        for start in range(0, n_win, batch_size):
            est, _ = forward_batch(net, mix[start : start + batch_size])
            diff = est - voc[start : start + batch_size]
            total_sq += float(np.sum(diff * diff))
            total_n += diff.size
    if total_n == 0:
        raise EmptyDataset("validation songs are all shorter than one window")
    return total_sq / total_n


def _current_penalty(net: SepNet, cfg: TrainConfig, lam: float) -> float:
    if lam == 0.0:
        return 0.0
    banks = collect_filter_banks(net, include_output=cfg.include_output_layer)
    return mhe_penalty(banks, cfg.mhe, lam)[0]


def _run_training(
    net: SepNet,
    dataset,
    cfg: TrainConfig,
    seed_seq: np.random.SeedSequence,
    baseline: tuple[float, int] | None = None,
) -> TrainResult:
    cfg.validate()
    window = net.config.input_len
    train_songs = _eligible(dataset.train, window)
    val_songs = _eligible(dataset.validation, window)
    if not train_songs:
        raise EmptyDataset(f"no training song reaches the {window}-sample window")
    if not val_songs:
        raise EmptyDataset(f"no validation song reaches the {window}-sample window")

    child = seed_seq.spawn(2)
    rng_sample = np.random.default_rng(child[0])
    rng_aug = np.random.default_rng(child[1])

    params = net.parameters()
    state = AdamState.for_params(params)
    lam = resolve_lambda(cfg, len(collect_filter_banks(net, include_output=cfg.include_output_layer)))

    if baseline is None:
        stopper = EarlyStopper(cfg.patience_epochs)
    else:
        stopper = EarlyStopper(cfg.patience_epochs, best_loss=baseline[0], best_epoch=baseline[1])
    best_net = net.clone()

    records: list[EpochRecord] = []
    epoch = 0
    while cfg.max_epochs is None or epoch < cfg.max_epochs:
        epoch += 1
        started = time.perf_counter()
        mse_sum = 0.0
        for _ in range(cfg.iterations_per_epoch):
            batch = _sample_batch(train_songs, cfg, window, rng_sample, rng_aug)
            _, mse, _, grads = compute_loss(net, batch, cfg)
            adam_step(params, grads, state, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon)
            mse_sum += mse
        penalty_now = _current_penalty(net, cfg, lam)
        val = validation_mse(net, val_songs, cfg.batch_size)
        val_loss = val + penalty_now
        records.append(
            EpochRecord(
                epoch,
                mse_sum / cfg.iterations_per_epoch,
                penalty_now,
                val_loss,
                lam,
                time.perf_counter() - started,
                val,
            )
        )
        if stopper.observe(epoch, val_loss):
            best_net = net.clone()
        if stopper.should_stop(epoch):
            break
    best_loss = stopper.best_loss if np.isfinite(stopper.best_loss) else float("inf")
    return TrainResult(best_net, TrainLog(records), stopper.best_epoch, best_loss)


def train(net: SepNet, dataset, cfg: TrainConfig) -> TrainResult:
    """Phase one: train from the given parameters until patience runs out.

    `dataset` must expose .train and .validation lists of songs (objects
    with .mixture, .vocals, .accompaniment arrays). The returned result
    carries the best-validation checkpoint; `net` itself is left at its
    final (not necessarily best) state.
    """
    return _run_training(net, dataset, cfg, np.random.SeedSequence(cfg.seed))


def derive_finetune_config(cfg: TrainConfig) -> TrainConfig:
    """Phase-two config: batch doubled (by multiplier), small learning rate."""
    return replace(
        cfg,
        batch_size=cfg.batch_size * cfg.finetune.batch_multiplier,
        learning_rate=cfg.finetune.learning_rate,
        max_epochs=cfg.finetune.max_epochs,
    )


def finetune(best: SepNet, dataset, cfg: TrainConfig) -> TrainResult:
    """Phase two: continue from a trained checkpoint with fresh Adam state.

    The incoming checkpoint's validation loss is scored first and acts as
    the early-stopping baseline, so the result is never worse than its
    input; with max_epochs=0 in finetune config the input comes back
    unchanged.
    """
    ft_cfg = derive_finetune_config(cfg)
    ft_cfg.validate()
    window = best.config.input_len
    val_songs = _eligible(dataset.validation, window)
    if not val_songs:
        raise EmptyDataset(f"no validation song reaches the {window}-sample window")
    lam = resolve_lambda(ft_cfg, len(collect_filter_banks(best, include_output=ft_cfg.include_output_layer)))
    baseline_loss = validation_mse(best, val_songs, ft_cfg.batch_size) + _current_penalty(best, ft_cfg, lam)
    working = best.clone()
    result = _run_training(
        working,
        dataset,
        ft_cfg,
        np.random.SeedSequence([cfg.seed, 1]),
        baseline=(baseline_loss, 0),
    )
    if result.best_epoch == 0:
        return TrainResult(best.clone(), result.log, 0, baseline_loss)
    return result


def _from_mapping(cls, data: dict, context: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise InvalidConfig(f"unknown {context} keys: {', '.join(unknown)}")
    return cls(**data)


def train_config_from_dict(data: dict) -> TrainConfig:
    """Build a TrainConfig from parsed JSON, rejecting misspelled keys."""
    data = dict(data)
    if "mhe" in data and isinstance(data["mhe"], dict):
        data["mhe"] = _from_mapping(MheConfig, data["mhe"], "mhe")
    if "finetune" in data and isinstance(data["finetune"], dict):
        data["finetune"] = _from_mapping(FinetuneConfig, data["finetune"], "finetune")
    if "augment_range" in data:
        data["augment_range"] = tuple(data["augment_range"])
    cfg = _from_mapping(TrainConfig, data, "train config")
    cfg.validate()
    return cfg


def net_config_from_dict(data: dict) -> NetConfig:
    cfg = _from_mapping(NetConfig, dict(data), "net config")
    cfg.validate()
    return cfg


def mhe_config_from_dict(data: dict) -> MheConfig:
    return _from_mapping(MheConfig, dict(data), "mhe config")
