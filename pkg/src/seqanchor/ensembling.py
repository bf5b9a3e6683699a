"""Training anchored members and assembling AE / SAE ensembles under an epoch budget."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .anchor_chain import ChainConfig, initial_anchor, mh_update, sample_prior
from .errors import ConfigError, DataFormatError, DimensionError, NumericalError
from .nn_core import Dataset, MlpArchitecture, check_data
from .objectives import GaussianPrior, anchored_loss, anchored_loss_and_grad
from .seeding import anchor_streams, substream

log = logging.getLogger(__name__)

OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class TrainConfig:
    """Per-member optimisation settings. ``batch_size=None`` means full batch."""

    epochs: int
    batch_size: int | None = None
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    adam_betas: tuple[float, float] = (0.9, 0.999)
    seed: int = 0
    carry_optimizer_state: bool = False

    def __post_init__(self):
        if int(self.epochs) < 1:
            raise ConfigError(f"epochs must be a positive integer, got {self.epochs}")
        if self.batch_size is not None and int(self.batch_size) < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        b1, b2 = self.adam_betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ConfigError(f"adam_betas must lie in [0, 1), got {self.adam_betas}")
        object.__setattr__(self, "adam_betas", (float(b1), float(b2)))

    def to_dict(self) -> dict:
        return {
            "epochs": int(self.epochs),
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "optimizer": self.optimizer,
            "adam_betas": list(self.adam_betas),
            "seed": int(self.seed),
            "carry_optimizer_state": self.carry_optimizer_state,
        }


class Sgd:
    def __init__(self, lr):
        self.lr = lr

    def step(self, theta, grad):
        return theta - self.lr * grad


class Adam:
    def __init__(self, lr, betas=(0.9, 0.999), eps=1e-8, size=0):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta, grad):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        m_hat = self.m / (1 - self.b1 ** self.t)
        v_hat = self.v / (1 - self.b2 ** self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(cfg: TrainConfig, size: int, previous=None):
    """Fresh optimizer, or ``previous`` retargeted to ``cfg``'s learning rate."""
    if previous is not None and cfg.carry_optimizer_state and type(previous).__name__.lower() == cfg.optimizer:
        previous.lr = cfg.learning_rate
        return previous
    if cfg.optimizer == "sgd":
        return Sgd(cfg.learning_rate)
    return Adam(cfg.learning_rate, cfg.adam_betas, size=size)


def init_params(arch: MlpArchitecture, rng: np.random.Generator) -> np.ndarray:
    """Fresh network: weights ~ N(0, 1/fan_in), biases zero."""
    theta = np.zeros(arch.parameter_count)
    for (fan_in, _), (ws, _) in zip(arch.layer_shapes, arch.layer_slices()):
        theta[ws] = rng.standard_normal(ws.stop - ws.start) / np.sqrt(fan_in)
    return theta


@dataclass
class TrainOutcome:
    theta: np.ndarray
    loss_trace: list[float]
    final_loss: float
    optimizer: object


def _batches(n, batch_size, rng):
    if batch_size is None or batch_size >= n:
        return [None]
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def run_training(
    arch: MlpArchitecture,
    prior: GaussianPrior,
    anchor,
    theta_init,
    data: Dataset | None,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
    optimizer=None,
) -> TrainOutcome:
    """Minimise the anchored loss from ``theta_init`` for ``cfg.epochs`` epochs.

    The trace holds the full-dataset anchored loss at the start of every
    epoch, so a new training shows up as a peak at its first entry.
    Minibatch likelihood terms are rescaled by n / len(batch).
    """
    theta = prior.check(np.array(theta_init, dtype=np.float64))
    anchor = prior.check(anchor)
    if data is not None:
        check_data(arch, data)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    opt = make_optimizer(cfg, theta.size, optimizer)
    n = len(data) if data is not None else 0
    trace = []
    # overflow surfaces through the explicit finiteness checks
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(int(cfg.epochs)):
            loss = _checked_loss(arch, prior, anchor, theta, data, epoch)
            trace.append(loss)
            for idx in _batches(n, cfg.batch_size, rng) if data is not None else [None]:
                if idx is None:
                    batch, scale = data, 1.0
                else:
                    batch, scale = data.subset(idx), n / len(idx)
                try:
                    _, grad = anchored_loss_and_grad(arch, prior, anchor, theta, batch, scale)
                except NumericalError as exc:
                    raise NumericalError(f"epoch {epoch}: {exc}") from exc
                theta = opt.step(theta, grad)
        final = _checked_loss(arch, prior, anchor, theta, data, int(cfg.epochs))
    return TrainOutcome(theta, trace, final, opt)


def _checked_loss(arch, prior, anchor, theta, data, epoch):
    try:
        loss = anchored_loss(arch, prior, anchor, theta, data)
    except NumericalError as exc:
        raise NumericalError(f"epoch {epoch}: {exc}") from exc
    if not np.isfinite(loss):
        raise NumericalError(f"epoch {epoch}: anchored loss became non-finite (learning rate too high?)")
    return loss


def train(arch, prior, anchor, theta_init, data, cfg: TrainConfig, rng=None):
    """Returns ``(theta_star, loss_trace)``; see :func:`run_training`."""
    out = run_training(arch, prior, anchor, theta_init, data, cfg, rng)
    return out.theta, out.loss_trace


@dataclass(frozen=True)
class BudgetPlan:
    total_epochs: int
    chains: int
    initial_epochs: int
    sequential_epochs: int
    members_per_chain_after_first: int
    total_members: int

    @property
    def used_epochs(self) -> int:
        return self.chains * (self.initial_epochs + self.members_per_chain_after_first * self.sequential_epochs)

    def to_dict(self) -> dict:
        return {
            "total_epochs": self.total_epochs,
            "chains": self.chains,
            "initial_epochs": self.initial_epochs,
            "sequential_epochs": self.sequential_epochs,
            "members_per_chain_after_first": self.members_per_chain_after_first,
            "total_members": self.total_members,
        }


def allocate_budget(total_epochs: int, chains: int, initial_epochs: int, sequential_epochs: int) -> BudgetPlan:
    """Split ``total_epochs`` into ``chains`` x (one long + m short) trainings.

    m = floor((B / C - E0) / Es), computed in integers.
    """
    B, C, E0, Es = (int(v) for v in (total_epochs, chains, initial_epochs, sequential_epochs))
    if min(B, C, E0, Es) < 1:
        raise ConfigError(f"budget, chains and epoch counts must be positive: B={B} C={C} E0={E0} Es={Es}")
    if C * E0 > B:
        raise ConfigError(f"budget of {B} epochs cannot fit {C} initial trainings of {E0} epochs")
    m = (B - C * E0) // (C * Es)
    return BudgetPlan(B, C, E0, Es, m, C * (1 + m))


def ae_member_count(total_epochs: int, member_epochs: int) -> int:
    B, E = int(total_epochs), int(member_epochs)
    if E < 1 or B < E:
        raise ConfigError(f"budget of {B} epochs cannot fit one member of {E} epochs")
    return B // E


@dataclass
class MemberRecord:
    chain: int
    index: int
    anchor: np.ndarray
    epochs: int
    final_loss: float
    loss_trace: list[float] = field(default_factory=list)
    warm_start: bool = False
    optimizer_state_carried: bool = False

    def summary(self) -> dict:
        return {
            "chain": self.chain,
            "index": self.index,
            "epochs": self.epochs,
            "final_loss": self.final_loss,
            "warm_start": self.warm_start,
            "optimizer_state_carried": self.optimizer_state_carried,
        }


@dataclass
class Ensemble:
    arch: MlpArchitecture
    prior: GaussianPrior
    members: list[np.ndarray]
    provenance: list[MemberRecord]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.members) != len(self.provenance):
            raise DimensionError(f"{len(self.members)} members but {len(self.provenance)} provenance records")
        for m in self.members:
            if np.asarray(m).shape != (self.arch.parameter_count,):
                raise DimensionError(f"member of shape {np.shape(m)} does not fit {self.arch.parameter_count} parameters")

    def __len__(self):
        return len(self.members)

    @property
    def total_epochs(self) -> int:
        return sum(r.epochs for r in self.provenance)

    def member_matrix(self) -> np.ndarray:
        return np.stack(self.members) if self.members else np.empty((0, self.arch.parameter_count))


def train_anchored_ensemble(
    arch: MlpArchitecture,
    prior: GaussianPrior,
    data: Dataset,
    n_members: int,
    cfg: TrainConfig,
    seed: int = 0,
) -> Ensemble:
    """Independent members, each on its own prior-drawn anchor from a fresh init."""
    if int(n_members) < 1:
        raise ConfigError("an anchored ensemble needs at least one member")
    members, records = [], []
    for i in range(int(n_members)):
        anchor = sample_prior(prior, anchor_streams(seed, i, prior.size))
        theta0 = init_params(arch, substream(seed, "init", i))
        try:
            out = run_training(arch, prior, anchor, theta0, data, cfg, substream(seed, "batches", i, 0))
        except NumericalError as exc:
            raise NumericalError(f"member {i}: {exc}") from exc
        members.append(out.theta)
        records.append(MemberRecord(i, 0, anchor, int(cfg.epochs), out.final_loss, out.loss_trace))
    return Ensemble(arch, prior, members, records, {"method": "ae", "train": cfg.to_dict(), "seed": int(seed)})


def train_sequential_anchored_ensemble(
    arch: MlpArchitecture,
    prior: GaussianPrior,
    data: Dataset,
    plan: BudgetPlan,
    init_cfg: TrainConfig,
    seq_cfg: TrainConfig,
    chain_cfg: ChainConfig,
    seed: int = 0,
) -> Ensemble:
    """Per chain: one long training, then m rounds of (move anchor, warm-started short training).

    Chain c's first member uses exactly the anchor, initialisation and batch
    order of member c of :func:`train_anchored_ensemble` with the same seed.
    """
    if int(init_cfg.epochs) != plan.initial_epochs:
        raise ConfigError(f"init_cfg.epochs={init_cfg.epochs} but the plan allots {plan.initial_epochs}")
    if int(seq_cfg.epochs) != plan.sequential_epochs:
        raise ConfigError(f"seq_cfg.epochs={seq_cfg.epochs} but the plan allots {plan.sequential_epochs}")
    members, records = [], []
    carry = bool(seq_cfg.carry_optimizer_state)
    for c in range(plan.chains):
        streams = anchor_streams(seed, c, prior.size)
        anchor = initial_anchor(prior, streams)
        theta0 = init_params(arch, substream(seed, "init", c))
        try:
            out = run_training(arch, prior, anchor.theta, theta0, data, init_cfg, substream(seed, "batches", c, 0))
        except NumericalError as exc:
            raise NumericalError(f"chain {c}, member 0: {exc}") from exc
        members.append(out.theta)
        records.append(MemberRecord(c, 0, anchor.theta, plan.initial_epochs, out.final_loss, out.loss_trace))
        for k in range(1, plan.members_per_chain_after_first + 1):
            anchor = mh_update(prior, anchor, chain_cfg, streams)
            try:
                out = run_training(
                    arch, prior, anchor.theta, out.theta, data, seq_cfg,
                    substream(seed, "batches", c, k),
                    optimizer=out.optimizer if carry else None,
                )
            except NumericalError as exc:
                raise NumericalError(f"chain {c}, member {k}: {exc}") from exc
            members.append(out.theta)
            records.append(
                MemberRecord(c, k, anchor.theta, plan.sequential_epochs, out.final_loss, out.loss_trace, True, carry)
            )
        log.debug("chain %d done: %d members", c, plan.members_per_chain_after_first + 1)
    meta = {
        "method": "sae",
        "plan": plan.to_dict(),
        "init_train": init_cfg.to_dict(),
        "seq_train": seq_cfg.to_dict(),
        "chain": {"step_sigma": chain_cfg.step_sigma, "relative": chain_cfg.relative},
        "seed": int(seed),
    }
    return Ensemble(arch, prior, members, records, meta)


_MAGIC = b"SEQANCHOR-ENSEMBLE 1\n"


def save_ensemble(path, ensemble: Ensemble, config: dict | None = None) -> None:
    """Readable JSON header followed by a little-endian float64 payload.

    Payload blocks, in order: members (N, P), anchors (N, P), prior mean (P,),
    prior std (P,).
    """
    N, P = len(ensemble), ensemble.arch.parameter_count
    header = {
        "format": "seqanchor-ensemble",
        "version": 1,
        "n_members": N,
        "parameter_count": P,
        "total_epochs": ensemble.total_epochs,
        "architecture": ensemble.arch.to_dict(),
        "meta": ensemble.meta,
        "config": config,
        "provenance": [r.summary() for r in ensemble.provenance],
        "payload": {
            "dtype": "<f8",
            "blocks": [["members", [N, P]], ["anchors", [N, P]], ["prior_mean", [P]], ["prior_std", [P]]],
        },
    }
    text = (json.dumps(header, indent=1, sort_keys=True) + "\n").encode("utf-8")
    payload = [
        ensemble.member_matrix(),
        np.stack([r.anchor for r in ensemble.provenance]) if N else np.empty((0, P)),
        ensemble.prior.mean,
        ensemble.prior.std,
    ]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(b"header_bytes %d\n" % len(text))
        fh.write(text)
        for block in payload:
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def read_ensemble_header(path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh, path)


def _read_header(fh, path):
    if fh.readline() != _MAGIC:
        raise DataFormatError(f"{path}: not a seqanchor ensemble file")
    line = fh.readline().split()
    if len(line) != 2 or line[0] != b"header_bytes":
        raise DataFormatError(f"{path}: missing header length line")
    return json.loads(fh.read(int(line[1])).decode("utf-8"))


def load_ensemble(path) -> Ensemble:
    with open(path, "rb") as fh:
        header = _read_header(fh, path)
        raw = np.frombuffer(fh.read(), dtype="<f8")
    N, P = header["n_members"], header["parameter_count"]
    if raw.size != 2 * N * P + 2 * P:
        raise DataFormatError(f"{path}: payload holds {raw.size} values, header implies {2 * N * P + 2 * P}")
    members = raw[: N * P].reshape(N, P).astype(np.float64)
    anchors = raw[N * P: 2 * N * P].reshape(N, P).astype(np.float64)
    prior = GaussianPrior(raw[2 * N * P: 2 * N * P + P], raw[2 * N * P + P:])
    records = [
        MemberRecord(
            s["chain"], s["index"], anchors[i], s["epochs"], s["final_loss"],
            warm_start=s["warm_start"], optimizer_state_carried=s["optimizer_state_carried"],
        )
        for i, s in enumerate(header["provenance"])
    ]
    arch = MlpArchitecture.from_dict(header["architecture"])
    return Ensemble(arch, prior, list(members), records, header.get("meta") or {})
