"""The CNSL model: disentangled encoders, seed decoder, learned diffusion surrogates,
constrained training and latent-space seed inference."""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .diffusion import DiffusionSample, substream
from .graph import CrossNetwork, bridge_argmax, structural_features
from .neural import tensor as T
from .neural.layers import BCE_EPS
from .neural import (Adam, GraphAggregator, MLP, Module, NonFiniteError, Tensor, bce_loss,
                     clamp_logvar, kl_diag_gaussian, load_params, mse_loss, reparameterize,
                     save_params)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr_vae: float = 1e-4
    lr_psi1: float = 5e-3
    lr_psi2: float = 1e-2
    epochs: int = 15
    batch_size: int = 2
    monotone_weight: float = 1.0     # lambda
    capacity_weight: float = 1.0     # gamma
    capacity_s: float = 5.0          # I_s, nats
    capacity_fs: float = 5.0         # I_fs, nats
    monotone_subsets: int = 3
    # what the surrogates see during training: the observed seeds and hand-off
    # ("observed"), the decoded seeds chained through both surrogates ("decoded"), or both
    surrogate_input: str = "observed"
    # extra uniformly drawn seed sets per batch, trained on reconstruction and capacity only
    augment_seed_sets: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if self.surrogate_input not in ("observed", "decoded", "both"):
            raise ValueError(f"unknown surrogate_input {self.surrogate_input!r}")
        for key in ("lr_vae", "lr_psi1", "lr_psi2"):
            if getattr(self, key) <= 0:
                raise ValueError(f"{key} must be > 0")
        for key in ("monotone_weight", "capacity_weight"):
            if getattr(self, key) < 0:
                raise ValueError(f"{key} must be >= 0")
        if self.augment_seed_sets < 0:
            raise ValueError("augment_seed_sets must be >= 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


@dataclass
class InferConfig:
    k: int = 10                  # training seed sets averaged into the start latents
    eta: int = 2                 # gradient iterations on z_s
    alpha: float = 0.1           # latent step size
    objective: str = "observed"  # or "spread-max": all-ones target diffusion
    rule: str = "top-m"          # or "threshold"
    n_seeds: int | None = None   # m for top-m; None -> mean training seed count
    threshold: float = 0.5
    seed_weight: float = 1.0     # weight of the seed self-likelihood term in L_pred
    restarts: int = 1            # independent k-averaged starts
    pool: str = "best"           # restart pooling: lowest final loss, or loss-weighted mean ("weighted")
    rng_seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.eta < 0 or self.alpha <= 0:
            raise ValueError("need k >= 1, eta >= 0 and alpha > 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.seed_weight < 0:
            raise ValueError("seed_weight must be >= 0")
        if self.objective not in ("observed", "spread-max"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.pool not in ("best", "weighted"):
            raise ValueError(f"unknown restart pooling {self.pool!r}")
        if self.rule not in ("top-m", "threshold"):
            raise ValueError(f"unknown binarization rule {self.rule!r}")


@dataclass
class LatentPair:
    z_s: np.ndarray
    z_fs: np.ndarray


def cross_fingerprint(cross: CrossNetwork) -> str:
    h = hashlib.sha256()
    for arr in (cross.source.edges, cross.target.edges, cross.bridges.pairs):
        h.update(np.ascontiguousarray(arr, dtype="<i8").tobytes())
        h.update(b"|")
    h.update(f"{cross.n_source},{cross.n_target}".encode())
    return h.hexdigest()[:16]


def _degree_channel(net) -> np.ndarray:
    return np.log1p(net.degree().astype(float))[:, None]


class CnslModel(Module):
    ARCH_KEYS = ("k1", "k2", "hidden", "feat_hidden", "feat_embed", "surrogate_hidden",
                 "surrogate_hops", "seed")

    def __init__(self, cross: CrossNetwork, k1: int = 16, k2: int = 16, hidden: int = 128,
                 feat_hidden: int = 16, feat_embed: int = 1, surrogate_hidden: int = 64,
                 surrogate_hops: int = 3, seed: int = 0):
        self.cross = cross
        feats = cross.source_features
        if feats is None:
            feats = structural_features(cross.source)
        self.features = np.asarray(feats, dtype=float)
        n_s, n_t = cross.n_source, cross.n_target
        if max(k1, k2) >= n_s:
            log.warning("latent sizes k1=%d, k2=%d are not small relative to N_s=%d", k1, k2, n_s)
        self.arch = dict(k1=k1, k2=k2, hidden=hidden, feat_hidden=feat_hidden, feat_embed=feat_embed,
                         surrogate_hidden=surrogate_hidden, surrogate_hops=surrogate_hops, seed=seed)
        rng = substream(seed, 11)
        f = self.features.shape[1]
        self.feature_mlp = MLP([f, feat_hidden, feat_embed], "relu", "identity", rng)
        self.encoder_dynamic = MLP([n_s, hidden, hidden, 2 * k1], "relu", "identity", rng)
        self.encoder_static = MLP([n_s * (1 + feat_embed), hidden, hidden, 2 * k2], "relu", "identity", rng)
        self.decoder = MLP([k1 + k2, hidden, hidden, n_s], "relu", "sigmoid", rng)
        self.surrogate_source = GraphAggregator(cross.source.adjacency, surrogate_hidden, surrogate_hops,
                                                _degree_channel(cross.source), rng)
        self.surrogate_target = GraphAggregator(cross.target.adjacency, surrogate_hidden, surrogate_hops,
                                                _degree_channel(cross.target), rng)

    @property
    def k1(self) -> int:
        return self.arch["k1"]

    @property
    def k2(self) -> int:
        return self.arch["k2"]

    def param_groups(self) -> dict[str, list[Tensor]]:
        vae = (self.feature_mlp.parameters() + self.encoder_dynamic.parameters()
               + self.encoder_static.parameters() + self.decoder.parameters())
        return {"vae": vae, "psi1": self.surrogate_source.parameters(),
                "psi2": self.surrogate_target.parameters()}

    def named_parameters(self, prefix: str = ""):
        out = []
        for name in ("feature_mlp", "encoder_dynamic", "encoder_static", "decoder",
                     "surrogate_source", "surrogate_target"):
            out += getattr(self, name).named_parameters(f"{prefix}{name}.")
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        if missing:
            raise ValueError(f"state is missing parameters: {sorted(missing)[:5]}")
        for k, p in own.items():
            if state[k].shape != p.data.shape:
                raise ValueError(f"parameter {k}: shape {state[k].shape} != {p.data.shape}")
            p.data[...] = state[k]

    # -------------------------------------------------------------- forward

    def posterior(self, x_s) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        """(mu_s, logvar_s, mu_fs, logvar_fs) for a seed vector."""
        x = T.as_tensor(np.asarray(getattr(x_s, "data", x_s), dtype=float))
        if x.shape != (self.cross.n_source,):
            raise ValueError(f"x_s has shape {x.shape}; source network has {self.cross.n_source} nodes")
        row = T.reshape(x, (1, -1))
        h1 = self.encoder_dynamic(row)
        mu_s, lv_s = h1[:, : self.k1], clamp_logvar(h1[:, self.k1:])
        emb = self.feature_mlp(Tensor(self.features))
        h2 = self.encoder_static(T.concat([row, T.reshape(emb, (1, -1))], axis=1))
        mu_fs, lv_fs = h2[:, : self.k2], clamp_logvar(h2[:, self.k2:])
        return mu_s, lv_s, mu_fs, lv_fs

    def decode_tensor(self, z_s: Tensor, z_fs: Tensor) -> Tensor:
        z = T.concat([T.reshape(T.as_tensor(z_s), (1, -1)), T.reshape(T.as_tensor(z_fs), (1, -1))], axis=1)
        return T.reshape(self.decoder(z), (-1,))

    def decode_batch(self, z_s: Tensor, z_fs: Tensor) -> Tensor:
        """(batch, k1) and (batch, k2) latents -> (batch, N_s) seed probabilities."""
        return self.decoder(T.concat([T.as_tensor(z_s), T.as_tensor(z_fs)], axis=1))

    def surrogate_tensor(self, x_hat_s: Tensor):
        """(y_s, x_t, y_t) for a seed vector or a (batch, N_s) matrix of them."""
        y_s = self.surrogate_source(x_hat_s)
        n_s, n_t = self.cross.n_source, self.cross.n_target
        if y_s.ndim == 1:
            x_t = T.gather_max(y_s, bridge_argmax(y_s.data, self.cross.bridges, n_t))
        else:
            winners = []
            for row, vals in enumerate(y_s.data):
                w = bridge_argmax(vals, self.cross.bridges, n_t)
                winners.append(np.where(w >= 0, w + row * n_s, -1))
            x_t = T.reshape(T.gather_max(T.reshape(y_s, (-1,)), np.concatenate(winners)), (-1, n_t))
        y_t = self.surrogate_target(x_t)
        return y_s, x_t, y_t

    # -------------------------------------------------------------- checkpoint

    def save(self, path, extra: dict | None = None) -> None:
        arch = dict(self.arch, n_source=self.cross.n_source, n_target=self.cross.n_target,
                    n_features=int(self.features.shape[1]), fingerprint=cross_fingerprint(self.cross))
        if extra:
            arch["extra"] = extra
        save_params(path, arch, [(k, p.data) for k, p in self.named_parameters()])

    @classmethod
    def load(cls, path, cross: CrossNetwork) -> "CnslModel":
        arch, params = load_params(path)
        if arch["n_source"] != cross.n_source or arch["n_target"] != cross.n_target:
            raise ValueError(
                f"checkpoint built for {arch['n_source']}/{arch['n_target']} nodes, "
                f"dataset has {cross.n_source}/{cross.n_target}"
            )
        if arch.get("fingerprint") != cross_fingerprint(cross):
            raise ValueError("checkpoint was trained on a different cross-network (fingerprint mismatch)")
        model = cls(cross, **{k: arch[k] for k in cls.ARCH_KEYS})
        if model.features.shape[1] != arch["n_features"]:
            raise ValueError(f"checkpoint expects {arch['n_features']} node features, "
                             f"dataset has {model.features.shape[1]}")
        model.load_state_dict(params)
        return model


# ------------------------------------------------------------------ operations


def encode(model: CnslModel, x_s, rng: np.random.Generator):
    """Sample (z_s, z_fs) by reparameterization; returns ``(latents, kl_s, kl_fs)`` as tensors."""
    mu_s, lv_s, mu_fs, lv_fs = model.posterior(x_s)
    z_s = reparameterize(mu_s, lv_s, rng)
    z_fs = reparameterize(mu_fs, lv_fs, rng)
    return (z_s, z_fs), kl_diag_gaussian(mu_s, lv_s), kl_diag_gaussian(mu_fs, lv_fs)


def decode(model: CnslModel, latents: LatentPair) -> np.ndarray:
    z_s = np.asarray(latents.z_s, dtype=float).reshape(-1)
    z_fs = np.asarray(latents.z_fs, dtype=float).reshape(-1)
    if z_s.size != model.k1 or z_fs.size != model.k2:
        raise ValueError(f"latent sizes ({z_s.size}, {z_fs.size}) != model ({model.k1}, {model.k2})")
    return model.decode_tensor(Tensor(z_s), Tensor(z_fs)).data.copy()


def surrogate_forward(model: CnslModel, x_hat_s) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    y_s, x_t, y_t = model.surrogate_tensor(T.as_tensor(np.asarray(x_hat_s, dtype=float)))
    return y_s.data.copy(), x_t.data.copy(), y_t.data.copy()


def monotone_penalty(y_big: Tensor, y_small: list[Tensor]) -> Tensor:
    """Mean over subsets of ``||max(0, y_small - y_big)||^2``."""
    terms = [T.tsum(T.square(T.relu(ys - y_big))) for ys in y_small]
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


def draw_monotone_pairs(batch: list[DiffusionSample], n_subsets: int, rng: np.random.Generator):
    """One superset (the first batch sample's seeds) and ``n_subsets`` random subsets of it."""
    if n_subsets < 1 or not batch:
        return []
    x_big = np.asarray(batch[0].x_s, dtype=float)
    support = np.flatnonzero(x_big > 0)
    if support.size == 0:
        return []
    subsets = []
    for _ in range(n_subsets):
        drop = rng.choice(support, size=int(rng.integers(1, support.size + 1)), replace=False)
        x = x_big.copy()
        x[drop] = 0.0
        subsets.append(x)
    return [(x_big, subsets)]


def augment_seed_sets(batch: list[DiffusionSample], count: int, rng: np.random.Generator):
    """``count`` uniform random seed vectors, each as large as a random batch member's seed set."""
    out = []
    for _ in range(count):
        ref = batch[rng.integers(len(batch))].x_s
        m = int(np.sum(ref > 0))
        x = np.zeros_like(ref, dtype=float)
        x[rng.choice(ref.size, size=m, replace=False)] = 1.0
        out.append(x)
    return out


def train_loss(model: CnslModel, batch: list[DiffusionSample], pairs, cfg: TrainConfig,
               rng: np.random.Generator):
    """Total training loss tensor and a per-term float breakdown."""
    if not batch:
        raise ValueError("empty batch")
    parts = {"recon": [], "diff_source": [], "diff_target": [], "kl_s": [], "kl_fs": [], "capacity": []}
    totals = []
    for s in batch:
        (z_s, z_fs), kl_s, kl_fs = encode(model, s.x_s, rng)
        x_hat = model.decode_tensor(z_s, z_fs)
        recon = bce_loss(x_hat, s.x_s)
        d_s = d_t = 0.0
        if cfg.surrogate_input in ("observed", "both"):
            d_s = d_s + mse_loss(model.surrogate_source(Tensor(s.x_s)), s.y_s)
            d_t = d_t + mse_loss(model.surrogate_target(Tensor(s.x_t)), s.y_t)
        if cfg.surrogate_input in ("decoded", "both"):
            y_s_hat, _, y_t_hat = model.surrogate_tensor(x_hat)
            d_s = d_s + mse_loss(y_s_hat, s.y_s)
            d_t = d_t + mse_loss(y_t_hat, s.y_t)
        cap = T.relu(kl_s - cfg.capacity_s) + T.relu(kl_fs - cfg.capacity_fs)
        total = recon + d_s + d_t
        if cfg.capacity_weight:
            total = total + cfg.capacity_weight * cap
        totals.append(total)
        for key, val in (("recon", recon), ("diff_source", d_s), ("diff_target", d_t),
                         ("kl_s", kl_s), ("kl_fs", kl_fs), ("capacity", cap)):
            parts[key].append(float(val.data))
    loss = totals[0]
    for t in totals[1:]:
        loss = loss + t
    aug = augment_seed_sets(batch, cfg.augment_seed_sets, rng)
    for x in aug:
        (z_s, z_fs), kl_s, kl_fs = encode(model, x, rng)
        extra = bce_loss(model.decode_tensor(z_s, z_fs), x)
        if cfg.capacity_weight:
            extra = extra + cfg.capacity_weight * (T.relu(kl_s - cfg.capacity_s) + T.relu(kl_fs - cfg.capacity_fs))
        loss = loss + extra
    loss = loss * (1.0 / len(totals))
    mono = 0.0
    if pairs and cfg.monotone_weight:
        pen = None
        for x_big, subsets in pairs:
            _, _, y_big = model.surrogate_tensor(Tensor(x_big))
            smalls = [model.surrogate_tensor(Tensor(x))[2] for x in subsets]
            p = monotone_penalty(y_big, smalls)
            pen = p if pen is None else pen + p
        pen = pen * (1.0 / len(pairs))
        mono = float(pen.data)
        loss = loss + cfg.monotone_weight * pen
    breakdown = {k: float(np.mean(v)) for k, v in parts.items()}
    breakdown["monotone"] = mono
    breakdown["total"] = float(loss.data)
    if not math.isfinite(breakdown["total"]):
        raise NonFiniteError(f"non-finite training loss: {breakdown}")
    return loss, breakdown


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    epoch_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1


def evaluate_loss(model: CnslModel, samples: list[DiffusionSample], cfg: TrainConfig, seed: int) -> float:
    """Deterministic mean training objective (without the pair penalty) over ``samples``."""
    rng = substream(seed, 31)
    vals = []
    for s in samples:
        _, b = train_loss(model, [s], [], cfg, rng)
        vals.append(b["total"])
    return float(np.mean(vals)) if vals else float("nan")


def train(model: CnslModel, samples: list[DiffusionSample], cfg: TrainConfig,
          val_samples: list[DiffusionSample] | None = None, progress=None) -> TrainResult:
    """Mini-batch training with one Adam per parameter group.

    Keeps the parameters of the epoch with the lowest validation loss
    (training-epoch loss when no validation set is given).
    """
    if not samples:
        raise ValueError("cannot train on an empty dataset")
    groups = model.param_groups()
    opts = {"vae": Adam(groups["vae"], lr=cfg.lr_vae),
            "psi1": Adam(groups["psi1"], lr=cfg.lr_psi1),
            "psi2": Adam(groups["psi2"], lr=cfg.lr_psi2)}
    result = TrainResult()
    best, best_state = math.inf, None
    n = len(samples)
    for epoch in range(cfg.epochs):
        rng = substream(cfg.rng_seed, 21, epoch)
        order = rng.permutation(n)
        batch_losses = []
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            batch = [samples[i] for i in order[start:start + cfg.batch_size]]
            pairs = draw_monotone_pairs(batch, cfg.monotone_subsets, rng) if cfg.monotone_weight else []
            loss, parts = train_loss(model, batch, pairs, cfg, rng)
            for opt in opts.values():
                opt.zero_grad()
            T.backward(loss)
            for opt in opts.values():
                opt.step()
            parts.update(epoch=epoch, batch=b)
            result.history.append(parts)
            batch_losses.append(parts["total"])
        result.epoch_loss.append(float(np.mean(batch_losses)))
        score = result.epoch_loss[-1]
        if val_samples:
            score = evaluate_loss(model, val_samples, cfg, cfg.rng_seed)
            result.val_loss.append(score)
        if score < best:
            best, best_state, result.best_epoch = score, model.state_dict(), epoch
        if progress:
            progress(epoch, result)
        log.info("epoch %d: train %.5f%s", epoch, result.epoch_loss[-1],
                 f", val {score:.5f}" if val_samples else "")
    if best_state is not None:
        model.load_state_dict(best_state)
    return result


# ------------------------------------------------------------------ inference


def average_latents(model: CnslModel, seed_sets) -> LatentPair:
    """Mean posterior means of both encoders over ``seed_sets``."""
    seed_sets = list(seed_sets)
    if not seed_sets:
        raise ValueError("need at least one training seed set to average latents")
    zs, zfs = [], []
    for x in seed_sets:
        mu_s, _, mu_fs, _ = model.posterior(x)
        zs.append(mu_s.data.ravel())
        zfs.append(mu_fs.data.ravel())
    return LatentPair(np.mean(zs, axis=0), np.mean(zfs, axis=0))


def binarize_seeds(probs, rule: str = "top-m", m: int | None = None, threshold: float = 0.5) -> np.ndarray:
    """Top-``m`` (ties to the lowest index) or ``probs >= threshold``."""
    probs = np.asarray(probs, dtype=float)
    out = np.zeros_like(probs)
    if rule == "threshold":
        out[probs >= threshold] = 1.0
        return out
    if rule != "top-m":
        raise ValueError(f"unknown binarization rule {rule!r}")
    if m is None:
        raise ValueError("top-m binarization needs m")
    m = max(0, min(int(m), probs.size))
    order = np.lexsort((np.arange(probs.size), -probs))
    out[order[:m]] = 1.0
    return out


def prediction_loss(model: CnslModel, z_s: Tensor, z_fs: Tensor, target: np.ndarray,
                    seed_weight: float = 1.0):
    """Seed self-consistency (Bernoulli log-likelihood against the hardened decode)
    plus squared error of the predicted target diffusion.

    With (batch, k) latents the loss is summed over rows and the two terms are
    returned per row; with 1-d latents they are floats.
    """
    x_hat = model.decode_batch(z_s, z_fs) if z_s.ndim == 2 else model.decode_tensor(z_s, z_fs)
    hard = (x_hat.data >= 0.5).astype(float)
    seed_term = bce_loss(x_hat, hard) * float(x_hat.data.size)
    _, _, y_t_hat = model.surrogate_tensor(x_hat)
    sq = T.square(y_t_hat - target)
    spread_term = T.tsum(sq)
    loss = spread_term + seed_weight * seed_term if seed_weight else spread_term
    if x_hat.ndim == 1:
        return loss, float(seed_term.data), float(spread_term.data)
    p = np.clip(x_hat.data, BCE_EPS, 1.0 - BCE_EPS)
    seed_rows = -(hard * np.log(p) + (1.0 - hard) * np.log(1.0 - p)).sum(axis=1)
    return loss, seed_rows, sq.data.sum(axis=1)


def _descend(model: CnslModel, start_s: np.ndarray, start_fs: np.ndarray, target: np.ndarray,
             cfg: InferConfig):
    """``cfg.eta`` plain gradient steps on the (restarts, k1) latents ``z_s``; ``z_fs`` stays fixed.

    Rows do not interact: the loss is a sum over rows, so each row follows its own gradient.
    """
    z_s = Tensor(start_s.copy(), requires_grad=True)
    z_fs = Tensor(start_fs.copy())
    iters = []
    for it in range(cfg.eta):
        loss, seed_rows, spread_rows = prediction_loss(model, z_s, z_fs, target, cfg.seed_weight)
        (g,) = T.grad(loss, [z_s])
        if not np.isfinite(g).all():
            raise NonFiniteError(f"non-finite latent gradient at iteration {it}")
        z_s.data -= cfg.alpha * g
        iters.append((spread_rows + cfg.seed_weight * seed_rows, seed_rows, spread_rows,
                      np.linalg.norm(g, axis=1)))
    return z_s, z_fs, iters


def pool_weights(losses: np.ndarray, pool: str) -> np.ndarray:
    """Restart weights: all mass on the lowest loss ("best"), or ``exp(-(L - L_min) / sd(L))`` ("weighted")."""
    losses = np.asarray(losses, dtype=float)
    w = np.zeros_like(losses)
    if pool == "best" or losses.size == 1:
        w[int(np.argmin(losses))] = 1.0
        return w
    spread = float(np.std(losses))
    if spread == 0.0:
        return np.full_like(losses, 1.0 / losses.size)
    w = np.exp(-(losses - losses.min()) / spread)
    return w / w.sum()


def infer_seeds(model: CnslModel, y_t, train_seed_sets, cfg: InferConfig | None = None):
    """Latent-space seed inference.

    Returns ``(binary seeds, seed probabilities, trace)``. The static latent
    and all model parameters stay fixed; only ``z_s`` moves. Each restart
    starts from the latent average of ``k`` random training seed sets; the
    restarts descend together as one batch.
    """
    cfg = cfg or InferConfig()
    y_t = np.asarray(y_t, dtype=float)
    if y_t.shape != (model.cross.n_target,):
        raise ValueError(f"y_t has shape {y_t.shape}; target network has {model.cross.n_target} nodes")
    train_seed_sets = list(train_seed_sets)
    rng = substream(cfg.rng_seed, 41)
    k = min(cfg.k, len(train_seed_sets)) if train_seed_sets else 0
    if k == 0:
        raise ValueError("inference needs training seed sets for latent averaging")
    target = np.ones_like(y_t) if cfg.objective == "spread-max" else y_t
    starts = []
    for _ in range(cfg.restarts):
        pick = rng.choice(len(train_seed_sets), size=k, replace=False)
        starts.append(average_latents(model, [train_seed_sets[i] for i in sorted(pick)]))
    z_s, z_fs, iters = _descend(model, np.stack([s.z_s for s in starts]), np.stack([s.z_fs for s in starts]),
                                target, cfg)
    _, seed_rows, spread_rows = prediction_loss(model, z_s, z_fs, target, cfg.seed_weight)
    final_loss = spread_rows + cfg.seed_weight * seed_rows
    weights = pool_weights(final_loss, cfg.pool)
    chosen = int(np.argmin(final_loss))
    decoded = model.decode_batch(Tensor(z_s.data), z_fs).data
    probs = weights @ decoded
    trace = {"objective": cfg.objective, "target_sum": float(target.sum()),
             "target_all_ones": bool(np.all(target == 1.0)), "eta": cfg.eta, "alpha": cfg.alpha,
             "k": k, "seed_weight": cfg.seed_weight, "pool": cfg.pool,
             "restarts": [{"restart": r, "final_loss": float(final_loss[r]), "weight": float(weights[r])}
                          for r in range(cfg.restarts)],
             "chosen_restart": chosen,
             "iterations": [{"iteration": it, "loss": float(tot[chosen]), "seed_term": float(sd[chosen]),
                             "spread_term": float(sp_[chosen]), "grad_norm": float(gn[chosen])}
                            for it, (tot, sd, sp_, gn) in enumerate(iters)]}
    m = cfg.n_seeds
    if m is None:
        m = int(round(np.mean([np.sum(np.asarray(x) > 0) for x in train_seed_sets])))
    seeds = binarize_seeds(probs, cfg.rule, m, cfg.threshold)
    trace["n_seeds"] = int(seeds.sum())
    trace["final_z_s"] = z_s.data[chosen].tolist()
    return seeds, probs, trace
