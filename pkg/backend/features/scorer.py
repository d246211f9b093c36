#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Learned multi-criteria trajectory scorer, trained on oracle labels.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from backend.base.custom_exceptions import (CheckpointError,
                                            EmptyCandidateSetError,
                                            EmptyDatasetError,
                                            ShapeMismatchError)
from backend.base.definitions import Config, Constants
from backend.base.helpers import stable_seed
from backend.base.logging import LOGGER
from backend.features.anchors import AnchorDictionary
from backend.features.bev import BevGrid, grid_mask, render_bev, sample_positions
from backend.features.decoder import (CandidateSet, DecoderModel, encode_poses,
                                      generate_candidates)
from backend.features.epdms import evaluate_many
from backend.features.nn import (MlpSpec, ParamStore, add_mlp, attention,
                                 attention_backward, bce_with_logits,
                                 linear_backward, linear_forward,
                                 load_checkpoint, mlp_backward, mlp_forward,
                                 mse, positional_encodings, save_checkpoint,
                                 sgd_step, sigmoid)
from backend.features.nn.layers import AttentionCache, Grads
from backend.features.scene.types import Scenario, Trajectory

HEADS = ("epdms", "nc", "dac", "comfort")


class ScorePrediction(NamedTuple):
    epdms: float
    nc: float
    dac: float
    comfort: float


class ScorerConfig(NamedTuple):
    horizon_steps: int = Constants.DEFAULT_HORIZON_STEPS
    embed_dim: int = Constants.DEFAULT_EMBED_DIM
    pe_dim: int = Constants.DEFAULT_PE_DIM
    coord_scale: float = Constants.DEFAULT_COORD_SCALE
    channels: int = Constants.BEV_CHANNELS

    @classmethod
    def from_config(cls, config: Config) -> "ScorerConfig":
        return cls(
            horizon_steps=config.horizon_steps,
            embed_dim=config.embed_dim,
            pe_dim=config.pe_dim,
            coord_scale=config.coord_scale,
            channels=config.bev_channels
        )


@dataclass
class ScorerPass:
    embed_inputs: List[np.ndarray]
    query: np.ndarray
    features: np.ndarray
    attn: AttentionCache
    hidden: np.ndarray
    trunk: np.ndarray
    logits: np.ndarray

    @property
    def probabilities(self) -> np.ndarray:
        return sigmoid(self.logits)


class ScorerModel:
    """Trajectory embedding, cross-attention over sampled BEV features, four heads."""

    def __init__(self, config: ScorerConfig, params: ParamStore):
        self.config = config
        self.params = params
        self._pe = positional_encodings(config.horizon_steps, config.pe_dim)

    @classmethod
    def create(cls, config: ScorerConfig, seed: int = Constants.DEFAULT_SEED) -> "ScorerModel":
        params = ParamStore(seed)
        model = cls(config, params)
        d = config.embed_dim
        feat = config.channels + config.pe_dim
        add_mlp(params, model.embed_spec)
        for proj in ("key", "value"):
            params.add(f"{proj}.w", (feat, d))
            params.add(f"{proj}.b", (d,), fan_in=feat)
        params.add("trunk.w", (d, d))
        params.add("trunk.b", (d,), fan_in=d)
        params.add("head.w", (d, len(HEADS)))
        params.add("head.b", (len(HEADS),), fan_in=d)
        return model

    @property
    def embed_spec(self) -> MlpSpec:
        c = self.config
        return MlpSpec("embed", (c.horizon_steps * (3 + c.pe_dim), c.embed_dim, c.embed_dim))

    def forward(self, poses: np.ndarray, grid: BevGrid) -> ScorerPass:
        """Logits for (N, T, 3) trajectories, shape (N, 4)."""
        c = self.config
        poses = np.asarray(poses, dtype=float)
        if poses.ndim != 3 or poses.shape[1:] != (c.horizon_steps, 3):
            raise ShapeMismatchError(f"Scorer expects N x {c.horizon_steps} x 3 poses, got {poses.shape}")
        if grid.channels != c.channels:
            raise ShapeMismatchError(f"Scorer expects {c.channels} BEV channels, got {grid.channels}")

        n, t = poses.shape[0], poses.shape[1]
        query, embed_inputs = mlp_forward(self.params, encode_poses(poses, self._pe, c.coord_scale), self.embed_spec)

        sampled = sample_positions(grid, poses[..., :2].reshape(-1, 2)).reshape(n, t, -1)
        features = np.concatenate([sampled, np.broadcast_to(self._pe, (n, t, c.pe_dim))], axis=-1)
        keys = linear_forward(features, self.params["key.w"], self.params["key.b"])
        values = linear_forward(features, self.params["value.w"], self.params["value.b"])
        attended, attn_cache = attention(query, keys, values)
        hidden = query + attended

        trunk = np.maximum(linear_forward(hidden, self.params["trunk.w"], self.params["trunk.b"]), 0.0)
        logits = linear_forward(trunk, self.params["head.w"], self.params["head.b"])
        return ScorerPass(embed_inputs, query, features, attn_cache, hidden, trunk, logits)

    def backward(self, forward: ScorerPass, grad_logits: np.ndarray, grads: Optional[Grads] = None) -> Grads:
        """Parameter gradients given d(loss)/d(logits)."""
        grads = {} if grads is None else grads

        def accumulate(name: str, value: np.ndarray) -> None:
            grads[name] = grads.get(name, 0.0) + value

        g_trunk, g_w, g_b = linear_backward(forward.trunk, self.params["head.w"], grad_logits)
        accumulate("head.w", g_w)
        accumulate("head.b", g_b)

        g_trunk = g_trunk * (forward.trunk > 0.0)
        g_hidden, g_w, g_b = linear_backward(forward.hidden, self.params["trunk.w"], g_trunk)
        accumulate("trunk.w", g_w)
        accumulate("trunk.b", g_b)

        g_q, g_k, g_v = attention_backward(forward.attn, g_hidden)
        for proj, g in (("key", g_k), ("value", g_v)):
            _, g_w, g_b = linear_backward(forward.features, self.params[f"{proj}.w"], g)
            accumulate(f"{proj}.w", g_w)
            accumulate(f"{proj}.b", g_b)

        mlp_backward(self.params, self.embed_spec, forward.embed_inputs, g_hidden + g_q, grads)
        return grads


def score_trajectory(model: ScorerModel, trajectory: Trajectory, grid: BevGrid) -> ScorePrediction:
    probs = model.forward(trajectory.array()[None], grid).probabilities[0]
    return ScorePrediction(*(float(p) for p in probs))


def score_batch(model: ScorerModel, candidates: CandidateSet, grid: BevGrid) -> List[ScorePrediction]:
    """Score every candidate, one forward pass each, in order."""
    return [score_trajectory(model, traj, grid) for traj in candidates.trajectories]


def select_trajectory(
    predictions: Sequence[ScorePrediction],
    candidates: CandidateSet
) -> Tuple[int, Trajectory]:
    """Highest predicted score; the lowest index wins ties.

    Raises:
        EmptyCandidateSetError: No candidates.
    """
    if not predictions or len(candidates) == 0:
        raise EmptyCandidateSetError("Cannot select from an empty candidate set")
    if len(predictions) != len(candidates):
        raise ShapeMismatchError(
            f"{len(predictions)} predictions for {len(candidates)} candidates"
        )
    index = int(np.argmax([p.epdms for p in predictions]))
    return index, candidates.trajectories[index]


def label_candidates(scenario: Scenario, candidates: CandidateSet, config: Config) -> np.ndarray:
    """Oracle targets per candidate: filtered (epdms, nc, dac, hc), shape (N, 4)."""
    reports = evaluate_many(scenario, candidates.trajectories, config)
    return np.array([
        [r.epdms, r.filtered.nc, r.filtered.dac, r.filtered.hc] for r in reports
    ])


def scorer_loss(forward: ScorerPass, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """MSE on the score head plus BCE on the three binary heads, mean over candidates.

    Returns:
        Tuple[float, np.ndarray]: The loss and d(loss)/d(logits).
    """
    logits = forward.logits
    n = logits.shape[0]
    probs = sigmoid(logits[:, 0])
    sq, g_prob = mse(probs, labels[:, 0])
    bce, g_bce = bce_with_logits(logits[:, 1:], labels[:, 1:])

    grad = np.zeros_like(logits)
    grad[:, 0] = g_prob * probs * (1.0 - probs)
    grad[:, 1:] = g_bce
    loss = float(np.sum(sq) + np.sum(bce)) / n
    return loss, grad / n


def train_scorer(
    model: ScorerModel,
    scenarios: Sequence[Scenario],
    dictionary: AnchorDictionary,
    decoder: DecoderModel,
    config: Config,
    schedule: Optional[Sequence[str]] = None,
    grids: Optional[Mapping[str, BevGrid]] = None
) -> Tuple[ScorerModel, List[float]]:
    """Fit the scorer to oracle labels of the frozen decoder's candidates.

    Args:
        model (ScorerModel): The scorer, updated in place.
        scenarios (Sequence[Scenario]): The training scenes.
        dictionary (AnchorDictionary): The anchors.
        decoder (DecoderModel): Produces the candidates.
        config (Config): Training and metric settings.
        schedule (Optional[Sequence[str]], optional): Scenario ids to visit
        per epoch, with repetition.
            Defaults to every scenario once.
        grids (Optional[Mapping[str, BevGrid]], optional): Pre-rendered grids by id.
            Defaults to rendering them here.

    Raises:
        EmptyDatasetError: No scenarios.

    Returns:
        Tuple[ScorerModel, List[float]]: The scorer and the mean loss per epoch.
    """
    if not scenarios:
        raise EmptyDatasetError("Cannot train the scorer on an empty dataset")

    by_id = {s.id: s for s in scenarios}
    order = sorted(schedule if schedule is not None else by_id)
    if not order:
        raise EmptyDatasetError("The training schedule is empty")

    if grids is None:
        grids = {sid: render_bev(s, config.bev_extent, config.bev_resolution) for sid, s in by_id.items()}

    poses: Dict[str, np.ndarray] = {}
    labels: Dict[str, np.ndarray] = {}
    for sid in sorted(by_id):
        candidates = generate_candidates(decoder, dictionary, grids[sid])
        poses[sid] = candidates.array()
        labels[sid] = label_candidates(by_id[sid], candidates, config)
    LOGGER.info(f"Labelled candidates of {len(by_id)} scenarios for scorer training")

    rng = np.random.default_rng(config.seed)
    history: List[float] = []
    for epoch in range(config.epochs):
        permutation = rng.permutation(len(order))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = permutation[start:start + config.batch_size]
            grads: Dict[str, np.ndarray] = {}
            for pos in batch:
                sid = order[pos]
                grid = grid_mask(
                    grids[sid],
                    config.gridmask_probability,
                    stable_seed(config.seed, f"score:{sid}:{epoch}:{pos}"),
                    config.gridmask_block,
                    config.gridmask_keep_ratio
                )
                forward = model.forward(poses[sid], grid)
                loss, grad = scorer_loss(forward, labels[sid])
                total += loss
                model.backward(forward, grad / len(batch), grads)
            sgd_step(model.params, grads, config.learning_rate, config.weight_decay)

        history.append(total / len(order))
        LOGGER.info(f"Scorer epoch {epoch + 1}/{config.epochs}: loss {history[-1]:.4f}")

    return model, history


def save_scorer(model: ScorerModel, path: Union[str, Path]) -> Path:
    return save_checkpoint(model.params, path, model.config._asdict())


def load_scorer(path: Union[str, Path]) -> ScorerModel:
    """Rebuild a scorer from its checkpoint.

    Raises:
        CheckpointError: Missing files or parameters that do not fit the stored config.
    """
    params, raw_config = load_checkpoint(path)
    try:
        config = ScorerConfig(**raw_config)
    except TypeError as e:
        raise CheckpointError(f"Scorer checkpoint {path} has an invalid config: {e}")

    expected = ScorerModel.create(config).params
    for name in expected:
        if name not in params or params[name].shape != expected[name].shape:
            raise CheckpointError(f"Scorer checkpoint {path} is missing or misshapes {name}")
    return ScorerModel(config, params)
