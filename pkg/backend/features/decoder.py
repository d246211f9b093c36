#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Anchor-offset trajectory decoder.

Every anchor is encoded once into a query. Each layer samples BEV
features along the current hypothesis, attends over them with that query
and adds a clipped offset to the hypothesis.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from backend.base.custom_exceptions import (CheckpointError,
                                            DictionaryMismatchError,
                                            EmptyDatasetError,
                                            InvalidSettingValue,
                                            ShapeMismatchError)
from backend.base.definitions import Config, Constants
from backend.base.helpers import stable_seed
from backend.base.logging import LOGGER
from backend.features.anchors import AnchorDictionary, nearest_anchor
from backend.features.bev import BevGrid, grid_mask, render_bev, sample_positions
from backend.features.nn import (MlpSpec, ParamStore, add_mlp, attention,
                                 attention_backward, linear_backward,
                                 linear_forward, load_checkpoint, mlp_backward,
                                 mlp_forward, positional_encodings,
                                 save_checkpoint, sgd_step)
from backend.features.nn.layers import AttentionCache, Grads
from backend.features.scene.types import Scenario, Trajectory, normalize_angles


class DecoderConfig(NamedTuple):
    horizon_steps: int = Constants.DEFAULT_HORIZON_STEPS
    num_layers: int = Constants.DEFAULT_DECODER_LAYERS
    max_offset: float = Constants.DEFAULT_MAX_OFFSET
    embed_dim: int = Constants.DEFAULT_EMBED_DIM
    pe_dim: int = Constants.DEFAULT_PE_DIM
    coord_scale: float = Constants.DEFAULT_COORD_SCALE
    channels: int = Constants.BEV_CHANNELS

    @classmethod
    def from_config(cls, config: Config) -> "DecoderConfig":
        return cls(
            horizon_steps=config.horizon_steps,
            num_layers=config.decoder_layers,
            max_offset=config.max_offset,
            embed_dim=config.embed_dim,
            pe_dim=config.pe_dim,
            coord_scale=config.coord_scale,
            channels=config.bev_channels
        )


def encode_poses(poses: np.ndarray, pe: np.ndarray, coord_scale: float) -> np.ndarray:
    """Flatten (..., T, 3) poses, scaled, with a positional encoding per step."""
    scaled = poses * np.array([coord_scale, coord_scale, 1.0])
    rows = np.concatenate([scaled, np.broadcast_to(pe, poses.shape[:-1] + pe.shape[-1:])], axis=-1)
    return rows.reshape(*poses.shape[:-2], -1)


class LayerCache(NamedTuple):
    features: np.ndarray
    hidden: np.ndarray
    raw: np.ndarray
    attn: AttentionCache


@dataclass
class DecoderPass:
    """Forward results kept for the backward pass."""
    query: np.ndarray
    encoder_inputs: List[np.ndarray]
    hypotheses: List[np.ndarray]
    layers: List[LayerCache]

    @property
    def output(self) -> np.ndarray:
        return self.hypotheses[-1]


@dataclass
class CandidateSet:
    """Refined trajectories plus every intermediate hypothesis, (L+1, N, T, 3)."""
    trajectories: List[Trajectory]
    intermediates: np.ndarray

    def __len__(self) -> int:
        return len(self.trajectories)

    def array(self) -> np.ndarray:
        return self.intermediates[-1]


class DecoderModel:
    """Shared trajectory encoder plus one attention/offset block per layer."""

    def __init__(self, config: DecoderConfig, params: ParamStore):
        self.config = config
        self.params = params
        self._pe = positional_encodings(config.horizon_steps, config.pe_dim)

    @classmethod
    def create(cls, config: DecoderConfig, seed: int = Constants.DEFAULT_SEED) -> "DecoderModel":
        """Fresh model; offset heads start at zero so it reproduces the anchors."""
        params = ParamStore(seed)
        model = cls(config, params)
        add_mlp(params, model.encoder_spec)
        feat = config.channels + config.pe_dim
        for j in range(config.num_layers):
            for proj in ("key", "value"):
                params.add(f"layer{j}.{proj}.w", (feat, config.embed_dim))
                params.add(f"layer{j}.{proj}.b", (config.embed_dim,), fan_in=feat)
            params.add(f"layer{j}.head.w", (config.embed_dim, 3 * config.horizon_steps), zero=True)
            params.add(f"layer{j}.head.b", (3 * config.horizon_steps,), zero=True)
        return model

    @property
    def encoder_spec(self) -> MlpSpec:
        c = self.config
        return MlpSpec("enc", (c.horizon_steps * (3 + c.pe_dim), c.embed_dim, c.embed_dim))

    def check_poses(self, poses: np.ndarray) -> np.ndarray:
        poses = np.asarray(poses, dtype=float)
        if poses.ndim != 3 or poses.shape[1:] != (self.config.horizon_steps, 3):
            raise ShapeMismatchError(
                f"Decoder expects N x {self.config.horizon_steps} x 3 poses, got {poses.shape}"
            )
        return poses

    def encode(self, poses: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        """Queries for (N, T, 3) poses, shape (N, d)."""
        poses = self.check_poses(poses)
        return mlp_forward(self.params, encode_poses(poses, self._pe, self.config.coord_scale), self.encoder_spec)

    def decode_layer(
        self,
        j: int,
        query: np.ndarray,
        poses: np.ndarray,
        grid: BevGrid
    ) -> Tuple[np.ndarray, np.ndarray, LayerCache]:
        """One refinement step.

        Args:
            j (int): Layer index.
            query (np.ndarray): (N, d) queries.
            poses (np.ndarray): (N, T, 3) current hypotheses.
            grid (BevGrid): Features to sample.

        Returns:
            Tuple[np.ndarray, np.ndarray, LayerCache]: Applied offsets, new
            hypotheses and the backward cache.
        """
        c = self.config
        n, t = poses.shape[0], poses.shape[1]
        if grid.channels != c.channels:
            raise ShapeMismatchError(f"Decoder expects {c.channels} BEV channels, got {grid.channels}")

        sampled = sample_positions(grid, poses[..., :2].reshape(-1, 2)).reshape(n, t, -1)
        features = np.concatenate([sampled, np.broadcast_to(self._pe, (n, t, c.pe_dim))], axis=-1)
        keys = linear_forward(features, self.params[f"layer{j}.key.w"], self.params[f"layer{j}.key.b"])
        values = linear_forward(features, self.params[f"layer{j}.value.w"], self.params[f"layer{j}.value.b"])
        attended, attn_cache = attention(query, keys, values)
        hidden = query + attended
        raw = linear_forward(hidden, self.params[f"layer{j}.head.w"], self.params[f"layer{j}.head.b"])
        raw = raw.reshape(n, t, 3)

        delta = np.clip(raw, -c.max_offset, c.max_offset)
        refined = poses + delta
        refined[..., 2] = normalize_angles(refined[..., 2])
        return delta, refined, LayerCache(features, hidden, raw, attn_cache)

    def forward(self, anchors: np.ndarray, grid: BevGrid, layers: Optional[int] = None) -> DecoderPass:
        """Refine (N, T, 3) anchors through the first `layers` layers."""
        anchors = self.check_poses(anchors)
        layers = self.config.num_layers if layers is None else layers
        if not 1 <= layers <= self.config.num_layers:
            raise InvalidSettingValue(
                f"Cannot run {layers} decoder layers, the model has {self.config.num_layers}"
            )

        query, enc_inputs = self.encode(anchors)
        hypotheses = [anchors.copy()]
        caches = []
        for j in range(layers):
            _, refined, cache = self.decode_layer(j, query, hypotheses[-1], grid)
            hypotheses.append(refined)
            caches.append(cache)
        return DecoderPass(query, enc_inputs, hypotheses, caches)

    def backward(self, forward: DecoderPass, grad_output: np.ndarray, grads: Optional[Grads] = None) -> Grads:
        """Parameter gradients given d(loss)/d(final hypotheses).

        Sampling positions are treated as constants, so every layer's
        offset receives the gradient of the final output.
        """
        grads = {} if grads is None else grads
        c = self.config
        n = grad_output.shape[0]
        grad_query = np.zeros_like(forward.query)

        for j in reversed(range(len(forward.layers))):
            cache = forward.layers[j]
            inside = np.abs(cache.raw) < c.max_offset
            grad_raw = (grad_output * inside).reshape(n, -1)

            grad_hidden, g_w, g_b = linear_backward(cache.hidden, self.params[f"layer{j}.head.w"], grad_raw)
            grads[f"layer{j}.head.w"] = grads.get(f"layer{j}.head.w", 0.0) + g_w
            grads[f"layer{j}.head.b"] = grads.get(f"layer{j}.head.b", 0.0) + g_b
            grad_query += grad_hidden

            g_q, g_k, g_v = attention_backward(cache.attn, grad_hidden)
            grad_query += g_q
            for proj, g in (("key", g_k), ("value", g_v)):
                _, g_w, g_b = linear_backward(cache.features, self.params[f"layer{j}.{proj}.w"], g)
                grads[f"layer{j}.{proj}.w"] = grads.get(f"layer{j}.{proj}.w", 0.0) + g_w
                grads[f"layer{j}.{proj}.b"] = grads.get(f"layer{j}.{proj}.b", 0.0) + g_b

        mlp_backward(self.params, self.encoder_spec, forward.encoder_inputs, grad_query, grads)
        return grads


def traj_enc(model: DecoderModel, trajectory: Trajectory) -> np.ndarray:
    """Embedding of one trajectory, shape (d,)."""
    query, _ = model.encode(trajectory.array()[None])
    return query[0]


def decode_layer(
    model: DecoderModel,
    j: int,
    query: np.ndarray,
    hypothesis: Trajectory,
    grid: BevGrid
) -> Tuple[np.ndarray, Trajectory]:
    """Offsets (T, 3) applied by layer `j` and the refined trajectory."""
    delta, refined, _ = model.decode_layer(j, np.asarray(query)[None], hypothesis.array()[None], grid)
    return delta[0], Trajectory.from_array(refined[0], hypothesis.dt)


def generate_candidates(
    model: DecoderModel,
    dictionary: AnchorDictionary,
    grid: BevGrid,
    layers: Optional[int] = None
) -> CandidateSet:
    """Refine every anchor of the dictionary.

    Raises:
        DictionaryMismatchError: The dictionary horizon differs from the model's.
    """
    if dictionary.horizon_steps != model.config.horizon_steps:
        raise DictionaryMismatchError(
            f"Anchor dictionary has {dictionary.horizon_steps} steps, "
            f"the decoder was built for {model.config.horizon_steps}"
        )
    forward = model.forward(dictionary.anchors, grid, layers)
    stack = np.stack(forward.hypotheses)
    trajectories = [Trajectory.from_array(poses, dictionary.dt) for poses in stack[-1]]
    return CandidateSet(trajectories, stack)


def l1_loss(prediction: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean absolute error over (T, 3) poses with wrapped yaw differences."""
    diff = np.asarray(prediction, dtype=float) - target
    diff[..., 2] = normalize_angles(diff[..., 2])
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


def train_decoder(
    model: DecoderModel,
    scenarios: Sequence[Scenario],
    dictionary: AnchorDictionary,
    config: Config,
    schedule: Optional[Sequence[str]] = None,
    grids: Optional[Mapping[str, BevGrid]] = None
) -> Tuple[DecoderModel, List[float]]:
    """Winner-take-all imitation training.

    Only the candidate grown from the anchor nearest to the human
    trajectory is trained, with an L1 loss against that trajectory.

    Args:
        model (DecoderModel): The model, updated in place.
        scenarios (Sequence[Scenario]): The training scenes.
        dictionary (AnchorDictionary): The anchors.
        config (Config): Epochs, learning rate, batch size, seed, GridMask.
        schedule (Optional[Sequence[str]], optional): Scenario ids to visit
        per epoch, with repetition (see mining.upsample).
            Defaults to every scenario once.
        grids (Optional[Mapping[str, BevGrid]], optional): Pre-rendered grids by id.
            Defaults to rendering them here.

    Raises:
        EmptyDatasetError: No scenarios.

    Returns:
        Tuple[DecoderModel, List[float]]: The model and the mean loss per epoch.
    """
    if not scenarios:
        raise EmptyDatasetError("Cannot train the decoder on an empty dataset")

    by_id = {s.id: s for s in scenarios}
    order = sorted(schedule if schedule is not None else by_id)
    if not order:
        raise EmptyDatasetError("The training schedule is empty")

    if grids is None:
        grids = {sid: render_bev(s, config.bev_extent, config.bev_resolution) for sid, s in by_id.items()}
    winners = {sid: nearest_anchor(dictionary, s.human_trajectory) for sid, s in by_id.items()}
    targets = {sid: s.human_trajectory.array() for sid, s in by_id.items()}

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
                    stable_seed(config.seed, f"{sid}:{epoch}:{pos}"),
                    config.gridmask_block,
                    config.gridmask_keep_ratio
                )
                anchor = dictionary.anchors[winners[sid]][None]
                forward = model.forward(anchor, grid)
                loss, grad = l1_loss(forward.output[0], targets[sid])
                total += loss
                model.backward(forward, grad[None] / len(batch), grads)
            sgd_step(model.params, grads, config.learning_rate, config.weight_decay)

        history.append(total / len(order))
        LOGGER.info(f"Decoder epoch {epoch + 1}/{config.epochs}: L1 {history[-1]:.4f}")

    return model, history


def save_decoder(model: DecoderModel, path: Union[str, Path]) -> Path:
    return save_checkpoint(model.params, path, model.config._asdict())


def load_decoder(path: Union[str, Path]) -> DecoderModel:
    """Rebuild a decoder from its checkpoint.

    Raises:
        CheckpointError: Missing files or parameters that do not fit the stored config.
    """
    params, raw_config = load_checkpoint(path)
    try:
        config = DecoderConfig(**raw_config)
    except TypeError as e:
        raise CheckpointError(f"Decoder checkpoint {path} has an invalid config: {e}")

    expected = DecoderModel.create(config).params
    for name in expected:
        if name not in params or params[name].shape != expected[name].shape:
            raise CheckpointError(f"Decoder checkpoint {path} is missing or misshapes {name}")
    return DecoderModel(config, params)
