#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Anchor trajectory dictionary: K-means over trajectory positions.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np

from backend.base.custom_exceptions import (CheckpointError, ClusteringError,
                                            ShapeMismatchError)
from backend.base.definitions import Constants
from backend.base.helpers import read_json, write_json
from backend.base.logging import LOGGER
from backend.features.scene.geometry import headings_from_positions
from backend.features.scene.types import Trajectory

INERTIA_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class AnchorDictionary:
    """N anchor trajectories stored as an (N, T, 3) array."""
    anchors: np.ndarray
    dt: float = Constants.DEFAULT_DT
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        anchors = np.asarray(self.anchors, dtype=float)
        if anchors.ndim != 3 or anchors.shape[2] != 3 or anchors.shape[0] < 1:
            raise ShapeMismatchError(f"Anchors must be N x T x 3 with N >= 1, got {anchors.shape}")
        object.__setattr__(self, "anchors", anchors)

    @property
    def size(self) -> int:
        return self.anchors.shape[0]

    @property
    def horizon_steps(self) -> int:
        return self.anchors.shape[1]

    def trajectory(self, index: int) -> Trajectory:
        return Trajectory.from_array(self.anchors[index], self.dt)

    def trajectories(self) -> List[Trajectory]:
        return [self.trajectory(i) for i in range(self.size)]


def _kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    m = len(points)
    chosen = [int(rng.integers(m))]
    closest = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = int(rng.integers(m))
        else:
            idx = int(rng.choice(m, p=closest / total))
        chosen.append(idx)
        closest = np.minimum(closest, np.sum((points - points[idx]) ** 2, axis=1))
    return points[chosen].copy()


def _assign(points: np.ndarray, centers: np.ndarray):
    dist = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    labels = np.argmin(dist, axis=1)
    best = dist[np.arange(len(points)), labels]
    return labels, best


def build_dictionary(
    corpus: Sequence[Trajectory],
    num_anchors: int = Constants.DEFAULT_NUM_ANCHORS,
    seed: int = Constants.DEFAULT_SEED,
    max_iter: int = Constants.DEFAULT_KMEANS_MAX_ITER,
    tol: float = Constants.DEFAULT_KMEANS_TOL
) -> AnchorDictionary:
    """Cluster trajectory positions into an anchor dictionary.

    Yaw is ignored while clustering and re-derived from each centroid path.

    Args:
        corpus (Sequence[Trajectory]): The trajectories to cluster.
        num_anchors (int, optional): Number of anchors N.
            Defaults to Constants.DEFAULT_NUM_ANCHORS.
        seed (int, optional): Seed of the k-means++ initialisation.
            Defaults to Constants.DEFAULT_SEED.
        max_iter (int, optional): Lloyd iteration cap.
            Defaults to Constants.DEFAULT_KMEANS_MAX_ITER.
        tol (float, optional): Stop once no centroid moves more than this.
            Defaults to Constants.DEFAULT_KMEANS_TOL.

    Raises:
        ClusteringError: Corpus too small, mixed horizons, or inertia increased.

    Returns:
        AnchorDictionary: The anchors with corpus size, iterations and inertia
        history in the metadata.
    """
    if num_anchors < 1:
        raise ClusteringError("The number of anchors must be at least 1")
    if len(corpus) < num_anchors:
        raise ClusteringError(
            f"Corpus has {len(corpus)} trajectories, fewer than the {num_anchors} anchors requested"
        )

    horizon = len(corpus[0])
    for i, traj in enumerate(corpus):
        if len(traj) != horizon:
            raise ClusteringError(
                f"Corpus trajectory {i} has {len(traj)} steps, expected {horizon}"
            )

    points = np.stack([traj.positions().reshape(-1) for traj in corpus])
    rng = np.random.default_rng(seed)
    centers = _kmeans_plus_plus(points, num_anchors, rng)

    inertia_history: List[float] = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        labels, best = _assign(points, centers)
        inertia = float(best.sum())
        if inertia_history and inertia > inertia_history[-1] + INERTIA_SLACK * max(1.0, inertia_history[-1]):
            raise ClusteringError(
                f"K-means inertia increased at iteration {iterations}: "
                f"{inertia_history[-1]} -> {inertia}"
            )
        inertia_history.append(inertia)

        new_centers = centers.copy()
        taken = set()
        for k in range(num_anchors):
            members = labels == k
            if np.any(members):
                new_centers[k] = points[members].mean(axis=0)
                continue

            # Reseed to the point farthest from its own centroid
            order = np.argsort(-best, kind="stable")
            pick = next((int(i) for i in order if int(i) not in taken), int(order[0]))
            taken.add(pick)
            new_centers[k] = points[pick]
            if best[pick] > 0:
                LOGGER.warning(f"Anchor cluster {k} was empty, reseeded to corpus item {pick}")

        shift = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if shift < tol:
            break

    final_inertia = float(_assign(points, centers)[1].sum())
    if final_inertia > inertia_history[-1] + INERTIA_SLACK * max(1.0, inertia_history[-1]):
        raise ClusteringError(
            f"K-means inertia increased after the last update: {inertia_history[-1]} -> {final_inertia}"
        )
    inertia_history.append(final_inertia)

    anchors = np.zeros((num_anchors, horizon, 3))
    anchors[:, :, :2] = centers.reshape(num_anchors, horizon, 2)
    for k in range(num_anchors):
        anchors[k, :, 2] = headings_from_positions(anchors[k, :, :2])

    LOGGER.info(
        f"Built {num_anchors} anchors from {len(corpus)} trajectories "
        f"in {iterations} iterations (inertia {final_inertia:.4f})"
    )
    return AnchorDictionary(
        anchors,
        corpus[0].dt,
        {
            "corpus_size": len(corpus),
            "iterations": iterations,
            "inertia": final_inertia,
            "inertia_history": inertia_history,
            "seed": seed
        }
    )


def nearest_anchor(dictionary: AnchorDictionary, trajectory: Trajectory) -> int:
    """Index of the anchor with the smallest summed squared position error.

    Ties go to the lowest index.
    """
    if len(trajectory) != dictionary.horizon_steps:
        raise ShapeMismatchError(
            f"Trajectory has {len(trajectory)} steps, the dictionary {dictionary.horizon_steps}"
        )
    diff = dictionary.anchors[:, :, :2] - trajectory.positions()[None, :, :]
    return int(np.argmin(np.sum(diff ** 2, axis=(1, 2))))


def save_dictionary(dictionary: AnchorDictionary, path: Union[str, Path]) -> None:
    write_json(path, {
        "N": dictionary.size,
        "T": dictionary.horizon_steps,
        "dt": dictionary.dt,
        "anchors": dictionary.anchors.tolist(),
        "metadata": dictionary.metadata
    })
    LOGGER.info(f"Saved anchor dictionary to {path}")


def load_dictionary(path: Union[str, Path]) -> AnchorDictionary:
    """Read a dictionary written by `save_dictionary`.

    Raises:
        CheckpointError: The file is missing or malformed.
    """
    try:
        data = read_json(path)
    except FileNotFoundError:
        raise CheckpointError(f"Anchor dictionary not found: {path}. Run build-anchors first")
    except ValueError as e:
        raise CheckpointError(f"Anchor dictionary {path} is not valid JSON: {e}")

    try:
        anchors = np.asarray(data["anchors"], dtype=float)
        dictionary = AnchorDictionary(anchors, float(data["dt"]), dict(data.get("metadata", {})))
    except (KeyError, TypeError, ValueError, ShapeMismatchError) as e:
        raise CheckpointError(f"Anchor dictionary {path} is malformed: {e}")

    if dictionary.size != data.get("N") or dictionary.horizon_steps != data.get("T"):
        raise CheckpointError(f"Anchor dictionary {path} does not match its declared N and T")
    return dictionary


def arc_positions(
    speed: float,
    curvature: float,
    horizon_steps: int,
    dt: float,
    accel: float = 0.0
) -> np.ndarray:
    """Ego-frame positions of a constant-curvature drive, shape (T, 2).

    Speed changes by `accel` and never drops below zero.
    """
    t = np.arange(1, horizon_steps + 1) * dt
    if accel < 0 and speed > 0:
        stop = speed / -accel
        tc = np.minimum(t, stop)
        s = speed * tc + 0.5 * accel * tc ** 2
    elif accel < 0:
        s = np.zeros_like(t)
    else:
        s = speed * t + 0.5 * accel * t ** 2
    if abs(curvature) < 1e-12:
        return np.stack([s, np.zeros_like(s)], axis=1)
    return np.stack([np.sin(curvature * s) / curvature, (1.0 - np.cos(curvature * s)) / curvature], axis=1)


def lane_change_positions(speed: float, offset: float, horizon_steps: int, dt: float) -> np.ndarray:
    """Straight drive with a smooth lateral shift of `offset` meters."""
    t = np.arange(1, horizon_steps + 1) * dt
    duration = horizon_steps * dt
    lateral = offset * 0.5 * (1.0 - np.cos(np.pi * t / duration))
    return np.stack([speed * t, lateral], axis=1)


def synthetic_corpus(
    horizon_steps: int = Constants.DEFAULT_HORIZON_STEPS,
    dt: float = Constants.DEFAULT_DT
) -> List[Trajectory]:
    """Deterministic corpus of straights, arcs, stops and lane changes."""
    corpus: List[Trajectory] = []

    def add(positions: np.ndarray) -> None:
        values = np.zeros((horizon_steps, 3))
        values[:, :2] = positions
        values[:, 2] = headings_from_positions(positions)
        corpus.append(Trajectory.from_array(values, dt))

    for speed in (1.0, 3.0, 5.0, 8.0, 11.0, 14.0):
        for curvature in (0.0, 0.03, -0.03, 0.08, -0.08, 0.15, -0.15, 0.22, -0.22):
            if abs(curvature) * speed * horizon_steps * dt > np.pi:
                continue
            add(arc_positions(speed, curvature, horizon_steps, dt))
        for offset in (3.5, -3.5):
            if speed >= 3.0:
                add(lane_change_positions(speed, offset, horizon_steps, dt))
        add(arc_positions(speed, 0.0, horizon_steps, dt, accel=-3.0))
        add(arc_positions(speed, 0.0, horizon_steps, dt, accel=1.5))
    add(np.zeros((horizon_steps, 2)))
    return corpus
