#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Stage orchestration behind the command line: dataset generation, anchor
building, training, planning, batch evaluation and the summary table.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import (Any, Callable, Dict, List, Mapping, NamedTuple, Optional,
                    Sequence, TypeVar, Union)

import numpy as np

from backend.base.custom_exceptions import (DictionaryMismatchError,
                                            EmptyDatasetError,
                                            MissingReportError,
                                            OutputFolderError,
                                            ScenarioValidationError)
from backend.base.definitions import METRIC_COLUMNS, Config, Constants
from backend.base.helpers import (ensure_dir_exists, list_scenario_files,
                                  read_json, stable_seed, write_json)
from backend.base.logging import LOGGER
from backend.features.anchors import (AnchorDictionary, build_dictionary,
                                      load_dictionary, save_dictionary,
                                      synthetic_corpus)
from backend.features.bev import BevGrid, render_bev
from backend.features.decoder import (CandidateSet, DecoderConfig,
                                      DecoderModel, generate_candidates,
                                      load_decoder, save_decoder,
                                      train_decoder)
from backend.features.epdms import MetricReport, evaluate_many
from backend.features.epdms.reports import (CANDIDATE_COLUMNS,
                                            PREDICTION_COLUMNS,
                                            SUMMARY_COLUMNS, write_csv)
from backend.features.mining import detect_hard_case, save_reports, upsample
from backend.features.postproc import FilterResult, filter_candidates
from backend.features.scene.io import load_scenario, trajectory_to_dict
from backend.features.scene.types import Scenario, Trajectory
from backend.features.scorer import (ScorePrediction, ScorerConfig,
                                     ScorerModel, load_scorer, save_scorer,
                                     score_batch, train_scorer)
from backend.features.synthetic import write_dataset

T = TypeVar("T")
R = TypeVar("R")


class PlanOptions(NamedTuple):
    """Ablation switches of plan and evaluate."""
    use_scorer: bool = True
    use_postproc: bool = True
    layers: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "use_scorer": self.use_scorer,
            "use_postproc": self.use_postproc,
            "layers": self.layers
        }


@dataclass
class Models:
    dictionary: AnchorDictionary
    decoder: DecoderModel
    scorer: Optional[ScorerModel] = None


@dataclass
class PlanResult:
    """Everything decided for one scenario."""
    scenario_id: str
    candidates: CandidateSet
    scores: List[float]
    predictions: Optional[List[ScorePrediction]]
    chosen: int
    fallback: bool
    filter: Optional[FilterResult] = None

    @property
    def trajectory(self) -> Trajectory:
        return self.candidates.trajectories[self.chosen]


@dataclass
class EvalSummary:
    """Per-scenario rows (filtered metrics and the score) and their column means."""
    rows: List[Dict[str, Any]]
    options: Dict[str, Any] = field(default_factory=dict)

    @property
    def means(self) -> Dict[str, float]:
        if not self.rows:
            return {c: 0.0 for c in METRIC_COLUMNS}
        return {
            c: math.fsum(float(row[c]) for row in self.rows) / len(self.rows)
            for c in METRIC_COLUMNS
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenarios": [dict(row) for row in self.rows],
            "means": self.means,
            "options": dict(self.options)
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EvalSummary":
        """Rebuild from `to_dict` output; stored means are ignored and recomputed."""
        return cls([dict(row) for row in data.get("scenarios", [])], dict(data.get("options", {})))


def _make_folder(folder: Union[str, Path]) -> None:
    if not ensure_dir_exists(folder):
        raise OutputFolderError(f"Could not create folder {folder}")


def _fan_out(func: Callable[[T], R], items: Sequence[T], workers: int) -> List[R]:
    """Map in input order, over a thread pool when more than one worker is allowed."""
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))


def load_dataset(folder: Union[str, Path], config: Config) -> List[Scenario]:
    """Load every scenario file of a folder, sorted by file name.

    Raises:
        EmptyDatasetError: The folder does not exist or holds no scenarios.
    """
    files = list_scenario_files(folder)
    if not files:
        raise EmptyDatasetError(f"No scenario files found in {folder}")
    scenarios = [load_scenario(f, config.horizon_steps) for f in files]

    seen: Dict[str, Path] = {}
    for path, scenario in zip(files, scenarios):
        if scenario.id in seen:
            raise ScenarioValidationError("id", f"duplicates the id of {seen[scenario.id]}", str(path))
        seen[scenario.id] = path
    LOGGER.info(f"Loaded {len(scenarios)} scenarios from {folder}")
    return scenarios


def render_grids(scenarios: Sequence[Scenario], config: Config) -> Dict[str, BevGrid]:
    grids = _fan_out(
        lambda s: render_bev(s, config.bev_extent, config.bev_resolution),
        scenarios,
        config.workers
    )
    return {s.id: g for s, g in zip(scenarios, grids)}


def check_dictionary(dictionary: AnchorDictionary, config: Config) -> None:
    if dictionary.size != config.num_anchors:
        raise DictionaryMismatchError(
            f"Anchor dictionary has {dictionary.size} anchors but num_anchors is "
            f"{config.num_anchors}. Rebuild it with build-anchors"
        )
    if dictionary.horizon_steps != config.horizon_steps:
        raise DictionaryMismatchError(
            f"Anchor dictionary has {dictionary.horizon_steps} steps but horizon_steps is "
            f"{config.horizon_steps}. Rebuild it with build-anchors"
        )


# =====================
# Commands
# =====================

def cmd_gen_synthetic(out_dir: Union[str, Path], count: int, seed: int, config: Config = Config()) -> List[Path]:
    return write_dataset(out_dir, count, seed, config)


def cmd_build_anchors(
    model_dir: Union[str, Path],
    config: Config,
    dataset_dir: Optional[Union[str, Path]] = None
) -> AnchorDictionary:
    """Cluster the built-in trajectory corpus, plus the human trajectories of
    a dataset when one is given, into `num_anchors` anchors.

    Args:
        model_dir (Union[str, Path]): Folder receiving the anchor file.
        config (Config): Horizon, anchor count and k-means settings.
        dataset_dir (Optional[Union[str, Path]], optional): Dataset whose
        human trajectories join the corpus.
            Defaults to None.

    Returns:
        AnchorDictionary: The saved dictionary.
    """
    corpus = synthetic_corpus(config.horizon_steps, config.dt)
    if dataset_dir is not None:
        corpus += [s.human_trajectory for s in load_dataset(dataset_dir, config)]
    LOGGER.info(f"Clustering {len(corpus)} trajectories into {config.num_anchors} anchors")

    dictionary = build_dictionary(
        corpus, config.num_anchors, config.seed, config.kmeans_max_iter, config.kmeans_tol
    )
    _make_folder(model_dir)
    save_dictionary(dictionary, Path(model_dir) / Constants.ANCHORS_FILE)
    return dictionary


def cmd_train(
    dataset_dir: Union[str, Path],
    model_dir: Union[str, Path],
    config: Config,
    mining: bool = True
) -> Dict[str, List[float]]:
    """Train the decoder, then the scorer on the frozen decoder's candidates.

    Args:
        dataset_dir (Union[str, Path]): Training scenarios.
        model_dir (Union[str, Path]): Holds the anchors; receives the
        checkpoints and the hard case reports.
        config (Config): Model and training settings.
        mining (bool, optional): Upsample hard scenarios.
            Defaults to True.

    Raises:
        CheckpointError: No anchor dictionary in `model_dir`.
        DictionaryMismatchError: The dictionary does not fit the config.

    Returns:
        Dict[str, List[float]]: Loss history per model.
    """
    model_dir = Path(model_dir)
    dictionary = load_dictionary(model_dir / Constants.ANCHORS_FILE)
    check_dictionary(dictionary, config)
    scenarios = load_dataset(dataset_dir, config)
    grids = render_grids(scenarios, config)

    reports = [detect_hard_case(s, config.mining_curvature, config.mining_lateral_offset) for s in scenarios]
    save_reports(reports, model_dir / Constants.MINING_REPORT_NAME)
    schedule = None
    if mining:
        schedule = upsample(sorted(s.id for s in scenarios), {r.scenario_id: r for r in reports}, config.upsample_factor)
        LOGGER.info(f"Training schedule holds {len(schedule)} visits for {len(scenarios)} scenarios")

    decoder = DecoderModel.create(DecoderConfig.from_config(config), config.seed)
    decoder, decoder_history = train_decoder(decoder, scenarios, dictionary, config, schedule, grids)
    save_decoder(decoder, model_dir / Constants.DECODER_CHECKPOINT)

    scorer = ScorerModel.create(ScorerConfig.from_config(config), stable_seed(config.seed, "scorer"))
    scorer, scorer_history = train_scorer(scorer, scenarios, dictionary, decoder, config, schedule, grids)
    save_scorer(scorer, model_dir / Constants.SCORER_CHECKPOINT)

    LOGGER.info(f"Saved decoder and scorer checkpoints to {model_dir}")
    return {"decoder": decoder_history, "scorer": scorer_history}


def load_models(model_dir: Union[str, Path], config: Config, with_scorer: bool = True) -> Models:
    """Load the anchors and checkpoints written by build-anchors and train."""
    model_dir = Path(model_dir)
    dictionary = load_dictionary(model_dir / Constants.ANCHORS_FILE)
    check_dictionary(dictionary, config)
    decoder = load_decoder(model_dir / Constants.DECODER_CHECKPOINT)
    scorer = load_scorer(model_dir / Constants.SCORER_CHECKPOINT) if with_scorer else None
    return Models(dictionary, decoder, scorer)


def random_scores(scenario_id: str, count: int, seed: int) -> List[float]:
    """Seeded uniform scores replacing the scorer; independent of processing order."""
    rng = np.random.default_rng(stable_seed(seed, f"random:{scenario_id}"))
    return [float(v) for v in rng.random(count)]


def plan_scenario(
    scenario: Scenario,
    models: Models,
    config: Config,
    options: PlanOptions = PlanOptions(),
    grid: Optional[BevGrid] = None
) -> PlanResult:
    """Generate, score, filter and select a trajectory for one scenario.

    Args:
        scenario (Scenario): The scene.
        models (Models): Anchors, decoder and (unless disabled) the scorer.
        config (Config): BEV, envelope and seed settings.
        options (PlanOptions, optional): Ablation switches.
            Defaults to PlanOptions().
        grid (Optional[BevGrid], optional): Pre-rendered BEV grid.
            Defaults to rendering it here.

    Returns:
        PlanResult: Candidates, scores and the decision.
    """
    if grid is None:
        grid = render_bev(scenario, config.bev_extent, config.bev_resolution)
    candidates = generate_candidates(models.decoder, models.dictionary, grid, options.layers)

    predictions: Optional[List[ScorePrediction]] = None
    if options.use_scorer and models.scorer is not None:
        predictions = score_batch(models.scorer, candidates, grid)
        scores = [p.epdms for p in predictions]
    else:
        scores = random_scores(scenario.id, len(candidates), config.seed)

    if options.use_postproc:
        result = filter_candidates(candidates, scores, scenario, config)
        chosen, fallback = result.chosen, result.fallback
    else:
        result = None
        chosen, fallback = int(np.argmax(scores)), False

    LOGGER.debug(f"Scenario {scenario.id}: chose candidate {chosen} of {len(candidates)}")
    return PlanResult(scenario.id, candidates, scores, predictions, chosen, fallback, result)


def _plan_dict(plan: PlanResult, options: PlanOptions) -> Dict[str, Any]:
    return {
        "scenario_id": plan.scenario_id,
        "chosen": plan.chosen,
        "fallback": plan.fallback,
        "trajectory": trajectory_to_dict(plan.trajectory),
        "options": options.to_dict()
    }


def cmd_plan(
    dataset_dir: Union[str, Path],
    model_dir: Union[str, Path],
    out_dir: Union[str, Path],
    config: Config,
    options: PlanOptions = PlanOptions()
) -> List[Path]:
    """Write `<scenario_id>.json` with the chosen trajectory for every scenario."""
    models = load_models(model_dir, config, options.use_scorer)
    scenarios = load_dataset(dataset_dir, config)
    plans = _fan_out(lambda s: plan_scenario(s, models, config, options), scenarios, config.workers)

    out_dir = Path(out_dir)
    _make_folder(out_dir)
    paths = []
    for plan in plans:
        path = out_dir / f"{plan.scenario_id}.json"
        write_json(path, _plan_dict(plan, options))
        paths.append(path)
    LOGGER.info(f"Wrote {len(paths)} plans to {out_dir}")
    return paths


@dataclass
class _Evaluated:
    plan: PlanResult
    reports: List[MetricReport]

    @property
    def chosen_report(self) -> MetricReport:
        return self.reports[self.plan.chosen]


def _evaluate_scenario(scenario: Scenario, models: Models, config: Config, options: PlanOptions) -> _Evaluated:
    plan = plan_scenario(scenario, models, config, options)
    return _Evaluated(plan, evaluate_many(scenario, plan.candidates.trajectories, config))


def _candidate_rows(item: _Evaluated) -> List[Dict[str, Any]]:
    plan = item.plan
    rows = []
    for i, report in enumerate(item.reports):
        row: Dict[str, Any] = {"scenario_id": plan.scenario_id, "candidate": i}
        if plan.predictions is not None:
            row.update(zip(PREDICTION_COLUMNS, plan.predictions[i]))
        else:
            row.update({c: "" for c in PREDICTION_COLUMNS})
            row["pred_epdms"] = plan.scores[i]
        row.update({f"agent_{name}": value for name, value in report.agent._asdict().items()})

        reasons = plan.filter.reasons[i] if plan.filter is not None else []
        row.update({
            "epdms": report.epdms,
            "survived": not reasons,
            "discard_reasons": [r.value for r in reasons],
            "chosen": i == plan.chosen
        })
        rows.append(row)
    return rows


def _summary_row(item: _Evaluated) -> Dict[str, Any]:
    report = item.chosen_report
    row: Dict[str, Any] = {
        "scenario_id": item.plan.scenario_id,
        "chosen": item.plan.chosen,
        "fallback": item.plan.fallback
    }
    row.update(report.filtered._asdict())
    row["epdms"] = report.epdms
    return row


def cmd_evaluate(
    dataset_dir: Union[str, Path],
    model_dir: Union[str, Path],
    out_dir: Union[str, Path],
    config: Config,
    options: PlanOptions = PlanOptions()
) -> EvalSummary:
    """Plan every scenario and score the choice with the metric oracle.

    Writes reports/<scenario_id>.json, candidates.csv, summary.csv and
    summary.json into `out_dir`.

    Args:
        dataset_dir (Union[str, Path]): The benchmark scenarios.
        model_dir (Union[str, Path]): Anchors and checkpoints.
        out_dir (Union[str, Path]): Output folder.
        config (Config): All settings.
        options (PlanOptions, optional): Ablation switches.
            Defaults to PlanOptions().

    Returns:
        EvalSummary: Per-scenario rows and their means.
    """
    models = load_models(model_dir, config, options.use_scorer)
    scenarios = load_dataset(dataset_dir, config)
    results = _fan_out(lambda s: _evaluate_scenario(s, models, config, options), scenarios, config.workers)

    out_dir = Path(out_dir)
    reports_dir = out_dir / Constants.REPORTS_FOLDER
    _make_folder(reports_dir)
    for item in results:
        data = _plan_dict(item.plan, options)
        data["report"] = item.chosen_report.to_dict()
        data["filter"] = item.plan.filter.to_dict() if item.plan.filter is not None else None
        write_json(reports_dir / f"{item.plan.scenario_id}.json", data)

    write_csv(
        out_dir / Constants.CANDIDATES_CSV,
        CANDIDATE_COLUMNS,
        (row for item in results for row in _candidate_rows(item))
    )

    summary = EvalSummary([_summary_row(item) for item in results], options.to_dict())
    mean_row = {"scenario_id": "MEAN", "chosen": "", "fallback": sum(bool(r["fallback"]) for r in summary.rows)}
    mean_row.update(summary.means)
    write_csv(out_dir / Constants.SUMMARY_CSV, SUMMARY_COLUMNS, summary.rows + [mean_row])
    write_json(out_dir / Constants.SUMMARY_JSON, summary.to_dict())

    LOGGER.info(f"Evaluated {len(results)} scenarios: mean EPDMS {summary.means['epdms']:.4f}")
    return summary


def render_table(summary: EvalSummary) -> str:
    """Column means as percentages, one column per metric."""
    header = " ".join(f"{c.upper():>7}" for c in METRIC_COLUMNS)
    means = summary.means
    values = " ".join(f"{100.0 * means[c]:>7.2f}" for c in METRIC_COLUMNS)
    return f"{header}\n{values}\n({len(summary.rows)} scenarios)"


def cmd_report(summary_path: Union[str, Path]) -> str:
    """Render the text table of a summary.json, or of the summary.json in a folder.

    Raises:
        MissingReportError: The summary file does not exist or is malformed.
    """
    path = Path(summary_path)
    if path.is_dir():
        path = path / Constants.SUMMARY_JSON
    if not path.is_file():
        raise MissingReportError(f"No evaluation summary at {path}. Run evaluate first")
    try:
        return render_table(EvalSummary.from_dict(read_json(path)))
    except (ValueError, KeyError, TypeError, AttributeError) as e:
        raise MissingReportError(f"Evaluation summary {path} is malformed: {e}")
