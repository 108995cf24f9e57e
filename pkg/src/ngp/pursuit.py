"""Greedy forward selection with per-candidate retraining.

Each iteration fits one predictor per remaining candidate on the current
subset plus that candidate, scores it on the validation split and keeps the
candidate with the lowest validation loss. The search stops when ``N``
features are chosen, when the relative loss improvement drops below ``eta``
(the last feature is then rolled back), or when candidates run out.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .data import DataSplit, restrict
from .predictor import PredictorSpec, TrainedPredictor, evaluate_loss, fit
from .seeds import derive_seed

log = logging.getLogger(__name__)

REACHED_N = "reached_N"
ETA_TRIGGERED = "eta_triggered"
EXHAUSTED = "exhausted_features"

TIE_RTOL = 1e-12


class CandidateError(RuntimeError):
    def __init__(self, index, cause):
        super().__init__(f"candidate {index}: {cause}")
        self.index = index
        self.cause = cause


@dataclass(frozen=True)
class NgpConfig:
    max_features: Optional[int] = None
    eta: Optional[float] = None
    predictor: PredictorSpec = field(default_factory=PredictorSpec)
    master_seed: int = 0
    parallel_candidates: int = 1
    tie_break: str = "lowest_index"
    skip_failed_candidates: bool = False
    keep_candidate_losses: bool = True

    def __post_init__(self):
        if self.max_features is None and self.eta is None:
            raise ValueError("need max_features and/or eta")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1")
        if self.eta is not None and not 0.0 <= self.eta < 1.0:
            raise ValueError("eta must lie in [0, 1)")
        if self.parallel_candidates < 1:
            raise ValueError("parallel_candidates must be >= 1")
        if self.tie_break != "lowest_index":
            raise ValueError(f"unsupported tie_break {self.tie_break!r}")


@dataclass
class TraceStep:
    k: int
    index: int
    loss: float
    added: Tuple[int, ...]
    candidates: Optional[Tuple[Tuple[int, float], ...]] = None
    label: Optional[Tuple[int, int]] = None
    rolled_back: bool = False
    model: Optional[TrainedPredictor] = field(default=None, repr=False)


@dataclass
class SelectionResult:
    selected: Tuple[int, ...]
    trace: List[TraceStep]
    stop_reason: str
    final_model: TrainedPredictor
    trainings_performed: int
    baseline_loss: float
    config: NgpConfig

    @property
    def losses(self) -> List[float]:
        """L^{S_0}, L^{S_1}, ... including a rolled-back final step."""
        return [self.baseline_loss] + [s.loss for s in self.trace]

    def to_dict(self) -> dict:
        """JSON-ready form; feature indices are 1-based."""
        trace = []
        for s in self.trace:
            rec = {"k": s.k, "index": s.index + 1, "loss": s.loss,
                   "added": [i + 1 for i in s.added]}
            if s.label is not None:
                rec["window"] = [s.label[0] + 1, s.label[1] + 1]
            if s.rolled_back:
                rec["rolled_back"] = True
            trace.append(rec)
        cfg = asdict(self.config)
        return {
            "selected": [i + 1 for i in self.selected],
            "stop_reason": self.stop_reason,
            "baseline_loss": self.baseline_loss,
            "trace": trace,
            "trainings_performed": self.trainings_performed,
            "config": cfg,
        }


@dataclass(frozen=True)
class CandidateScore:
    index: int
    loss: float
    model: Optional[TrainedPredictor] = field(default=None, repr=False, compare=False)


def _score(split: DataSplit, spec: PredictorSpec, columns: Tuple[int, ...], seed: int):
    model = fit(spec, split.train, columns, seed)
    return evaluate_loss(model, restrict(split.validation, columns)), model


def score_subsets(current: Sequence[int], additions: Dict[int, Tuple[int, ...]],
                  split: DataSplit, spec: PredictorSpec, seeds: Dict[int, int],
                  workers: int = 1, skip_failed: bool = False) -> List[CandidateScore]:
    """Fit and score ``current + additions[key]`` for every key, ascending by key."""
    current = tuple(current)
    keys = sorted(additions)

    def task(key):
        try:
            loss, model = _score(split, spec, current + tuple(additions[key]), seeds[key])
        except Exception as exc:
            if not skip_failed:
                raise CandidateError(key, exc) from exc
            log.warning("candidate %d failed (%s); scored as +inf", key, exc)
            return CandidateScore(key, math.inf)
        return CandidateScore(key, loss, model)

    if workers > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(task, keys))
    return [task(k) for k in keys]


def evaluate_candidates(current: Sequence[int], remaining, split: DataSplit,
                        spec: PredictorSpec, seeds: Dict[int, int],
                        workers: int = 1, skip_failed: bool = False) -> List[CandidateScore]:
    """Validation loss of ``current ∪ {i}`` for each ``i`` in ``remaining``."""
    remaining = sorted(int(i) for i in remaining)
    if not remaining:
        raise ValueError("no remaining candidates")
    if set(remaining) & set(current):
        raise ValueError("current and remaining overlap")
    return score_subsets(current, {i: (i,) for i in remaining}, split, spec, seeds,
                         workers, skip_failed)


def greedy_choice(candidates: Sequence, tie_break: str = "lowest_index") -> int:
    """Index with minimal loss; near-ties (1e-12 relative) go to the lowest index."""
    pairs = [(int(c[0]), float(c[1])) if isinstance(c, tuple) else (c.index, c.loss)
             for c in candidates]
    if not pairs:
        raise ValueError("empty candidate vector")
    if tie_break != "lowest_index":
        raise ValueError(f"unsupported tie_break {tie_break!r}")
    bad = [i for i, l in pairs if not math.isfinite(l)]
    if bad:
        raise ValueError(f"non-finite loss for candidates {bad}")
    best = min(l for _, l in pairs)
    return min(i for i, l in pairs if abs(l - best) <= TIE_RTOL * abs(best))


def relative_improvement(previous: float, current: float) -> float:
    if previous == 0.0:
        return 0.0
    return (previous - current) / previous


def should_stop(k: int, losses: Sequence[float], selected_count: int,
                config: NgpConfig) -> Tuple[bool, Optional[str]]:
    """Stopping rule after iteration ``k``; ``losses`` runs L^{S_0} .. L^{S_k}.

    The eta test runs first: an eta stop means the k-th feature is dropped.
    """
    if k < 1 or len(losses) < k + 1:
        raise ValueError("losses must hold L^{S_0}..L^{S_k}")
    if config.eta is not None:
        if relative_improvement(losses[k - 1], losses[k]) < config.eta:
            return True, ETA_TRIGGERED
    if config.max_features is not None and selected_count >= config.max_features:
        return True, REACHED_N
    return False, None


def _run(split: DataSplit, config: NgpConfig, candidates_fn, label_fn=None) -> SelectionResult:
    spec = config.predictor
    baseline = fit(spec, split.train, (), derive_seed(config.master_seed, 0, 0))
    baseline_loss = evaluate_loss(baseline, restrict(split.validation, ()))
    trainings = 1
    selected: List[int] = []
    trace: List[TraceStep] = []
    losses = [baseline_loss]
    k = 0
    reason = EXHAUSTED
    while True:
        additions = candidates_fn(selected)
        if not additions:
            reason = EXHAUSTED
            break
        k += 1
        seeds = {key: derive_seed(config.master_seed, k, key) for key in additions}
        scores = score_subsets(selected, additions, split, spec, seeds,
                               config.parallel_candidates, config.skip_failed_candidates)
        trainings += len(scores)
        finite = [s for s in scores if math.isfinite(s.loss)]
        if not finite:
            raise RuntimeError(f"every candidate failed at iteration {k}")
        winner_key = greedy_choice(finite, config.tie_break)
        winner = next(s for s in finite if s.index == winner_key)
        added = tuple(additions[winner_key])
        selected.extend(added)
        losses.append(winner.loss)
        trace.append(TraceStep(
            k=k, index=winner_key, loss=winner.loss, added=added,
            candidates=tuple((s.index, s.loss) for s in scores) if config.keep_candidate_losses else None,
            label=label_fn(winner_key) if label_fn else None,
            model=winner.model))
        log.debug("iteration %d: picked %d, loss %.6g", k, winner_key, winner.loss)
        stop, why = should_stop(k, losses, len(trace), config)
        if stop:
            reason = why
            if why == ETA_TRIGGERED:
                trace[-1].rolled_back = True
                del selected[len(selected) - len(added):]
            break
    kept = [s for s in trace if not s.rolled_back]
    final_model = kept[-1].model if kept else baseline
    return SelectionResult(tuple(selected), trace, reason, final_model, trainings,
                           baseline_loss, config)


def ngp_select(split: DataSplit, config: NgpConfig) -> SelectionResult:
    """Run greedy selection over single features."""
    P = split.train.n_features
    if P < 1:
        raise ValueError("dataset has no features")

    def candidates(selected):
        chosen = set(selected)
        return {i: (i,) for i in range(P) if i not in chosen}

    return _run(split, config, candidates)


def window_groups(grid: Tuple[int, int], window: Tuple[int, int],
                  stride: int) -> List[Tuple[Tuple[int, int], Tuple[int, ...]]]:
    """All window placements as ``((row, col), row-major pixel indices)``."""
    rows, cols = grid
    h, w = window
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if h < 1 or w < 1 or h > rows or w > cols:
        raise ValueError(f"window {window} does not fit grid {grid}")
    out = []
    for r0 in range(0, rows - h + 1, stride):
        for c0 in range(0, cols - w + 1, stride):
            members = tuple((r0 + a) * cols + (c0 + b) for a in range(h) for b in range(w))
            out.append(((r0, c0), members))
    return out


def ngp_group_select(split: DataSplit, grid: Tuple[int, int], window: Tuple[int, int],
                     stride: int, config: NgpConfig) -> SelectionResult:
    """Greedy selection over pixel windows; ``max_features`` counts windows.

    A winning window contributes only pixels not selected earlier; windows
    with nothing new to add drop out of the candidate pool.
    """
    rows, cols = grid
    if split.train.n_features != rows * cols:
        raise ValueError(f"P={split.train.n_features} does not match grid {grid}")
    groups = window_groups(grid, window, stride)
    used = set()

    def candidates(selected):
        chosen = set(selected)
        out = {}
        for g, (_, members) in enumerate(groups):
            if g in used:
                continue
            new = tuple(m for m in members if m not in chosen)
            if new:
                out[g] = new
        return out

    def label(g):
        used.add(g)
        return groups[g][0]

    return _run(split, config, candidates, label)
