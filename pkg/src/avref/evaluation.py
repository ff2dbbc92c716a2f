"""Episode scoring and suite-level metrics.

Three per-episode verdicts:

* TRA — every grounding decision (target selection, destination selection,
  each pick) landed on a ground-truth referent;
* ARA — every majority vote matched the probed bottle's true contents
  (vacuously true when nothing was probed);
* OTSR — TRA and ARA hold, the episode terminated normally, and the final
  object configuration satisfies the instruction's goal.

Suites aggregate cells of (scene archetype x instruction family) with Wilson
intervals, and the baseline comparison pairs audio-visual and no-audio runs
on identical scenes and seeds.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .audio.synth import ObjectClass
from .episodes import EpisodeTrace, PolicyConfig, no_audio_baseline, run_episode
from .errors import EvaluationError
from .instructions import TaskKind
from .scene import SceneTask, make_task
from .seeding import derive_seed

N_CLASSES = len(ObjectClass)


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple:
    """95% Wilson score interval for a binomial proportion."""
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def _terminal_goal_ok(trace: EpisodeTrace, task: SceneTask) -> bool:
    if trace.outcome != "success":
        return False
    kind = task.intent.kind
    placed = {b: bowl for b, bowl in trace.placements.items() if bowl is not None}
    if kind is TaskKind.EXPLORATORY:
        return not placed and trace.reported_answer == task.expected_answer
    if any(bowl != task.destination_id for bowl in placed.values()):
        return False
    at_dest = set(placed)
    if kind is TaskKind.EXISTENCE:
        return len(at_dest) == 1 and next(iter(at_dest)) in task.matching_ids
    return at_dest == set(task.matching_ids)


def score_episode(trace: EpisodeTrace, task: SceneTask) -> tuple:
    """(tra_ok, ara_ok, otsr_ok) for one terminal trace."""
    if trace.outcome == "unterminated":
        raise EvaluationError("cannot score an unterminated trace")
    if trace.outcome.startswith("aborted") or trace.outcome == "budget_exceeded":
        return (False, False, False)

    tra_ok = True
    for d in trace.decisions:
        if d.role in ("target", "pick"):
            tra_ok &= d.selected_object_id in task.referent_ids
        elif d.role == "destination":
            tra_ok &= d.selected_object_id == task.destination_id
    ara_ok = all(
        vote.final == task.scene.get(bottle_id).contents for bottle_id, vote in trace.votes
    )
    otsr_ok = tra_ok and ara_ok and _terminal_goal_ok(trace, task)
    return (bool(tra_ok), bool(ara_ok), bool(otsr_ok))


def _is_bottle(scene, object_id) -> bool:
    try:
        return scene.get(object_id).kind == "bottle"
    except KeyError:
        return False


@dataclass
class CellStats:
    n: int = 0
    tra: int = 0
    ara: int = 0
    otsr: int = 0
    aborted: int = 0

    def rates(self) -> dict:
        n = max(self.n, 1)
        out = {"n": self.n, "TRA": self.tra / n, "ARA": self.ara / n, "OTSR": self.otsr / n}
        for name, k in (("TRA", self.tra), ("ARA", self.ara), ("OTSR", self.otsr)):
            lo, hi = wilson_interval(k, self.n)
            out[f"{name}_lo"], out[f"{name}_hi"] = lo, hi
        return out


@dataclass
class MetricsReport:
    cells: dict = field(default_factory=dict)   # (archetype, family) -> CellStats
    confusion: np.ndarray = field(default_factory=lambda: np.zeros((N_CLASSES, N_CLASSES), dtype=int))

    def add(self, archetype: int, family: TaskKind, verdict: tuple, trace: EpisodeTrace,
            task: SceneTask) -> None:
        cell = self.cells.setdefault((archetype, family), CellStats())
        cell.n += 1
        tra, ara, otsr = verdict
        cell.tra += tra
        cell.ara += ara
        cell.otsr += otsr
        if trace.outcome.startswith("aborted") or trace.outcome == "budget_exceeded":
            cell.aborted += 1
        for bottle_id, vote in trace.votes:
            self.confusion[int(task.scene.get(bottle_id).contents), int(vote.final)] += 1

    def check_invariants(self) -> None:
        for (arch, fam), cell in self.cells.items():
            if cell.otsr > min(cell.tra, cell.ara):
                raise EvaluationError(
                    f"OTSR exceeds min(TRA, ARA) in cell ({arch}, {fam.value})"
                )

    def to_table_csv(self) -> str:
        lines = [
            "scene_type,instruction_type,n,TRA,ARA,OTSR,"
            "TRA_lo,TRA_hi,ARA_lo,ARA_hi,OTSR_lo,OTSR_hi,aborted"
        ]
        for (arch, fam), cell in sorted(self.cells.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
            r = cell.rates()
            lines.append(
                f"scene{arch},{fam.value},{cell.n},"
                f"{r['TRA']:.4f},{r['ARA']:.4f},{r['OTSR']:.4f},"
                f"{r['TRA_lo']:.4f},{r['TRA_hi']:.4f},{r['ARA_lo']:.4f},{r['ARA_hi']:.4f},"
                f"{r['OTSR_lo']:.4f},{r['OTSR_hi']:.4f},{cell.aborted}"
            )
        return "\n".join(lines) + "\n"

    def confusion_csv(self) -> str:
        names = [c.name for c in ObjectClass]
        lines = ["true\\voted," + ",".join(names)]
        for i, row in enumerate(self.confusion):
            lines.append(names[i] + "," + ",".join(str(int(x)) for x in row))
        return "\n".join(lines) + "\n"


def run_cell(archetype: int, family: TaskKind, episodes: int, grounder, recognizer,
             config: PolicyConfig, seed: int):
    """Episode verdicts for one (archetype, family) cell; yields per episode."""
    for e in range(episodes):
        task = make_task(archetype, family, derive_seed(seed, "task", archetype, family.value, e))
        trace = run_episode(task, grounder, recognizer, config,
                            derive_seed(seed, "ep", archetype, family.value, e))
        yield task, trace, score_episode(trace, task)


_POOL_STATE = {}


def _pool_init(grounder, recognizer, config, seed):
    _POOL_STATE.update(grounder=grounder, recognizer=recognizer, config=config, seed=seed)


def _pool_episode(spec):
    archetype, family_value, e = spec
    family = TaskKind(family_value)
    seed = _POOL_STATE["seed"]
    task = make_task(archetype, family, derive_seed(seed, "task", archetype, family_value, e))
    trace = run_episode(task, _POOL_STATE["grounder"], _POOL_STATE["recognizer"],
                        _POOL_STATE["config"], derive_seed(seed, "ep", archetype, family_value, e))
    return task, trace, score_episode(trace, task)


def run_suite(grounder, recognizer, config: PolicyConfig, seed: int,
              archetypes=(1, 2, 3, 4, 5, 6),
              families=(TaskKind.EXISTENCE, TaskKind.CLASSIFICATION, TaskKind.EXPLORATORY),
              episodes_per_cell: int = 144, jobs: int = 1) -> MetricsReport:
    """The full evaluation protocol; aggregation is order-independent."""
    report = MetricsReport()
    if jobs <= 1:
        for archetype in archetypes:
            for family in families:
                for task, trace, verdict in run_cell(
                    archetype, family, episodes_per_cell, grounder, recognizer, config, seed
                ):
                    report.add(archetype, family, verdict, trace, task)
    else:
        specs = [
            (archetype, family.value, e)
            for archetype in archetypes
            for family in families
            for e in range(episodes_per_cell)
        ]
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_pool_init,
            initargs=(grounder, recognizer, config, seed),
        ) as pool:
            for spec, result in zip(specs, pool.map(_pool_episode, specs, chunksize=16)):
                task, trace, verdict = result
                report.add(spec[0], TaskKind(spec[1]), verdict, trace, task)
    report.check_invariants()
    return report


@dataclass
class BaselineComparison:
    rows: list = field(default_factory=list)  # per-archetype dicts

    def to_csv(self) -> str:
        cols = (
            "scene_type,instruction_type,n,av_OTSR,av_lo,av_hi,"
            "na_OTSR,na_lo,na_hi,diff,diff_lo,diff_hi,av_TRA,av_ARA,na_TRA"
        )
        lines = [cols]
        for r in self.rows:
            lines.append(
                f"scene{r['archetype']},{r['family'].value},{r['n']},"
                f"{r['av_otsr']:.4f},{r['av_lo']:.4f},{r['av_hi']:.4f},"
                f"{r['na_otsr']:.4f},{r['na_lo']:.4f},{r['na_hi']:.4f},"
                f"{r['diff']:.4f},{r['diff_lo']:.4f},{r['diff_hi']:.4f},"
                f"{r['av_tra']:.4f},{r['av_ara']:.4f},{r['na_tra']:.4f}"
            )
        return "\n".join(lines) + "\n"


def compare_baseline(grounder, recognizer, config: PolicyConfig, seed: int,
                     archetypes=(2,), family: TaskKind = TaskKind.EXISTENCE,
                     episodes: int = 1000) -> BaselineComparison:
    """Paired audio-visual vs no-audio arms on identical scenes and seeds.

    The paired difference interval is a normal approximation over per-episode
    OTSR differences; per-arm intervals are Wilson.
    """
    comparison = BaselineComparison()
    for archetype in archetypes:
        diffs = []
        av = CellStats()
        na = CellStats()
        for e in range(episodes):
            task = make_task(archetype, family, derive_seed(seed, "pair-task", archetype, e))
            ep_seed = derive_seed(seed, "pair-ep", archetype, e)
            t_av = run_episode(task, grounder, recognizer, config, ep_seed)
            t_na = no_audio_baseline(task, grounder, config, ep_seed)
            v_av = score_episode(t_av, task)
            v_na = score_episode(t_na, task)
            for cell, v in ((av, v_av), (na, v_na)):
                cell.n += 1
                cell.tra += v[0]
                cell.ara += v[1]
                cell.otsr += v[2]
            diffs.append(int(v_av[2]) - int(v_na[2]))
        d = np.array(diffs, dtype=np.float64)
        half = 1.959963984540054 * d.std(ddof=1) / math.sqrt(len(d)) if len(d) > 1 else 1.0
        av_lo, av_hi = wilson_interval(av.otsr, av.n)
        na_lo, na_hi = wilson_interval(na.otsr, na.n)
        comparison.rows.append({
            "archetype": archetype,
            "family": family,
            "n": episodes,
            "av_otsr": av.otsr / av.n,
            "av_lo": av_lo,
            "av_hi": av_hi,
            "na_otsr": na.otsr / na.n,
            "na_lo": na_lo,
            "na_hi": na_hi,
            "diff": float(d.mean()),
            "diff_lo": float(d.mean() - half),
            "diff_hi": float(d.mean() + half),
            "av_tra": av.tra / av.n,
            "av_ara": av.ara / av.n,
            "na_tra": na.tra / na.n,
        })
    return comparison
