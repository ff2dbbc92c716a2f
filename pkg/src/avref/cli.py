"""Command-line orchestration.

Subcommands: synth-data (corpus to disk), train (audio | grounding |
language), run (one instruction on one scene), eval (metric suites and
reports), gen-scene, and replay.  Every command is reproducible from
(config, seed, checkpoints).

Exit codes: 0 success, 1 runtime failure, 2 input/parse error, 3 missing
artifact.  Values in a --config file override flags, which override
built-in defaults.  AVREF_OUT sets the default output root.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from .audio import classifier as audio_cls
from .audio.synth import (
    ObjectClass,
    build_dataset,
    iter_dataset,
    write_wav,
)
from .config import RunConfig
from .episodes import no_audio_baseline, replay_outcome, run_episode
from .errors import (
    AvrefError,
    ConfigurationError,
    EvaluationError,
    MissingArtifactError,
    ParseError,
)
from .evaluation import compare_baseline, run_suite, score_episode
from .grounding import Grounder, OracleGrounder, train_grounding
from .instructions import (
    TaskKind,
    Vocabulary,
    corpus,
    parse,
    write_corpus,
    write_intents,
)
from .scene import Scene, ground_truth_for, make_scene, make_task, scene_task_set
from .seeding import derive_seed

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INPUT = 2
EXIT_MISSING = 3


def _build_config(args) -> RunConfig:
    overrides = {}
    for key in ("seed", "jobs", "out_dir"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    for key in ("train_reps", "eval_reps", "audio_epochs", "ground_epochs",
                "train_scenes", "eval_scenes", "episodes_per_cell", "snr_db"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    config = RunConfig().updated(overrides)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise MissingArtifactError(f"config file not found: {path}")
        import json

        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        # keys present in the config file win over flags
        config = config.updated(raw)
    return config


def _out_dir(config: RunConfig) -> Path:
    root = os.environ.get("AVREF_OUT", ".")
    out = Path(root) / config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    print(f"wrote {path}")


def cmd_synth_data(args) -> int:
    config = _build_config(args)
    out = _out_dir(config)
    wav_dir = out / "clips"
    wav_dir.mkdir(parents=True, exist_ok=True)
    reps = args.reps if args.reps is not None else config.protocol_reps
    rows = []
    for rec in iter_dataset(config.seed, reps, snr_db=config.snr_db):
        name = f"{rec.true_class.name}_{rec.action.name}_{rec.rep:04d}.wav"
        write_wav(wav_dir / name, rec.clip)
        rows.append((f"clips/{name}", rec.true_class.name, rec.action.name,
                     f"{rec.fill:.6f}", str(rec.seed), str(rec.clip.content_hash())))
    lines = ["path,class,action,fill,seed,sha256"]
    lines += [",".join(r) for r in rows]
    _write(out / "manifest.csv", "\n".join(lines) + "\n")
    print(f"{len(rows)} clips written under {out}")
    return EXIT_OK


def cmd_corpus(args) -> int:
    config = _build_config(args)
    out = _out_dir(config)
    pairs = corpus()
    write_corpus(out / "instructions.txt", pairs)
    write_intents(out / "intents.jsonl", pairs)
    print(f"wrote {len(pairs)} instructions under {out}")
    return EXIT_OK


def _curve_csv(curve) -> str:
    lines = ["epoch,loss"]
    lines += [f"{epoch},{loss:.6f}" for epoch, loss in curve]
    return "\n".join(lines) + "\n"


def cmd_train(args) -> int:
    config = _build_config(args)
    out = _out_dir(config)
    what = args.model

    if what == "audio":
        acfg = config.audio_config()
        records = iter_dataset(derive_seed(config.seed, "audio-train"), config.train_reps,
                               snr_db=config.snr_db)
        feats = audio_cls.extract_features(records, acfg.gate, acfg.drop_masked_frames)
        init = None
        if args.resume:
            model0, opt0 = audio_cls.load_sound_model(args.resume)
            if opt0 is None:
                raise ConfigurationError("checkpoint has no optimizer state to resume")
            init = (model0, opt0)
        model, curve, opt = audio_cls.train((feats[0], feats[1]), acfg,
                                            derive_seed(config.seed, "audio"), init=init)
        audio_cls.save_sound_model(out / "audio_model.npz", model, opt)
        _write(out / "audio_train_curve.csv", _curve_csv(curve))
        print(f"audio model saved; optimizer step {opt.step}")
        return EXIT_OK

    if what in ("grounding", "language"):
        vocab = Vocabulary.build_default()
        gcfg = config.grounder_config()
        tasks = []
        for i in range(config.train_scenes):
            arch = config.archetypes[i % len(config.archetypes)]
            tasks.extend(scene_task_set(arch, derive_seed(config.seed, "gtrain", i)))
        eval_tasks = [
            make_task(config.archetypes[i % len(config.archetypes)],
                      list(TaskKind)[i % 3], derive_seed(config.seed, "geval", i))
            for i in range(config.eval_scenes)
        ]
        model, curve, acc, skipped = train_grounding(
            tasks, vocab, gcfg, derive_seed(config.seed, "ground"), eval_tasks
        )
        model.save(out / "grounder.npz")
        _write(out / "grounding_train_curve.csv", _curve_csv(curve))
        if what == "language":
            from .nn.checkpoint import save_checkpoint

            arrays = {f"encoder/{k}": v for k, v in model.encoder.params().items()}
            save_checkpoint(out / "language_encoder.npz", arrays,
                            {"sections": ["language_encoder"], "vocab": vocab.to_json()})
        print(f"held-out selection accuracy: {acc}; skipped examples: {skipped}")
        return EXIT_OK

    raise ConfigurationError(f"unknown model kind '{what}'")


def _load_models(args, config):
    if args.oracle:
        return OracleGrounder(), audio_cls.OracleRecognizer()
    grounder = Grounder.load(args.grounding_model)
    model, _ = audio_cls.load_sound_model(args.audio_model)
    recognizer = audio_cls.RecognizerPipeline(model, config.gate_config(),
                                              config.drop_masked_frames)
    return grounder, recognizer


def cmd_run(args) -> int:
    config = _build_config(args)
    intent = parse(args.instruction)
    scene_path = Path(args.scene)
    if not scene_path.exists():
        raise MissingArtifactError(f"scene file not found: {scene_path}")
    scene = Scene.load(scene_path)
    task = ground_truth_for(scene, intent)
    grounder, recognizer = _load_models(args, config)
    trace = run_episode(task, grounder, recognizer, config.policy_config(),
                        derive_seed(config.seed, "run"))
    sys.stdout.write(trace.to_json())
    verdict = score_episode(trace, task)
    print(f"outcome: {trace.outcome}  TRA={verdict[0]} ARA={verdict[1]} OTSR={verdict[2]}")
    if args.trace_out:
        trace.save(args.trace_out)
        print(f"wrote {args.trace_out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _build_config(args)
    out = _out_dir(config)
    grounder, recognizer = _load_models(args, config)
    policy = config.policy_config()
    episodes = args.episodes if args.episodes is not None else config.episodes_per_cell
    report = run_suite(
        grounder, recognizer, policy, derive_seed(config.seed, "suite"),
        archetypes=config.archetypes, episodes_per_cell=episodes, jobs=config.jobs,
    )
    _write(out / "table_metrics.csv", report.to_table_csv())
    _write(out / "confusion.csv", report.confusion_csv())
    plot_lines = ["cell,OTSR"]
    for (arch, fam), cell in sorted(report.cells.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        plot_lines.append(f"scene{arch}-{fam.value},{cell.rates()['OTSR']:.4f}")
    _write(out / "plot_otsr.csv", "\n".join(plot_lines) + "\n")

    if args.compare_baseline:
        comparison = compare_baseline(
            grounder, recognizer, policy, derive_seed(config.seed, "baseline"),
            archetypes=(2,), episodes=episodes,
        )
        _write(out / "baseline_comparison.csv", comparison.to_csv())

    if args.audio_table:
        if args.oracle:
            recog = audio_cls.OracleRecognizer()
        else:
            recog = recognizer
        records = build_dataset(derive_seed(config.seed, "audio-eval"), config.eval_reps,
                                snr_db=config.snr_db)
        table = audio_cls.evaluate_per_action(recog, records)
        _write(out / "table_audio.csv", table.to_csv())
    return EXIT_OK


def cmd_gen_scene(args) -> int:
    config = _build_config(args)
    scene = make_scene(args.archetype, derive_seed(config.seed, "gen-scene"))
    scene.save(args.out_file)
    print(f"wrote {args.out_file}")
    if args.family:
        from .scene import task_from_scene

        task = task_from_scene(scene, TaskKind(args.family), derive_seed(config.seed, "gen-task"))
        print(f"instruction: {task.text}")
    return EXIT_OK


def cmd_replay(args) -> int:
    path = Path(args.trace)
    if not path.exists():
        raise MissingArtifactError(f"trace file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        facts = replay_outcome(fh.read())
    for key, value in sorted(facts.items()):
        print(f"{key}: {value}")
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="avref",
                                description="audio-visual referring-expression engine")
    p.add_argument("--config", help="JSON config file (overrides flags)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", dest="out_dir", default=None, help="output directory name")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-data", help="write the wave-file corpus + manifest")
    s.add_argument("--reps", type=int, default=None,
                   help="repetitions per (class, action); default = paper protocol 20")
    s.set_defaults(fn=cmd_synth_data)

    s = sub.add_parser("corpus", help="write the 612-instruction corpus")
    s.set_defaults(fn=cmd_corpus)

    s = sub.add_parser("train", help="train a model and write its checkpoint")
    s.add_argument("model", choices=["audio", "grounding", "language"])
    s.add_argument("--resume", help="audio checkpoint to continue from")
    s.add_argument("--train-reps", dest="train_reps", type=int, default=None)
    s.add_argument("--audio-epochs", dest="audio_epochs", type=int, default=None)
    s.add_argument("--ground-epochs", dest="ground_epochs", type=int, default=None)
    s.add_argument("--train-scenes", dest="train_scenes", type=int, default=None)
    s.add_argument("--eval-scenes", dest="eval_scenes", type=int, default=None)
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("run", help="run one instruction against one scene file")
    s.add_argument("--instruction", required=True)
    s.add_argument("--scene", required=True)
    s.add_argument("--audio-model", default="runs/audio_model.npz")
    s.add_argument("--grounding-model", default="runs/grounder.npz")
    s.add_argument("--oracle", action="store_true", help="use oracle models")
    s.add_argument("--trace-out", default=None)
    s.set_defaults(fn=cmd_run)

    s = sub.add_parser("eval", help="run the metric suite and write CSV reports")
    s.add_argument("--episodes", type=int, default=None, help="episodes per cell")
    s.add_argument("--audio-model", default="runs/audio_model.npz")
    s.add_argument("--grounding-model", default="runs/grounder.npz")
    s.add_argument("--oracle", action="store_true")
    s.add_argument("--compare-baseline", action="store_true")
    s.add_argument("--audio-table", action="store_true")
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("gen-scene", help="generate one archetype scene file")
    s.add_argument("--archetype", type=int, required=True)
    s.add_argument("--family", choices=[k.value for k in TaskKind], default=None)
    s.add_argument("out_file")
    s.set_defaults(fn=cmd_gen_scene)

    s = sub.add_parser("replay", help="re-verify outcomes from a stored trace")
    s.add_argument("--trace", required=True)
    s.set_defaults(fn=cmd_replay)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.fn(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (MissingArtifactError, FileNotFoundError) as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (AvrefError, EvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
