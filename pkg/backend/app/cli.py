"""
Linha de comando do simulador.

    python -m app <subcomando> [--config arquivo.env] [--preset nome] [--seed n] [--out dir]
"""
import argparse
import logging
from pathlib import Path
from typing import List, Optional

from .core.config import PRESETS, ExperimentConfig, load_experiment, settings
from .core.exceptions import EXIT_CONFIG, EXIT_OK, ConfigError, DntError
from .core.logging_setup import setup_logging
from .core.rng import RngStreams
from .schemas.schemas import CurveRow, EvaluationReport
from .services import artifacts
from .services.experiments import (
    SWEEP_AXES,
    compare_methods,
    evaluate,
    generate_dataset,
    prepare_predictor,
    sweep,
    train_marl,
)
from .services.harness import fuzz_audit, make_policy
from .services.marl import load_agents, save_agents
from .services.mobility import load_trajectories_csv, save_trajectories_csv
from .services.predictor import PredictorModel, load_predictor, save_predictor

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dnt-sync", description="Sincronização de gêmeo digital de rede com VDN/IQL")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="arquivo .env com a configuração")
    common.add_argument("--preset", choices=PRESETS, help="preset embutido")
    common.add_argument("--seed", type=int, help="semente mestre (sobrepõe a configuração)")
    common.add_argument("--out", type=Path, default=Path("out"), help="diretório de saída")
    common.add_argument("--log-level", default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--registry", action="store_true", help="registra a execução no banco")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="gera trajectories.csv")

    p = sub.add_parser("train-predictor", parents=[common], help="treina o preditor GRU")
    p.add_argument("--data", type=Path, help="trajectories.csv existente")

    for method in ("vdn", "iql"):
        p = sub.add_parser(f"train-{method}", parents=[common], help=f"treina os agentes com {method.upper()}")
        p.add_argument("--predictor", type=Path, help="checkpoint do preditor; treina um novo se omitido")

    p = sub.add_parser("evaluate", parents=[common], help="avalia agentes treinados ou uma política fixa")
    p.add_argument("--checkpoints", type=Path, help="diretório com agent_<m>.json")
    p.add_argument("--baseline", type=Path, help="segundo diretório de agentes para comparação")
    p.add_argument("--policy", choices=["random", "all-sync", "no-sync"], help="política roteirizada")
    p.add_argument("--predictor", type=Path, help="checkpoint do preditor")
    p.add_argument("--episodes", type=int, help="número de episódios")

    p = sub.add_parser("sweep", parents=[common], help="varre epsilon ou número de usuários")
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", required=True, help="lista separada por vírgulas, ex.: 0.25,0.3,0.8")
    p.add_argument("--no-predictor", action="store_true", help="gêmeo por persistência em vez do GRU")

    p = sub.add_parser("audit", parents=[common], help="audita as restrições com política aleatória")
    p.add_argument("--slots", type=int, default=10_000)
    return parser


def _config(args) -> ExperimentConfig:
    overrides = {"SEED": args.seed} if args.seed is not None else {}
    return load_experiment(args.config, args.preset, **overrides)


def _predictor(path: Optional[Path], config: ExperimentConfig, rngs: RngStreams, out: Path) -> PredictorModel:
    if path is not None:
        return load_predictor(path)
    model, curve, report = prepare_predictor(config, rngs)
    save_predictor(out / "predictor.json", model)
    artifacts.write_predictor_curve(out / "predictor_curve.csv", curve)
    artifacts.write_json(out / "predictor_report.json", report)
    return model


def _record(args, config: ExperimentConfig, kind: str, method: Optional[str], curve: List[CurveRow], summary_json: Optional[str]) -> None:
    if not args.registry:
        return
    from .db.base import Base
    from .db.session import SessionLocal, engine
    from .services import registry

    Base.metadata.create_all(bind=engine)
    db = SessionLocal()
    try:
        run = registry.create_run(db, kind, config.seed, config.model_dump_json(), method=method)
        registry.add_epoch_metrics(db, run, curve)
        registry.finish_run(db, run, "done", summary_json)
    finally:
        db.close()


def cmd_gen_data(args, config: ExperimentConfig, rngs: RngStreams) -> None:
    save_trajectories_csv(generate_dataset(config, rngs), args.out / "trajectories.csv")


def cmd_train_predictor(args, config: ExperimentConfig, rngs: RngStreams) -> None:
    trajectories = load_trajectories_csv(args.data) if args.data else None
    model, curve, report = prepare_predictor(config, rngs, trajectories)
    save_predictor(args.out / "predictor.json", model)
    artifacts.write_predictor_curve(args.out / "predictor_curve.csv", curve)
    artifacts.write_json(args.out / "predictor_report.json", report)
    _record(args, config, "train-predictor", None, [], report.model_dump_json())


def cmd_train(args, config: ExperimentConfig, rngs: RngStreams, method: str) -> None:
    predictor = _predictor(args.predictor, config, rngs, args.out)
    run = train_marl(config, method, predictor, rngs)
    save_agents(args.out / "agents", run.nets, {"num_users": float(config.num_users)})
    artifacts.write_curve(args.out / "curve.csv", run.curve)
    summary, results = evaluate(config, make_policy("learned", config, run.nets), predictor, rngs, method=method)
    artifacts.write_trace(args.out / "trace.csv", [r for result in results for r in result.records])
    report = EvaluationReport(summaries={method: summary})
    artifacts.write_json(args.out / "summary.json", report)
    _record(args, config, "train", method, run.curve, report.model_dump_json())


def cmd_evaluate(args, config: ExperimentConfig, rngs: RngStreams) -> None:
    if (args.checkpoints is None) == (args.policy is None):
        raise ConfigError("informe exatamente um entre --checkpoints e --policy")
    predictor = load_predictor(args.predictor) if args.predictor else None
    summaries = {}
    traces = []
    if args.policy:
        summary, results = evaluate(config, make_policy(args.policy, config), predictor, rngs, args.episodes)
        summaries[args.policy] = summary
        traces = results
    else:
        summary, traces = evaluate(config, make_policy("learned", config, load_agents(args.checkpoints)), predictor, rngs, args.episodes, method="agents")
        summaries["agents"] = summary
        if args.baseline:
            baseline, _ = evaluate(config, make_policy("learned", config, load_agents(args.baseline)), predictor, rngs, args.episodes, method="baseline")
            summaries["baseline"] = baseline
    comparison = compare_methods(summaries["agents"], summaries["baseline"]) if "baseline" in summaries else None
    report = EvaluationReport(summaries=summaries, comparison=comparison)
    artifacts.write_trace(args.out / "trace.csv", [r for result in traces for r in result.records])
    artifacts.write_json(args.out / "summary.json", report)
    _record(args, config, "evaluate", args.policy, [], report.model_dump_json())


def cmd_sweep(args, config: ExperimentConfig, rngs: RngStreams) -> None:
    values = [float(v) for v in args.values.split(",") if v.strip()]
    rows = sweep(config, args.axis, values, rngs, use_predictor=not args.no_predictor)
    artifacts.write_sweep(args.out / "sweep.csv", rows)
    _record(args, config, "sweep", args.axis, [], None)


def cmd_audit(args, config: ExperimentConfig, rngs: RngStreams) -> None:
    report = fuzz_audit(config, args.slots, rngs)
    artifacts.write_json(args.out / "audit.json", report)
    _record(args, config, "audit", None, [], report.model_dump_json())


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level or settings.LOG_LEVEL)
    try:
        config = _config(args)
        rngs = RngStreams(config.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "gen-data":
            cmd_gen_data(args, config, rngs)
        elif args.command == "train-predictor":
            cmd_train_predictor(args, config, rngs)
        elif args.command in ("train-vdn", "train-iql"):
            cmd_train(args, config, rngs, args.command.split("-")[1])
        elif args.command == "evaluate":
            cmd_evaluate(args, config, rngs)
        elif args.command == "sweep":
            cmd_sweep(args, config, rngs)
        elif args.command == "audit":
            cmd_audit(args, config, rngs)
    except DntError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    except FileNotFoundError as exc:
        logger.error("Arquivo não encontrado: %s", exc)
        return EXIT_CONFIG
    return EXIT_OK
