# lib/experiment.py
# ============================================================
# サブコマンドの本体（tools/tempering_cli.py から呼ぶ）
#   cmd_run       : 軌道 → trajectory.csv / summary.csv / av.csv (+ histogram / free_energy)
#   cmd_adapt     : 重み因子の反復推定 → adapt_history.csv / ladder.csv
#   cmd_ldp       : レート汎関数 → ldp.csv
#   cmd_reference : 求積オラクル → reference.csv / reference_density.csv / ladder.csv
# どのコマンドも manifest.toml（解決済み設定 + seed + バージョン）を書く。
# ============================================================
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Mapping, Optional, Tuple

import numpy as np

from config.experiment_config import (
    ExperimentConfig,
    HistogramConfig,
    load_config,
)
from config.path_config import get_outputs_root
from lib import __version__
from lib.adaptive import AdaptState, adapt_loop, history_rows
from lib.csv_io import read_ladder, write_csv, write_ladder, write_manifest, write_rows
from lib.dynamics import (
    IntegratorParams,
    LangevinState,
    OverdampedState,
    Schedule,
    State,
    TrajectoryRecord,
    merge_records,
    run_replicas,
    run_trajectory,
)
from lib.errors import ConfigurationError
from lib.estimators import (
    batch_asymptotic_variance,
    free_energy_profile,
    histogram,
    l1_distance,
    quadrature_reference,
    summarize_observables,
)
from lib.ldp import LdpCase, equilibrium_density, evaluate_rates, load_grid_density, standard_cases
from lib.potentials import MODEL_REGISTRY, DoubleWellD, Harmonic, PotentialModel
from lib.tempering import TemperatureLadder

logger = logging.getLogger(__name__)

COMMANDS = ("run", "adapt", "ldp", "reference")


@dataclass
class Artifacts:
    out_dir: Path
    files: List[Path] = field(default_factory=list)

    def add(self, path: Path) -> Path:
        self.files.append(path)
        return path


@dataclass(frozen=True)
class Overrides:
    """CLI フラグ（環境変数・設定ファイルより優先）。"""

    seed: Optional[int] = None
    out: Optional[Path] = None
    replicas: int = 1
    progress: bool = False


# ============================================================
# 組み立て
# ============================================================

def build_model(cfg: ExperimentConfig) -> PotentialModel:
    """[model] の name で MODEL_REGISTRY から引き、残りのキーをそのまま渡す。"""
    params = cfg.model.model_dump(exclude={"name"})
    if "stiffness" in params:
        params["stiffness"] = tuple(params["stiffness"])
    try:
        cls = MODEL_REGISTRY[cfg.model.name]
    except KeyError:
        raise ConfigurationError(f"未知のモデル: {cfg.model.name}", field="model.name") from None
    return cls(**params)


def oracle_ladder(cfg: ExperimentConfig, model: PotentialModel) -> TemperatureLadder:
    """n_k = 1/Z_k（求積）。分離可能モデルのみ。"""
    template = TemperatureLadder.uniform(cfg.ladder.resolved_betas())
    ref = quadrature_reference(
        model, template, half_width=cfg.reference.half_width, n_points=cfg.reference.n_points
    )
    return TemperatureLadder.from_log_partition(template.betas, ref.log_Z)


def build_ladder(cfg: ExperimentConfig, model: PotentialModel, *, config_dir: Path = Path(".")) -> TemperatureLadder:
    """log_n = "adaptive" はここでは一様のひな形を返す（cmd_run が先に adapt_loop を回す）。"""
    betas = cfg.ladder.resolved_betas()
    mode = cfg.ladder.log_n
    if isinstance(mode, list):
        return TemperatureLadder(np.asarray(betas), np.asarray(mode))
    if mode in ("uniform", "adaptive"):
        return TemperatureLadder.uniform(betas)
    if mode == "oracle":
        return oracle_ladder(cfg, model)
    # file
    path = Path(cfg.ladder.file or "")
    if not path.is_absolute():
        path = config_dir / path
    try:
        ladder = read_ladder(path)
    except (OSError, ValueError) as e:
        raise ConfigurationError(f"ladder ファイルを読めません: {path} ({e})", field="ladder.file") from e
    if ladder.size != len(betas) or not np.allclose(ladder.betas, betas, rtol=1e-12, atol=0.0):
        raise ConfigurationError(
            f"ladder ファイルの betas {ladder.betas.tolist()} が設定 {betas} と一致しません", field="ladder.file"
        )
    return ladder


def integrator_params(cfg: ExperimentConfig) -> IntegratorParams:
    d = cfg.require_dynamics()
    return IntegratorParams(dt=d.dt, nu=d.nu, gamma=d.gamma, mass=d.mass, rng_seed=d.seed)


def initial_state(cfg: ExperimentConfig, model: PotentialModel, ladder: TemperatureLadder) -> State:
    d = cfg.require_dynamics()
    if d.initial_beta_index >= ladder.size:
        raise ConfigurationError(
            f"initial_beta_index {d.initial_beta_index} が温度数 {ladder.size} 以上です",
            field="dynamics.initial_beta_index",
        )
    x = model.initial_configuration()
    if d.kind == "langevin":
        return LangevinState(x, np.zeros_like(x), d.initial_beta_index)
    return OverdampedState(x, d.initial_beta_index)


def _with_seed(cfg: ExperimentConfig, seed: Optional[int]) -> ExperimentConfig:
    if seed is None or cfg.dynamics is None:
        return cfg
    if not 0 <= seed < 2**64:
        raise ConfigurationError(f"seed は 64bit 符号なし整数: {seed}", field="--seed")
    return cfg.model_copy(update={"dynamics": cfg.dynamics.model_copy(update={"seed": seed})})


def resolve_out_dir(cfg: ExperimentConfig, config_path: Path, command: str, out: Optional[Path]) -> Path:
    """--out > [output].directory（出力ルート相対）> <出力ルート>/<設定名>/<command>"""
    if out is not None:
        return Path(out).expanduser()
    root = get_outputs_root()
    if cfg.output.directory:
        d = Path(cfg.output.directory).expanduser()
        return d if d.is_absolute() else root / d
    return root / config_path.stem / command


def _load(config_path: Path | str, overrides: Overrides, env: Optional[Mapping[str, str]]) -> Tuple[ExperimentConfig, Path]:
    path = Path(config_path)
    cfg = _with_seed(load_config(path, env), overrides.seed)
    return cfg, path


def _manifest(art: Artifacts, cfg: ExperimentConfig, command: str, **extra: object) -> None:
    seed = cfg.dynamics.seed if cfg.dynamics is not None else None
    info = {"command": command, "version": __version__, **extra}
    if seed is not None:
        info["seed"] = seed
    art.add(write_manifest(art.out_dir / "manifest.toml", cfg.resolved(), **info))


# ============================================================
# run
# ============================================================

def _separable(model: PotentialModel) -> bool:
    return isinstance(model, (DoubleWellD, Harmonic))


def _histogram_l1(
    record: TrajectoryRecord, hc: HistogramConfig, model: PotentialModel, ladder: TemperatureLadder, cfg: ExperimentConfig
) -> float:
    """x0 のヒストグラムと求積 ϱ（重み付きなら物理温度の周辺）との L1。"""
    h = histogram(record, hc.coordinate, hc.bins, hc.range, weighted=hc.weighted)
    target = TemperatureLadder.uniform([ladder.beta_phys]) if hc.weighted else ladder
    ref = quadrature_reference(model, target, half_width=cfg.reference.half_width, n_points=cfg.reference.n_points)
    return l1_distance(h, ref)


def write_reports(
    out_dir: Path,
    record: TrajectoryRecord,
    cfg: ExperimentConfig,
    model: PotentialModel,
    ladder: TemperatureLadder,
    art: Artifacts,
    *,
    with_trajectory: bool = True,
) -> None:
    resolved = cfg.resolved()
    est = cfg.estimators

    stride = cfg.output.trajectory_stride
    if with_trajectory and stride > 0:
        art.add(write_csv(out_dir / "trajectory.csv", record.to_frame().iloc[::stride], config=resolved))

    rows = summarize_observables(record, n_batches=est.n_batches)
    if _separable(model):
        ref = quadrature_reference(
            model, TemperatureLadder.uniform([ladder.beta_phys]),
            half_width=cfg.reference.half_width, n_points=cfg.reference.n_points,
        )
        for row in rows:
            row["reference"] = float(ref.mean_energy[0]) if row["observable"] == "V" else math.nan
        hc = est.histogram
        if hc is not None and hc.coordinate == "x0":
            l1 = _histogram_l1(record, hc, model, ladder, cfg)
            rows.append(
                {"observable": "histogram_L1", "estimate": l1, "stderr": math.nan,
                 "n_samples": len(record), "reference": 0.0}
            )
    art.add(write_rows(out_dir / "summary.csv", rows, config=resolved))

    report = batch_asymptotic_variance(record.energy, est.window_sizes)
    art.add(write_csv(out_dir / "av.csv", report.to_frame(), config=resolved))

    if est.histogram is not None:
        hc = est.histogram
        h = histogram(record, hc.coordinate, hc.bins, hc.range, weighted=hc.weighted)
        art.add(write_csv(out_dir / "histogram.csv", h.to_frame(), config=resolved))
    if est.free_energy is not None:
        fc = est.free_energy
        prof = free_energy_profile(record, fc.coordinate, fc.bins, fc.range, ladder.beta_phys)
        art.add(write_csv(out_dir / "free_energy.csv", prof.to_frame(), config=resolved))


def _adapt(
    cfg: ExperimentConfig,
    model: PotentialModel,
    template: TemperatureLadder,
    overrides: Overrides,
) -> AdaptState:
    a = cfg.adapt
    if a.start == "oracle":
        log_Z = -oracle_ladder(cfg, model).log_n
        if a.oracle_scale:
            if len(a.oracle_scale) != template.size:
                raise ConfigurationError(
                    f"oracle_scale の個数 {len(a.oracle_scale)} が温度数 {template.size} と一致しません",
                    field="adapt.oracle_scale",
                )
            log_Z = log_Z + np.log(a.oracle_scale)
    else:
        log_Z = np.asarray(a.resolved_log_Z(template.size))
    return adapt_loop(
        log_Z,
        template,
        model,
        integrator_params(cfg),
        initial_state(cfg, model, template),
        l_max=a.l_max,
        steps_per_iter=a.steps_per_iter,
        record_stride=a.record_stride,
        interval=a.interval,
        tolerance=a.tolerance,
        replicas=overrides.replicas,
        progress=overrides.progress,
    )


def _write_adapt(art: Artifacts, cfg: ExperimentConfig, state: AdaptState, ladder: TemperatureLadder) -> None:
    resolved = cfg.resolved()
    art.add(write_rows(art.out_dir / "adapt_history.csv", history_rows(state), config=resolved))
    art.add(write_ladder(art.out_dir / "ladder.csv", ladder, config=resolved))


def cmd_run(
    config_path: Path | str, overrides: Overrides = Overrides(), *, env: Optional[Mapping[str, str]] = None
) -> Artifacts:
    cfg, path = _load(config_path, overrides, env)
    dyn = cfg.require_dynamics()
    n_steps = dyn.effective_steps
    model = build_model(cfg)
    ladder = build_ladder(cfg, model, config_dir=path.parent)
    art = Artifacts(resolve_out_dir(cfg, path, "run", overrides.out))

    if cfg.ladder.log_n == "adaptive":
        state = _adapt(cfg, model, ladder, overrides)
        ladder = ladder.with_log_n(-state.log_Z)
        _write_adapt(art, cfg, state, ladder)

    params = integrator_params(cfg)
    schedule = Schedule(n_steps, dyn.record_stride, tuple(cfg.estimators.observables))
    start = initial_state(cfg, model, ladder)
    logger.info("run: model=%s N=%d nu=%s steps=%d -> %s", cfg.model.name, ladder.size, dyn.nu, schedule.n_steps, art.out_dir)

    if overrides.replicas > 1:
        records = run_replicas(start, ladder, model, params, schedule, overrides.replicas)
        for r, rec in enumerate(records):
            write_reports(art.out_dir / f"replica_{r:02d}", rec, cfg, model, ladder, art)
        record = merge_records(records)
        write_reports(art.out_dir, record, cfg, model, ladder, art, with_trajectory=False)
    else:
        record = run_trajectory(start, ladder, model, params, schedule, progress=overrides.progress)
        write_reports(art.out_dir, record, cfg, model, ladder, art)

    _manifest(art, cfg, "run", replicas=overrides.replicas, ladder=ladder.as_dict())
    return art


# ============================================================
# adapt
# ============================================================

def cmd_adapt(
    config_path: Path | str, overrides: Overrides = Overrides(), *, env: Optional[Mapping[str, str]] = None
) -> Artifacts:
    cfg, path = _load(config_path, overrides, env)
    cfg.require_dynamics()
    model = build_model(cfg)
    template = TemperatureLadder.uniform(cfg.ladder.resolved_betas())
    art = Artifacts(resolve_out_dir(cfg, path, "adapt", overrides.out))

    state = _adapt(cfg, model, template, overrides)
    ladder = template.with_log_n(-state.log_Z)
    _write_adapt(art, cfg, state, ladder)
    _manifest(art, cfg, "adapt", replicas=overrides.replicas, iterations=state.iteration, ladder=ladder.as_dict())
    return art


# ============================================================
# ldp
# ============================================================

def cmd_ldp(
    config_path: Path | str, overrides: Overrides = Overrides(), *, env: Optional[Mapping[str, str]] = None
) -> Artifacts:
    cfg, path = _load(config_path, overrides, env)
    lc = cfg.ldp
    model = build_model(cfg)
    ladder = build_ladder(cfg, model, config_dir=path.parent)
    art = Artifacts(resolve_out_dir(cfg, path, "ldp", overrides.out))

    grid = np.linspace(lc.x_min, lc.x_max, lc.n_points)
    rho = equilibrium_density(grid, ladder, model)
    edge = rho.boundary_density()
    if edge > lc.max_boundary_density:
        raise ConfigurationError(
            f"[{lc.x_min}, {lc.x_max}] の端で ϱ = {edge:.3e} > {lc.max_boundary_density:g}（領域を広げてください）",
            field="ldp.x_min",
        )
    cases = standard_cases(rho, lc.alphas, lc.wave_numbers, antiphase=lc.antiphase)
    if lc.density_file:
        f = Path(lc.density_file)
        f = f if f.is_absolute() else path.parent / f
        cases.append(LdpCase("file", math.nan, math.nan, load_grid_density(f, ladder.size)))

    df = evaluate_rates(cases, ladder, model, lc.nus)
    art.add(write_csv(art.out_dir / "ldp.csv", df, config=cfg.resolved()))
    _manifest(art, cfg, "ldp", ladder=ladder.as_dict())
    return art


# ============================================================
# reference
# ============================================================

def cmd_reference(
    config_path: Path | str, overrides: Overrides = Overrides(), *, env: Optional[Mapping[str, str]] = None
) -> Artifacts:
    cfg, path = _load(config_path, overrides, env)
    rc = cfg.reference
    model = build_model(cfg)
    mode = cfg.ladder.log_n
    if mode == "file":
        ladder = build_ladder(cfg, model, config_dir=path.parent)
    elif isinstance(mode, list):
        ladder = TemperatureLadder(np.asarray(cfg.ladder.resolved_betas()), np.asarray(mode))
    else:
        ladder = TemperatureLadder.uniform(cfg.ladder.resolved_betas())
    art = Artifacts(resolve_out_dir(cfg, path, "reference", overrides.out))

    ref = quadrature_reference(model, ladder, half_width=rc.half_width, n_points=rc.n_points)
    if mode in ("uniform", "oracle", "adaptive"):
        # ϱ は n_k = 1/Z_k の混合で出す
        ladder = TemperatureLadder.from_log_partition(ladder.betas, ref.log_Z)
        ref = quadrature_reference(model, ladder, half_width=rc.half_width, n_points=rc.n_points)

    resolved = cfg.resolved()
    art.add(write_csv(art.out_dir / "reference.csv", ref.to_frame(), config=resolved))
    xs = np.linspace(-rc.half_width, rc.half_width, rc.density_points)
    art.add(write_csv(art.out_dir / "reference_density.csv", ref.density_frame(xs), config=resolved))
    oracle = TemperatureLadder.from_log_partition(ladder.betas, ref.log_Z)
    art.add(write_ladder(art.out_dir / "ladder.csv", oracle, config=resolved))
    _manifest(art, cfg, "reference", ladder=oracle.as_dict())
    return art


def run_command(
    command: str, config_path: Path | str, overrides: Overrides = Overrides(), *, env: Optional[Mapping[str, str]] = None
) -> Artifacts:
    table = {"run": cmd_run, "adapt": cmd_adapt, "ldp": cmd_ldp, "reference": cmd_reference}
    if command not in table:
        raise ConfigurationError(f"未知のサブコマンド: {command}（{COMMANDS}）", field="command")
    return table[command](config_path, overrides, env=env)
