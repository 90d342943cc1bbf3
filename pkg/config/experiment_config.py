# config/experiment_config.py
# ============================================================
# 実験設定（TOML）のスキーマと読み込み
#
#   [model] [ladder] [dynamics] [estimators] [adapt] [ldp] [reference] [output]
#
# - 未知のキーはエラー（extra="forbid"）。数値範囲はシミュレーション前に全て検証。
# - 環境変数 TEMPERING_STATION__<SECTION>__<KEY>=<TOML リテラル> で任意キーを上書き
#   （例: TEMPERING_STATION__DYNAMICS__NU=inf, TEMPERING_STATION__LADDER__BETAS="[5.0, 1.0]"）。
# - resolved() が既定値込みの完全な設定を返す（manifest と CSV コメントに出す）。
# ============================================================
from __future__ import annotations

import math
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Mapping, Optional, Tuple, Union, get_args

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_serializer,
    field_validator,
    model_validator,
)

from lib.errors import ConfigurationError
from lib.tempering import geometric_ladder

ENV_PREFIX = "TEMPERING_STATION__"

LogNMode = Literal["uniform", "oracle", "file", "adaptive"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ------------------------------------------------------------
# [model]
# ------------------------------------------------------------
class DoubleWellConfig(_Section):
    name: Literal["double_well"] = "double_well"
    dimension: int = Field(1, ge=1)
    stiffness: List[Annotated[float, Field(gt=0)]] = Field(default_factory=list)
    initial_x0: float = -1.0

    @model_validator(mode="after")
    def _stiffness_length(self) -> "DoubleWellConfig":
        if self.stiffness and len(self.stiffness) != self.dimension - 1:
            raise ValueError(f"stiffness は dimension-1 = {self.dimension - 1} 個必要です")
        return self


class HarmonicConfig(_Section):
    name: Literal["harmonic"] = "harmonic"
    dimension: int = Field(1, ge=1)
    stiffness: List[Annotated[float, Field(gt=0)]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _stiffness_length(self) -> "HarmonicConfig":
        if self.stiffness and len(self.stiffness) != self.dimension:
            raise ValueError(f"stiffness は dimension = {self.dimension} 個必要です")
        return self


class DimerConfig(_Section):
    name: Literal["dimer"] = "dimer"
    n_particles: int = Field(16, ge=2)
    box: float = Field(4.4, gt=0)
    sigma: float = Field(1.0, gt=0)
    epsilon: float = Field(1.0, gt=0)
    h: float = Field(1.0, gt=0)
    omega: float = Field(0.5, gt=0)


ModelConfig = Annotated[Union[DoubleWellConfig, HarmonicConfig, DimerConfig], Field(discriminator="name")]


# ------------------------------------------------------------
# [ladder]
# ------------------------------------------------------------
class LadderConfig(_Section):
    """betas を直接書くか、beta0 + n_temperatures (+ ratio) で幾何ラダー。"""

    betas: Optional[List[Annotated[float, Field(gt=0)]]] = Field(None, min_length=1)
    beta0: Optional[float] = Field(None, gt=0)
    n_temperatures: Optional[int] = Field(None, ge=1)
    ratio: float = Field(0.5, gt=0, lt=1)
    log_n: Union[LogNMode, List[float]] = "uniform"
    file: Optional[str] = None

    @model_validator(mode="after")
    def _one_source(self) -> "LadderConfig":
        explicit = self.betas is not None
        geometric = self.beta0 is not None or self.n_temperatures is not None
        if explicit == geometric:
            raise ValueError("betas か (beta0, n_temperatures) のどちらか一方を指定してください")
        if geometric and (self.beta0 is None or self.n_temperatures is None):
            raise ValueError("幾何ラダーには beta0 と n_temperatures の両方が必要です")
        if self.betas is not None and any(nxt >= prev for prev, nxt in zip(self.betas, self.betas[1:])):
            raise ValueError(f"betas は厳密に減少（index 0 が物理温度）: {self.betas}")
        if isinstance(self.log_n, list) and len(self.log_n) != len(self.resolved_betas()):
            raise ValueError(f"log_n の長さ {len(self.log_n)} が温度数と一致しません")
        if self.log_n == "file" and not self.file:
            raise ValueError('log_n = "file" には file が必要です')
        return self

    def resolved_betas(self) -> List[float]:
        if self.betas is not None:
            return list(self.betas)
        assert self.beta0 is not None and self.n_temperatures is not None
        return geometric_ladder(self.beta0, self.n_temperatures, self.ratio).tolist()


# ------------------------------------------------------------
# [dynamics]
# ------------------------------------------------------------
class DynamicsConfig(_Section):
    kind: Literal["overdamped", "langevin"] = "overdamped"
    dt: float = Field(gt=0)
    nu: float = math.inf
    gamma: float = Field(1.0, ge=0)
    mass: float = Field(1.0, gt=0)
    n_steps: Optional[int] = Field(None, ge=1)  # adapt は steps_per_iter を使うので省略可
    record_stride: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    initial_beta_index: int = Field(0, ge=0)
    full_scale: bool = False
    full_steps: int = Field(100_000_000, ge=1)

    @field_validator("nu", mode="before")
    @classmethod
    def _parse_nu(cls, v: Any) -> Any:
        if isinstance(v, str) and v.strip().lower() in ("inf", "infinity", "∞"):
            return math.inf
        return v

    @field_validator("nu")
    @classmethod
    def _check_nu(cls, v: float) -> float:
        if math.isnan(v) or v < 0:
            raise ValueError('nu は 0 以上の数値か "inf"')
        return v

    @field_serializer("nu")
    def _dump_nu(self, v: float) -> Union[float, str]:
        return "inf" if math.isinf(v) else v

    @property
    def effective_steps(self) -> int:
        if self.full_scale:
            return self.full_steps
        if self.n_steps is None:
            raise ConfigurationError("run には [dynamics].n_steps が必要です", field="dynamics.n_steps")
        return self.n_steps


# ------------------------------------------------------------
# [estimators]
# ------------------------------------------------------------
class HistogramConfig(_Section):
    coordinate: str = "x0"
    bins: int = Field(200, ge=2)
    range: Tuple[float, float] = (-3.0, 3.0)
    weighted: bool = False

    @field_validator("range")
    @classmethod
    def _check_range(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        if not (math.isfinite(v[0]) and math.isfinite(v[1]) and v[0] < v[1]):
            raise ValueError(f"range は有限で lo < hi: {v}")
        return v


class EstimatorsConfig(_Section):
    observables: List[str] = Field(default_factory=list)
    window_sizes: List[Annotated[int, Field(ge=1)]] = Field(default_factory=lambda: [100, 1_000, 10_000, 100_000])
    n_batches: int = Field(32, ge=2)
    histogram: Optional[HistogramConfig] = None
    free_energy: Optional[HistogramConfig] = None


# ------------------------------------------------------------
# [adapt]
# ------------------------------------------------------------
class AdaptConfig(_Section):
    l_max: int = Field(10, ge=1)
    steps_per_iter: int = Field(1_000_000, ge=1)
    record_stride: int = Field(1, ge=1)
    interval: Tuple[float, float] = (0.35, 1.5)
    tolerance: float = Field(0.05, gt=0)
    initial_Z: Optional[List[Annotated[float, Field(gt=0)]]] = None
    initial_log_Z: Optional[List[float]] = None
    # start = "oracle" なら求積の Z に oracle_scale を掛けたものから始める（分離可能モデルのみ）
    start: Literal["given", "oracle"] = "given"
    oracle_scale: List[Annotated[float, Field(gt=0)]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self) -> "AdaptConfig":
        lo, hi = self.interval
        if not lo < 1.0 < hi:
            raise ValueError(f"interval は lo < 1 < hi: {self.interval}")
        if self.initial_Z is not None and self.initial_log_Z is not None:
            raise ValueError("initial_Z と initial_log_Z は同時に指定できません")
        if self.start == "oracle" and (self.initial_Z is not None or self.initial_log_Z is not None):
            raise ValueError('start = "oracle" と initial_Z / initial_log_Z は同時に指定できません')
        return self

    def resolved_log_Z(self, n_temperatures: int) -> List[float]:
        if self.initial_log_Z is not None:
            out = list(self.initial_log_Z)
        elif self.initial_Z is not None:
            out = [math.log(z) for z in self.initial_Z]
        else:
            out = [0.0] * n_temperatures
        if len(out) != n_temperatures:
            raise ConfigurationError(
                f"初期 Z の個数 {len(out)} が温度数 {n_temperatures} と一致しません", field="adapt.initial_Z"
            )
        return out


# ------------------------------------------------------------
# [ldp] / [reference] / [output]
# ------------------------------------------------------------
class LdpConfig(_Section):
    x_min: float = -4.0
    x_max: float = 4.0
    n_points: int = Field(8001, ge=3)
    nus: List[Annotated[float, Field(ge=0)]] = Field(default_factory=lambda: [0.1, 1.0, 10.0, 100.0])
    alphas: List[float] = Field(default_factory=lambda: [0.05, 0.1, 0.2])
    wave_numbers: List[float] = Field(default_factory=lambda: [1.0])
    antiphase: bool = True
    density_file: Optional[str] = None
    max_boundary_density: float = Field(1e-12, gt=0)

    @model_validator(mode="after")
    def _check(self) -> "LdpConfig":
        if not self.x_min < self.x_max:
            raise ValueError(f"x_min < x_max が必要: [{self.x_min}, {self.x_max}]")
        if any(not abs(a) < 1 for a in self.alphas):
            raise ValueError(f"alphas は |α| < 1: {self.alphas}")
        return self


class ReferenceConfig(_Section):
    half_width: float = Field(4.0, gt=0)
    n_points: int = Field(20001, ge=3)
    density_points: int = Field(801, ge=2)

    @field_validator("n_points")
    @classmethod
    def _odd(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("Simpson 則のため n_points は奇数")
        return v


class OutputConfig(_Section):
    directory: Optional[str] = None
    trajectory_stride: int = Field(1, ge=0)  # 0 なら trajectory.csv を書かない


# ------------------------------------------------------------
# 全体
# ------------------------------------------------------------
class ExperimentConfig(_Section):
    model: ModelConfig = Field(default_factory=DoubleWellConfig)
    ladder: LadderConfig
    dynamics: Optional[DynamicsConfig] = None
    estimators: EstimatorsConfig = Field(default_factory=EstimatorsConfig)
    adapt: AdaptConfig = Field(default_factory=AdaptConfig)
    ldp: LdpConfig = Field(default_factory=LdpConfig)
    reference: ReferenceConfig = Field(default_factory=ReferenceConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    def resolved(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def require_dynamics(self) -> DynamicsConfig:
        if self.dynamics is None:
            raise ConfigurationError("このサブコマンドには [dynamics] が必要です", field="dynamics")
        return self.dynamics


# ------------------------------------------------------------
# 読み込み
# ------------------------------------------------------------
def _parse_env_value(raw: str) -> Any:
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def _field_names(tp: Any) -> Dict[str, Tuple[str, Any]]:
    """tp に含まれる BaseModel のフィールドを {小文字名: (正式名, 型)} で返す（Union / Optional は展開）。"""
    if isinstance(tp, type) and issubclass(tp, BaseModel):
        return {name.lower(): (name, f.annotation) for name, f in tp.model_fields.items()}
    out: Dict[str, Tuple[str, Any]] = {}
    for arg in get_args(tp):
        out.update(_field_names(arg))
    return out


def apply_env_overrides(data: Dict[str, Any], env: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    """
    TEMPERING_STATION__SECTION__KEY=value を data に上書きする（data を直接更新）。
    キーはスキーマのフィールド名と大文字小文字を区別せずに照合する（ADAPT__INITIAL_Z → adapt.initial_Z）。
    """
    env = os.environ if env is None else env
    for key in sorted(env):
        if not key.startswith(ENV_PREFIX):
            continue
        raw_parts = [p for p in key[len(ENV_PREFIX):].split("__") if p]
        if not raw_parts:
            continue
        parts: List[str] = []
        tp: Any = ExperimentConfig
        for p in raw_parts:
            name, tp = _field_names(tp).get(p.lower(), (p.lower(), None))
            parts.append(name)
        node = data
        for p in parts[:-1]:
            child = node.get(p)
            if not isinstance(child, dict):
                child = {}
                node[p] = child
            node = child
        node[parts[-1]] = _parse_env_value(env[key])
    return data


def _format_errors(e: ValidationError) -> Tuple[str, str]:
    errs = e.errors()
    first = ".".join(str(x) for x in errs[0]["loc"])
    lines = [f"{'.'.join(str(x) for x in err['loc'])}: {err['msg']}" for err in errs]
    return first, "\n".join(lines)


def parse_config(data: Mapping[str, Any], env: Optional[Mapping[str, str]] = None) -> ExperimentConfig:
    merged = apply_env_overrides(_deep_copy(data), env)
    try:
        return ExperimentConfig.model_validate(merged)
    except ValidationError as e:
        field, message = _format_errors(e)
        raise ConfigurationError(f"設定が不正です\n{message}", field=field) from e


def load_config(path: Path | str, env: Optional[Mapping[str, str]] = None) -> ExperimentConfig:
    p = Path(path).expanduser()
    if not p.exists():
        raise ConfigurationError(f"設定ファイルが見つかりません: {p}", field="--config")
    try:
        with open(p, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"{p}: TOML として読めません: {e}", field="--config") from e
    return parse_config(data, env)


def _deep_copy(data: Mapping[str, Any]) -> Dict[str, Any]:
    return {k: _deep_copy(v) if isinstance(v, Mapping) else v for k, v in data.items()}
