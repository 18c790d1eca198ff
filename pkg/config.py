"""
Configuration

Defaults for every analysis and model parameter. Values can be overridden from
the environment (or a .env file) and then from CLI flags; the effective
configuration is embedded verbatim in every report.
"""

import os
from dataclasses import dataclass, field, asdict
from typing import Dict, Optional, Tuple

TOOL_NAME = "scaling-eval"
TOOL_VERSION = "1.0.0"
RNG_NAME = "numpy.random.Generator(PCG64)"

DEFAULT_NUMBER_PATTERN = r"[0-9][0-9.,]*|[.,][0-9][0-9.,]*"
# PCFG profile chunk lengths drawn from --input
DEFAULT_CHUNK_LENGTHS = (5, 10, 15, 20, 25, 30)


def get_int_env(var_name: str, default: int) -> int:
    value = os.getenv(var_name, str(default))
    try:
        return int(value)
    except ValueError:
        raise RuntimeError(f"Invalid value for {var_name}: '{value}'. Must be an integer.")


def get_float_env(var_name: str, default: float) -> float:
    value = os.getenv(var_name, str(default))
    try:
        return float(value)
    except ValueError:
        raise RuntimeError(f"Invalid value for {var_name}: '{value}'. Must be a number.")


def get_optional_int_env(var_name: str) -> Optional[int]:
    if os.getenv(var_name) in (None, ""):
        return None
    return get_int_env(var_name, 0)


@dataclass
class AnalysisConfig:
    """Parameters of the five scaling analyses"""

    taylor_l: int = 5620
    lrc_q: int = 16
    fit_max_lag: int = 100
    acf_max_lag: int = 1000
    heaps_samples_per_decade: int = 10
    ebeling_samples_per_decade: int = 10
    ebeling_min_l: int = 10
    # None means length / 100
    ebeling_max_l: Optional[int] = None

    @classmethod
    def from_env(cls) -> "AnalysisConfig":
        return cls(
            taylor_l=get_int_env("SCALING_TAYLOR_L", 5620),
            lrc_q=get_int_env("SCALING_LRC_Q", 16),
            fit_max_lag=get_int_env("SCALING_FIT_MAX_LAG", 100),
            acf_max_lag=get_int_env("SCALING_ACF_MAX_LAG", 1000),
            heaps_samples_per_decade=get_int_env("SCALING_HEAPS_DENSITY", 10),
            ebeling_samples_per_decade=get_int_env("SCALING_EBELING_DENSITY", 10),
            ebeling_min_l=get_int_env("SCALING_EBELING_MIN_L", 10),
            ebeling_max_l=get_optional_int_env("SCALING_EBELING_MAX_L"),
        )

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class ModelConfig:
    """Parameters of the generative baselines"""

    order: int = 3
    smoothing: str = "kn"
    interp_held_out: float = 0.1
    katz_threshold: int = 5
    simon_a: float = 0.1
    py_a: float = 0.8
    py_b: float = 1.0
    max_depth: int = 100
    sentence_cap: int = 50

    @classmethod
    def from_env(cls) -> "ModelConfig":
        return cls(
            order=get_int_env("SCALING_ORDER", 3),
            smoothing=os.getenv("SCALING_SMOOTHING", "kn"),
            interp_held_out=get_float_env("SCALING_INTERP_HELD_OUT", 0.1),
            katz_threshold=get_int_env("SCALING_KATZ_THRESHOLD", 5),
            simon_a=get_float_env("SCALING_SIMON_A", 0.1),
            py_a=get_float_env("SCALING_PY_A", 0.8),
            py_b=get_float_env("SCALING_PY_B", 1.0),
            max_depth=get_int_env("SCALING_MAX_DEPTH", 100),
            sentence_cap=get_int_env("SCALING_SENTENCE_CAP", 50),
        )

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class RunConfig:
    """Everything one CLI invocation needs"""

    subcommand: str = ""
    input: Optional[str] = None
    output: Optional[str] = None
    seed: int = 0
    report_format: str = "json"
    min_freq: int = 1
    replace_numbers: bool = False
    number_pattern: str = DEFAULT_NUMBER_PATTERN
    generate_length: int = 1_000_000
    eval_fraction: float = 0.1
    workers: int = 1
    treebank: Optional[str] = None
    reference: Optional[str] = None
    use_gcs: bool = False
    include_ebeling: bool = True
    chunk_size: int = 1
    source: str = "ngram"
    model_path: Optional[str] = None
    grammar: Optional[str] = None
    unk_hapax: bool = False
    chunk_lengths: Tuple[int, ...] = DEFAULT_CHUNK_LENGTHS
    chunks_per_length: int = 20
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    @classmethod
    def from_env(cls, subcommand: str = "") -> "RunConfig":
        return cls(
            subcommand=subcommand,
            seed=get_int_env("SCALING_SEED", 0),
            min_freq=get_int_env("SCALING_MIN_FREQ", 1),
            generate_length=get_int_env("SCALING_GENERATE_LENGTH", 1_000_000),
            eval_fraction=get_float_env("SCALING_EVAL_FRACTION", 0.1),
            workers=get_int_env("SCALING_WORKERS", 1),
            analysis=AnalysisConfig.from_env(),
            model=ModelConfig.from_env(),
        )

    def to_dict(self) -> Dict:
        return asdict(self)
