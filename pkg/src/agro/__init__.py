from .network import NetworkParams, GradientSet, Batch
from .synth import GeneratorConfig, SpuriousAttribute, Split, DatasetBundle
from .erm import NetSpec, TrainConfig, FeatureSet, PretrainedAnalog
from .slices import SliceConfig, SliceModel, SliceModelParams
from .grouper import GrouperConfig, Grouper
from .robust import AgroConfig, GroupStats, WeightVector
from .evaluation import SelectionConfig, MetricsReport
from .storage import register_runs_root, RunStore

__all__ = [
    "NetworkParams",
    "GradientSet",
    "Batch",
    "GeneratorConfig",
    "SpuriousAttribute",
    "Split",
    "DatasetBundle",
    "NetSpec",
    "TrainConfig",
    "FeatureSet",
    "PretrainedAnalog",
    "SliceConfig",
    "SliceModel",
    "SliceModelParams",
    "GrouperConfig",
    "Grouper",
    "AgroConfig",
    "GroupStats",
    "WeightVector",
    "SelectionConfig",
    "MetricsReport",
    "register_runs_root",
    "RunStore",
]
