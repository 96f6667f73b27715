from .dataset import (DatasetManifest, SampleSet, build_dataset, derive_rng, load_env,
                      load_manifest, load_split, split_objects)
from .editing import blur_layer, edit_material
from .experiments import (ALL, AblationReport, CrossCategoryReport, ExperimentAborted,
                          FinetuneReport, ablate, cross_category, default_budget,
                          finetune_decoder, finetune_table, reload_report)
from .training import (TrainConfig, TrainResult, TrainingDiverged, baseline_predictor, evaluate,
                       history_csv, oracle_predictor, predict, save_report, train, write_history)

__all__ = [
    "DatasetManifest", "SampleSet", "build_dataset", "derive_rng", "load_env", "load_manifest",
    "load_split", "split_objects", "blur_layer", "edit_material", "ALL", "AblationReport",
    "CrossCategoryReport", "ExperimentAborted", "FinetuneReport", "ablate", "cross_category",
    "default_budget", "finetune_decoder", "finetune_table", "reload_report", "TrainConfig",
    "TrainResult", "TrainingDiverged", "baseline_predictor", "evaluate", "history_csv",
    "oracle_predictor", "predict", "save_report", "train", "write_history",
]
