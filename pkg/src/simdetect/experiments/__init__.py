from .config import Cell, ExperimentConfig, Sweep, builtin_configs, config_from_dict, load_config
from .output import emit_outputs, power_table_csv
from .reference import TABLE1, Flag, check_rows
from .runner import PowerReport, replicate_dataset, run_experiment

__all__ = [
    "Cell",
    "ExperimentConfig",
    "Flag",
    "PowerReport",
    "Sweep",
    "TABLE1",
    "builtin_configs",
    "check_rows",
    "config_from_dict",
    "emit_outputs",
    "load_config",
    "power_table_csv",
    "replicate_dataset",
    "run_experiment",
]
