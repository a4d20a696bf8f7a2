from .config import ConfigError, MeshParams, PriorParams, RunConfig, load_run_config
from .stages import (
    STAGE_ORDER,
    InputError,
    NumericError,
    file_hash,
    load_state,
    run_stage,
    run_stages,
    state_dict,
)
from .main import main
