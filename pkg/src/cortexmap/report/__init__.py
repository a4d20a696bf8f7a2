from .metrics import f1_per_class, macro_f1
from .evaluate import EvalResult, evaluate_predictions
from .export import NEUTRAL_COLOR, export_colored_mesh, label_palette
from .run import config_hash, run_report, summarize_scores
