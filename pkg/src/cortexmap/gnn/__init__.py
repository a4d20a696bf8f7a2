from .layers import GatLayer, PriorFusion, PriorFusionConfig, SageLayer
from .models import GnnConfig, NodeClassifier, forward_classify
from .batching import SubgraphBatch, collate_subgraphs, sample_batch
from .training import (
    GnnSchedule,
    GnnTrainResult,
    build_classifier,
    cross_entropy,
    evaluate,
    predict_logits,
    train_gnn,
)
