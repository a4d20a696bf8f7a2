from .store import (
    SPLIT_CODES,
    SPLIT_NAMES,
    UNLABELED,
    CortexGraph,
    load_graph,
    save_graph,
    split_nodes,
)
from .sampling import Subgraph, balanced_node_stream, khop_subgraph, sample_fixed_neighbors
