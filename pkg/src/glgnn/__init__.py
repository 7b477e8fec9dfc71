"""Node classification with global label features on top of GCN, GAT or GCNII backbones."""
from .config import BackboneConfig, HeadConfig, LossConfig, TrainConfig
from .data import Dataset, Split, generate_sbm, load_dataset, make_random_splits, write_dataset
from .errors import GLGNNError
from .graph import Graph, build_adjacency, node_homophily, normalized_adjacency
from .training import Metrics, estimate_flops, evaluate, grid_search, train

__version__ = "0.1.0"
