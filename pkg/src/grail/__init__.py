"""Graph contrastive encoders, frozen linear probes, and budgeted adaptive
structure attacks, with standardized robustness metrics and a protocol
runner.  See the README for the three-step evaluation workflow."""

from .attacks import (AttackConfig, AttackResult, Budget, attack_loss,
                      grbcd_attack, pgd_attack, prbcd_attack, project_budget,
                      random_flip_attack, run_attack)
from .augment import AugmentSpec, LearnedAugmenter, augment, centrality_scores
from .autodiff import Tensor, backward
from .contrastive import (ObjectiveConfig, TrainConfig, dgi_loss, info_nce_loss,
                          infograph_loss, js_mi_estimate, train_encoder)
from .data import (SbmSpec, generate_graph_classification_dataset,
                   generate_sbm_node_dataset, load_dataset, save_dataset)
from .encoders import (EncoderConfig, EncoderModel, dgi_summary, encode_nodes,
                       load_encoder, normalize_adjacency, readout, save_encoder)
from .graphs import (Graph, GraphDataset, apply_perturbation, dense_adjacency,
                     random_split)
from .kernels import BACKEND
from .metrics import (EvalRecord, min_over_attacks, model_delta, relative_drop,
                      summarize)
from .probe import (LinearProbe, ProbeConfig, accuracy, cross_entropy,
                    load_probe, save_probe, train_probe, train_supervised)
from .runner import ExperimentConfig, load_experiment_config, report, run_protocol

__version__ = "0.1.0"
