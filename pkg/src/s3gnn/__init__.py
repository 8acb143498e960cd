"""Globally-mixed stable graph propagation: models, analysis, benchmarks."""

from .rng import Rng
from .graphs import (Graph, ComponentStructure, GraphOperators, from_edge_list,
                     connected_components, operators, global_mix_apply,
                     projector_dense_oracle, bfs_distances, graph_property,
                     generate, read_edge_list, write_edge_list)
from .models import (ModelConfig, ModelStack, ForwardTrace, antisymmetrize,
                     cayley_orthogonal, build_model, build_context, s3_forward,
                     baseline_forward, backward, param_count, save_checkpoint,
                     load_checkpoint)
from .sensitivity import (layer_jacobian_dense, jacobian_energy, verify_prop2,
                          influence, prop1_bound, eq8_bound, diag_closed_form,
                          influence_distribution)
from .datasets import (Sample, Dataset, make_barbell_task, make_barbell_dataset,
                       make_property_dataset, make_dataset, save_dataset,
                       load_dataset)
from .training import (Adam, TrainConfig, TrainReport, NumericalAbort, loss,
                       mse_loss, adam_step, train, gradient_check)

__version__ = "0.1.0"
