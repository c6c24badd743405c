"""Forecasting chaotic systems with curriculum-scheduled teacher forcing."""

__version__ = "0.1.0"

from .curriculum import (CurriculumConfig, TFMask, build_mask, build_masks,
                         decision_deterministic, draw_decision_probabilistic,
                         eval_epsilon, prob_at_least_one_tf, stf_tau)
from .dataio import (Dataset, SequencePair, dataset_from_array,
                     forecast_segments, generate_dataset, load_dataset,
                     load_external_csv, prediction_length, save_dataset,
                     window)
from .dynsys import (PRESETS, SystemSpec, Trajectory, estimate_lle,
                     eval_derivative, get_system, integrate_dde,
                     integrate_ode)
from .metrics import (EvalReport, evaluate, lt_horizon, nrmse_horizon,
                      nrmse_step, r2_per_step, rel_improvement)
from .nn import (AdamState, CellParams, HiddenState, ModelParams, adam_init,
                 adam_step, backward, cell_forward, decode, encode,
                 forward_loss, init_params)
from .trainer import (EarlyStopper, ModelConfig, PlateauScheduler,
                      TrainerConfig, TrainLog, checkpoint_resume,
                      checkpoint_save, train)
