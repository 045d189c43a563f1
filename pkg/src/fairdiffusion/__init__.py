"""Fairness-aware denoising diffusion on digit data.

A small conditional diffusion model is trained jointly with a
target/non-target indicator head; the indicator's cross-entropy acts as a
regularizer weighted by ``alpha`` against the noise-prediction loss. The
package ships its own reverse-mode autodiff engine, the full training
pipeline, an evaluation oracle and group-fairness metrics.
"""

from .autodiff import ParameterSet, Tape, Tensor, backward
from .data import (ConditionVocab, DatasetSpec, LabeledExample, build_target_set,
                   condition_embedding, condition_embeddings, generate_nontarget,
                   load_mnist_split, parse_idx)
from .diffusion import add_noise, ancestral_sample, diffusion_loss, predict_noise, reconstruct_latent
from .losses import combined_loss, entropy, entropy_rows, indicator_loss
from .metrics import (GroupDistribution, GroupEntropyReport, MetricsReport,
                      fairness_discrepancy, frechet_distance, group_entropy_report,
                      inception_score, pearson_r, statistical_parity_difference,
                      unrecognizable_proportion)
from .model import DebiasingDiffusion, TrainRecord, train_step
from .networks import DenoiserNet, IndicatorNet, time_embedding_table
from .optim import AdamState, adam_update, finite_difference_check
from .oracle import DigitOracle
from .schedule import NoiseSchedule, build_schedule

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "ConditionVocab",
    "DatasetSpec",
    "DebiasingDiffusion",
    "DenoiserNet",
    "DigitOracle",
    "GroupDistribution",
    "GroupEntropyReport",
    "IndicatorNet",
    "LabeledExample",
    "MetricsReport",
    "NoiseSchedule",
    "ParameterSet",
    "Tape",
    "Tensor",
    "TrainRecord",
    "adam_update",
    "add_noise",
    "ancestral_sample",
    "backward",
    "build_schedule",
    "build_target_set",
    "combined_loss",
    "condition_embedding",
    "condition_embeddings",
    "diffusion_loss",
    "entropy",
    "entropy_rows",
    "fairness_discrepancy",
    "finite_difference_check",
    "frechet_distance",
    "generate_nontarget",
    "group_entropy_report",
    "inception_score",
    "indicator_loss",
    "load_mnist_split",
    "parse_idx",
    "pearson_r",
    "predict_noise",
    "reconstruct_latent",
    "statistical_parity_difference",
    "time_embedding_table",
    "train_step",
    "unrecognizable_proportion",
]
