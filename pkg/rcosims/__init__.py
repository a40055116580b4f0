# flake8: noqa
from .nn import (
    LayerSpec, NetworkSpec, spec_from_dict, spec_to_dict, init_params,
    forward, backward, param_count)
from .optim import LrSchedule, SgdConfig, lr_at, sgd_step
from .losses import (
    DistillConfig, softened_softmax, cross_entropy, kl_divergence, kd_loss,
    rco_step_loss, mimic_loss)
from .data import (
    Dataset, ExperimentData, load_idx, load_cifar10_bin, split_validation,
    batch_iter)
from .loop import TrainConfig
from .trajectory import (
    Checkpoint, Trajectory, train_teacher, save_checkpoint, load_checkpoint,
    save_trajectory, load_trajectory)
from .strategy import (
    AnchorSchedule, GsConfig, eei_select, hardness, hardness_ratio,
    greedy_next_anchor, greedy_search)
from .trainer import (
    RcoRunConfig, RunReport, train_rco, train_one_stage, train_kd_baseline,
    train_softmax_baseline, train_gs, run_arm)
from .analysis import top1, kl_curve, pca_trajectory, noise_sweep
