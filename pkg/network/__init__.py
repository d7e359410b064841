"""Network package: modules, layers, modulation, MSTF blocks and the full model."""

from .base import Module, ModuleList
from .layers import BatchNorm, Conv2d, Dropout, FeedForward, GraphConv, LayerNorm, Linear, TemporalConv
from .embedding import FeatureEmbedding, skate_embedding, temporal_features
from .modulation import (AddStrategy, BaseModulation, ConcatStrategy, HadamardStrategy, ModulateStrategy,
                         ModulationFactors, NoScaleStrategy, NoShiftStrategy, get_modulation, modulate,
                         standardize)
from .mstf import GatedAggregation, MstfBlock, Msm, Mtm, motion_branch
from .model import MmnModel, Stage, export_feature_maps, temporal_mean_pool
from .complexity import ComplexityReport, count_params_flops
from .verification import model_gradcheck, toy_config

__all__ = [
    'Module',
    'ModuleList',
    'Linear',
    'LayerNorm',
    'BatchNorm',
    'GraphConv',
    'TemporalConv',
    'Conv2d',
    'Dropout',
    'FeedForward',
    'FeatureEmbedding',
    'skate_embedding',
    'temporal_features',
    'BaseModulation',
    'ModulateStrategy',
    'AddStrategy',
    'ConcatStrategy',
    'HadamardStrategy',
    'NoScaleStrategy',
    'NoShiftStrategy',
    'ModulationFactors',
    'get_modulation',
    'modulate',
    'standardize',
    'GatedAggregation',
    'MstfBlock',
    'Msm',
    'Mtm',
    'motion_branch',
    'MmnModel',
    'Stage',
    'export_feature_maps',
    'temporal_mean_pool',
    'ComplexityReport',
    'count_params_flops',
    'model_gradcheck',
    'toy_config',
]
