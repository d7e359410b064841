"""Skeleton package: sequences, dataset files, sampling, augmentation, bones, batching, synthesis."""

from .sequence import LabelTaxonomy, SkeletonSequence
from .augmentation import (AugmentationParams, apply_affine, apply_jitter, augment_skeletal,
                           augment_temporal, stca)
from .sampling import sample_indices, uniform_sample
from .bones import check_parents, default_parents, to_bone
from .batching import assemble_batch, iterate_batches, prepare_sample, sample_rng
from .dataset_io import load_dataset, read_header, save_dataset
from .synthetic import SynthSpec, split_sequences, synth_generate

__all__ = [
    'SkeletonSequence',
    'LabelTaxonomy',
    'AugmentationParams',
    'apply_affine',
    'apply_jitter',
    'augment_skeletal',
    'augment_temporal',
    'stca',
    'sample_indices',
    'uniform_sample',
    'check_parents',
    'default_parents',
    'to_bone',
    'assemble_batch',
    'iterate_batches',
    'prepare_sample',
    'sample_rng',
    'load_dataset',
    'read_header',
    'save_dataset',
    'SynthSpec',
    'synth_generate',
    'split_sequences',
]
