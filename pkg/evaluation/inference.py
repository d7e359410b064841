"""
Running a model over a list of sequences.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from evaluation.metrics import PredictionSet
from network.model import MmnModel
from skeleton.batching import iterate_batches
from skeleton.sequence import LabelTaxonomy, SkeletonSequence


def predict_sequences(
    model: MmnModel,
    sequences: Sequence[SkeletonSequence],
    taxonomy: Optional[LabelTaxonomy] = None,
    batch_size: int = 64,
    bone: bool = False,
    executor: Optional[ThreadPoolExecutor] = None,
) -> PredictionSet:
    """
    Eval-mode logits for every sequence, in dataset order.

    Args:
        model: The network
        sequences: Samples to score (un-augmented, uniformly sampled)
        taxonomy: Attached to the result for body-level metrics
        batch_size: Samples per forward
        bone: Feed the bone modality
        executor: Optional pool for batch assembly

    Returns:
        PredictionSet of logits
    """
    parents = taxonomy.joint_parents if taxonomy is not None else None
    num_classes = model.config.num_classes
    scores, labels, ids = [], [], []
    for frames, batch_labels, batch_ids in iterate_batches(sequences, batch_size, model.config.num_frames,
                                                           parents, bone, executor):
        scores.append(model.predict(frames))
        labels.append(batch_labels)
        ids.extend(batch_ids)
    if not scores:
        return PredictionSet(np.zeros((0, num_classes)), np.zeros(0, dtype=np.int64), [], taxonomy)
    return PredictionSet(np.concatenate(scores), np.concatenate(labels), ids, taxonomy)
