"""
Training loop.

Per epoch: shuffle the training split with a generator keyed by (seed,
epoch), assemble augmented batches, take one AdamW step per batch, then
score the validation split, append one JSON line to the epoch log and save
checkpoints. Shuffle order, augmentation and dropout all draw from
generators derived from (seed, epoch, step or sample id), so a resumed run
reproduces the uninterrupted one.
"""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from config import Config, RunConfig
from errors import ConfigurationError, DataError
from evaluation.inference import predict_sequences
from evaluation.metrics import evaluate
from network.model import MmnModel
from skeleton.batching import assemble_batch
from skeleton.sequence import LabelTaxonomy, SkeletonSequence
from training.checkpoint import CheckpointManager, TrainState
from training.optimizer import AdamW
from training.schedule import epoch_position, lr_at

logger = logging.getLogger(__name__)

EPOCH_LOG = "train_log.jsonl"
BEST_CHECKPOINT = "best"
LAST_CHECKPOINT = "last"


def check_compatibility(model: MmnModel, sequences: Sequence[SkeletonSequence],
                        taxonomy: Optional[LabelTaxonomy] = None) -> None:
    """
    Verify the dataset fits the model before any step is taken.

    Raises:
        DataError: If the dataset is empty
        ConfigurationError: On class-count, joint-count or channel mismatches
    """
    cfg = model.config
    if not sequences:
        raise DataError("training split is empty")
    if taxonomy is not None and taxonomy.num_actions != cfg.num_classes:
        raise ConfigurationError(
            f"dataset has {taxonomy.num_actions} action classes but the model has {cfg.num_classes}")
    for seq in sequences:
        if not 0 <= seq.label < cfg.num_classes:
            raise ConfigurationError(
                f"sample {seq.sample_id}: label {seq.label} outside the model's {cfg.num_classes} classes")
        if seq.num_joints != cfg.num_joints or seq.in_channels != cfg.in_channels:
            raise ConfigurationError(
                f"sample {seq.sample_id}: {seq.num_joints} joints x {seq.in_channels} channels, "
                f"model expects {cfg.num_joints} x {cfg.in_channels}")


class Trainer:
    """Runs the optimization recipe on one model."""

    def __init__(
        self,
        run: RunConfig,
        train_set: Sequence[SkeletonSequence],
        val_set: Sequence[SkeletonSequence],
        taxonomy: Optional[LabelTaxonomy] = None,
        model: Optional[MmnModel] = None,
        out_dir: Optional[str] = None,
        num_threads: Optional[int] = None,
    ):
        """
        Initialize the trainer.

        Args:
            run: Resolved run configuration
            train_set: Training samples (augmented on the fly)
            val_set: Validation samples (never augmented)
            taxonomy: Label taxonomy, also supplies the bone parent map
            model: Network to train; built from run.model when omitted
            out_dir: Directory for logs and checkpoints (defaults to run.out)
            num_threads: Batch-assembly workers (defaults to MMN_NUM_THREADS)
        """
        self.run = run
        self.cfg = run.train
        self.train_set = list(train_set)
        self.val_set = list(val_set)
        self.taxonomy = taxonomy
        self.model = model if model is not None else MmnModel(run.model)
        self.out_dir = out_dir or run.out or Config.get_output_dir()
        self.num_threads = num_threads or Config.get_num_threads()
        self.bone = run.modality == Config.MODALITY_BONE
        self.parents = taxonomy.joint_parents if taxonomy is not None else None
        self.optimizer = AdamW(dict(self.model.named_parameters()), self.cfg)
        self.state = TrainState(seed=self.cfg.seed)
        self.checkpoints = CheckpointManager(os.path.join(self.out_dir, "checkpoints"))
        self.log_path = os.path.join(self.out_dir, EPOCH_LOG)
        check_compatibility(self.model, self.train_set, taxonomy)

    @property
    def steps_per_epoch(self) -> int:
        return -(-len(self.train_set) // self.cfg.batch_size)

    def resume(self, path: str) -> TrainState:
        """Restore weights, optimizer moments and loop position from a checkpoint."""
        loaded = CheckpointManager.load(path, self.model)
        if loaded.train_state is None:
            raise ConfigurationError(f"{path} holds no training state to resume from")
        self.state = loaded.train_state
        self.optimizer.load_state_arrays(loaded.optimizer_arrays, self.state.optimizer_step)
        logger.info(f"Resuming from {path} at epoch {self.state.epoch}")
        return self.state

    def epoch_order(self, epoch: int) -> np.ndarray:
        return np.random.default_rng([self.cfg.seed, epoch]).permutation(len(self.train_set))

    def train_step(self, frames: np.ndarray, labels: np.ndarray, lr: float, epoch: int, step: int):
        """
        One optimization step on one batch.

        Returns:
            (loss value, number of correct top-1 predictions)
        """
        self.model.train()
        self.model.set_rng(np.random.default_rng([self.cfg.seed, epoch, step, 1]))
        self.optimizer.zero_grad()
        loss, logits = self.model.loss(frames, labels)
        loss.backward()
        self.optimizer.step(lr)
        self.state.optimizer_step = self.optimizer.state.t
        correct = int((np.argmax(logits.data, axis=1) == labels).sum())
        return float(loss.item()), correct

    def run_epoch(self, epoch: int, executor: Optional[ThreadPoolExecutor]) -> Dict[str, float]:
        order = self.epoch_order(epoch)
        size = self.cfg.batch_size
        total_loss, total_correct, seen = 0.0, 0, 0
        augment = self.run.augment
        for step in range(self.steps_per_epoch):
            batch = [self.train_set[i] for i in order[step * size:(step + 1) * size]]
            frames, labels, _ = assemble_batch(batch, self.model.config.num_frames, augment, self.cfg.seed,
                                               epoch, self.parents, self.bone, executor)
            lr = lr_at(epoch_position(epoch, step, self.steps_per_epoch, self.cfg), self.cfg)
            loss, correct = self.train_step(frames, labels, lr, epoch, step)
            total_loss += loss * len(batch)
            total_correct += correct
            seen += len(batch)
            self.state.step += 1
        return {"train_loss": total_loss / seen, "train_top1": total_correct / seen}

    def validate(self, executor: Optional[ThreadPoolExecutor] = None) -> Dict[str, float]:
        if not self.val_set:
            return {"val_top1": 0.0, "val_f1_mean": 0.0}
        preds = predict_sequences(self.model, self.val_set, self.taxonomy, self.cfg.batch_size,
                                  self.bone, executor)
        report = evaluate(preds)
        return {"val_top1": report.top1_action, "val_f1_mean": report.f1_mean}

    def _append_log(self, record: Dict[str, Any]) -> None:
        with open(self.log_path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record) + "\n")

    def fit(self, epochs: Optional[int] = None) -> TrainState:
        """
        Train until `epochs` (default: the configured total) epochs are done.

        Returns:
            The final TrainState; its history holds every epoch record
        """
        epochs = self.cfg.epochs if epochs is None else epochs
        os.makedirs(self.out_dir, exist_ok=True)
        executor = ThreadPoolExecutor(max_workers=self.num_threads) if self.num_threads > 1 else None
        try:
            while self.state.epoch < epochs:
                epoch = self.state.epoch
                record: Dict[str, Any] = {"epoch": epoch, "lr": lr_at(epoch, self.cfg)}
                record.update(self.run_epoch(epoch, executor))
                record.update(self.validate(executor))
                self.state.epoch = epoch + 1
                self.state.history.append(record)
                self._append_log(record)
                logger.info(f"Epoch {epoch}: lr={record['lr']:.3e} loss={record['train_loss']:.4f} "
                            f"train_top1={record['train_top1']:.4f} val_f1_mean={record['val_f1_mean']:.4f}")
                self._save_epoch(epoch, record)
        finally:
            if executor is not None:
                executor.shutdown()
        return self.state

    def _save_epoch(self, epoch: int, record: Dict[str, Any]) -> None:
        optimizer_arrays = self.optimizer.state_arrays()
        if record["val_f1_mean"] > self.state.best_val_f1_mean:
            self.state.best_val_f1_mean = record["val_f1_mean"]
            self.state.best_epoch = epoch
            self.state.best_checkpoint = self.checkpoints.path_for(BEST_CHECKPOINT)
            self.checkpoints.save(BEST_CHECKPOINT, self.model, optimizer_arrays, self.state)
        self.checkpoints.save(f"epoch_{epoch:03d}", self.model, optimizer_arrays, self.state)
        self.checkpoints.save(LAST_CHECKPOINT, self.model, optimizer_arrays, self.state)


def train(
    run: RunConfig,
    train_set: Sequence[SkeletonSequence],
    val_set: Sequence[SkeletonSequence],
    taxonomy: Optional[LabelTaxonomy] = None,
    resume_from: Optional[str] = None,
) -> Trainer:
    """
    Build a trainer, optionally resume, and run it to completion.

    Returns:
        The trainer, holding the trained model and final state
    """
    trainer = Trainer(run, train_set, val_set, taxonomy)
    if resume_from:
        trainer.resume(resume_from)
    trainer.fit()
    return trainer


def loss_trace(history: List[Dict[str, Any]]) -> List[float]:
    return [record["train_loss"] for record in history]
