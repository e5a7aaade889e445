#!/usr/bin/env python3
"""
Versioned binary checkpoint container

Layout (all integers little-endian):

    magic            8 bytes   b"TEPCKPT\\0"
    version          uint32    format version (1)
    d                uint32    embedding size
    n                uint32    number of stocks in the training universe
    seed             int64     seed of the run that produced the weights
    d_feat           uint32    feature width (360 for Alpha360)
    flags            uint32    bit 0 topics_reinit_daily, bit 1 separate_head_weights,
                               bit 2 plain_lstm
    block_count      uint32
    then block_count parameter blocks:
        name_len     uint16
        name         name_len bytes, UTF-8
        ndim         uint8
        shape        ndim x uint32
        data         prod(shape) x float64, row-major, little-endian

Blocks are written in the model's ``state_dict`` order, so identical weights
always produce identical bytes.
"""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Dict, Tuple, Union

import numpy as np
import torch
from loguru import logger

from .artifacts import atomic_write_bytes
from .config import Constants
from .errors import DataError
from .model_core import DTYPE, TopicExpectationModel

HEADER = struct.Struct('<8sIIIqIII')
FLAG_TOPICS_REINIT = 1
FLAG_SEPARATE_HEADS = 2
FLAG_PLAIN_LSTM = 4


@dataclass(frozen=True)
class CheckpointHeader:
    version: int
    d: int
    n: int
    seed: int
    d_feat: int
    topics_reinit_daily: bool
    separate_head_weights: bool
    plain_lstm: bool


def encode_checkpoint(model: TopicExpectationModel, n_stocks: int, seed: int) -> bytes:
    """Serialize a model's parameters into the checkpoint container."""
    flags = ((FLAG_TOPICS_REINIT if model.topics_reinit_daily else 0)
             | (FLAG_SEPARATE_HEADS if model.separate_head_weights else 0)
             | (FLAG_PLAIN_LSTM if model.plain_lstm else 0))
    state = model.state_dict()
    chunks = [HEADER.pack(Constants.CHECKPOINT_MAGIC, Constants.CHECKPOINT_VERSION, model.hidden_size,
                          n_stocks, seed, model.d_feat, flags, len(state))]
    for name, tensor in state.items():
        raw_name = name.encode('utf-8')
        array = np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype='<f8')
        chunks.append(struct.pack('<H', len(raw_name)) + raw_name)
        chunks.append(struct.pack('<B', array.ndim) + struct.pack(f'<{array.ndim}I', *array.shape))
        chunks.append(array.tobytes(order='C'))
    return b''.join(chunks)


def save_checkpoint(model: TopicExpectationModel, file_path: Union[str, Path], n_stocks: int, seed: int) -> Path:
    """
    Write a checkpoint atomically (write-then-rename).

    Args:
        model (TopicExpectationModel): Model to save
        file_path (Union[str, Path]): Destination
        n_stocks (int): Stock count of the training universe
        seed (int): Run seed

    Returns:
        Path: Written file
    """
    path = atomic_write_bytes(file_path, encode_checkpoint(model, n_stocks, seed))
    logger.debug(f"Checkpoint saved: {path}")
    return path


def _read_exact(f: BinaryIO, size: int) -> bytes:
    data = f.read(size)
    if len(data) != size:
        raise DataError("Checkpoint file is truncated")
    return data


def read_checkpoint(file_path: Union[str, Path]) -> Tuple[CheckpointHeader, Dict[str, torch.Tensor]]:
    """
    Parse a checkpoint into its header and named parameter blocks.

    Raises:
        DataError: On a bad magic, unsupported version or truncated file
    """
    with open(file_path, 'rb') as f:
        magic, version, d, n, seed, d_feat, flags, count = HEADER.unpack(_read_exact(f, HEADER.size))
        if magic != Constants.CHECKPOINT_MAGIC:
            raise DataError(f"{file_path} is not a checkpoint (bad magic)")
        if version != Constants.CHECKPOINT_VERSION:
            raise DataError(f"Unsupported checkpoint version {version}")
        blocks: Dict[str, torch.Tensor] = {}
        for _ in range(count):
            (name_len,) = struct.unpack('<H', _read_exact(f, 2))
            name = _read_exact(f, name_len).decode('utf-8')
            (ndim,) = struct.unpack('<B', _read_exact(f, 1))
            shape = struct.unpack(f'<{ndim}I', _read_exact(f, 4 * ndim)) if ndim else ()
            size = int(np.prod(shape)) if shape else 1
            array = np.frombuffer(_read_exact(f, 8 * size), dtype='<f8').reshape(shape)
            blocks[name] = torch.from_numpy(array.astype(np.float64))
        if f.read(1):
            raise DataError(f"{file_path} has trailing bytes after the last block")

    header = CheckpointHeader(version=version, d=d, n=n, seed=seed, d_feat=d_feat,
                              topics_reinit_daily=bool(flags & FLAG_TOPICS_REINIT),
                              separate_head_weights=bool(flags & FLAG_SEPARATE_HEADS),
                              plain_lstm=bool(flags & FLAG_PLAIN_LSTM))
    return header, blocks


def load_checkpoint(file_path: Union[str, Path]) -> Tuple[TopicExpectationModel, CheckpointHeader]:
    """Rebuild a model from a checkpoint file."""
    header, blocks = read_checkpoint(file_path)
    model = TopicExpectationModel(d_feat=header.d_feat, hidden_size=header.d, dropout=0.0,
                                  topics_reinit_daily=header.topics_reinit_daily,
                                  separate_head_weights=header.separate_head_weights,
                                  plain_lstm=header.plain_lstm)
    try:
        model.load_state_dict({k: v.to(DTYPE) for k, v in blocks.items()})
    except RuntimeError as e:
        raise DataError(f"Checkpoint blocks do not match the model layout: {e}") from e
    model.eval()
    return model, header
