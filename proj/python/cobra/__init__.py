# SPDX-License-Identifier: Apache-2.0
"""Bottleneck-token audio-visual fusion, C++ core with python bindings."""

from ._core import (  # noqa: F401
    ConfigurationError,
    DataValueError,
    Model,
    ShapeError,
    UsageError,
    __version__,
    attention_cost,
    ctc_nll,
    ctc_prefix_score,
    edit_distance,
    mix_at_snr,
    modality_influence,
    normalized_influence,
    rollout,
    synth_noise,
    wer,
)
