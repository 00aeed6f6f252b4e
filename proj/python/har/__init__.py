"""Personalized human-activity recognition.

Discretize -> embed -> convolve networks, classifier-only transfer to a new
subject from a few labeled segments, and a leave-one-subject-out harness.
Configuration dictionaries use the same keys as the CLI's JSON files.
"""

import json as _json

from ._core import (  # noqa: F401
    ConfigError,
    ContractError,
    DataError,
    Dataset,
    DimensionError,
    FormatError,
    HarError,
    IndexError,
    IoError,
    Model,
    ParameterError,
    ProtocolError,
    Report,
    Segment,
    conv1d,
    conv1d_backward,
    discretize_value,
    fine_tune,
    load_csv_dataset,
    load_model,
    load_sda,
    load_wisdm,
    maxpool1d,
    model_from_bytes,
    parse_report_csv,
    relu,
    sample_transfer_instances,
    segment_count,
    smooth,
    softmax,
    softmax_cross_entropy,
    write_csv_dataset,
)
from . import _core


def _dump(config, overrides):
    merged = dict(config or {})
    merged.update(overrides)
    return _json.dumps(merged)


def synth_config(config=None, **overrides):
    """Effective synthetic-data settings as a dict."""
    return _json.loads(_core._synth_config(_dump(config, overrides)))


def synth_generate(config=None, **overrides):
    """Seeded synthetic multi-subject dataset, e.g. ``synth_generate(subjects=4)``."""
    return _core._synth_generate(_dump(config, overrides))


def network_config(config=None, **overrides):
    return _json.loads(_core._network_config(_dump(config, overrides)))


def internal_lengths(config=None, **overrides):
    return _core.internal_lengths(_dump(config, overrides))


def build_network(config=None, label_names=(), **overrides):
    """A freshly initialized model; the classifier starts at zero."""
    return _core._build_network(_dump(config, overrides), list(label_names))


def network_for(dataset, config=None, **overrides):
    """A model whose input and class dimensions match ``dataset``."""
    shape = {"channels": dataset.channels, "window": dataset.window, "classes": dataset.classes}
    merged = dict(config or {})
    merged.update(overrides)
    merged.update(shape)
    return build_network(merged, dataset.label_names)


def run_experiment(dataset, config=None, parallel=1, **overrides):
    """Leave-one-subject-out comparison of trc, frozen_source and lr_baseline."""
    return _core._run_experiment(dataset, _dump(config, overrides), parallel)
