# Copyright 2026 The dcabird Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#       http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Dialect-robust bird call classification.

Thin Python layer over the C++ core. Spectrograms are numpy arrays of shape
(n_mels, frames); model inputs are lists of such arrays.
"""

from ._core import (  # noqa: F401
    N_FRAMES,
    N_MELS,
    N_REGIONS,
    N_SPECIES,
    SAMPLE_RATE,
    SYNTHETIC_WEIGHT,
    ConfigError,
    Error,
    IoError,
    Model,
    add_noise,
    compute_metrics,
    config_keys,
    config_text,
    dialect_transfer,
    evaluate,
    extract_features,
    generate_corpus,
    grad_cam,
    hz_to_mel,
    lime,
    log_mel,
    loss,
    mel_to_hz,
    normalize,
    pitch_shift,
    read_wav,
    region_ltas,
    run_matrix,
    saliency_overlap,
    train,
    write_wav,
)

__version__ = "0.1.0"
