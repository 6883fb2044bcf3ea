# Copyright 2026 The comrp Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python bindings for the comrp pseudo-labeling toolkit.

Arrays use numpy: masks and label maps are ``uint8`` of shape (height, width),
RGB images are ``uint8`` of shape (height, width, 3) and sample matrices are
``float64`` of shape (n_samples, n_features).
"""

from ._comrp import (
    Error,
    IGNORE_LABEL,
    agglomerative,
    confusion,
    eig_symmetric,
    evaluate_dirs,
    kmeans,
    kmedoids,
    metrics_report,
    rle_decode,
    rle_encode,
    spectral,
    spectral_from_affinity,
    synth_generate,
)

__all__ = [
    "Error",
    "IGNORE_LABEL",
    "agglomerative",
    "confusion",
    "eig_symmetric",
    "evaluate_dirs",
    "kmeans",
    "kmedoids",
    "metrics_report",
    "rle_decode",
    "rle_encode",
    "spectral",
    "spectral_from_affinity",
    "synth_generate",
]
