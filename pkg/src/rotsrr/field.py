"""The trainable continuous field: hash encoder plus MLP head.

A FieldModel owns one normalization box mapping world millimeters onto
[0,1]^3 so that every consumer (training, rendering, consistency checks)
queries the same coordinate frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hashgrid import HashGridConfig, HashGridParams, encode_backward_batch, encode_batch
from .mlp import MlpConfig, MlpParams, init_params, mlp_backward_batch, mlp_forward_batch


@dataclass
class FieldModel:
    hash_config: HashGridConfig
    hash_params: HashGridParams
    mlp_config: MlpConfig
    mlp_params: MlpParams
    bounds_lo: np.ndarray
    bounds_hi: np.ndarray

    @classmethod
    def create(cls, hash_config: HashGridConfig, bounds, seed: int = 0,
               dtype=np.float32, mlp_config: MlpConfig | None = None) -> "FieldModel":
        """Build a freshly initialized field over the world box ``bounds=(lo, hi)``."""
        lo, hi = (np.asarray(b, dtype=np.float64) for b in bounds)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(hi <= lo):
            raise ValueError("bounds must be two length-3 points with hi > lo")
        if mlp_config is None:
            mlp_config = MlpConfig(input_dim=hash_config.output_dim)
        elif mlp_config.input_dim != hash_config.output_dim:
            raise ValueError(
                f"mlp input_dim {mlp_config.input_dim} != encoder output {hash_config.output_dim}"
            )
        hash_params = HashGridParams.init(hash_config, seed, dtype=dtype)
        mlp_params = init_params(mlp_config, seed + 1, dtype=dtype)
        return cls(hash_config, hash_params, mlp_config, mlp_params, lo, hi)

    @property
    def dtype(self):
        return self.hash_params.tables.dtype

    def normalize_world(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return ((pts - self.bounds_lo) / (self.bounds_hi - self.bounds_lo)).astype(self.dtype)

    def forward01(self, points01, want_cache: bool = False):
        """Evaluate at normalized coordinates (P, 3); optionally keep caches."""
        feats, enc_cache = encode_batch(points01, self.hash_config, self.hash_params,
                                        want_cache=want_cache)
        out, mlp_cache = mlp_forward_batch(feats, self.mlp_config, self.mlp_params)
        if not want_cache:
            return out, None
        return out, (enc_cache, mlp_cache)

    def backward01(self, cache, upstream):
        """Gradients of ``sum(upstream * output)`` w.r.t. all parameters."""
        enc_cache, mlp_cache = cache
        mlp_grads, dfeats = mlp_backward_batch(mlp_cache, self.mlp_config, self.mlp_params, upstream)
        n_feat = self.hash_config.levels * self.hash_config.features_per_entry
        table_grad = encode_backward_batch(enc_cache, dfeats[:, :n_feat], self.hash_config)
        grads = {"tables": table_grad}
        for i, (gw, gb) in enumerate(zip(mlp_grads.weights, mlp_grads.biases)):
            grads[f"W{i}"] = gw
            grads[f"b{i}"] = gb
        return grads

    def evaluate_world(self, points, chunk: int = 131072) -> np.ndarray:
        """Field values at world-space points (P, 3), evaluated in chunks."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.empty(pts.shape[0], dtype=np.float64)
        for start in range(0, pts.shape[0], chunk):
            block = self.normalize_world(pts[start:start + chunk])
            vals, _ = self.forward01(block)
            out[start:start + chunk] = vals
        return out

    def parameters(self) -> dict:
        """Named views of every trainable array (mutated in place by training)."""
        params = {"tables": self.hash_params.tables}
        for i, (w, b) in enumerate(zip(self.mlp_params.weights, self.mlp_params.biases)):
            params[f"W{i}"] = w
            params[f"b{i}"] = b
        return params

    def set_parameters(self, params: dict):
        self.hash_params.tables = params["tables"]
        for i in range(len(self.mlp_params.weights)):
            self.mlp_params.weights[i] = params[f"W{i}"]
            self.mlp_params.biases[i] = params[f"b{i}"]
