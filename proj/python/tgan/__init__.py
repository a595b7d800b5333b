"""Temporal GAN with singular value clipping: Python surface.

Thin convenience layer over the C++ extension: JSON strings crossing the
boundary are converted to and from dicts here.
"""

import json as _json

from ._tgan import (  # noqa: F401
    Model,
    TganNumericalError,
    TganValueError,
    clip_singular_values,
    load_tensor,
    power_iteration,
    save_tensor,
    spectral_norm,
    svd,
)
from . import _tgan as _core

__all__ = [
    "Model",
    "TganNumericalError",
    "TganValueError",
    "certify",
    "clip_singular_values",
    "gam_score",
    "load_tensor",
    "power_iteration",
    "save_tensor",
    "spectral_norm",
    "svd",
    "synthesize",
    "train",
]


def synthesize(config, out_dir):
    """Write a bouncing-shapes dataset; returns the clip count."""
    return _core.synthesize(_json.dumps(config), str(out_dir))


def train(model, train_config, data_dir, out_dir):
    """Run the training loop; returns stats as a dict."""
    return _json.loads(
        _core.train(model, _json.dumps(train_config), str(data_dir),
                    str(out_dir)))


def gam_score(model_a, model_b, data_dir, samples=128, seed=0):
    """Generative Adversarial Metric report as a dict."""
    return _json.loads(
        _core.gam_score(model_a, model_b, str(data_dir), samples, seed))


def certify(model):
    """Lipschitz certificate of a model's discriminator as a dict."""
    return _json.loads(model.certify())
