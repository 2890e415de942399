"""Modulation classification on constellation images.

Modules:

* ``modem``      symbol alphabets, frames, flat-fading channel, IQ files
* ``features``   polar transform, hard/soft grid images, cumulants
* ``likelihood`` ML and HLRT classifiers, operator counts
* ``nn``         a small numpy neural-network engine with Adadelta
* ``cnn``        the CNN family, datasets, training and evaluation
* ``nnce``       neural channel estimator and online retraining
* ``bench``      experiment harness (sweeps, retraining, complexity)
"""

from .features import (GridConfig, GridImage, PolarSamples, cumulant_classify, cumulant_features, project_hard,
                       project_soft, to_polar)
from .likelihood import HlrtGrid, count_ops, hlrt_classify, ml_classify, ml_log_likelihood
from .modem import (ChannelParams, ComplexFrame, ModulationType, alphabet, apply_channel, evolve_channel,
                    generate_frame, read_iq, sample_channel, snr_to_noise_power, write_iq)

__version__ = "0.1.0"

__all__ = [
    "ChannelParams", "ComplexFrame", "GridConfig", "GridImage", "HlrtGrid", "ModulationType", "PolarSamples",
    "alphabet", "apply_channel", "count_ops", "cumulant_classify", "cumulant_features", "evolve_channel",
    "generate_frame", "hlrt_classify", "ml_classify", "ml_log_likelihood", "project_hard", "project_soft",
    "read_iq", "sample_channel", "snr_to_noise_power", "to_polar", "write_iq",
]
