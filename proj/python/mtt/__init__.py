"""Audio texture transfer over spectrogram images.

The heavy lifting lives in the compiled `_core` extension; this package just
re-exports it. All audio enters and leaves as 1-D float64 numpy arrays, images
as (H, W, 3) uint8 arrays with row 0 = lowest frequency bin.
"""

from ._core import (
    IoError,
    ValidationError,
    __version__,
    audio_to_image,
    gram,
    griffin_lim,
    image_to_audio,
    init_model,
    pink_noise,
    read_wav,
    resample,
    stft_magnitude,
    train_model,
    transfer_image,
    write_wav,
)

__all__ = [
    "IoError",
    "ValidationError",
    "__version__",
    "audio_to_image",
    "gram",
    "griffin_lim",
    "image_to_audio",
    "init_model",
    "pink_noise",
    "read_wav",
    "resample",
    "stft_magnitude",
    "train_model",
    "transfer_image",
    "write_wav",
]
