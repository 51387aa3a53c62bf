"""Binary spherical quantization toolkit with a bit-exact arithmetic coder."""

from .autoencoder import TrainConfig, code_usage, init_model, make_synthetic_dataset, train
from .bounds import bound_loose, bound_tight, mc_quant_error
from .codec import StatsReport, compress, decompress, stats
from .coder import BitStream, ac_decode, ac_encode
from .entropy import (
    approximation_gap,
    brute_force_code_dist,
    dataset_entropy_approx,
    entropy_loss,
    grouped_entropy,
    per_sample_entropy,
    soft_assign,
)
from .errors import *  # noqa: F401,F403
from .formats import CompressedFile, TokenFile, load_checkpoint, read_pnm, save_checkpoint
from .mask import BlockMask, blockwise_causal_mask, prefix_restriction
from .models import AdaptiveBitModel, ContextModel, UniformModel, make_model, stream_bits_lower_bound
from .quantizer import bsq_quantize, decode_tokens, encode_tokens, lfq_quantize, project_to_sphere, vq_quantize

__version__ = "0.1.0"
