"""Post-fit model compression: pruning, quantization, entropy coding and the MNRC1 container."""

from metanerv.compression.container import (
    bits_per_pixel,
    bpp,
    compress_model,
    decode_container,
    decompress_model,
    encode_container,
    read_container,
    write_container,
)
from metanerv.compression.huffman import entropy_decode, entropy_encode
from metanerv.compression.pruning import finetune_pruned, prune_global_magnitude
from metanerv.compression.quantization import (
    dequantize,
    fake_quantize,
    quantization_aware_finetune,
    quantize,
)

__all__ = [
    "bits_per_pixel",
    "bpp",
    "compress_model",
    "decode_container",
    "decompress_model",
    "dequantize",
    "encode_container",
    "entropy_decode",
    "entropy_encode",
    "fake_quantize",
    "finetune_pruned",
    "prune_global_magnitude",
    "quantization_aware_finetune",
    "quantize",
    "read_container",
    "write_container",
]
