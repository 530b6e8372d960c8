//! Entropy stage: quantized tables, the arithmetic coder and the archive
//! container.

pub mod archive;
pub mod bits;
pub mod coder;
pub mod pmf;

pub use archive::{
    decode_stream, decode_stream_par, encode_stream, encode_stream_par, Archive, ModelFactory,
};
pub use coder::{
    decode_chunk, encode_chunk, encode_chunk_with_stats, ArithmeticDecoder, ArithmeticEncoder,
    ChunkFrame, ChunkStats, CoderConfig, CoderState,
};
pub use pmf::{quantize_pmf, quantize_sparse, quantize_weights, QuantizedPmf};
