//! A small f32 training engine: NHWC tensors, dilated 2-D convolutions via
//! im2col + GEMM, dense layers, activations and Adam.
//!
//! Layers keep their own gradient buffers. Backward passes are written out
//! by hand per network rather than taped.

mod layers;
mod optim;
mod tensor;

pub use layers::{relu, relu_backward, silu, silu_backward, Conv2d, ConvCache, Linear};
pub use optim::{Adam, Module};
pub use tensor::{gemm, Tensor};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
pub(crate) fn init_uniform(rng: &mut crate::rng::SimRng, fan_in: usize, out: &mut [f32]) {
    use rand::Rng;
    let bound = (fan_in as f32).sqrt().recip();
    for v in out {
        *v = rng.gen_range(-bound..bound);
    }
}

/// Little-endian f32 parameters as base64 text.
pub fn encode_params(params: &[f32]) -> String {
    use base64::Engine;
    let bytes: Vec<u8> = params.iter().flat_map(|v| v.to_le_bytes()).collect();
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

pub fn decode_params(text: &str) -> crate::Result<Vec<f32>> {
    use base64::Engine;
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(text)
        .map_err(|e| crate::Error::invalid(format!("parameter blob is not valid base64: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(crate::Error::invalid("parameter blob length is not a multiple of 4"));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}
