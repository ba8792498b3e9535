use super::LayerError;
use crate::bitpack::PackedBitTensor;

pub(crate) fn check_pool(timesteps: usize, pool_k: usize, pool_s: usize) -> Result<(), LayerError> {
    if pool_k == 0 {
        return Err(LayerError::ZeroSize);
    }
    if pool_k != pool_s {
        return Err(LayerError::PoolUnsupported { k: pool_k, s: pool_s });
    }
    if pool_k > timesteps {
        return Err(LayerError::PoolTooLarge { k: pool_k, timesteps });
    }
    Ok(())
}

/// Non-overlapping max pooling over time. On {-1, +1} the max is the OR of
/// the bit encodings. A trailing partial window is dropped.
pub fn maxpool_binary(x: &PackedBitTensor, pool_k: usize, pool_s: usize) -> Result<PackedBitTensor, LayerError> {
    check_pool(x.timesteps(), pool_k, pool_s)?;
    let t_out = x.timesteps() / pool_k;
    let c = x.channels();
    let mut out = PackedBitTensor::zeros(t_out, c);
    for t in 0..t_out * pool_k {
        for ch in 0..c {
            out.or_bit(t / pool_k, ch, x.get(t, ch));
        }
    }
    Ok(out)
}
