use rand::Rng;

use super::NeuralError;

/// Inverted-dropout mask: entries are 0 or `1 / keep_prob`, so each entry
/// has expectation 1. Outside training every entry is 1.
pub fn dropout_mask<R: Rng + ?Sized>(
    len: usize,
    keep_prob: f64,
    training: bool,
    rng: &mut R,
) -> Result<Vec<f64>, NeuralError> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(NeuralError::InvalidKeepProb(keep_prob));
    }
    if !training || keep_prob == 1.0 {
        return Ok(vec![1.0; len]);
    }
    let scale = 1.0 / keep_prob;
    Ok((0..len)
        .map(|_| if rng.gen_bool(keep_prob) { scale } else { 0.0 })
        .collect())
}
