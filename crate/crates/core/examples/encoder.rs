//! The two desk-scale encoders: parameter counts and embedding shapes.

use rpl::nn::{Encoder, EncoderConfig};
use rpl::tensor::Tensor;

fn main() -> rpl::Result<()> {
    for (name, cfg) in [
        ("conv-small", EncoderConfig::conv_small((1, 28, 28), 0)),
        ("mlp-small", EncoderConfig::mlp_small((1, 28, 28), 64, 0)),
        ("conv-small rgb", EncoderConfig::conv_small((3, 32, 32), 0)),
    ] {
        let enc = Encoder::new(cfg)?;
        let (c, h, w) = enc.config().input;
        let batch = Tensor::new(
            vec![4, c, h, w],
            (0..4 * c * h * w).map(|i| ((i * 7919) % 256) as f64 / 255.0).collect(),
        )?;
        let emb = enc.embed(&batch)?;
        println!(
            "{name:>15}: {} parameters in {} tensors, embedding {:?}",
            enc.param_count(),
            enc.params().len(),
            emb.shape()
        );
    }
    Ok(())
}
