//! Train one model through the harness, the same path as `rpl train`.
//!
//! cargo run --release --example train -- [mode] [epochs]

use std::path::Path;

use rpl::harness::{cmd_train, RunConfig, CHECKPOINT_FILE};

fn main() -> rpl::Result<()> {
    let mut args = std::env::args().skip(1);
    let mode = args.next().unwrap_or_else(|| "rpl".into());
    let epochs = args.next().unwrap_or_else(|| "15".into());
    let cfg = RunConfig::parse(&format!(
        "preset=mnist-6/4\ndata_root=data\nmode={mode}\nencoder=mlp-small\nepochs={epochs}\nlr=0.01\n\
         batch_size=32\ntrain_per_class=200\ntest_per_class=50\n"
    ))?;
    let out = Path::new("target/example-runs/train");
    let outcome = cmd_train(&cfg, out, &mut |line| println!("{line}"))?;
    if let Some(r) = &outcome.model.reciprocal {
        println!("margins {:.3?}", r.margins.value.data());
    }
    println!("config digest {}", cfg.digest());
    println!("wrote {}", out.join(CHECKPOINT_FILE).display());
    Ok(())
}
