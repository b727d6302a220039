//! Several seeded trials and their aggregate, the same path as
//! `rpl trials`.
//!
//! cargo run --release --example trials -- [n]

use std::path::Path;

use rpl::harness::{cmd_trials, RunConfig};

fn main() -> rpl::Result<()> {
    let n: usize = std::env::args().nth(1).map_or(Ok(3), |s| s.parse()).unwrap_or(3);
    let cfg = RunConfig::parse(
        "preset=mnist-6/4\ndata_root=data\nmode=rpl\nencoder=mlp-small\nepochs=15\nlr=0.01\n\
         batch_size=32\ntrain_per_class=200\ntest_per_class=50\n",
    )?;
    let report = cmd_trials(&cfg, n, Path::new("target/example-runs/trials"), &mut |line| {
        if line.starts_with("trial=") && !line.contains("epoch=") {
            println!("{line}");
        }
    })?;
    println!(
        "closed accuracy {:.4} +- {:.4}",
        report.closed_accuracy.mean, report.closed_accuracy.std
    );
    if let Some(a) = report.auroc {
        println!("AUROC {:.4} +- {:.4}", a.mean, a.std);
    }
    Ok(())
}
