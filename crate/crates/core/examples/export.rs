//! Train a small model, then export the score histograms and the embedding
//! dump, the same path as `rpl export`.

use std::path::Path;

use rpl::harness::{cmd_export, cmd_train, ExportKind, RunConfig, CHECKPOINT_FILE};

fn main() -> rpl::Result<()> {
    let cfg = RunConfig::parse(
        "preset=mnist-6/4\ndata_root=data\nmode=rpl++\nencoder=mlp-small\nepochs=15\nlr=0.01\n\
         batch_size=32\ntrain_per_class=200\ntest_per_class=50\n",
    )?;
    let dir = Path::new("target/example-runs/export");
    cmd_train(&cfg, dir, &mut |_| {})?;
    for what in [ExportKind::Hist, ExportKind::Emb] {
        let path = cmd_export(&dir.join(CHECKPOINT_FILE), Path::new("data"), what, dir)?;
        let text = std::fs::read_to_string(&path)?;
        println!("{what}: {} ({} lines)", path.display(), text.lines().count());
        for l in text.lines().take(3) {
            println!("  {}", if l.len() > 90 { &l[..90] } else { l });
        }
    }
    Ok(())
}
