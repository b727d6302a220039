//! F1 at the fixed 0.1 threshold as more unknown classes enter the test
//! set.

use rpl::harness::{evaluate, f1_openness_sweep, train, trial_split, RunConfig, RunData};

fn main() -> rpl::Result<()> {
    let cfg = RunConfig::parse(
        "preset=mnist-6/4\ndata_root=data\nmode=rpl\nencoder=mlp-small\nepochs=15\nlr=0.01\n\
         batch_size=32\ntrain_per_class=200\ntest_per_class=50\n",
    )?;
    let data = RunData::load(&cfg, &cfg.resolve_data_root()?)?;
    let split = trial_split(&cfg, 0)?;
    let out = train(&cfg, &data, &split, &mut |_| {})?;
    let eval = evaluate(&out.model, &data, &split)?;
    let levels: Vec<usize> = (0..=split.unknown.len()).collect();
    for row in f1_openness_sweep(&eval, &split, &levels)? {
        println!("openness {:.4}  F1 {:.4}", row.openness, row.f1);
    }
    Ok(())
}
