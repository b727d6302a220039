//! Load a dataset from the data root and draw the open-set split of a few
//! trials.
//!
//! cargo run --example load_data -- [data_root] [dataset]

use std::path::PathBuf;

use rpl::data::{dataset_available, load_dataset, make_split, DatasetName};
use rpl::harness::DATA_ROOT_ENV;

fn main() -> rpl::Result<()> {
    let mut args = std::env::args().skip(1);
    let root = args
        .next()
        .map(PathBuf::from)
        .or_else(|| std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"));
    let name: DatasetName = args.next().as_deref().unwrap_or("mnist").parse()?;
    if !dataset_available(name, &root) {
        eprintln!("{name} not found under {}", root.display());
        std::process::exit(1);
    }
    let pair = load_dataset(name, &root)?;
    for (part, d) in [("train", &pair.train), ("test", &pair.test)] {
        let mut counts = vec![0usize; d.classes];
        d.labels.iter().for_each(|&y| counts[y] += 1);
        println!("{part}: {} images of {:?}, per class {counts:?}", d.len(), d.dims);
    }
    for trial in 0..3 {
        let s = make_split(name.classes(), 6, 0, trial)?;
        println!("trial {trial}: known {:?} unknown {:?}", s.known, s.unknown);
    }
    Ok(())
}
