//! Write a checkpoint, read it back, and show that one flipped byte is
//! caught by the checksum.

use rpl::harness::{ArrayData, Checkpoint, NamedArray, RunConfig};

fn main() -> rpl::Result<()> {
    let cfg = RunConfig::preset("mnist-6/4")?;
    let mut ck = Checkpoint::new(cfg.digest_bytes());
    ck.arrays.push(NamedArray::new("rp.points", vec![2, 3], ArrayData::F64(vec![0.1, -0.2, 0.3, 1e-300, 0.0, -0.0]))?);
    ck.arrays.push(NamedArray::new("classes", vec![2], ArrayData::I64(vec![3, 7]))?);
    ck.arrays.push(NamedArray::bytes("meta.config", cfg.to_text().as_bytes()));

    let bytes = ck.to_bytes();
    let back = Checkpoint::from_bytes(&bytes)?;
    println!("{} bytes, {} arrays, round trip equal: {}", bytes.len(), back.arrays.len(), back == ck);
    println!("bit-exact re-encode: {}", back.to_bytes() == bytes);

    let mut bad = bytes.clone();
    bad[60] ^= 0x10;
    match Checkpoint::from_bytes(&bad) {
        Ok(_) => println!("corruption went unnoticed"),
        Err(e) => println!("corrupted copy rejected: {e}"),
    }
    Ok(())
}
