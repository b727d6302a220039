//! Reciprocal points by hand: distances, posterior, the two RPL loss terms
//! and the known-ness score on a toy 2-d embedding.

use rpl::reciprocal::{
    class_posterior, detect_score, loss_classification, loss_open, rp_distance, separation_fraction, ReciprocalSet,
};
use rpl::tensor::{Graph, Tensor};

fn main() -> rpl::Result<()> {
    // two classes, one reciprocal point each, margins 1 and 2
    let rps = ReciprocalSet::from_tensors(
        Tensor::new(vec![2, 2], vec![-1.0, 0.0, 1.0, 0.0])?,
        Tensor::from_vec(vec![1.0, 2.0]),
        1,
        0.5,
    )?;
    // the first two samples sit far from their own class's point,
    // the third is near both points like an unknown would be
    let emb = Tensor::new(vec![3, 2], vec![2.0, 0.5, -2.0, 0.5, 0.0, 0.1])?;
    let labels = [0, 1];

    let dist = rps.distances(&emb)?;
    let post = class_posterior(&dist, rps.gamma)?;
    for (i, det) in detect_score(&dist).iter().enumerate() {
        println!(
            "sample {i}: distances {:?} posterior {:.3?} score {:.3} class {}",
            dist.row(i),
            post.row(i),
            det.score,
            det.class
        );
    }

    let mut g = Graph::new();
    let bound = rps.bind(&mut g, true);
    let known = g.input(Tensor::new(vec![2, 2], emb.data()[..4].to_vec())?);
    let d = rp_distance(&mut g, known, &bound)?;
    let lc = loss_classification(&mut g, d, &labels, rps.gamma)?;
    let lo = loss_open(&mut g, known, &labels, &bound)?;
    println!("L_c = {:.4}, L_o = {:.4}", g.value(lc).item()?, g.value(lo).item()?);
    // -1 marks the unknown sample
    let sep = separation_fraction(&dist, &[0, 1, -1])?;
    println!("separation fraction = {sep:?}");
    Ok(())
}
