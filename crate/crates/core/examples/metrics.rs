//! Open-set metrics on a hand-made score table.

use rpl::eval::{aupr, auroc, f1_at_threshold, histogram, openness, Positive, ScoreRow, ScoreTable};

fn main() -> rpl::Result<()> {
    let known = [0.9, 0.8, 0.8, 0.7, 0.4];
    let unknown = [0.6, 0.5, 0.8, 0.2];
    println!("AUROC = {:.4}", auroc(&known, &unknown)?);

    let scores: Vec<f64> = known.iter().chain(&unknown).copied().collect();
    let is_known: Vec<bool> = (0..scores.len()).map(|i| i < known.len()).collect();
    println!("AUPR-K = {:.4}", aupr(&scores, &is_known, Positive::Known)?);
    println!("AUPR-U = {:.4}", aupr(&scores, &is_known, Positive::Unknown)?);

    for (train, test) in [(6, 6), (6, 10), (4, 14), (4, 54)] {
        println!("openness({train} known, {test} at test) = {:.4}", openness(train, test)?);
    }

    let rows = scores
        .iter()
        .zip(&is_known)
        .enumerate()
        .map(|(id, (&s, &k))| ScoreRow {
            id,
            is_known: k,
            score: s,
            pred: id % 2,
            true_label: if k { (id % 2) as i64 } else { -1 },
            posterior: Some(vec![s, 1.0 - s]),
        })
        .collect();
    let table = ScoreTable { rows };
    println!("macro F1 at 0.1 = {:.4}", f1_at_threshold(&table, 0.1)?);
    println!("macro F1 at 0.75 = {:.4}", f1_at_threshold(&table, 0.75)?);

    let h = histogram(&known, &unknown, 4)?;
    println!("histogram edges {:?}", h.edges);
    println!("  known   {:?}", h.known);
    println!("  unknown {:?}", h.unknown);
    Ok(())
}
