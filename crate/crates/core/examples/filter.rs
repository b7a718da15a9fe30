//! The candidate filter on a small hand-made batch.

use restyle::metrics::ScoreVector;
use restyle::pipeline::{drop_table, filter_candidates, FilterSettings, TransferCandidate, AUX_PRIMARY, AUX_SECONDARY};

fn cand(output: &str, away: f64, towards: f64, meaning: f64) -> TransferCandidate {
    let mut scores = ScoreVector::new(away, towards, meaning);
    scores.aux.insert(AUX_PRIMARY.into(), meaning);
    scores.aux.insert(AUX_SECONDARY.into(), meaning);
    TransferCandidate {
        source_text: "THE SOUP WAS HOT!!".into(),
        paraphrase_used: None,
        target_exemplars: vec![],
        output_text: output.into(),
        scores,
        pooled_target: None,
    }
}

fn main() -> anyhow::Result<()> {
    let cands = [
        cand("THE SOUP WAS HOT!!", 1.0, 1.0, 1.0),
        cand("the soup at www.soup.com was hot...", 1.0, 1.0, 0.9),
        cand("the stew was cold...", 1.0, 1.0, 0.4),
        cand("THE SOUP WAS HOT!", 0.5, 0.1, 0.9),
        cand("the soup was hot...", 0.95, 0.8, 0.9),
    ];
    let (kept, drops) = filter_candidates(&cands, &FilterSettings::default())?;
    for k in &kept {
        println!("kept: {}", k.output_text);
    }
    for (rule, n) in drop_table(&drops) {
        println!("{rule}: {n}");
    }
    Ok(())
}
