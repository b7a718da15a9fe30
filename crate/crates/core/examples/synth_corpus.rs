//! Writes the synthetic two-family corpus and prints a few texts per family.
//!
//! `cargo run --example synth_corpus -- /tmp/corpus.jsonl`

use restyle::synth::{family_of, synth_corpus, Family, SynthConfig};

fn main() -> anyhow::Result<()> {
    let corpus = synth_corpus(&SynthConfig::default())?;
    println!("{} texts from {} authors", corpus.len(), corpus.n_authors());
    for fam in [Family::Loud, Family::Calm] {
        println!("\n{}:", fam.name());
        for r in corpus.records().iter().filter(|r| family_of(&r.author_id) == Some(fam)).take(4) {
            println!("  [{}] {}", r.author_id, r.text);
        }
    }
    if let Some(out) = std::env::args().nth(1) {
        corpus.write_jsonl(&out)?;
        println!("\nwrote {out}");
    }
    Ok(())
}
