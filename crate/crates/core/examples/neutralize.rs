//! Rule-based style neutralization of a few texts.

use restyle::neutralizer::{neutrality_score, ParaphraseSettings, Paraphraser, RuleNeutralizer};
use restyle::style_space::FeatureStyleEmbedder;

fn main() -> anyhow::Result<()> {
    let para = RuleNeutralizer::default();
    let embedder = FeatureStyleEmbedder::new(256)?;
    let settings = ParaphraseSettings::default().with_samples(3);
    for text in [
        "DUDE, I'M SO INTO THE SPICY SOUP WE COOKED!!! XD",
        "honestly, it is not the quiet lake we visited...",
        "lol ur right, it's sooo good!!",
    ] {
        println!("{text}");
        for p in para.paraphrase(text, &settings)? {
            println!("  -> {p}   (neutrality {:.3})", neutrality_score(text, &p, &embedder)?);
        }
    }
    Ok(())
}
