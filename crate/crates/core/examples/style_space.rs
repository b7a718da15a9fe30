//! Style embeddings: extraction, pooling, interpolation and similarity.

use restyle::style_space::{cosine, interpolate, mean_pool, FeatureStyleEmbedder, MarkerStyleEmbedder, StyleEmbedder};

fn main() -> anyhow::Result<()> {
    let loud = ["I'M SO INTO THIS GAME, DUDE!!!", "WOW, WE WON IT AGAIN!!! :D", "THAT'S A HUGE GOAL!!"];
    let calm = ["honestly, it is a quiet garden...", "perhaps we will walk later...", "the tea is warm..."];

    let feature = FeatureStyleEmbedder::new(256)?;
    let marker = MarkerStyleEmbedder::fit(loud.iter().chain(&calm).copied())?;
    for e in [&feature as &dyn StyleEmbedder, &marker] {
        let l = mean_pool(&e.embed_all(&loud)?)?;
        let c = mean_pool(&e.embed_all(&calm)?)?;
        println!("{} (d={})", e.embedder_id(), e.dimension());
        println!("  cos(loud, calm) = {:.3}", cosine(&l, &c)?);
        for lam in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let mix = interpolate(&l, &c, lam)?;
            println!("  lam {lam:.2}: cos to loud {:.3}, to calm {:.3}", cosine(&mix, &l)?, cosine(&mix, &c)?);
        }
    }
    Ok(())
}
