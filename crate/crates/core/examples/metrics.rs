//! Scores for a handful of outputs and the rerank order they induce.

use restyle::metrics::{away, joint_eval, rerank_score, sim, towards, ScoreVector};
use restyle::style_space::MarkerStyleEmbedder;

fn main() -> anyhow::Result<()> {
    let source = ["I'M SO INTO THE SPICY SOUP WE COOKED!!!", "THE SOUP WAS HOT!!"];
    let target = ["honestly, the garden is quiet today...", "perhaps we will walk to the lake..."];
    let embedder = MarkerStyleEmbedder::fit(source.iter().chain(&target).copied())?;
    let outputs = [
        "I'M SO INTO THE SPICY SOUP WE COOKED!!!",
        "i am so into the spicy soup we cooked...",
        "honestly, the garden is quiet today...",
    ];
    for o in outputs {
        let s = ScoreVector::new(
            away(&source, o, &embedder)?,
            towards(&target, o, &embedder)?,
            sim(source[0], o),
        );
        println!(
            "away {:.3} towards {:.3} sim {:.3} rerank {:.4}  {o}",
            s.away,
            s.towards,
            s.sim,
            rerank_score(&s)?
        );
    }
    println!("rerank(0.9, 0.3, 0.7) = {:.5}", rerank_score(&ScoreVector::new(0.9, 0.3, 0.7))?);
    println!("joint_eval(0.92, 0.80, 0.77) = {:.4}", joint_eval(0.92, 0.80, 0.77)?);
    Ok(())
}
