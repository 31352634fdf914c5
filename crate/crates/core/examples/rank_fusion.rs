//! Fuses discriminative and perplexity scores into one candidate ranking.
//!
//!     cargo run --example rank_fusion

use textrec::ranking::{aggregate_rank, format_ranking, normalize_scores, rank_order, Direction};

fn main() -> textrec::Result<()> {
    // Raw model outputs for five candidates: S^d is an unbounded score head
    // output, S^p a mean token log-likelihood (always <= 0).
    let ids: Vec<String> = ["c1", "c2", "c3", "c4", "c5"].map(String::from).to_vec();
    let s_d = [2.1, -0.4, 1.7, 0.3, 2.0];
    let s_p = [-3.2, -2.1, -2.4, -4.0, -3.6];

    println!("S^d alone ranks  {:?}", rank_order(&s_d, Direction::Descending));
    println!("S^p alone ranks  {:?}", rank_order(&s_p, Direction::Descending));

    // Each list is softmax-normalized over the candidates before fusion.
    let p_d = normalize_scores(&s_d)?;
    println!("softmax(S^d)     {:.3?}", p_d);

    let fused = aggregate_rank(&s_d, &s_p, false)?;
    println!("\n{}", format_ranking(&ids, &fused));

    // Score files from other systems may already hold probabilities.
    let r = aggregate_rank(&[0.5, 0.3, 0.2], &[0.1, 0.6, 0.3], true)?;
    println!("pre-normalized inputs rank {:?}", r.ranks);
    Ok(())
}
