//! Ranking metrics on hand-made rankings and their random-ranking baselines.
//!
//!     cargo run --example ranking_metrics

use textrec::metrics::{aggregate_metrics, random_hr_at_k, random_mrr, random_ndcg_at_k, LabeledRanking, MetricRecord};

fn main() -> textrec::Result<()> {
    // ranks[i] is the 1-based position of candidate i; candidates 0 and 2 are relevant.
    let rankings = [
        LabeledRanking::new(vec![1, 2, 3, 4, 5, 6], vec![0])?,
        LabeledRanking::new(vec![3, 1, 2, 4, 5, 6], vec![0])?,
        LabeledRanking::new(vec![2, 1, 4, 3, 5, 6], vec![0, 2])?,
        LabeledRanking::new(vec![6, 1, 2, 3, 4, 5], vec![0])?,
    ];
    let records: Vec<MetricRecord> = rankings.iter().map(MetricRecord::compute).collect();
    for (r, m) in rankings.iter().zip(&records) {
        println!("ranks {:?} relevant {:?} -> {m:?}", r.ranks(), r.relevant());
    }
    print!("\n{}", aggregate_metrics(&records)?.to_table("example"));

    println!("\nrandom ranking over M candidates, one relevant:");
    for m in [5, 10, 20, 50] {
        println!(
            "  M={m:<3} MRR {:.4}  NDCG@5 {:.4}  HR@5 {:.4}",
            random_mrr(m),
            random_ndcg_at_k(m, 5),
            random_hr_at_k(m, 5)
        );
    }
    Ok(())
}
