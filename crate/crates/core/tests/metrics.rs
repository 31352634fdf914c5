use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textrec::metrics::{
    aggregate_metrics, hr_at_k, mrr, ndcg_at_k, random_hr_at_k, random_mrr, random_ndcg_at_k, LabeledRanking,
    MetricRecord,
};

/// Ranking over `m` candidates where candidate `i` of `relevant` sits at
/// `at[i]`; the remaining candidates fill the other ranks in order.
fn ranking(m: usize, at: &[usize]) -> LabeledRanking {
    let relevant: Vec<usize> = (0..at.len()).collect();
    let mut ranks = at.to_vec();
    ranks.extend((1..=m).filter(|r| !at.contains(r)));
    LabeledRanking::new(ranks, relevant).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

#[test]
fn mrr_examples() {
    assert!(close(mrr(&ranking(10, &[1])), 1.0));
    assert!(close(mrr(&ranking(10, &[4])), 0.25));
    assert!(close(mrr(&ranking(10, &[1, 3])), 2.0 / 3.0));
}

#[test]
fn ndcg_examples() {
    assert!(close(ndcg_at_k(&ranking(10, &[1]), 5).unwrap(), 1.0));
    assert!(close(ndcg_at_k(&ranking(10, &[3]), 5).unwrap(), 0.5));
    let expected = (1.0 / 3f64.log2() + 1.0 / 5f64.log2()) / (1.0 + 1.0 / 3f64.log2());
    assert!(close(ndcg_at_k(&ranking(10, &[2, 4]), 5).unwrap(), expected));
    assert!(close(ndcg_at_k(&ranking(10, &[7]), 5).unwrap(), 0.0));
    assert!(ndcg_at_k(&ranking(10, &[7]), 5).unwrap().is_sign_positive());
}

#[test]
fn hr_examples() {
    assert!(close(hr_at_k(&ranking(10, &[3]), 5).unwrap(), 1.0));
    assert!(close(hr_at_k(&ranking(10, &[7]), 5).unwrap(), 0.0));
    assert!(close(hr_at_k(&ranking(10, &[2, 9]), 5).unwrap(), 0.5));
}

#[test]
fn invalid_inputs_are_contract_errors() {
    assert!(LabeledRanking::new(vec![1, 2, 3], vec![]).is_err());
    assert!(LabeledRanking::new(vec![1, 1, 3], vec![0]).is_err());
    assert!(LabeledRanking::new(vec![1, 2, 3], vec![3]).is_err());
    assert!(ndcg_at_k(&ranking(3, &[1]), 0).is_err());
    assert!(hr_at_k(&ranking(3, &[1]), 0).is_err());
    assert!(aggregate_metrics(&[]).is_err());
}

#[test]
fn aggregation_examples() {
    let one = MetricRecord::compute(&ranking(10, &[2]));
    assert_eq!(aggregate_metrics(&[one]).unwrap().mean, one);
    let a = MetricRecord::compute(&ranking(10, &[1]));
    let b = MetricRecord::compute(&ranking(10, &[2]));
    let s = aggregate_metrics(&[a, b]).unwrap();
    assert!(close(s.mean.mrr, 0.75));
    assert!(close(s.percent().mrr, 75.0));
}

#[test]
fn aggregation_matches_brute_force_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let recs: Vec<MetricRecord> = (0..100)
        .map(|_| MetricRecord::compute(&ranking(20, &[rng.random_range(1..=20)])))
        .collect();
    let s = aggregate_metrics(&recs).unwrap();
    let n = recs.len() as f64;
    assert!(close(s.mean.mrr, recs.iter().map(|r| r.mrr).sum::<f64>() / n));
    assert!(close(s.mean.ndcg5, recs.iter().map(|r| r.ndcg5).sum::<f64>() / n));
    assert!(close(s.mean.ndcg10, recs.iter().map(|r| r.ndcg10).sum::<f64>() / n));
    assert!(close(s.mean.hr5, recs.iter().map(|r| r.hr5).sum::<f64>() / n));
    assert!(close(s.mean.hr10, recs.iter().map(|r| r.hr10).sum::<f64>() / n));
}

#[test]
fn perfect_top_placement_scores_one() {
    for n_rel in 1..=4 {
        let at: Vec<usize> = (1..=n_rel).collect();
        let r = MetricRecord::compute(&ranking(12, &at));
        for v in [r.ndcg5, r.ndcg10, r.hr5, r.hr10] {
            assert!(close(v, 1.0));
        }
        assert!(r.mrr <= 1.0 && r.mrr > 0.0);
    }
    assert!(close(mrr(&ranking(12, &[1])), 1.0));
}

#[test]
fn metrics_ignore_permutations_of_irrelevant_candidates() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let m = rng.random_range(2..30);
        let n_rel = rng.random_range(1..=m.min(4));
        let mut ranks: Vec<usize> = (1..=m).collect();
        ranks.shuffle(&mut rng);
        let relevant: Vec<usize> = rand::seq::index::sample(&mut rng, m, n_rel).into_vec();
        let base = MetricRecord::compute(&LabeledRanking::new(ranks.clone(), relevant.clone()).unwrap());
        // Shuffle the ranks held by irrelevant candidates among themselves.
        let others: Vec<usize> = (0..m).filter(|i| !relevant.contains(i)).collect();
        let mut held: Vec<usize> = others.iter().map(|&i| ranks[i]).collect();
        held.shuffle(&mut rng);
        for (&i, r) in others.iter().zip(held) {
            ranks[i] = r;
        }
        let moved = MetricRecord::compute(&LabeledRanking::new(ranks, relevant).unwrap());
        assert_eq!(base, moved);
    }
}

#[test]
fn improving_a_relevant_rank_never_hurts() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let m = 20;
        let n_rel = rng.random_range(1..=3);
        let at: Vec<usize> = rand::seq::index::sample(&mut rng, m, n_rel).iter().map(|r| r + 1).collect();
        let which = rng.random_range(0..n_rel);
        let free: Vec<usize> = (1..at[which]).filter(|r| !at.contains(r)).collect();
        let Some(&better) = free.choose(&mut rng) else { continue };
        let mut improved = at.clone();
        improved[which] = better;
        let (a, b) = (MetricRecord::compute(&ranking(m, &at)), MetricRecord::compute(&ranking(m, &improved)));
        assert!(b.mrr > a.mrr);
        assert!(b.ndcg5 >= a.ndcg5 && b.ndcg10 >= a.ndcg10);
        assert!(b.hr5 >= a.hr5 && b.hr10 >= a.hr10);
    }
}

#[test]
fn random_baselines_match_enumeration() {
    for m in [1usize, 2, 7, 20] {
        let recs: Vec<MetricRecord> = (1..=m).map(|r| MetricRecord::compute(&ranking(m, &[r]))).collect();
        let s = aggregate_metrics(&recs).unwrap().mean;
        assert!(close(s.mrr, random_mrr(m)));
        assert!(close(s.ndcg5, random_ndcg_at_k(m, 5)));
        assert!(close(s.hr10, random_hr_at_k(m, 10)));
    }
    assert!((random_mrr(20) - 0.179887).abs() < 1e-6);
}
