use proptest::prelude::*;
use textrec::ranking::{aggregate_rank, normalize_scores, parse_score_file, rank_order, Direction};

fn fixture_ranks(name: &str) -> Vec<usize> {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap();
    let rows = parse_score_file(&text, &path).unwrap();
    let s_d: Vec<f64> = rows.iter().map(|r| r.s_d).collect();
    let s_p: Vec<f64> = rows.iter().map(|r| r.s_p).collect();
    aggregate_rank(&s_d, &s_p, true).unwrap().ranks
}

#[test]
fn news_fixtures_reproduce_exactly() {
    assert_eq!(fixture_ranks("news_a.txt"), vec![4, 3, 7, 1, 5, 9, 6, 8, 2]);
    assert_eq!(fixture_ranks("news_b.txt"), vec![1, 10, 6, 8, 7, 4, 2, 5, 9, 3]);
}

#[test]
fn quote_fixtures_keep_listed_order() {
    for name in ["quote_c.txt", "quote_d.txt"] {
        assert_eq!(fixture_ranks(name), (1..=10).collect::<Vec<_>>(), "{name}");
    }
}

#[test]
fn footnote_rank_example() {
    assert_eq!(rank_order(&[0.2, 0.6, 0.7, 0.4], Direction::Ascending), vec![1, 3, 4, 2]);
    assert_eq!(rank_order(&[0.2, 0.6, 0.7, 0.4], Direction::Descending), vec![4, 2, 1, 3]);
}

#[test]
fn zero_probability_ranks_last_with_index_ties() {
    let r = aggregate_rank(&[0.0, 0.5, 0.5, 0.0], &[0.3, 0.3, 0.4, 0.0], true).unwrap();
    assert_eq!(r.fused[0], f64::NEG_INFINITY);
    assert_eq!(r.ranks, vec![3, 2, 1, 4]);
}

#[test]
fn pre_normalized_inputs_must_be_probabilities() {
    assert!(aggregate_rank(&[0.5, 1.5], &[0.5, 0.5], true).is_err());
    assert!(aggregate_rank(&[0.5, -0.1], &[0.5, 0.5], true).is_err());
}

#[test]
fn single_candidate_ranks_first() {
    let r = aggregate_rank(&[0.7], &[-3.2], false).unwrap();
    assert_eq!(r.s_d_norm, vec![1.0]);
    assert_eq!(r.ranks, vec![1]);
}

#[test]
fn score_file_errors_carry_line_numbers() {
    match parse_score_file("# header\nc1 0.1 0.2\nc2 0.3\n", "scores.txt") {
        Err(textrec::Error::Parse { line: 3, .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
    match parse_score_file("c1 0.1 nan\n", "scores.txt") {
        Err(textrec::Error::Parse { line: 1, .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
    assert!(parse_score_file("# nothing\n\n", "scores.txt").is_err());
}

fn distinct(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::hash_set(-1000i64..1000, len)
        .prop_map(|s| s.into_iter().map(|x| x as f64 / 97.0).collect())
}

fn is_permutation(ranks: &[usize]) -> bool {
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    sorted == (1..=ranks.len()).collect::<Vec<_>>()
}

proptest! {
    #[test]
    fn normalization_sums_to_one_and_keeps_order(scores in distinct(1..=10)) {
        let p = normalize_scores(&scores).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert_eq!(rank_order(&p, Direction::Descending), rank_order(&scores, Direction::Descending));
    }

    #[test]
    fn ascending_and_descending_ranks_are_complementary(scores in distinct(1..=20)) {
        let asc = rank_order(&scores, Direction::Ascending);
        let desc = rank_order(&scores, Direction::Descending);
        for (a, d) in asc.iter().zip(&desc) {
            prop_assert_eq!(a + d, scores.len() + 1);
        }
    }

    #[test]
    fn fused_ranks_ignore_additive_shifts(
        pairs in prop::collection::vec((-8.0f64..8.0, -8.0f64..0.0), 1..15),
        c in -30.0f64..30.0,
        d in -30.0f64..30.0,
    ) {
        let s_d: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let s_p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let base = aggregate_rank(&s_d, &s_p, false).unwrap();
        let sd2: Vec<f64> = s_d.iter().map(|x| x + c).collect();
        let sp2: Vec<f64> = s_p.iter().map(|x| x + d).collect();
        let shifted = aggregate_rank(&sd2, &sp2, false).unwrap();
        // Shifts can perturb fused values in the last bits; compare only
        // rankings whose fused gaps are well above rounding.
        let mut f = base.fused.clone();
        f.sort_by(f64::total_cmp);
        if f.windows(2).all(|w| w[1] - w[0] > 1e-9) {
            prop_assert_eq!(base.ranks, shifted.ranks);
        }
    }

    #[test]
    fn fused_ranks_equal_product_ranks(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..0.0), 1..15)) {
        let s_d: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let s_p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let r = aggregate_rank(&s_d, &s_p, false).unwrap();
        let product: Vec<f64> = r.s_d_norm.iter().zip(&r.s_p_norm).map(|(a, b)| a * b).collect();
        let mut f = r.fused.clone();
        f.sort_by(f64::total_cmp);
        if f.windows(2).all(|w| w[1] - w[0] > 1e-9) {
            prop_assert_eq!(&r.ranks, &rank_order(&product, Direction::Descending));
        }
        for i in 0..r.fused.len() {
            for j in 0..r.fused.len() {
                if r.fused[i] > r.fused[j] {
                    prop_assert!(r.ranks[i] < r.ranks[j]);
                }
            }
        }
    }

    #[test]
    fn identical_signals_rank_like_either_one(scores in distinct(1..=15)) {
        let r = aggregate_rank(&scores, &scores, false).unwrap();
        prop_assert_eq!(r.ranks, rank_order(&scores, Direction::Descending));
    }

    #[test]
    fn ranks_are_always_permutations(
        pairs in prop::collection::vec((-3i32..3, -3i32..3), 1..20),
    ) {
        // Coarse integer scores force plenty of ties.
        let s_d: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let s_p: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let a = aggregate_rank(&s_d, &s_p, false).unwrap();
        let b = aggregate_rank(&s_d, &s_p, false).unwrap();
        prop_assert!(is_permutation(&a.ranks));
        prop_assert_eq!(&a, &b);
        for w in 0..a.fused.len() {
            for v in w + 1..a.fused.len() {
                if a.fused[w] == a.fused[v] {
                    prop_assert!(a.ranks[w] < a.ranks[v]);
                }
            }
        }
    }
}
