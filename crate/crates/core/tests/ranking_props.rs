use std::collections::BTreeSet;

use proptest::prelude::*;
use recheck_core::corpus::BioTag;
use recheck_core::evaluation::score_ranking;
use recheck_core::ranking::{rank_by_confidence, rank_by_similarity, rank_random, Aggregation};
use recheck_core::similarity::{Aligner, SimilarityMethod};
use recheck_core::tagger::SentencePrediction;

fn pool(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i:03}")).collect()
}

fn preds(ids: &[String], confidences: &[f64]) -> Vec<SentencePrediction> {
    ids.iter()
        .zip(confidences)
        .map(|(id, &c)| SentencePrediction {
            id: id.clone(),
            tags: vec![BioTag::Outside; 3],
            confidence: c,
            log_partition: None,
            path_score: None,
            raw_score: false,
        })
        .collect()
}

fn is_permutation(ranked: &[&str], pool: &[String]) -> bool {
    let mut a: Vec<&str> = ranked.to_vec();
    let mut b: Vec<&str> = pool.iter().map(String::as_str).collect();
    a.sort();
    b.sort();
    a == b
}

const WORDS: &[&str] = &["braf", "kras", "mutation", "deletion", "exon", "19", "in", "the", "v600e"];

fn sentences(max: usize) -> impl Strategy<Value = Vec<Vec<&'static str>>> {
    prop::collection::vec(prop::collection::vec(prop::sample::select(WORDS), 1..6), 1..max)
}

proptest! {
    #[test]
    fn random_ranking_is_a_permutation(n in 1usize..60, seed in any::<u64>()) {
        let ids = pool(n);
        let r = rank_random(&ids, seed).unwrap();
        prop_assert!(is_permutation(&r.ids(), &ids));
    }

    #[test]
    fn confidence_order_survives_monotone_transforms(
        raw in prop::collection::vec(1u32..1000, 1..40),
        shift in -5.0f64..5.0,
    ) {
        let ids = pool(raw.len());
        let conf: Vec<f64> = raw.iter().map(|&r| r as f64 / 1000.0).collect();
        let base = rank_by_confidence(&preds(&ids, &conf), &ids, false).unwrap();
        prop_assert!(is_permutation(&base.ids(), &ids));
        // Strictly increasing maps of (0, 1]: power, and a log-sigmoid shift
        // mapped back into (0, 1].
        let squared: Vec<f64> = conf.iter().map(|c| c * c).collect();
        let squashed: Vec<f64> = conf
            .iter()
            .map(|c| 1.0 / (1.0 + (-(c.ln() + shift)).exp()))
            .collect();
        for transformed in [squared, squashed] {
            let r = rank_by_confidence(&preds(&ids, &transformed), &ids, false).unwrap();
            prop_assert_eq!(r.ids(), base.ids());
        }
    }

    #[test]
    fn confidence_scores_ascend(raw in prop::collection::vec(1u32..1000, 1..40)) {
        let ids = pool(raw.len());
        let conf: Vec<f64> = raw.iter().map(|&r| r as f64 / 1000.0).collect();
        let r = rank_by_confidence(&preds(&ids, &conf), &ids, true).unwrap();
        prop_assert!(r.entries.windows(2).all(|w| w[0].score <= w[1].score));
    }

    #[test]
    fn similarity_max_is_monotone_in_the_error_set(
        errors in sentences(5),
        extra in prop::collection::vec(prop::sample::select(WORDS), 1..6),
        pool_sents in sentences(12),
    ) {
        let method = SimilarityMethod::Alignment(Aligner::default());
        let err_ids: Vec<String> = (0..errors.len()).map(|i| format!("e{i}")).collect();
        let pool_ids = pool(pool_sents.len());
        let errs: Vec<(&str, Vec<&str>)> = err_ids.iter().map(String::as_str).zip(errors.clone()).collect();
        let mut more = errs.clone();
        more.push(("e_extra", extra));
        let p: Vec<(&str, Vec<&str>)> = pool_ids.iter().map(String::as_str).zip(pool_sents).collect();
        let before = rank_by_similarity(&errs, &p, &method, Aggregation::Max).unwrap();
        let after = rank_by_similarity(&more, &p, &method, Aggregation::Max).unwrap();
        prop_assert!(is_permutation(&before.ids(), &pool_ids));
        prop_assert!(before.entries.windows(2).all(|w| w[0].score >= w[1].score));
        for e in &before.entries {
            let a = after.entries.iter().find(|x| x.id == e.id).unwrap();
            prop_assert!(a.score >= e.score);
        }
    }
}

/// Mean precision@200 of 1000 random rankings stays within three standard
/// errors of the base rate, the standard error coming from the
/// hypergeometric variance.
#[test]
fn random_precision_matches_hypergeometric_expectation() {
    let (n, d, k, runs) = (1331usize, 207usize, 200usize, 1000usize);
    let ids = pool(n);
    let discrepant: BTreeSet<String> = ids[..d].iter().cloned().collect();
    let mut sum = 0.0;
    for seed in 0..runs as u64 {
        let r = rank_random(&ids, seed).unwrap();
        sum += score_ranking(&r.ids(), &discrepant, k).unwrap().precision;
    }
    let mean = sum / runs as f64;
    let p = d as f64 / n as f64;
    let var_hits = k as f64 * p * (1.0 - p) * (n - k) as f64 / (n - 1) as f64;
    let se = var_hits.sqrt() / k as f64 / (runs as f64).sqrt();
    assert!((mean - p).abs() <= 3.0 * se, "mean {mean}, base {p}, se {se}");
}

#[test]
fn precision_at_full_pool_is_base_rate() {
    let ids = pool(50);
    let discrepant: BTreeSet<String> = ids.iter().step_by(7).cloned().collect();
    let r = rank_random(&ids, 3).unwrap();
    let s = score_ranking(&r.ids(), &discrepant, 50).unwrap();
    assert_eq!(s.precision, discrepant.len() as f64 / 50.0);
    assert_eq!(s.recall, 1.0);
}

#[test]
fn oracle_ranking_dominates() {
    let ids = pool(40);
    let discrepant: BTreeSet<String> = ids.iter().skip(3).step_by(5).cloned().collect();
    let mut oracle: Vec<&str> = discrepant.iter().map(String::as_str).collect();
    oracle.extend(ids.iter().map(String::as_str).filter(|i| !discrepant.contains(*i)));
    for seed in 0..20 {
        let r = rank_random(&ids, seed).unwrap();
        for k in 1..=40 {
            let o = score_ranking(&oracle, &discrepant, k).unwrap();
            if k <= discrepant.len() {
                assert_eq!(o.precision, 1.0);
            }
            assert!(score_ranking(&r.ids(), &discrepant, k).unwrap().precision <= o.precision);
        }
    }
}
