use proptest::prelude::*;
use recheck_core::corpus::{parse_tags, BioTag, TaggedSentence};
use recheck_core::tagger::lattice::Potentials;
use recheck_core::tagger::{import_external_predictions, train, write_predictions, CrfModel, TrainConfig};

fn potentials() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..5, 1usize..7).prop_flat_map(|(t, n)| {
        (
            Just(t),
            prop::collection::vec(-6.0f64..6.0, n * t),
            prop::collection::vec(-6.0f64..6.0, t * t),
            prop::collection::vec(-6.0f64..6.0, t),
            prop::collection::vec(-6.0f64..6.0, t),
        )
    })
}

proptest! {
    #[test]
    fn viterbi_scores_at_least_any_labeling(
        (t, emission, transition, start, stop) in potentials(),
        seed in any::<u64>(),
    ) {
        let pot = Potentials { emission, transition: &transition, start: &start, stop: &stop, num_tags: t };
        let (path, score) = pot.viterbi();
        prop_assert!((pot.path_score(&path) - score).abs() < 1e-9);
        prop_assert!(score <= pot.log_partition() + 1e-12);
        let mut x = seed;
        let other: Vec<usize> = (0..pot.len())
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (x >> 33) as usize % t
            })
            .collect();
        prop_assert!(pot.path_score(&other) <= score + 1e-12);
    }

    #[test]
    fn shifting_a_position_leaves_probabilities_unchanged(
        (t, emission, transition, start, stop) in potentials(),
        c in -50.0f64..50.0,
        pos in any::<prop::sample::Index>(),
    ) {
        let pot = Potentials { emission: emission.clone(), transition: &transition, start: &start, stop: &stop, num_tags: t };
        let i = pos.index(pot.len());
        let mut shifted = emission;
        for y in 0..t {
            shifted[i * t + y] += c;
        }
        let pot2 = Potentials { emission: shifted, transition: &transition, start: &start, stop: &stop, num_tags: t };
        let (p1, s1) = pot.viterbi();
        let (p2, s2) = pot2.viterbi();
        prop_assert_eq!(p1, p2);
        let lp1 = s1 - pot.log_partition();
        let lp2 = s2 - pot2.log_partition();
        prop_assert!((lp1 - lp2).abs() < 1e-9);
    }

    #[test]
    fn marginals_are_distributions((t, emission, transition, start, stop) in potentials()) {
        let pot = Potentials { emission, transition: &transition, start: &start, stop: &stop, num_tags: t };
        let m = pot.marginals();
        for row in m.node.chunks(t) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&p| (-1e-12..=1.0 + 1e-12).contains(&p)));
        }
        for block in m.edge.chunks(t * t) {
            prop_assert!((block.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

fn sentence(id: &str, words: &[&str], tags: &[&str]) -> TaggedSentence {
    TaggedSentence::new(id, words.iter().copied(), parse_tags(tags).unwrap()).unwrap()
}

#[test]
fn trained_model_learns_separable_data_and_round_trips() {
    let data = vec![
        sentence("a", &["BRAF", "V600E", "was", "found"], &["O", "B-Mutation", "O", "O"]),
        sentence("b", &["KRAS", "G12D", "was", "seen"], &["O", "B-Mutation", "O", "O"]),
        sentence("c", &["exon", "19", "deletion", "noted"], &["B-Mutation", "I-Mutation", "I-Mutation", "O"]),
        sentence("d", &["no", "change", "was", "found"], &["O", "O", "O", "O"]),
    ];
    let cfg = TrainConfig {
        epochs: 60,
        l2: 0.01,
        ..TrainConfig::default()
    };
    let out = train(&data, &cfg).unwrap();
    for s in &data {
        let p = out.model.decode(&s.id, &s.words());
        assert_eq!(p.tags, s.tags, "{}", s.id);
        assert!(p.confidence > 0.5 && p.confidence <= 1.0);
    }
    let dir = std::env::temp_dir().join(format!("recheck-model-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.json");
    out.model.save(&path).unwrap();
    let back = CrfModel::load(&path).unwrap();
    assert_eq!(back, out.model);
    let p = back.decode("n", &["NRAS", "Q61K", "was", "found"]);
    assert_eq!(p.tags[1], BioTag::begin("Mutation"));

    let preds = back.decode_all(data.iter().map(|s| (s.id.as_str(), s.words())).collect::<Vec<_>>().iter().map(|(i, w)| (*i, w.as_slice())));
    let mut buf = Vec::new();
    write_predictions(&mut buf, &preds, &serde_json::json!({"schema": "x"})).unwrap();
    let counts = |id: &str| data.iter().find(|s| s.id == id).map(|s| s.len());
    let read = import_external_predictions(buf.as_slice(), counts).unwrap();
    assert_eq!(read.len(), 4);
    for (a, b) in read.iter().zip(&preds) {
        assert_eq!(a.confidence, b.confidence);
        assert_eq!(a.tags, b.tags);
    }
    std::fs::remove_dir_all(&dir).ok();
}
