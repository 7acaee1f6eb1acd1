use std::sync::OnceLock;

use lstm_relevance::explain::{explain, LrpRule, Method};
use lstm_relevance::sentiment::*;

struct Fixture {
    corpus: SentimentCorpus,
    model: SentimentModel,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let mut spec = CorpusSpec::builtin();
        spec.test_sentences = 1000;
        let corpus = build_synthetic_corpus(&spec, 0).unwrap();
        let (model, _) = train_classifier(&corpus, &ClassifierConfig::default()).unwrap();
        Fixture { corpus, model }
    })
}

#[test]
fn classifier_separates_the_corpus() {
    let f = fixture();
    let acc = f.model.accuracy(&f.corpus.test).unwrap();
    assert!(acc >= 0.9, "test accuracy {acc}");
}

#[test]
fn composition_samples_satisfy_their_filters() {
    let f = fixture();
    let cfg = CompositionConfig::default();
    let rep = composition_analysis(&f.model, &f.corpus, &cfg).unwrap();
    let id = |w: &str| f.corpus.id(w).unwrap();
    for w in rep.neutral_negations.iter().chain(&rep.neutral_amplifiers) {
        assert_eq!(f.model.predict(&[id(w)]).unwrap(), 2, "{w} is not neutral alone");
    }
    let pos: Vec<usize> = rep.positive_words.iter().map(|w| id(w)).collect();
    let neg: Vec<usize> = rep.negative_words.iter().map(|w| id(w)).collect();
    for row in &rep.rows {
        for s in &row.samples {
            let ids: Vec<usize> = s.iter().map(|w| id(w)).collect();
            assert_eq!(f.model.predict(&ids).unwrap(), row.expected_class, "{s:?}");
        }
        let (words, class) = match row.kind {
            CompositionKind::NegatedPositive => (&pos, 1),
            CompositionKind::AmplifiedPositive => (&pos, 4),
            CompositionKind::AmplifiedNegative => (&neg, 0),
            CompositionKind::NegatedAmplifiedPositive => continue,
        };
        for m in &row.modifiers {
            let hits = words
                .iter()
                .filter(|&&w| f.model.predict(&[id(m), w]).unwrap() == class)
                .count();
            assert!(hits as f64 >= cfg.consistency * words.len() as f64, "{m}: {hits}");
        }
        if row.count() == 0 {
            assert!(row.mean.is_empty());
        } else {
            assert_eq!(row.mean.len(), row.kind.slots().len());
        }
    }
    for s in &rep.row(CompositionKind::NegatedAmplifiedPositive).samples {
        let inner = [id(&s[1]), id(&s[2])];
        assert_eq!(f.model.predict(&inner).unwrap(), 4);
    }
}

#[test]
fn target_class_changes_a_misclassified_heatmap() {
    let f = fixture();
    let negations = f.corpus.ids_of(Slot::Not);
    let s = f
        .corpus
        .test
        .iter()
        .find(|s| s.ids.iter().any(|i| negations.contains(i)) && f.model.predict(&s.ids).unwrap() != s.label)
        .expect("a misclassified sentence with a negation");
    let seq = f.model.embed(&s.ids).unwrap();
    let pred = f.model.predict(&s.ids).unwrap();
    let m = Method::lrp(LrpRule::All);
    let tokens = f.corpus.tokens(s);
    let r_pred = explain(&f.model.model, &seq, pred, &m).unwrap().per_word;
    let r_true = explain(&f.model.model, &seq, s.label, &m).unwrap().per_word;
    let a = render_heatmap(&tokens, &r_pred, HeatmapFormat::Html).unwrap();
    let b = render_heatmap(&tokens, &r_true, HeatmapFormat::Html).unwrap();
    assert_ne!(a, b);
}

#[test]
fn whitened_pca_of_sentence_representations() {
    let f = fixture();
    let sents = &f.corpus.test[..300];
    for mode in [ReprMode::Avg, ReprMode::Weighted(Method::lrp(LrpRule::All)), "lrp-all-ht".parse().unwrap()] {
        let reps = sentence_representations(&f.model, sents, &mode).unwrap();
        let pca = pca_project(&reps, 2, true).unwrap();
        assert!(!pca.rank_deficient);
        for k in 0..2 {
            let col: Vec<f64> = pca.coordinates.iter().map(|r| r[k]).collect();
            let n = col.len() as f64;
            let m = col.iter().sum::<f64>() / n;
            let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            assert!((v - 1.0).abs() <= 1e-10 && m.abs() <= 1e-10, "{mode}: var {v}");
        }
        assert!(pca.explained_first_two() > 0.0 && pca.explained_first_two() <= 1.0 + 1e-12);
    }
}
