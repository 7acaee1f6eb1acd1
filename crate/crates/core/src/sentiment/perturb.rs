//! Word-removal perturbation experiment.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classifier::SentimentModel;
use super::corpus::Sentence;
use crate::error::{Error, Result};
use crate::explain::{explain, Method};
use crate::lstm::argmax;
use crate::seed;

/// Source of the word ranking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Ranker {
    Random,
    Relevance(Method),
}

impl Ranker {
    pub fn label(&self) -> String {
        match self {
            Ranker::Random => "Random".into(),
            Ranker::Relevance(m) => m.label(),
        }
    }
}

impl fmt::Display for Ranker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ranker::Random => f.write_str("random"),
            Ranker::Relevance(m) => m.fmt(f),
        }
    }
}

impl FromStr for Ranker {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("random") {
            Ok(Ranker::Random)
        } else {
            s.parse().map(Ranker::Relevance)
        }
    }
}

impl From<Ranker> for String {
    fn from(r: Ranker) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for Ranker {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Removal {
    /// Drop the word and join the remaining parts.
    Discard,
    /// Keep the position with a zero embedding.
    ZeroEmbedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub rankers: Vec<Ranker>,
    pub max_removed: usize,
    pub min_length: usize,
    pub removal: Removal,
    pub seed: u64,
}

impl PerturbConfig {
    pub fn new(rankers: Vec<Ranker>) -> Self {
        Self {
            rankers,
            max_removed: 3,
            min_length: 10,
            removal: Removal::Discard,
            seed: 0,
        }
    }

    /// The rankers of the comparison table: random, the two gradient
    /// methods, occlusion, the LRP rules and CD.
    pub fn standard() -> Self {
        let mut r = vec![
            Ranker::Random,
            Ranker::Relevance(Method::Gradient),
            Ranker::Relevance(Method::GradientXInput),
        ];
        for rule in crate::explain::LrpRule::ALL_RULES {
            r.push(Ranker::Relevance(Method::lrp(rule)));
        }
        r.push(Ranker::Relevance(Method::Cd));
        r.push(Ranker::Relevance(Method::OCCLUSION_F));
        r.push(Ranker::Relevance(Method::OCCLUSION_P));
        Self::new(r)
    }
}

/// Sort direction of a track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    /// Most relevant first, on initially correct sentences.
    Decreasing,
    /// Least relevant first, on initially misclassified sentences.
    Increasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub ranker: Ranker,
    /// Accuracy after removing `k = 1..=max_removed` words.
    pub accuracy: Vec<f64>,
    /// Normalized change per `k`; `None` when random and occlusion removal
    /// give the same change.
    pub normalized: Vec<Option<f64>>,
    pub mean_normalized: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub order: Order,
    pub sentences: usize,
    /// Accuracy before removal (1 for decreasing, 0 for increasing).
    pub initial_accuracy: f64,
    pub rows: Vec<TrackRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbReport {
    pub config: PerturbConfig,
    pub eligible: usize,
    pub decreasing: Track,
    pub increasing: Track,
}

impl PerturbReport {
    pub fn row(&self, order: Order, ranker: &Ranker) -> Option<&TrackRow> {
        let t = match order {
            Order::Decreasing => &self.decreasing,
            Order::Increasing => &self.increasing,
        };
        t.rows.iter().find(|r| &r.ranker == ranker)
    }

    /// Tab-separated table with raw accuracies and normalized changes.
    pub fn table(&self) -> String {
        let k = self.config.max_removed;
        let mut out = String::from("order\tmethod\tsentences");
        for i in 1..=k {
            out.push_str(&format!("\tacc_{i}"));
        }
        for i in 1..=k {
            out.push_str(&format!("\tnorm_{i}"));
        }
        out.push_str("\tnorm_mean\n");
        let fmt = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x:.2}"));
        for t in [&self.decreasing, &self.increasing] {
            let name = match t.order {
                Order::Decreasing => "decreasing",
                Order::Increasing => "increasing",
            };
            for r in &t.rows {
                out.push_str(&format!("{name}\t{}\t{}", r.ranker.label(), t.sentences));
                for a in &r.accuracy {
                    out.push_str(&format!("\t{a:.4}"));
                }
                for v in &r.normalized {
                    out.push_str(&format!("\t{}", fmt(*v)));
                }
                out.push_str(&format!("\t{}\n", fmt(r.mean_normalized)));
            }
        }
        out
    }
}

/// Per-word scores used for ranking, computed on the unmodified sentence
/// with the true class as target.
pub fn ranking_scores(model: &SentimentModel, sentences: &[Sentence], ranker: &Ranker, seed_v: u64) -> Result<Vec<Vec<f64>>> {
    sentences
        .par_iter()
        .enumerate()
        .map(|(i, s)| match ranker {
            Ranker::Random => {
                let mut rng = seed::rng(seed::derive(seed_v, 40, i as u64));
                let mut perm: Vec<f64> = (0..s.ids.len()).map(|p| p as f64).collect();
                perm.shuffle(&mut rng);
                Ok(perm)
            }
            Ranker::Relevance(m) => Ok(explain(&model.model, &model.embed(&s.ids)?, s.label, m)?.per_word),
        })
        .collect()
}

/// Positions in removal order; ties go to the earlier position.
pub fn removal_order(scores: &[f64], order: Order) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let c = match order {
            Order::Decreasing => scores[b].total_cmp(&scores[a]),
            Order::Increasing => scores[a].total_cmp(&scores[b]),
        };
        c.then(a.cmp(&b))
    });
    idx
}

fn classify_without(model: &SentimentModel, s: &Sentence, removed: &[usize], removal: Removal) -> Result<usize> {
    let logits = match removal {
        Removal::Discard => {
            let ids: Vec<usize> = s
                .ids
                .iter()
                .enumerate()
                .filter(|(p, _)| !removed.contains(p))
                .map(|(_, &id)| id)
                .collect();
            model.logits(&ids)?
        }
        Removal::ZeroEmbedding => {
            let mut seq = model.embed(&s.ids)?;
            for &p in removed {
                seq.step_mut(p).iter_mut().for_each(|v| *v = 0.0);
            }
            model.model.logits(&seq)?
        }
    };
    Ok(argmax(&logits))
}

fn accuracies(
    model: &SentimentModel,
    set: &[&Sentence],
    scores: &[&Vec<f64>],
    order: Order,
    cfg: &PerturbConfig,
) -> Result<Vec<f64>> {
    let correct = set
        .par_iter()
        .zip(scores.par_iter())
        .map(|(s, sc)| {
            let ord = removal_order(sc, order);
            (1..=cfg.max_removed)
                .map(|k| classify_without(model, s, &ord[..k], cfg.removal).map(|c| c == s.label))
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..cfg.max_removed)
        .map(|k| correct.iter().filter(|c| c[k]).count() as f64 / set.len().max(1) as f64)
        .collect())
}

/// Normalized change `100 (Δm − Δrand) / (Δocc − Δrand)` per `k`.
fn normalize(acc: &[f64], random: &[f64], occ: &[f64]) -> (Vec<Option<f64>>, Option<f64>) {
    let per_k: Vec<Option<f64>> = acc
        .iter()
        .zip(random)
        .zip(occ)
        .map(|((a, r), o)| {
            let den = o - r;
            // Ratio first, so the occlusion anchor is exactly 100.
            (den != 0.0).then(|| 100.0 * ((a - r) / den))
        })
        .collect();
    let mean = if per_k.iter().all(Option::is_some) {
        Some(per_k.iter().flatten().sum::<f64>() / per_k.len() as f64)
    } else {
        None
    };
    (per_k, mean)
}

/// Runs both tracks from precomputed ranking scores (one entry per ranker,
/// aligned with `sentences`).
pub fn perturbation_from_scores(
    model: &SentimentModel,
    sentences: &[Sentence],
    scores: &[Vec<Vec<f64>>],
    cfg: &PerturbConfig,
) -> Result<PerturbReport> {
    check_rankers(cfg)?;
    let eligible: Vec<usize> = (0..sentences.len())
        .filter(|&i| sentences[i].ids.len() >= cfg.min_length.max(cfg.max_removed + 1))
        .collect();
    if eligible.is_empty() {
        return Err(Error::invalid(format!(
            "no test sentences with at least {} words",
            cfg.min_length
        )));
    }
    let initially: Vec<bool> = eligible
        .par_iter()
        .map(|&i| model.predict(&sentences[i].ids).map(|c| c == sentences[i].label))
        .collect::<Result<_>>()?;

    let mut tracks = Vec::new();
    for order in [Order::Decreasing, Order::Increasing] {
        let want = order == Order::Decreasing;
        let members: Vec<usize> = eligible
            .iter()
            .zip(&initially)
            .filter(|(_, &ok)| ok == want)
            .map(|(&i, _)| i)
            .collect();
        let set: Vec<&Sentence> = members.iter().map(|&i| &sentences[i]).collect();
        let accs = cfg
            .rankers
            .iter()
            .enumerate()
            .map(|(r, _)| {
                let sc: Vec<&Vec<f64>> = members.iter().map(|&i| &scores[r][i]).collect();
                accuracies(model, &set, &sc, order, cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        let initial = if want { 1.0 } else { 0.0 };
        let ri = cfg.rankers.iter().position(|r| *r == Ranker::Random).expect("checked");
        let oi = cfg
            .rankers
            .iter()
            .position(|r| *r == Ranker::Relevance(Method::OCCLUSION_P))
            .expect("checked");
        let rows = cfg
            .rankers
            .iter()
            .zip(&accs)
            .map(|(ranker, acc)| {
                let (normalized, mean_normalized) = if set.is_empty() {
                    (vec![None; cfg.max_removed], None)
                } else {
                    normalize(acc, &accs[ri], &accs[oi])
                };
                TrackRow {
                    ranker: *ranker,
                    accuracy: acc.clone(),
                    normalized,
                    mean_normalized,
                }
            })
            .collect();
        tracks.push(Track {
            order,
            sentences: set.len(),
            initial_accuracy: initial,
            rows,
        });
    }
    let increasing = tracks.pop().expect("two tracks");
    let decreasing = tracks.pop().expect("two tracks");
    Ok(PerturbReport {
        config: cfg.clone(),
        eligible: eligible.len(),
        decreasing,
        increasing,
    })
}

fn check_rankers(cfg: &PerturbConfig) -> Result<()> {
    if !cfg.rankers.contains(&Ranker::Random) || !cfg.rankers.contains(&Ranker::Relevance(Method::OCCLUSION_P)) {
        return Err(Error::invalid(
            "the perturbation experiment needs random and occ-p rankers as normalization anchors",
        ));
    }
    if cfg.max_removed == 0 {
        return Err(Error::invalid("at least one word must be removed"));
    }
    Ok(())
}

/// Ranks words of every eligible sentence with each ranker and runs both
/// removal tracks.
pub fn perturbation_experiment(model: &SentimentModel, sentences: &[Sentence], cfg: &PerturbConfig) -> Result<PerturbReport> {
    check_rankers(cfg)?;
    let scores = cfg
        .rankers
        .iter()
        .map(|r| ranking_scores(model, sentences, r, cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    perturbation_from_scores(model, sentences, &scores, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{CellKind, ModelParams, ModelShape};
    use crate::model_io::Embeddings;
    use rand::Rng;

    fn random_model(seed_v: u64) -> SentimentModel {
        let mut rng = seed::rng(seed_v);
        let shape = ModelShape {
            hidden: 6,
            input_dim: 4,
            classes: 5,
            bidirectional: true,
            output_bias: true,
            cell: CellKind::Lstm,
        };
        let vocab: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
        let table = (0..30 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        SentimentModel {
            model: ModelParams::random(shape, &mut rng, -0.8, 0.8),
            embeddings: Embeddings::new(4, vocab, table).unwrap(),
        }
    }

    fn sentences(seed_v: u64, n: usize) -> Vec<Sentence> {
        let mut rng = seed::rng(seed_v);
        (0..n)
            .map(|_| {
                let len = rng.gen_range(6..14);
                Sentence {
                    ids: (0..len).map(|_| rng.gen_range(0..30)).collect(),
                    label: rng.gen_range(0..5),
                }
            })
            .collect()
    }

    fn config() -> PerturbConfig {
        PerturbConfig::new(vec![
            Ranker::Random,
            Ranker::Relevance(Method::Gradient),
            Ranker::Relevance(Method::lrp(crate::explain::LrpRule::All)),
            Ranker::Relevance(Method::OCCLUSION_P),
        ])
    }

    #[test]
    fn removal_order_breaks_ties_by_position() {
        let s = [0.5, 2.0, 0.5, -1.0, 2.0];
        assert_eq!(removal_order(&s, Order::Decreasing), vec![1, 4, 0, 2, 3]);
        assert_eq!(removal_order(&s, Order::Increasing), vec![3, 0, 2, 1, 4]);
    }

    #[test]
    fn anchors_and_track_split() {
        let m = random_model(1);
        let data = sentences(2, 80);
        let rep = perturbation_experiment(&m, &data, &config()).unwrap();
        let eligible = data.iter().filter(|s| s.ids.len() >= 10).count();
        assert_eq!(rep.eligible, eligible);
        assert_eq!(rep.decreasing.sentences + rep.increasing.sentences, eligible);
        for t in [&rep.decreasing, &rep.increasing] {
            let random = t.rows.iter().find(|r| r.ranker == Ranker::Random).unwrap();
            let occ = t.rows.iter().find(|r| r.ranker == Ranker::Relevance(Method::OCCLUSION_P)).unwrap();
            for (r, o) in random.normalized.iter().zip(&occ.normalized) {
                if let (Some(r), Some(o)) = (r, o) {
                    assert_eq!(*r, 0.0);
                    assert_eq!(*o, 100.0);
                }
            }
            assert!(t.rows.iter().all(|r| r.accuracy.len() == 3));
        }
        assert!(rep.table().lines().count() == 1 + 2 * 4);
    }

    #[test]
    fn cached_scores_reproduce_the_report() {
        let m = random_model(3);
        let data = sentences(4, 60);
        let cfg = config();
        let direct = perturbation_experiment(&m, &data, &cfg).unwrap();
        let scores: Vec<_> = cfg.rankers.iter().map(|r| ranking_scores(&m, &data, r, cfg.seed).unwrap()).collect();
        let cached = perturbation_from_scores(&m, &data, &scores, &cfg).unwrap();
        assert_eq!(direct, cached);
        assert_eq!(serde_json::to_string(&direct).unwrap(), serde_json::to_string(&cached).unwrap());
    }

    #[test]
    fn zero_embedding_removal_runs() {
        let m = random_model(5);
        let data = sentences(6, 40);
        let mut cfg = config();
        cfg.removal = Removal::ZeroEmbedding;
        let rep = perturbation_experiment(&m, &data, &cfg).unwrap();
        assert_eq!(rep.config.removal, Removal::ZeroEmbedding);
    }

    #[test]
    fn rejects_short_corpora_and_missing_anchors() {
        let m = random_model(7);
        let short: Vec<Sentence> = sentences(8, 20).into_iter().map(|mut s| {
            s.ids.truncate(5);
            s
        }).collect();
        assert!(perturbation_experiment(&m, &short, &config()).is_err());
        let cfg = PerturbConfig::new(vec![Ranker::Random, Ranker::Relevance(Method::Gradient)]);
        assert!(perturbation_experiment(&m, &sentences(9, 20), &cfg).is_err());
    }

    #[test]
    fn ranker_names_round_trip() {
        for r in PerturbConfig::standard().rankers {
            assert_eq!(r.to_string().parse::<Ranker>().unwrap(), r);
        }
        assert_eq!("Random".parse::<Ranker>().unwrap(), Ranker::Random);
    }
}
