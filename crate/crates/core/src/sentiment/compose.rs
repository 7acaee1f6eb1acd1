//! Averaged relevance patterns of generated modifier compositions.
//!
//! Candidate words come from the model itself: the sentiment words it scores
//! highest and the modifiers it reads as neutral in isolation. Bigrams and
//! trigrams built from them are kept only when the model composes them as
//! expected, and their LRP relevances (predicted class as target) are
//! averaged per slot.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classifier::SentimentModel;
use super::corpus::{SentimentCorpus, Slot, CLASS_NAMES, NEUTRAL, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::explain::{explain_lrp, LrpConfig, LrpRule};
use crate::lstm::argmax;
use crate::toy::mean_std;

const VERY_NEGATIVE: usize = 0;
const NEGATIVE: usize = 1;
const POSITIVE: usize = 3;
const VERY_POSITIVE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositionKind {
    NegatedPositive,
    AmplifiedPositive,
    AmplifiedNegative,
    NegatedAmplifiedPositive,
}

impl CompositionKind {
    pub const ALL: [CompositionKind; 4] = [
        CompositionKind::NegatedPositive,
        CompositionKind::AmplifiedPositive,
        CompositionKind::AmplifiedNegative,
        CompositionKind::NegatedAmplifiedPositive,
    ];

    pub fn expected_class(self) -> usize {
        match self {
            CompositionKind::NegatedPositive | CompositionKind::NegatedAmplifiedPositive => NEGATIVE,
            CompositionKind::AmplifiedPositive => VERY_POSITIVE,
            CompositionKind::AmplifiedNegative => VERY_NEGATIVE,
        }
    }

    pub fn slots(self) -> &'static [&'static str] {
        match self {
            CompositionKind::NegatedPositive => &["negation", "positive"],
            CompositionKind::AmplifiedPositive => &["amplifier", "positive"],
            CompositionKind::AmplifiedNegative => &["amplifier", "negative"],
            CompositionKind::NegatedAmplifiedPositive => &["negation", "amplifier", "positive"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CompositionKind::NegatedPositive => "negated positive",
            CompositionKind::AmplifiedPositive => "amplified positive",
            CompositionKind::AmplifiedNegative => "amplified negative",
            CompositionKind::NegatedAmplifiedPositive => "negated amplified positive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionConfig {
    /// Sentiment words kept per pole.
    pub top_words: usize,
    /// Minimum share of a modifier's n-grams that must land in the expected
    /// class for the modifier to be retained.
    pub consistency: f64,
    pub lrp: LrpConfig,
}

impl Default for CompositionConfig {
    fn default() -> Self {
        Self {
            top_words: 50,
            consistency: 0.4,
            lrp: LrpConfig::new(LrpRule::All),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionRow {
    pub kind: CompositionKind,
    pub expected_class: usize,
    /// Modifiers that passed the consistency rule (negations for the
    /// trigram type, whose amplifiers are screened per sample).
    pub modifiers: Vec<String>,
    /// Generated n-grams before the class filter.
    pub generated: usize,
    /// Class distribution of the generated n-grams.
    pub class_shares: [f64; NUM_CLASSES],
    /// The averaged n-grams.
    pub samples: Vec<Vec<String>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl CompositionRow {
    pub fn count(&self) -> usize {
        self.samples.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionReport {
    pub config: CompositionConfig,
    pub positive_words: Vec<String>,
    pub negative_words: Vec<String>,
    /// Modifiers the model predicts as neutral on their own.
    pub neutral_negations: Vec<String>,
    pub neutral_amplifiers: Vec<String>,
    pub rows: Vec<CompositionRow>,
    /// Class distribution of negation + negative-word bigrams; this type is
    /// reported but not averaged.
    pub negated_negative_shares: [f64; NUM_CLASSES],
}

impl CompositionReport {
    pub fn row(&self, kind: CompositionKind) -> &CompositionRow {
        self.rows.iter().find(|r| r.kind == kind).expect("every kind has a row")
    }

    pub fn table(&self) -> String {
        let mut out = String::from("composition\tpredicted\tslot_1\tslot_2\tslot_3\tsamples\tgenerated\tmodifiers\n");
        for r in &self.rows {
            out.push_str(&format!("{}\t{}", r.kind.name(), CLASS_NAMES[r.expected_class]));
            for k in 0..3 {
                match (r.mean.get(k), r.std.get(k)) {
                    (Some(m), Some(s)) => out.push_str(&format!("\t{}={m:.3}±{s:.3}", r.kind.slots()[k])),
                    _ => out.push_str("\t-"),
                }
            }
            out.push_str(&format!("\t{}\t{}\t{}\n", r.count(), r.generated, r.modifiers.join(",")));
        }
        let shares: Vec<String> = self
            .negated_negative_shares
            .iter()
            .zip(CLASS_NAMES)
            .map(|(s, c)| format!("{c}:{s:.3}"))
            .collect();
        out.push_str(&format!("# negated negative (excluded): {}\n", shares.join(" ")));
        out
    }
}

struct Scorer<'a> {
    model: &'a SentimentModel,
}

impl Scorer<'_> {
    fn predict_all(&self, grams: &[Vec<usize>]) -> Result<Vec<usize>> {
        grams.par_iter().map(|g| self.model.predict(g)).collect()
    }
}

fn shares(preds: &[usize]) -> [f64; NUM_CLASSES] {
    let mut s = [0.0; NUM_CLASSES];
    for &p in preds {
        s[p] += 1.0;
    }
    if !preds.is_empty() {
        s.iter_mut().for_each(|v| *v /= preds.len() as f64);
    }
    s
}

/// Single words the model assigns to `class`, best `n` by that class's logit.
fn top_words(model: &SentimentModel, candidates: &[usize], class: usize, n: usize) -> Result<Vec<usize>> {
    let mut scored: Vec<(usize, f64)> = Vec::new();
    for &id in candidates {
        let logits = model.logits(&[id])?;
        if argmax(&logits) == class {
            scored.push((id, logits[class]));
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(n).map(|(id, _)| id).collect())
}

fn neutral_words(model: &SentimentModel, candidates: &[usize]) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for &id in candidates {
        if model.predict(&[id])? == NEUTRAL {
            out.push(id);
        }
    }
    Ok(out)
}

/// Modifiers whose bigrams with `words` reach `class` in at least the given
/// share of cases.
fn consistent_modifiers(s: &Scorer, modifiers: &[usize], words: &[usize], class: usize, share: f64) -> Result<Vec<usize>> {
    let mut kept = Vec::new();
    for &m in modifiers {
        let grams: Vec<Vec<usize>> = words.iter().map(|&w| vec![m, w]).collect();
        let preds = s.predict_all(&grams)?;
        let hit = preds.iter().filter(|&&p| p == class).count();
        if !grams.is_empty() && hit as f64 >= share * grams.len() as f64 {
            kept.push(m);
        }
    }
    Ok(kept)
}

fn average_row(
    model: &SentimentModel,
    corpus: &SentimentCorpus,
    cfg: &CompositionConfig,
    kind: CompositionKind,
    modifiers: &[usize],
    generated: &[Vec<usize>],
) -> Result<CompositionRow> {
    let s = Scorer { model };
    let preds = s.predict_all(generated)?;
    let class = kind.expected_class();
    let kept: Vec<&Vec<usize>> = generated.iter().zip(&preds).filter(|(_, &p)| p == class).map(|(g, _)| g).collect();
    let relevances: Vec<Vec<f64>> = kept
        .par_iter()
        .map(|g| Ok(explain_lrp(&model.model, &model.embed(g)?, class, &cfg.lrp)?.per_word))
        .collect::<Result<_>>()?;
    let n_slots = kind.slots().len();
    let (mut mean, mut std) = (Vec::new(), Vec::new());
    if !relevances.is_empty() {
        for k in 0..n_slots {
            let col: Vec<f64> = relevances.iter().map(|r| r[k]).collect();
            let (m, sd) = mean_std(&col);
            mean.push(m);
            std.push(sd);
        }
    }
    Ok(CompositionRow {
        kind,
        expected_class: class,
        modifiers: modifiers.iter().map(|&i| corpus.vocab[i].clone()).collect(),
        generated: generated.len(),
        class_shares: shares(&preds),
        samples: kept.iter().map(|g| g.iter().map(|&i| corpus.vocab[i].clone()).collect()).collect(),
        mean,
        std,
    })
}

/// Runs the composition analysis over the corpus vocabulary.
pub fn composition_analysis(model: &SentimentModel, corpus: &SentimentCorpus, cfg: &CompositionConfig) -> Result<CompositionReport> {
    if model.embeddings.tokens() != corpus.vocab.as_slice() {
        return Err(Error::invalid("model and corpus vocabularies differ"));
    }
    if !(0.0..=1.0).contains(&cfg.consistency) || cfg.top_words == 0 {
        return Err(Error::invalid("consistency must lie in [0, 1] and top_words must be positive"));
    }
    cfg.lrp.validate()?;
    let all: Vec<usize> = (0..corpus.vocab.len()).collect();
    let pos = top_words(model, &all, POSITIVE, cfg.top_words)?;
    let neg = top_words(model, &all, NEGATIVE, cfg.top_words)?;
    let negation_pool: Vec<usize> = [Slot::Not, Slot::InertNot].iter().flat_map(|&s| corpus.ids_of(s)).collect();
    let amplifier_pool: Vec<usize> = [Slot::Amp, Slot::InertAmp].iter().flat_map(|&s| corpus.ids_of(s)).collect();
    let negations = neutral_words(model, &negation_pool)?;
    let amplifiers = neutral_words(model, &amplifier_pool)?;

    let s = Scorer { model };
    let bigrams = |mods: &[usize], words: &[usize]| -> Vec<Vec<usize>> {
        mods.iter().flat_map(|&m| words.iter().map(move |&w| vec![m, w])).collect()
    };

    let neg1 = consistent_modifiers(&s, &negations, &pos, NEGATIVE, cfg.consistency)?;
    let amp2 = consistent_modifiers(&s, &amplifiers, &pos, VERY_POSITIVE, cfg.consistency)?;
    let amp3 = consistent_modifiers(&s, &amplifiers, &neg, VERY_NEGATIVE, cfg.consistency)?;

    // Trigrams use the full neutral lists; a sample counts only if its
    // amplifier + word bigram is itself read as very positive.
    let mut trigrams = Vec::new();
    for &n in &negations {
        for &a in &amplifiers {
            for &w in &pos {
                trigrams.push(vec![n, a, w]);
            }
        }
    }
    let inner: Vec<Vec<usize>> = trigrams.iter().map(|t| t[1..].to_vec()).collect();
    let inner_pred = s.predict_all(&inner)?;
    let trigrams: Vec<Vec<usize>> = trigrams
        .into_iter()
        .zip(inner_pred)
        .filter(|(_, p)| *p == VERY_POSITIVE)
        .map(|(t, _)| t)
        .collect();

    let rows = vec![
        average_row(model, corpus, cfg, CompositionKind::NegatedPositive, &neg1, &bigrams(&neg1, &pos))?,
        average_row(model, corpus, cfg, CompositionKind::AmplifiedPositive, &amp2, &bigrams(&amp2, &pos))?,
        average_row(model, corpus, cfg, CompositionKind::AmplifiedNegative, &amp3, &bigrams(&amp3, &neg))?,
        average_row(model, corpus, cfg, CompositionKind::NegatedAmplifiedPositive, &negations, &trigrams)?,
    ];
    let negated_negative_shares = shares(&s.predict_all(&bigrams(&negations, &neg))?);
    let names = |ids: &[usize]| ids.iter().map(|&i| corpus.vocab[i].clone()).collect();
    Ok(CompositionReport {
        config: cfg.clone(),
        positive_words: names(&pos),
        negative_words: names(&neg),
        neutral_negations: names(&negations),
        neutral_amplifiers: names(&amplifiers),
        rows,
        negated_negative_shares,
    })
}
