//! Templated five-class sentiment corpus.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const NUM_CLASSES: usize = 5;
pub const NEUTRAL: usize = 2;
pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["--", "-", "0", "+", "++"];

const BUILTIN_SPEC: &str = include_str!("../../data/corpus.toml");

/// Word categories a phrase is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Pos,
    Neg,
    Spos,
    Sneg,
    Not,
    Amp,
    InertNot,
    InertAmp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lexicon {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
    pub strong_positive: Vec<String>,
    pub strong_negative: Vec<String>,
    pub negations: Vec<String>,
    pub amplifiers: Vec<String>,
    #[serde(default)]
    pub inert_negations: Vec<String>,
    #[serde(default)]
    pub inert_amplifiers: Vec<String>,
    pub fillers: Vec<String>,
}

impl Lexicon {
    pub fn words(&self, slot: Slot) -> &[String] {
        match slot {
            Slot::Pos => &self.positive,
            Slot::Neg => &self.negative,
            Slot::Spos => &self.strong_positive,
            Slot::Sneg => &self.strong_negative,
            Slot::Not => &self.negations,
            Slot::Amp => &self.amplifiers,
            Slot::InertNot => &self.inert_negations,
            Slot::InertAmp => &self.inert_amplifiers,
        }
    }

    /// Every word in a fixed order: the slot lists, then the fillers.
    fn all_words(&self) -> impl Iterator<Item = (Option<Slot>, &String)> {
        use Slot::*;
        [Pos, Neg, Spos, Sneg, Not, Amp, InertNot, InertAmp]
            .into_iter()
            .flat_map(move |s| self.words(s).iter().map(move |w| (Some(s), w)))
            .chain(self.fillers.iter().map(|w| (None, w)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pattern {
    pub slots: Vec<Slot>,
    pub score: i32,
    pub weight: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub train_sentences: usize,
    pub val_sentences: usize,
    pub test_sentences: usize,
    pub train_lengths: [usize; 2],
    pub test_lengths: [usize; 2],
    pub phrase_counts: Vec<u32>,
    pub single_word_repeats: usize,
    /// Repeats for negations and amplifiers alone (neutral), when larger.
    pub modifier_repeats: usize,
    pub standalone_phrases: usize,
    pub lexicon: Lexicon,
    pub patterns: Vec<Pattern>,
}

impl CorpusSpec {
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN_SPEC).expect("built-in corpus spec parses")
    }

    pub fn builtin_text() -> &'static str {
        BUILTIN_SPEC
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("corpus spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let lx = &self.lexicon;
        let need = [
            ("positive", lx.positive.len(), 50),
            ("negative", lx.negative.len(), 50),
            ("negations", lx.negations.len(), 8),
            ("amplifiers", lx.amplifiers.len(), 20),
            ("fillers", lx.fillers.len(), 1),
        ];
        for (name, have, min) in need {
            if have < min {
                return Err(Error::invalid(format!(
                    "corpus spec lists {have} {name} words, at least {min} are required"
                )));
            }
        }
        let mut seen = HashSet::new();
        for (_, w) in lx.all_words() {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("invalid token {w:?} in corpus spec")));
            }
            if !seen.insert(w.as_str()) {
                return Err(Error::invalid(format!("token {w:?} appears in more than one list")));
            }
        }
        if self.patterns.is_empty() {
            return Err(Error::invalid("corpus spec has no phrase patterns"));
        }
        for p in &self.patterns {
            if p.slots.is_empty() || p.weight == 0 {
                return Err(Error::invalid("phrase patterns need at least one slot and a positive weight"));
            }
            if let Some(s) = p.slots.iter().find(|&&s| lx.words(s).is_empty()) {
                return Err(Error::invalid(format!("pattern uses slot {s:?} with an empty word list")));
            }
        }
        for score in [-2, -1, 1, 2] {
            if !self.patterns.iter().any(|p| p.score == score) {
                return Err(Error::invalid(format!("no phrase pattern has score {score}")));
            }
        }
        let [lo, hi] = self.train_lengths;
        let [tlo, thi] = self.test_lengths;
        if lo == 0 || lo > hi || tlo == 0 || tlo > thi {
            return Err(Error::invalid("sentence length ranges must be non-empty and start at 1 or more"));
        }
        if self.phrase_counts.iter().all(|&w| w == 0) {
            return Err(Error::invalid("phrase count weights are all zero"));
        }
        if self.test_sentences == 0 || self.val_sentences == 0 || self.train_sentences == 0 {
            return Err(Error::invalid("split sizes must be positive"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("corpus spec: {e}")))
    }
}

/// Label of a sentence containing phrases with the given scores.
pub fn label_for_scores(scores: &[i32]) -> usize {
    (scores.iter().sum::<i32>().clamp(-2, 2) + 2) as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    pub ids: Vec<usize>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentimentCorpus {
    pub spec: CorpusSpec,
    pub seed: u64,
    pub vocab: Vec<String>,
    /// Category of each vocabulary entry; `None` for fillers.
    pub categories: Vec<Option<Slot>>,
    pub train: Vec<Sentence>,
    pub val: Vec<Sentence>,
    pub test: Vec<Sentence>,
}

impl SentimentCorpus {
    pub fn tokens(&self, s: &Sentence) -> Vec<String> {
        s.ids.iter().map(|&i| self.vocab[i].clone()).collect()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.vocab.iter().position(|w| w == token)
    }

    pub fn ids_of(&self, slot: Slot) -> Vec<usize> {
        (0..self.vocab.len())
            .filter(|&i| self.categories[i] == Some(slot))
            .collect()
    }

    /// Label counts of a split.
    pub fn class_counts(split: &[Sentence]) -> [usize; NUM_CLASSES] {
        let mut c = [0; NUM_CLASSES];
        for s in split {
            c[s.label] += 1;
        }
        c
    }
}

struct Generator<'a> {
    spec: &'a CorpusSpec,
    slot_ids: Vec<(Slot, Vec<usize>)>,
    filler_ids: Vec<usize>,
}

impl Generator<'_> {
    fn word(&self, slot: Slot, rng: &mut impl Rng) -> usize {
        let ids = &self.slot_ids.iter().find(|(s, _)| *s == slot).expect("slot listed").1;
        ids[rng.gen_range(0..ids.len())]
    }

    fn pattern<'p>(&self, candidates: &[&'p Pattern], rng: &mut impl Rng) -> &'p Pattern {
        let total: u32 = candidates.iter().map(|p| p.weight).sum();
        let mut r = rng.gen_range(0..total);
        for p in candidates {
            if r < p.weight {
                return p;
            }
            r -= p.weight;
        }
        unreachable!("weights sum to total")
    }

    fn phrase(&self, p: &Pattern, rng: &mut impl Rng) -> Vec<usize> {
        p.slots.iter().map(|&s| self.word(s, rng)).collect()
    }

    fn phrase_count(&self, rng: &mut impl Rng) -> usize {
        let w = &self.spec.phrase_counts;
        let mut r = rng.gen_range(0..w.iter().sum::<u32>());
        for (k, &wk) in w.iter().enumerate() {
            if r < wk {
                return k;
            }
            r -= wk;
        }
        unreachable!()
    }

    /// A sentence with the given label and a length drawn from `lengths`.
    fn sentence(&self, label: usize, lengths: [usize; 2], rng: &mut impl Rng) -> Sentence {
        let all: Vec<&Pattern> = self.spec.patterns.iter().collect();
        let phrases = loop {
            let k = self.phrase_count(rng);
            let picked: Vec<&Pattern> = (0..k).map(|_| self.pattern(&all, rng)).collect();
            let scores: Vec<i32> = picked.iter().map(|p| p.score).collect();
            if label_for_scores(&scores) == label {
                break picked.iter().map(|p| self.phrase(p, rng)).collect::<Vec<_>>();
            }
        };
        let used: usize = phrases.iter().map(Vec::len).sum();
        let len = rng.gen_range(lengths[0]..=lengths[1]).max(used);
        let fillers: Vec<usize> = (0..len - used)
            .map(|_| self.filler_ids[rng.gen_range(0..self.filler_ids.len())])
            .collect();
        let mut cuts: Vec<usize> = (0..phrases.len()).map(|_| rng.gen_range(0..=fillers.len())).collect();
        cuts.sort_unstable();
        let mut ids = Vec::with_capacity(len);
        let mut next = 0;
        for (cut, phrase) in cuts.iter().zip(&phrases) {
            ids.extend_from_slice(&fillers[next..*cut]);
            ids.extend_from_slice(phrase);
            next = *cut;
        }
        ids.extend_from_slice(&fillers[next..]);
        Sentence { ids, label }
    }

    fn split(
        &self,
        labels: Vec<usize>,
        lengths: [usize; 2],
        seen: &mut HashSet<Vec<usize>>,
        rng: &mut impl Rng,
    ) -> Vec<Sentence> {
        labels
            .into_iter()
            .map(|label| {
                let mut tries = 0;
                loop {
                    let s = self.sentence(label, lengths, rng);
                    tries += 1;
                    if seen.insert(s.ids.clone()) || tries > 1000 {
                        return s;
                    }
                }
            })
            .collect()
    }
}

fn balanced_labels(counts: [usize; NUM_CLASSES], rng: &mut impl Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
        .collect();
    labels.shuffle(rng);
    labels
}

fn even_counts(n: usize) -> [usize; NUM_CLASSES] {
    std::array::from_fn(|c| n / NUM_CLASSES + usize::from(c < n % NUM_CLASSES))
}

/// Generates the corpus. Validation and test sentences are balanced across
/// labels and never repeat each other or a training sentence. The training
/// split also holds every vocabulary word alone and standalone phrases; the
/// templated training sentences are allocated so that the whole split stays
/// balanced.
pub fn build_synthetic_corpus(spec: &CorpusSpec, corpus_seed: u64) -> Result<SentimentCorpus> {
    spec.validate()?;
    let lx = &spec.lexicon;
    let (categories, vocab): (Vec<Option<Slot>>, Vec<String>) = lx.all_words().map(|(s, w)| (s, w.clone())).unzip();
    use Slot::*;
    let slot_ids = [Pos, Neg, Spos, Sneg, Not, Amp, InertNot, InertAmp]
        .into_iter()
        .map(|s| (s, (0..vocab.len()).filter(|&i| categories[i] == Some(s)).collect()))
        .collect();
    let gen = Generator {
        spec,
        slot_ids,
        filler_ids: (0..vocab.len()).filter(|&i| categories[i].is_none()).collect(),
    };

    let mut seen = HashSet::new();
    let mut rng = seed::rng(seed::derive(corpus_seed, 20, 2));
    let test = gen.split(
        balanced_labels(even_counts(spec.test_sentences), &mut rng),
        spec.test_lengths,
        &mut seen,
        &mut rng,
    );
    let mut rng = seed::rng(seed::derive(corpus_seed, 20, 1));
    let val = gen.split(
        balanced_labels(even_counts(spec.val_sentences), &mut rng),
        spec.test_lengths,
        &mut seen,
        &mut rng,
    );

    let mut rng = seed::rng(seed::derive(corpus_seed, 20, 0));
    let mut extras = Vec::new();
    for (id, cat) in categories.iter().enumerate() {
        let label = match cat {
            Some(Pos) => 3,
            Some(Neg) => 1,
            Some(Spos) => 4,
            Some(Sneg) => 0,
            _ => NEUTRAL,
        };
        let repeats = match cat {
            Some(Not | Amp | InertNot | InertAmp) => spec.single_word_repeats.max(spec.modifier_repeats),
            _ => spec.single_word_repeats,
        };
        for _ in 0..repeats {
            extras.push(Sentence { ids: vec![id], label });
        }
    }
    let polar = [0usize, 1, 3, 4];
    for k in 0..spec.standalone_phrases {
        let label = polar[k % polar.len()];
        let cands: Vec<&Pattern> = spec
            .patterns
            .iter()
            .filter(|p| label_for_scores(&[p.score]) == label)
            .collect();
        let p = gen.pattern(&cands, &mut rng);
        extras.push(Sentence {
            ids: gen.phrase(p, &mut rng),
            label,
        });
    }
    let have = SentimentCorpus::class_counts(&extras);
    let target = even_counts(spec.train_sentences + extras.len());
    let mut main_counts = [0; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        main_counts[c] = target[c].saturating_sub(have[c]);
    }
    let mut train = gen.split(balanced_labels(main_counts, &mut rng), spec.train_lengths, &mut seen, &mut rng);
    train.extend(extras);
    train.shuffle(&mut rng);

    Ok(SentimentCorpus {
        spec: spec.clone(),
        seed: corpus_seed,
        vocab,
        categories,
        train,
        val,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CorpusSpec {
        let mut s = CorpusSpec::builtin();
        s.train_sentences = 600;
        s.val_sentences = 100;
        s.test_sentences = 200;
        s.standalone_phrases = 200;
        s.modifier_repeats = 2;
        s
    }

    #[test]
    fn deterministic_and_balanced() {
        let spec = small();
        let a = build_synthetic_corpus(&spec, 3).unwrap();
        assert_eq!(a, build_synthetic_corpus(&spec, 3).unwrap());
        assert_ne!(a.train, build_synthetic_corpus(&spec, 4).unwrap().train);
        for split in [&a.train, &a.val, &a.test] {
            let c = SentimentCorpus::class_counts(split);
            let (lo, hi) = (c.iter().min().unwrap(), c.iter().max().unwrap());
            assert!((hi - lo) as f64 <= 0.1 * *hi as f64, "{c:?}");
            assert!(split.iter().all(|s| s.label < NUM_CLASSES && s.ids.iter().all(|&i| i < a.vocab.len())));
        }
        assert!(a.test.iter().all(|s| s.ids.len() >= 10));
        let train: HashSet<_> = a.train.iter().map(|s| &s.ids).collect();
        let test: HashSet<_> = a.test.iter().map(|s| &s.ids).collect();
        assert!(a.val.iter().all(|s| !train.contains(&s.ids) && !test.contains(&s.ids)));
        assert!(test.is_disjoint(&train));
    }

    #[test]
    fn labels_follow_phrase_scores() {
        assert_eq!(label_for_scores(&[]), NEUTRAL);
        assert_eq!(label_for_scores(&[-1]), 1);
        assert_eq!(label_for_scores(&[2, 1]), 4);
        assert_eq!(label_for_scores(&[-2, 1]), 1);
        // negation + amplifier + positive word
        let spec = CorpusSpec::builtin();
        let p = spec
            .patterns
            .iter()
            .find(|p| p.slots == [Slot::Not, Slot::Amp, Slot::Pos])
            .unwrap();
        assert_eq!(label_for_scores(&[p.score]), 1);
    }

    #[test]
    fn rejects_small_specs() {
        let mut s = CorpusSpec::builtin();
        s.lexicon.positive.truncate(49);
        assert!(s.validate().is_err());
        let mut s = CorpusSpec::builtin();
        s.lexicon.amplifiers.truncate(19);
        assert!(s.validate().is_err());
        let mut s = CorpusSpec::builtin();
        s.lexicon.fillers.push("good".into());
        assert!(s.validate().is_err());
        assert!(CorpusSpec::from_toml("train_sentences = 3").is_err());
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let s = CorpusSpec::builtin();
        assert_eq!(CorpusSpec::from_toml(&s.to_toml().unwrap()).unwrap(), s);
    }
}
