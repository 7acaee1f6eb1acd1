//! Sentence-level representations and whitened PCA.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classifier::SentimentModel;
use super::corpus::Sentence;
use crate::error::{Error, Result};
use crate::explain::{explain, explain_lrp, LrpConfig, Method};
use crate::lstm::{InputSequence, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ReprMode {
    /// Mean of the word embeddings.
    Avg,
    /// `Σ_t R_t ⊙ x_t`; methods with only word-level scores scale the whole
    /// embedding by the word relevance.
    Weighted(Method),
    /// `h_T ⊙ R(h_T)` from an LRP backward pass.
    LrpHidden(LrpConfig),
}

impl ReprMode {
    pub fn label(&self) -> String {
        match self {
            ReprMode::Avg => "Avg".into(),
            ReprMode::Weighted(m) => m.label(),
            ReprMode::LrpHidden(c) => format!("{} h_T", Method::Lrp(*c).label()),
        }
    }

    /// The representations shown side by side in the PCA comparison.
    pub fn standard() -> Vec<ReprMode> {
        vec![
            ReprMode::Avg,
            ReprMode::Weighted(Method::GradientXInput),
            ReprMode::Weighted(Method::OCCLUSION_F),
            ReprMode::Weighted(Method::OCCLUSION_P),
            ReprMode::Weighted(Method::Cd),
            ReprMode::Weighted(Method::lrp(crate::explain::LrpRule::All)),
            ReprMode::LrpHidden(LrpConfig::default()),
        ]
    }
}

impl fmt::Display for ReprMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReprMode::Avg => f.write_str("avg"),
            ReprMode::Weighted(m) => m.fmt(f),
            ReprMode::LrpHidden(c) => write!(f, "{}-ht", Method::Lrp(*c)),
        }
    }
}

impl FromStr for ReprMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("avg") {
            return Ok(ReprMode::Avg);
        }
        if let Some(base) = s.strip_suffix("-ht") {
            return match base.parse()? {
                Method::Lrp(c) => Ok(ReprMode::LrpHidden(c)),
                _ => Err(Error::invalid(format!("'{s}': only LRP has a hidden-state representation"))),
            };
        }
        let m: Method = s.parse()?;
        check_weighting(&m)?;
        Ok(ReprMode::Weighted(m))
    }
}

impl From<ReprMode> for String {
    fn from(m: ReprMode) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for ReprMode {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

fn check_weighting(m: &Method) -> Result<()> {
    if *m == Method::Gradient {
        return Err(Error::invalid(
            "gradient scores are not signed input contributions and cannot weight embeddings",
        ));
    }
    Ok(())
}

/// Representation of one input with `target` as the explained class.
pub fn sentence_representation(model: &ModelParams, seq: &InputSequence, target: usize, mode: &ReprMode) -> Result<Vec<f64>> {
    if seq.is_empty() {
        return Err(Error::invalid("representation of an empty sequence"));
    }
    let d = seq.dim();
    match mode {
        ReprMode::Avg => {
            let mut v = vec![0.0; d];
            for t in 0..seq.len() {
                v.iter_mut().zip(seq.step(t)).for_each(|(a, x)| *a += x);
            }
            v.iter_mut().for_each(|a| *a /= seq.len() as f64);
            Ok(v)
        }
        ReprMode::Weighted(m) => {
            check_weighting(m)?;
            let map = explain(model, seq, target, m)?;
            let elementwise = matches!(m, Method::Lrp(_) | Method::GradientXInput);
            let mut v = vec![0.0; d];
            for t in 0..seq.len() {
                let x = seq.step(t);
                match (&map.per_variable, elementwise) {
                    (Some(r), true) => (0..d).for_each(|k| v[k] += r[(t, k)] * x[k]),
                    _ => (0..d).for_each(|k| v[k] += map.per_word[t] * x[k]),
                }
            }
            Ok(v)
        }
        ReprMode::LrpHidden(cfg) => {
            let map = explain_lrp(model, seq, target, cfg)?;
            let trace = model.forward_trace(seq)?;
            let r = map.hidden_relevance.expect("LRP exposes hidden relevance");
            Ok(trace.final_hidden.iter().zip(&r).map(|(h, r)| h * r).collect())
        }
    }
}

/// Representations of labeled sentences, explained for their true class.
pub fn sentence_representations(model: &SentimentModel, sentences: &[Sentence], mode: &ReprMode) -> Result<Vec<Vec<f64>>> {
    sentences
        .par_iter()
        .map(|s| sentence_representation(&model.model, &model.embed(&s.ids)?, s.label, mode))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    /// One row per input vector, one column per retained component.
    pub coordinates: Vec<Vec<f64>>,
    /// Covariance eigenvalues in decreasing order (population normalization).
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues as fractions of the total variance.
    pub explained: Vec<f64>,
    pub components: usize,
    /// Fewer non-degenerate directions than requested components.
    pub rank_deficient: bool,
    pub whitened: bool,
}

impl Pca {
    /// Variance fraction of the first two components.
    pub fn explained_first_two(&self) -> f64 {
        self.explained.iter().take(2).sum()
    }

    pub fn explained_third(&self) -> f64 {
        self.explained.get(2).copied().unwrap_or(0.0)
    }

    pub fn to_tsv(&self, labels: Option<&[usize]>) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# explained_1_2={:.4} explained_3={:.4} rank_deficient={}\n",
            self.explained_first_two(),
            self.explained_third(),
            self.rank_deficient
        ));
        if labels.is_some() {
            out.push_str("label\t");
        }
        let header: Vec<String> = (1..=self.components).map(|k| format!("pc{k}")).collect();
        out.push_str(&header.join("\t"));
        out.push('\n');
        for (i, row) in self.coordinates.iter().enumerate() {
            if let Some(l) = labels {
                out.push_str(&format!("{}\t", l[i]));
            }
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        out
    }
}

/// Projects mean-centered vectors onto the leading covariance eigenvectors;
/// with `whiten`, each coordinate is divided by the square root of its
/// eigenvalue.
pub fn pca_project(vectors: &[Vec<f64>], components: usize, whiten: bool) -> Result<Pca> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::invalid("PCA needs at least two vectors"));
    }
    let d = vectors[0].len();
    if d == 0 || vectors.iter().any(|v| v.len() != d) {
        return Err(Error::Shape("PCA input vectors must share a non-zero length".into()));
    }
    if components == 0 {
        return Err(Error::invalid("at least one component must be requested"));
    }
    if vectors.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("PCA input".into()));
    }
    let mut mean = vec![0.0; d];
    for v in vectors {
        mean.iter_mut().zip(v).for_each(|(m, x)| *m += x / n as f64);
    }
    let x = DMatrix::from_fn(n, d, |i, j| vectors[i][j] - mean[j]);
    let cov = (x.transpose() * &x) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    let explained = eigenvalues
        .iter()
        .map(|l| if total > 0.0 { l / total } else { 0.0 })
        .collect();
    let tol = eigenvalues[0] * 1e-12 * d as f64;
    let usable = eigenvalues.iter().filter(|&&l| l > tol && l > 0.0).count();
    let kept = components.min(usable);
    let coordinates = (0..n)
        .map(|i| {
            order[..kept]
                .iter()
                .zip(&eigenvalues)
                .map(|(&k, &l)| {
                    let p = x.row(i).dot(&eig.eigenvectors.column(k).transpose());
                    if whiten {
                        p / l.sqrt()
                    } else {
                        p
                    }
                })
                .collect()
        })
        .collect();
    Ok(Pca {
        coordinates,
        eigenvalues,
        explained,
        components: kept,
        rank_deficient: kept < components,
        whitened: whiten,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{CellKind, ModelShape, GATE_G};
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    /// Cyclic Jacobi rotations; slow but independent of nalgebra.
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    fn gaussian_cloud(seed_v: u64, n: usize, d: usize) -> Vec<Vec<f64>> {
        let mut rng = seed::rng(seed_v);
        let scales: Vec<f64> = (0..d).map(|k| 0.5 + k as f64).collect();
        (0..n)
            .map(|_| {
                // Box-Muller, then a fixed mixing so the axes are correlated.
                let z: Vec<f64> = (0..d)
                    .map(|k| {
                        let (u1, u2): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen());
                        scales[k] * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                    })
                    .collect();
                (0..d).map(|j| z[j] + 0.3 * z[(j + 1) % d]).collect()
            })
            .collect()
    }

    #[test]
    fn eigenvalues_match_jacobi_oracle() {
        let pts = gaussian_cloud(11, 400, 6);
        let n = pts.len() as f64;
        let d = 6;
        let mean: Vec<f64> = (0..d).map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / n).collect();
        let cov: Vec<Vec<f64>> = (0..d)
            .map(|a| {
                (0..d)
                    .map(|b| pts.iter().map(|p| (p[a] - mean[a]) * (p[b] - mean[b])).sum::<f64>() / n)
                    .collect()
            })
            .collect();
        let oracle = jacobi_eigenvalues(cov);
        let pca = pca_project(&pts, 3, true).unwrap();
        for (a, b) in pca.eigenvalues.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
        let sum: f64 = pca.explained.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_dimensional_data_is_fully_explained() {
        let pts = gaussian_cloud(3, 50, 2);
        let pca = pca_project(&pts, 2, false).unwrap();
        assert!((pca.explained_first_two() - 1.0).abs() < 1e-12);
        assert_eq!(pca.explained_third(), 0.0);
    }

    #[test]
    fn duplicated_cloud_projects_identically() {
        let pts = gaussian_cloud(4, 60, 4);
        let mut twice = pts.clone();
        twice.extend(pts.iter().cloned());
        let a = pca_project(&pts, 2, true).unwrap();
        let b = pca_project(&twice, 2, true).unwrap();
        for i in 0..pts.len() {
            for k in 0..2 {
                // Eigenvector signs are arbitrary.
                let (x, y) = (a.coordinates[i][k], b.coordinates[i][k]);
                assert!((x.abs() - y.abs()).abs() < 1e-9, "{x} {y}");
                assert!((b.coordinates[i][k] - b.coordinates[i + pts.len()][k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_deficiency_is_flagged() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64, 1.0]).collect();
        let pca = pca_project(&pts, 2, true).unwrap();
        assert!(pca.rank_deficient);
        assert_eq!(pca.components, 1);
        assert!(pca.coordinates.iter().all(|r| r.len() == 1));
        assert!(pca_project(&pts[..1], 2, true).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn whitened_coordinates_have_unit_variance(seed_v in any::<u64>(), n in 8usize..60, d in 2usize..6) {
            let pts = gaussian_cloud(seed_v, n, d);
            let pca = pca_project(&pts, 2.min(d), true).unwrap();
            prop_assume!(!pca.rank_deficient);
            for k in 0..pca.components {
                let col: Vec<f64> = pca.coordinates.iter().map(|r| r[k]).collect();
                let m = col.iter().sum::<f64>() / n as f64;
                let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
                prop_assert!(m.abs() <= 1e-10);
                prop_assert!((v - 1.0).abs() <= 1e-10, "variance {}", v);
            }
        }
    }

    fn bag(u: &[f64]) -> ModelParams {
        let shape = ModelShape {
            hidden: 1,
            input_dim: u.len(),
            classes: 1,
            bidirectional: false,
            output_bias: true,
            cell: CellKind::Linear,
        };
        let mut m = ModelParams::zeros(shape);
        m.forward.recurrent[GATE_G][(0, 0)] = 1.0;
        m.forward.input[GATE_G].row_mut(0).copy_from_slice(u);
        m.output[(0, 0)] = 1.0;
        m.output_bias.as_mut().unwrap()[0] = 0.4;
        m
    }

    #[test]
    fn avg_of_one_word_is_its_embedding() {
        let m = bag(&[1.0, 2.0]);
        let seq = InputSequence::from_rows(&[vec![0.3, -0.7]]).unwrap();
        assert_eq!(sentence_representation(&m, &seq, 0, &ReprMode::Avg).unwrap(), vec![0.3, -0.7]);
    }

    #[test]
    fn unit_scalar_relevance_gives_t_times_avg() {
        // Word occlusion on a bag with unit weights and one-hot inputs scores
        // every word exactly 1.
        let m = bag(&[1.0, 1.0, 1.0]);
        let seq = InputSequence::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let r = sentence_representation(&m, &seq, 0, &ReprMode::Weighted(Method::OCCLUSION_F)).unwrap();
        let avg = sentence_representation(&m, &seq, 0, &ReprMode::Avg).unwrap();
        for (a, b) in r.iter().zip(&avg) {
            assert!((a - 4.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn gxi_representation_on_linear_bag_reproduces_score() {
        // With 0/1 embeddings x ⊙ x = x, so the components of Σ R ⊙ x sum
        // to the input part of the logit.
        let u = [0.5, -1.5, 2.0, 0.25];
        let m = bag(&u);
        let mut rng = seed::rng(9);
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..4).map(|_| f64::from(rng.gen_bool(0.5) as u8)).collect())
            .collect();
        let seq = InputSequence::from_rows(&rows).unwrap();
        let f = m.logits(&seq).unwrap()[0];
        let v = sentence_representation(&m, &seq, 0, &ReprMode::Weighted(Method::GradientXInput)).unwrap();
        let total: f64 = v.iter().sum();
        assert!((total - (f - 0.4)).abs() < 1e-12, "{total} vs {f}");
        let unstabilized = Method::Lrp(LrpConfig::unstabilized(crate::explain::LrpRule::All));
        let lrp = sentence_representation(&m, &seq, 0, &ReprMode::Weighted(unstabilized)).unwrap();
        for (a, b) in lrp.iter().zip(&v) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn hidden_representation_and_mode_names() {
        let m = bag(&[1.0, -1.0]);
        let seq = InputSequence::from_rows(&[vec![2.0, 0.5], vec![1.0, 1.0]]).unwrap();
        let mode: ReprMode = "lrp-all-ht".parse().unwrap();
        let v = sentence_representation(&m, &seq, 0, &mode).unwrap();
        // h_T = 1.5 and f = 1.9: R(h_T) = 1.5 · 1.9 / (1.9 + ε).
        let expected = 1.5 * 1.5 * 1.9 / (1.9 + 0.001);
        assert!((v[0] - expected).abs() < 1e-12, "{v:?}");
        assert!("grad".parse::<ReprMode>().is_err());
        assert!("cd-ht".parse::<ReprMode>().is_err());
        for mode in ReprMode::standard() {
            assert_eq!(mode.to_string().parse::<ReprMode>().unwrap(), mode);
        }
        assert!(sentence_representation(&m, &seq, 0, &ReprMode::Weighted(Method::Gradient)).is_err());
    }
}
