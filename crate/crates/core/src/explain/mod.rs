//! Attribution methods. Every method returns a [`RelevanceMap`] with the same
//! layout so that downstream code does not need to know which one produced it.

mod cd;
mod lrp;
mod occlusion;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{self, check_class};
use crate::lstm::{InputSequence, ModelParams};
use crate::tensor::Matrix;

pub use cd::{explain_cd, explain_cd_words, CdDecomposition};
pub use lrp::{explain_lrp, lrp_linear, lrp_product, LrpConfig, LrpRule};
pub use occlusion::{explain_occlusion, Granularity, OcclusionMode};

/// Relevance scores for one input and one target class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceMap {
    pub method: Method,
    pub target: usize,
    /// Model scores on the unmodified input.
    pub logits: Vec<f64>,
    /// `T × D` relevances, absent for methods that only score whole words.
    pub per_variable: Option<Matrix>,
    pub per_word: Vec<f64>,
    /// LRP only: relevance of each `h_T` neuron (both halves for bi-models).
    pub hidden_relevance: Option<Vec<f64>>,
    pub tokens: Option<Vec<String>>,
}

impl RelevanceMap {
    pub fn len(&self) -> usize {
        self.per_word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_word.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.per_word.iter().sum()
    }

    fn from_variables(method: Method, target: usize, logits: Vec<f64>, vars: Matrix, seq: &InputSequence) -> Self {
        let per_word = (0..vars.rows()).map(|t| vars.row(t).iter().sum()).collect();
        Self {
            method,
            target,
            logits,
            per_variable: Some(vars),
            per_word,
            hidden_relevance: None,
            tokens: seq.tokens().map(<[String]>::to_vec),
        }
    }

    /// Tab-separated export: one row per position with the token, the word
    /// relevance and, when requested and available, one column per input
    /// dimension.
    pub fn to_tsv(&self, with_dims: bool) -> String {
        let dims = match (&self.per_variable, with_dims) {
            (Some(m), true) => m.cols(),
            _ => 0,
        };
        let mut out = String::from("position\ttoken\trelevance");
        for d in 0..dims {
            out.push_str(&format!("\tR_{d}"));
        }
        out.push('\n');
        for t in 0..self.len() {
            let tok = self
                .tokens
                .as_ref()
                .map(|toks| toks[t].as_str())
                .unwrap_or("");
            out.push_str(&format!("{t}\t{tok}\t{}", self.per_word[t]));
            if let (Some(m), true) = (&self.per_variable, dims > 0) {
                for v in m.row(t) {
                    out.push_str(&format!("\t{v}"));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Word-level relevance vector of a map.
pub fn word_relevance(map: &RelevanceMap) -> Vec<f64> {
    map.per_word.clone()
}

/// An attribution method together with its variant settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Method {
    Gradient,
    GradientXInput,
    Occlusion {
        mode: OcclusionMode,
        granularity: Granularity,
    },
    Lrp(LrpConfig),
    Cd,
}

impl Method {
    pub const OCCLUSION_F: Method = Method::Occlusion {
        mode: OcclusionMode::FDiff,
        granularity: Granularity::Word,
    };
    pub const OCCLUSION_P: Method = Method::Occlusion {
        mode: OcclusionMode::PDiff,
        granularity: Granularity::Word,
    };

    pub fn lrp(rule: LrpRule) -> Self {
        Method::Lrp(LrpConfig::new(rule))
    }

    /// Human-readable name used as a table row label.
    pub fn label(&self) -> String {
        match self {
            Method::Gradient => "Gradient".into(),
            Method::GradientXInput => "Gradient×Input".into(),
            Method::Occlusion { mode, granularity } => {
                let base = match mode {
                    OcclusionMode::FDiff => "Occlusion_f-diff",
                    OcclusionMode::PDiff => "Occlusion_P-diff",
                };
                match granularity {
                    Granularity::Word => base.into(),
                    Granularity::Variable => format!("{base} (variable)"),
                }
            }
            Method::Lrp(cfg) => format!("LRP-{}", cfg.rule.name()),
            Method::Cd => "CD".into(),
        }
    }

    /// Replaces the LRP stabilizer; other methods are returned unchanged.
    pub fn with_epsilon(self, eps: f64) -> Self {
        match self {
            Method::Lrp(cfg) => Method::Lrp(LrpConfig { epsilon: eps, ..cfg }),
            m => m,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Gradient => f.write_str("grad"),
            Method::GradientXInput => f.write_str("gxi"),
            Method::Occlusion { mode, granularity } => {
                f.write_str(match mode {
                    OcclusionMode::FDiff => "occ-f",
                    OcclusionMode::PDiff => "occ-p",
                })?;
                if *granularity == Granularity::Variable {
                    f.write_str("-var")?;
                }
                Ok(())
            }
            Method::Lrp(cfg) => {
                write!(f, "lrp-{}", cfg.rule.name())?;
                if cfg.epsilon != cfg.rule.default_epsilon() {
                    write!(f, "@{}", cfg.epsilon)?;
                }
                Ok(())
            }
            Method::Cd => f.write_str("cd"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts `grad`, `gxi`, `occ-f`, `occ-p` (optionally `-var`),
    /// `lrp-{all,prop,abs,half}` (optionally `@eps`) and `cd`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let m = match s.as_str() {
            "grad" | "gradient" => Method::Gradient,
            "gxi" | "gradient-x-input" | "gradient_x_input" => Method::GradientXInput,
            "cd" => Method::Cd,
            _ => {
                if let Some(rest) = s.strip_prefix("occ-") {
                    let (mode, var) = match rest.strip_suffix("-var") {
                        Some(m) => (m, true),
                        None => (rest, false),
                    };
                    let mode = match mode {
                        "f" => OcclusionMode::FDiff,
                        "p" => OcclusionMode::PDiff,
                        _ => return Err(Error::invalid(format!("unknown occlusion variant in {s:?}"))),
                    };
                    let granularity = if var { Granularity::Variable } else { Granularity::Word };
                    Method::Occlusion { mode, granularity }
                } else if let Some(rest) = s.strip_prefix("lrp-") {
                    let (rule, eps) = match rest.split_once('@') {
                        Some((r, e)) => (r, Some(e)),
                        None => (rest, None),
                    };
                    let mut cfg = LrpConfig::new(rule.parse()?);
                    if let Some(e) = eps {
                        cfg.epsilon = e
                            .parse()
                            .map_err(|_| Error::invalid(format!("bad stabilizer in {s:?}")))?;
                    }
                    cfg.validate()?;
                    Method::Lrp(cfg)
                } else {
                    return Err(Error::invalid(format!("unknown method {s:?}")));
                }
            }
        };
        Ok(m)
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Squared partial derivatives of `f_c`.
pub fn explain_gradient(model: &ModelParams, seq: &InputSequence, c: usize) -> Result<RelevanceMap> {
    check_class(model, c)?;
    let trace = model.forward_trace(seq)?;
    let g = grad::input_gradient_from_trace(model, seq, &trace, c);
    let vars = Matrix::from_vec(seq.len(), seq.dim(), g.values.iter().map(|v| v * v).collect());
    Ok(RelevanceMap::from_variables(Method::Gradient, c, trace.logits, vars, seq))
}

/// Partial derivatives of `f_c` times the input values.
pub fn explain_gradient_x_input(model: &ModelParams, seq: &InputSequence, c: usize) -> Result<RelevanceMap> {
    check_class(model, c)?;
    let trace = model.forward_trace(seq)?;
    let g = grad::input_gradient_from_trace(model, seq, &trace, c);
    let vals = g.values.iter().zip(seq.as_slice()).map(|(g, x)| g * x).collect();
    let vars = Matrix::from_vec(seq.len(), seq.dim(), vals);
    Ok(RelevanceMap::from_variables(Method::GradientXInput, c, trace.logits, vars, seq))
}

/// Runs `method` for target class `c`.
pub fn explain(model: &ModelParams, seq: &InputSequence, c: usize, method: &Method) -> Result<RelevanceMap> {
    match *method {
        Method::Gradient => explain_gradient(model, seq, c),
        Method::GradientXInput => explain_gradient_x_input(model, seq, c),
        Method::Occlusion { mode, granularity } => explain_occlusion(model, seq, c, mode, granularity),
        Method::Lrp(cfg) => explain_lrp(model, seq, c, &cfg),
        Method::Cd => explain_cd_words(model, seq, c),
    }
}
