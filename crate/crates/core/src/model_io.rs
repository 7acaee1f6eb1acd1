//! Model files and embedding tables.
//!
//! A model file is one JSON document:
//!
//! ```text
//! {
//!   "format": "lstm-relevance-model",
//!   "version": 1,
//!   "cell": "lstm" | "linear",
//!   "hidden": H, "input_dim": D, "classes": C, "bidirectional": bool,
//!   "forward":  { "W_i": [[..H..]; H], ..., "U_i": [[..D..]; H], ..., "b_i": [..H..], ... },
//!   "backward": { same keys, present iff bidirectional },
//!   "output":   { "w_out": [[..H or 2H..]; C], "b_out": [..C..] (optional) },
//!   "probe":    { "inputs": [[..D..]; T], "logits": [..C..] } (optional)
//! }
//! ```
//!
//! Every matrix is row-major. Numbers are written in shortest round-trip
//! decimal form, so save → load → save is byte-identical.
//!
//! An embedding table is a text file with one header line
//! `# lstm-relevance embeddings v1 dim=D count=N` followed by `N` lines of
//! `token<TAB>v_1 v_2 ... v_D`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::{CellKind, InputSequence, LstmWeights, ModelParams, GATE_NAMES};
use crate::tensor::Matrix;

pub const MODEL_FORMAT: &str = "lstm-relevance-model";
pub const MODEL_VERSION: u64 = 1;
const EMBEDDING_HEADER: &str = "# lstm-relevance embeddings v1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u64,
    cell: CellKind,
    hidden: usize,
    input_dim: usize,
    classes: usize,
    bidirectional: bool,
    forward: DirectionFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    backward: Option<DirectionFile>,
    output: OutputFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    probe: Option<Probe>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DirectionFile {
    #[serde(rename = "W_i")]
    w_i: Vec<Vec<f64>>,
    #[serde(rename = "W_f")]
    w_f: Vec<Vec<f64>>,
    #[serde(rename = "W_o")]
    w_o: Vec<Vec<f64>>,
    #[serde(rename = "W_g")]
    w_g: Vec<Vec<f64>>,
    #[serde(rename = "U_i")]
    u_i: Vec<Vec<f64>>,
    #[serde(rename = "U_f")]
    u_f: Vec<Vec<f64>>,
    #[serde(rename = "U_o")]
    u_o: Vec<Vec<f64>>,
    #[serde(rename = "U_g")]
    u_g: Vec<Vec<f64>>,
    b_i: Vec<f64>,
    b_f: Vec<f64>,
    b_o: Vec<f64>,
    b_g: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputFile {
    w_out: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b_out: Option<Vec<f64>>,
}

/// An input recorded together with the logits the model produced on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub inputs: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

impl Probe {
    pub fn record(model: &ModelParams, seq: &InputSequence) -> Result<Self> {
        Ok(Self {
            inputs: (0..seq.len()).map(|t| seq.step(t).to_vec()).collect(),
            logits: model.logits(seq)?,
        })
    }

    pub fn sequence(&self) -> Result<InputSequence> {
        InputSequence::from_rows(&self.inputs)
    }
}

impl DirectionFile {
    fn from_weights(w: &LstmWeights) -> Self {
        let r = |k: usize| w.recurrent[k].to_rows();
        let u = |k: usize| w.input[k].to_rows();
        Self {
            w_i: r(0),
            w_f: r(1),
            w_o: r(2),
            w_g: r(3),
            u_i: u(0),
            u_f: u(1),
            u_o: u(2),
            u_g: u(3),
            b_i: w.bias[0].clone(),
            b_f: w.bias[1].clone(),
            b_o: w.bias[2].clone(),
            b_g: w.bias[3].clone(),
        }
    }

    fn into_weights(self, h: usize, d: usize, direction: &str) -> Result<LstmWeights> {
        let recurrent = [self.w_i, self.w_f, self.w_o, self.w_g];
        let input = [self.u_i, self.u_f, self.u_o, self.u_g];
        let bias = [self.b_i, self.b_f, self.b_o, self.b_g];
        let mut w = LstmWeights::zeros(h, d);
        for k in 0..4 {
            let g = GATE_NAMES[k];
            w.recurrent[k] = matrix(&recurrent[k], h, h, &format!("W_{g}"), direction)?;
            w.input[k] = matrix(&input[k], h, d, &format!("U_{g}"), direction)?;
            if bias[k].len() != h {
                return Err(Error::Format(format!(
                    "tensor b_{g} ({direction}) has length {}, expected {h}",
                    bias[k].len()
                )));
            }
            w.bias[k] = bias[k].clone();
        }
        Ok(w)
    }
}

fn matrix(rows: &[Vec<f64>], r: usize, c: usize, name: &str, direction: &str) -> Result<Matrix> {
    let bad = || {
        Error::Format(format!(
            "tensor {name} ({direction}) has shape {}x{}, expected {r}x{c}",
            rows.len(),
            rows.first().map_or(0, Vec::len)
        ))
    };
    if rows.len() != r {
        return Err(bad());
    }
    let m = Matrix::from_rows(rows).ok_or_else(bad)?;
    if r > 0 && m.cols() != c {
        return Err(bad());
    }
    Ok(if r == 0 { Matrix::zeros(0, c) } else { m })
}

/// Serialises a model (and an optional probe) to the documented JSON format.
pub fn model_to_string(model: &ModelParams, probe: Option<&Probe>) -> Result<String> {
    model.validate()?;
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        cell: model.cell,
        hidden: model.hidden(),
        input_dim: model.input_dim(),
        classes: model.classes(),
        bidirectional: model.is_bidirectional(),
        forward: DirectionFile::from_weights(&model.forward),
        backward: model.backward.as_ref().map(DirectionFile::from_weights),
        output: OutputFile {
            w_out: model.output.to_rows(),
            b_out: model.output_bias.clone(),
        },
        probe: probe.cloned(),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    Ok(s)
}

/// Parses a model file, rejecting unknown formats and versions and naming
/// the offending tensor on shape errors.
pub fn model_from_str(text: &str) -> Result<(ModelParams, Option<Probe>)> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    match value.get("format").and_then(|v| v.as_str()) {
        Some(MODEL_FORMAT) => {}
        other => {
            return Err(Error::Format(format!(
                "unrecognised format tag {other:?}, expected \"{MODEL_FORMAT}\""
            )))
        }
    }
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(MODEL_VERSION) => {}
        other => return Err(Error::Format(format!("unsupported model file version {other:?}"))),
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::Format(e.to_string()))?;
    let (h, d, c) = (file.hidden, file.input_dim, file.classes);
    if h == 0 || d == 0 || c == 0 {
        return Err(Error::Format("hidden, input_dim and classes must be positive".into()));
    }
    let forward = file.forward.into_weights(h, d, "forward")?;
    let backward = match (file.bidirectional, file.backward) {
        (true, Some(b)) => Some(b.into_weights(h, d, "backward")?),
        (false, None) => None,
        (true, None) => return Err(Error::Format("bidirectional model without a backward block".into())),
        (false, Some(_)) => return Err(Error::Format("backward block present on a unidirectional model".into())),
    };
    let width = if file.bidirectional { 2 * h } else { h };
    let output = matrix(&file.output.w_out, c, width, "w_out", "output")?;
    if let Some(b) = &file.output.b_out {
        if b.len() != c {
            return Err(Error::Format(format!("tensor b_out has length {}, expected {c}", b.len())));
        }
    }
    let model = ModelParams {
        cell: file.cell,
        forward,
        backward,
        output,
        output_bias: file.output.b_out,
    };
    model.validate().map_err(|e| Error::Format(e.to_string()))?;
    if let Some(p) = &file.probe {
        if p.logits.len() != c || p.inputs.iter().any(|r| r.len() != d) {
            return Err(Error::Format("probe does not match the model shape".into()));
        }
    }
    Ok((model, file.probe))
}

pub fn save_model(path: impl AsRef<Path>, model: &ModelParams, probe: Option<&Probe>) -> Result<()> {
    fs::write(path, model_to_string(model, probe)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(ModelParams, Option<Probe>)> {
    model_from_str(&fs::read_to_string(path)?)
}

/// Token → vector lookup table.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
}

impl Embeddings {
    pub fn new(dim: usize, tokens: Vec<String>, vectors: Vec<f64>) -> Result<Self> {
        if vectors.len() != dim * tokens.len() {
            return Err(Error::shape("embedding table size does not match token count"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("token {t:?} is empty or contains whitespace")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self {
            dim,
            tokens,
            index,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn vector(&self, id: usize) -> &[f64] {
        &self.vectors[id * self.dim..(id + 1) * self.dim]
    }

    pub fn vector_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.vectors[id * self.dim..(id + 1) * self.dim]
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.vectors
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vectors
    }

    /// Embeds a token id sequence.
    pub fn embed_ids(&self, ids: &[usize]) -> Result<InputSequence> {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            data.extend_from_slice(self.vector(id));
        }
        let tokens = ids.iter().map(|&i| self.tokens[i].clone()).collect();
        InputSequence::new(self.dim, data)?.with_tokens(tokens)
    }

    /// Embeds tokens, reporting every token missing from the table.
    pub fn embed<S: AsRef<str>>(&self, tokens: &[S]) -> Result<InputSequence> {
        let ids = self.ids(tokens)?;
        self.embed_ids(&ids)
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<usize>> {
        let mut missing = Vec::new();
        let ids: Vec<usize> = tokens
            .iter()
            .filter_map(|t| {
                let id = self.id(t.as_ref());
                if id.is_none() {
                    missing.push(t.as_ref().to_string());
                }
                id
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::UnknownTokens(missing));
        }
        Ok(ids)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{EMBEDDING_HEADER} dim={} count={}\n", self.dim, self.len());
        for (i, t) in self.tokens.iter().enumerate() {
            out.push_str(t);
            out.push('\t');
            let v: Vec<String> = self.vector(i).iter().map(|x| format!("{x:?}")).collect();
            out.push_str(&v.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty embedding file".into()))?;
        let rest = header
            .strip_prefix(EMBEDDING_HEADER)
            .ok_or_else(|| Error::Format(format!("unrecognised embedding header {header:?}")))?;
        let mut dim = None;
        let mut count = None;
        for field in rest.split_whitespace() {
            match field.split_once('=') {
                Some(("dim", v)) => dim = v.parse::<usize>().ok(),
                Some(("count", v)) => count = v.parse::<usize>().ok(),
                _ => return Err(Error::Format(format!("unknown header field {field:?}"))),
            }
        }
        let (dim, count) = match (dim, count) {
            (Some(d), Some(c)) if d > 0 => (d, c),
            _ => return Err(Error::Format("embedding header needs dim and count".into())),
        };
        let mut tokens = Vec::with_capacity(count);
        let mut vectors = Vec::with_capacity(count * dim);
        for (n, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tok, vals) = line
                .split_once('\t')
                .ok_or_else(|| Error::Format(format!("line {}: missing tab separator", n + 2)))?;
            let parsed: std::result::Result<Vec<f64>, _> = vals.split(' ').map(str::parse::<f64>).collect();
            let parsed = parsed.map_err(|e| Error::Format(format!("line {}: {e}", n + 2)))?;
            if parsed.len() != dim {
                return Err(Error::Format(format!(
                    "line {}: token {tok:?} has {} values, expected {dim}",
                    n + 2,
                    parsed.len()
                )));
            }
            tokens.push(tok.to_string());
            vectors.extend(parsed);
        }
        if tokens.len() != count {
            return Err(Error::Format(format!("expected {count} tokens, found {}", tokens.len())));
        }
        Self::new(dim, tokens, vectors)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::ModelShape;
    use crate::seed;

    fn bi_model() -> ModelParams {
        let shape = ModelShape {
            hidden: 3,
            input_dim: 2,
            classes: 5,
            bidirectional: true,
            output_bias: true,
            cell: CellKind::Lstm,
        };
        let mut rng = seed::rng(9);
        let mut m = ModelParams::random(shape, &mut rng, -1.0, 1.0);
        m.randomize_biases(&mut rng, -1.0, 1.0);
        m
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        for m in [bi_model(), ModelParams::random(ModelShape::toy(), &mut seed::rng(1), -1.0, 1.0)] {
            let a = model_to_string(&m, None).unwrap();
            let (back, _) = model_from_str(&a).unwrap();
            assert_eq!(back, m);
            assert_eq!(model_to_string(&back, None).unwrap(), a);
        }
    }

    #[test]
    fn wrong_tensor_shape_is_named() {
        let m = ModelParams::random(ModelShape::toy(), &mut seed::rng(2), -1.0, 1.0);
        let text = model_to_string(&m, None).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["forward"]["W_i"] = serde_json::json!([[0.1, 0.2]]);
        let err = model_from_str(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("W_i"), "{err}");

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["forward"]["b_g"] = serde_json::json!([0.1, 0.2]);
        let err = model_from_str(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("b_g"), "{err}");
    }

    #[test]
    fn unknown_version_rejected() {
        let m = ModelParams::random(ModelShape::toy(), &mut seed::rng(2), -1.0, 1.0);
        let text = model_to_string(&m, None).unwrap().replace("\"version\": 1", "\"version\": 2");
        let err = model_from_str(&text).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
        assert!(model_from_str("{\"format\": \"other\"}").is_err());
        assert!(model_from_str("not json").is_err());
    }

    #[test]
    fn toy_probe_reproduces_logits() {
        let m = ModelParams::random(ModelShape::toy(), &mut seed::rng(3), -1.0, 1.0);
        let seq = InputSequence::from_rows(&[vec![0.0, 0.7], vec![-0.6, 0.0], vec![0.0, 0.9], vec![0.8, 0.0]]).unwrap();
        let probe = Probe::record(&m, &seq).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.json");
        save_model(&path, &m, Some(&probe)).unwrap();
        let (loaded, probe) = load_model(&path).unwrap();
        let probe = probe.unwrap();
        assert_eq!(loaded.hidden(), 1);
        assert_eq!(loaded.logits(&probe.sequence().unwrap()).unwrap(), probe.logits);
    }

    #[test]
    fn embeddings_round_trip_and_unknown_tokens() {
        let e = Embeddings::new(2, vec!["good".into(), "bad".into()], vec![0.1, -0.25, 1e-17, 3.0]).unwrap();
        let text = e.to_text();
        let back = Embeddings::from_text(&text).unwrap();
        assert_eq!(back, e);
        assert_eq!(back.to_text(), text);
        match e.embed(&["good", "meh", "zzz"]) {
            Err(Error::UnknownTokens(t)) => assert_eq!(t, vec!["meh".to_string(), "zzz".to_string()]),
            other => panic!("{other:?}"),
        }
        assert!(Embeddings::from_text("# lstm-relevance embeddings v1 dim=2 count=1\nx\t1 2 3\n").is_err());
    }
}
