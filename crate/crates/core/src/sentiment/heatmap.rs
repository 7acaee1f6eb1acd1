//! Relevance heatmaps: red for positive, blue for negative, intensity
//! relative to the largest absolute relevance.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapFormat {
    /// 24-bit ANSI background colors.
    Terminal,
    Html,
    Svg,
}

impl FromStr for HeatmapFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "terminal" | "ansi" => Ok(HeatmapFormat::Terminal),
            "html" => Ok(HeatmapFormat::Html),
            "svg" => Ok(HeatmapFormat::Svg),
            other => Err(Error::invalid(format!("unknown heatmap format '{other}'"))),
        }
    }
}

/// Background color of each token; all-zero input maps to white.
pub fn heat_colors(relevances: &[f64]) -> Vec<[u8; 3]> {
    let max = relevances.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    relevances
        .iter()
        .map(|&r| {
            let a = if max > 0.0 { (r.abs() / max).min(1.0) } else { 0.0 };
            let fade = (255.0 * (1.0 - a)).round() as u8;
            if r > 0.0 {
                [255, fade, fade]
            } else if r < 0.0 {
                [fade, fade, 255]
            } else {
                [255, 255, 255]
            }
        })
        .collect()
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn hex([r, g, b]: [u8; 3]) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

pub fn render_heatmap<S: AsRef<str>>(tokens: &[S], relevances: &[f64], format: HeatmapFormat) -> Result<String> {
    render_heatmap_titled(tokens, relevances, format, None)
}

/// Renders one sentence; `title` becomes a caption line (HTML/SVG) or a
/// prefix (terminal).
pub fn render_heatmap_titled<S: AsRef<str>>(
    tokens: &[S],
    relevances: &[f64],
    format: HeatmapFormat,
    title: Option<&str>,
) -> Result<String> {
    if tokens.len() != relevances.len() {
        return Err(Error::Shape(format!(
            "{} tokens but {} relevances",
            tokens.len(),
            relevances.len()
        )));
    }
    if relevances.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("heatmap relevances".into()));
    }
    let colors = heat_colors(relevances);
    let mut out = String::new();
    match format {
        HeatmapFormat::Terminal => {
            if let Some(t) = title {
                let _ = write!(out, "{t}: ");
            }
            for (i, (tok, [r, g, b])) in tokens.iter().zip(&colors).enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "\x1b[48;2;{r};{g};{b}m\x1b[38;2;0;0;0m{}\x1b[0m", tok.as_ref());
            }
            out.push('\n');
        }
        HeatmapFormat::Html => {
            out.push_str("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>");
            out.push_str(&escape(title.unwrap_or("relevance heatmap")));
            out.push_str("</title></head>\n<body style=\"font-family: monospace\">\n");
            if let Some(t) = title {
                let _ = writeln!(out, "<p>{}</p>", escape(t));
            }
            out.push_str("<p>");
            for (tok, (c, r)) in tokens.iter().zip(colors.iter().zip(relevances)) {
                let _ = write!(
                    out,
                    "<span style=\"background-color:{}\" title=\"{r:.6}\">{}</span> ",
                    hex(*c),
                    escape(tok.as_ref())
                );
            }
            out.push_str("</p>\n</body></html>\n");
        }
        HeatmapFormat::Svg => {
            let char_w = 9.0;
            let pad = 6.0;
            let top = if title.is_some() { 24.0 } else { 0.0 };
            let widths: Vec<f64> = tokens
                .iter()
                .map(|t| t.as_ref().chars().count() as f64 * char_w + 2.0 * pad)
                .collect();
            let total = widths.iter().sum::<f64>().max(1.0);
            let _ = writeln!(
                out,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{total}\" height=\"{}\" font-family=\"monospace\" font-size=\"14\">",
                top + 24.0
            );
            if let Some(t) = title {
                let _ = writeln!(out, "<text x=\"0\" y=\"16\">{}</text>", escape(t));
            }
            let mut x = 0.0;
            for ((tok, c), w) in tokens.iter().zip(&colors).zip(&widths) {
                let _ = writeln!(
                    out,
                    "<rect x=\"{x}\" y=\"{top}\" width=\"{w}\" height=\"24\" fill=\"{}\"/><text x=\"{}\" y=\"{}\">{}</text>",
                    hex(*c),
                    x + pad,
                    top + 17.0,
                    escape(tok.as_ref())
                );
                x += w;
            }
            out.push_str("</svg>\n");
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sign_and_intensity() {
        assert_eq!(heat_colors(&[1.0, -1.0, 0.0]), vec![[255, 0, 0], [0, 0, 255], [255, 255, 255]]);
        assert_eq!(heat_colors(&[2.0, -1.0])[1], [128, 128, 255]);
    }

    #[test]
    fn all_zero_is_neutral() {
        assert_eq!(heat_colors(&[0.0, 0.0]), vec![[255, 255, 255]; 2]);
        let svg = render_heatmap(&["a", "b"], &[0.0, 0.0], HeatmapFormat::Svg).unwrap();
        assert!(svg.contains("#ffffff") && !svg.contains("NaN"));
    }

    #[test]
    fn documents_are_escaped_and_aligned() {
        let html = render_heatmap_titled(&["<b>", "ok"], &[1.0, -0.5], HeatmapFormat::Html, Some("x & y")).unwrap();
        assert!(html.contains("&lt;b&gt;") && html.contains("x &amp; y") && html.contains("#ff0000"));
        assert!(render_heatmap(&["a"], &[1.0, 2.0], HeatmapFormat::Terminal).is_err());
        let term = render_heatmap(&["a", "b"], &[1.0, -1.0], HeatmapFormat::Terminal).unwrap();
        assert!(term.contains("48;2;255;0;0m") && term.contains("48;2;0;0;255m"));
    }

    proptest! {
        #[test]
        fn positive_scaling_leaves_rendering_unchanged(
            r in prop::collection::vec(-5.0f64..5.0, 1..12),
            scale in prop_oneof![Just(10.0), 1e-3f64..1e3],
        ) {
            let toks: Vec<String> = (0..r.len()).map(|i| format!("w{i}")).collect();
            let scaled: Vec<f64> = r.iter().map(|v| v * scale).collect();
            for f in [HeatmapFormat::Terminal, HeatmapFormat::Svg] {
                prop_assert_eq!(render_heatmap(&toks, &r, f).unwrap(), render_heatmap(&toks, &scaled, f).unwrap());
            }
        }
    }
}
