use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{median, EvalRecord};
use crate::models::ModelKind;

/// Values are clamped to these caps before averaging, so a few divergent
/// conditions do not dominate the mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Caps {
    pub err_post: f64,
    pub err_resim: f64,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            err_post: 5.0,
            err_resim: 10.0,
        }
    }
}

/// Clamped mean plus unclamped box-plot statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub clamped_mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Most extreme values within 1.5 IQR of the box, never inside it.
    pub lo_whisker: f64,
    pub hi_whisker: f64,
    pub min: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

impl Stats {
    pub fn new(values: &[f64], cap: f64) -> Self {
        assert!(!values.is_empty(), "statistics of an empty set");
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let (q1, q3) = (quantile(&s, 0.25), quantile(&s, 0.75));
        let iqr = q3 - q1;
        // clipped to the box, as interpolated quartiles can pass the data
        let lo_whisker = s.iter().copied().find(|&v| v >= q1 - 1.5 * iqr).unwrap_or(q1).min(q1);
        let hi_whisker = s.iter().rev().copied().find(|&v| v <= q3 + 1.5 * iqr).unwrap_or(q3).max(q3);
        Self {
            n: s.len(),
            clamped_mean: values.iter().map(|v| v.min(cap)).sum::<f64>() / values.len() as f64,
            median: quantile(&s, 0.5),
            q1,
            q3,
            lo_whisker,
            hi_whisker,
            min: s[0],
            max: s[s.len() - 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub err_post: Stats,
    pub err_resim: Stats,
    /// Median sampling time per condition; replaced by a dedicated timing
    /// run when one is available, absent when timing was not measured.
    pub inference_ms: Option<f64>,
    pub param_count: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub problem: String,
    pub seed: u64,
    pub caps: Caps,
    /// The resolved configuration the report was produced with.
    pub config: String,
    pub models: Vec<ModelSummary>,
}

/// Groups records by model, in order of first appearance.
pub fn aggregate(records: &[EvalRecord], caps: Caps) -> BenchmarkReport {
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.model.as_str()) {
            order.push(&r.model);
        }
    }
    let models = order
        .into_iter()
        .map(|m| {
            let rs: Vec<&EvalRecord> = records.iter().filter(|r| r.model == m).collect();
            let post: Vec<f64> = rs.iter().map(|r| r.err_post).collect();
            let resim: Vec<f64> = rs.iter().map(|r| r.err_resim).collect();
            let ms: Vec<f64> = rs.iter().map(|r| r.inference_ms).collect();
            ModelSummary {
                model: m.to_string(),
                err_post: Stats::new(&post, caps.err_post),
                err_resim: Stats::new(&resim, caps.err_resim),
                inference_ms: ms.iter().all(|v| v.is_finite()).then(|| median(&ms)),
                param_count: None,
            }
        })
        .collect();
    BenchmarkReport {
        problem: String::new(),
        seed: 0,
        caps,
        config: String::new(),
        models,
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

impl BenchmarkReport {
    pub fn summary(&self, model: &str) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.model == model)
    }

    /// One row per model in the layout of the results tables.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("model,label,ml_loss,y_supervision,err_post,err_resim,inference_ms,params\n");
        for m in &self.models {
            let kind: Option<ModelKind> = m.model.parse().ok();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                m.model,
                kind.map_or(m.model.as_str(), |k| k.label()),
                kind.map_or("", |k| yes_no(k.ml_loss())),
                kind.map_or("", |k| yes_no(k.y_supervised())),
                m.err_post.clamped_mean,
                m.err_resim.clamped_mean,
                m.inference_ms.map_or(String::new(), |t| t.to_string()),
                m.param_count.map_or(String::new(), |c| c.to_string()),
            );
        }
        out
    }

    pub fn boxplot_csv(&self) -> String {
        let mut out = String::from("model,metric,q1,median,q3,lo_whisker,hi_whisker\n");
        for m in &self.models {
            for (name, s) in [("err_post", &m.err_post), ("err_resim", &m.err_resim)] {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    m.model, name, s.q1, s.median, s.q3, s.lo_whisker, s.hi_whisker
                );
            }
        }
        out
    }

    /// Human-readable table followed by the embedded configuration.
    pub fn text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "problem: {}   seed: {}", self.problem, self.seed);
        let _ = writeln!(
            out,
            "means clamped at err_post <= {}, err_resim <= {}\n",
            self.caps.err_post, self.caps.err_resim
        );
        let _ = writeln!(
            out,
            "{:<16} {:>7} {:>6} {:>10} {:>10} {:>10} {:>10} {:>12} {:>9}",
            "model", "ML", "y-sup", "Err_post", "median", "Err_resim", "median", "inference ms", "params"
        );
        for m in &self.models {
            let kind: Option<ModelKind> = m.model.parse().ok();
            let _ = writeln!(
                out,
                "{:<16} {:>7} {:>6} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>12} {:>9}",
                kind.map_or(m.model.as_str(), |k| k.label()),
                kind.map_or("", |k| yes_no(k.ml_loss())),
                kind.map_or("", |k| yes_no(k.y_supervised())),
                m.err_post.clamped_mean,
                m.err_post.median,
                m.err_resim.clamped_mean,
                m.err_resim.median,
                m.inference_ms.map_or(String::from("-"), |t| format!("{t:.3}")),
                m.param_count.map_or(String::from("-"), |c| c.to_string()),
            );
        }
        if !self.config.is_empty() {
            let _ = writeln!(out, "\n# configuration\n{}", self.config);
        }
        out
    }
}
