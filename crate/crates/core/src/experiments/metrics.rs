//! Classification and threat-scale metrics.
//!
//! Confusion matrices are indexed `[true][predicted]`. Ratios with a zero
//! denominator are `None` and print as `n/a`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::assessment::{categorize_ber, BerThresholds, CapabilityState};
use crate::nn::LossBreakdown;
use crate::threat::ThreatKind;

pub const SCALES: usize = 8;

/// One evaluated sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub index: usize,
    pub true_kind: ThreatKind,
    pub pred_kind: ThreatKind,
    pub true_rho: f64,
    pub rho_hat: f64,
    pub true_capability: CapabilityState,
    pub pred_capability: CapabilityState,
    pub true_scale: u8,
    pub pred_scale: u8,
    pub classifier_invoked: bool,
}

impl Prediction {
    pub const CSV_HEADER: &'static str =
        "index,true_kind,pred_kind,true_rho,rho_hat,true_capability,pred_capability,true_scale,pred_scale,classifier_invoked";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:e},{:e},{},{},{},{},{}",
            self.index,
            self.true_kind.index(),
            self.pred_kind.index(),
            self.true_rho,
            self.rho_hat,
            self.true_capability as usize,
            self.pred_capability as usize,
            self.true_scale,
            self.pred_scale,
            u8::from(self.classifier_invoked)
        )
    }
}

pub fn predictions_csv(preds: &[Prediction]) -> String {
    let mut out = String::from(Prediction::CSV_HEADER);
    out.push('\n');
    for p in preds {
        out.push_str(&p.csv_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub classes: usize,
    pub counts: Vec<u64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl Confusion {
    pub fn new(classes: usize) -> Self {
        Confusion { classes, counts: vec![0; classes * classes] }
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn support(&self, class: usize) -> u64 {
        (0..self.classes).map(|p| self.get(class, p)).sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, class)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn precision(&self, class: usize) -> Option<f64> {
        ratio(self.get(class, class), self.predicted(class))
    }

    pub fn recall(&self, class: usize) -> Option<f64> {
        ratio(self.get(class, class), self.support(class))
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.correct(), self.total())
    }

    pub fn to_csv(&self, labels: &[String]) -> String {
        let mut out = String::from("true\\predicted");
        for l in labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (t, l) in labels.iter().enumerate() {
            out.push_str(l);
            for p in 0..self.classes {
                out.push_str(&format!(",{}", self.get(t, p)));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub kind: ThreatKind,
    pub support: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

/// Per-scale figures; `accuracy` is the fraction of samples graded at this
/// scale whose true scale matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub scale: u8,
    pub support: u64,
    pub predicted: u64,
    pub accuracy: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: String,
    pub theta: Option<f64>,
    pub samples: usize,
    pub intent: Vec<ClassScore>,
    pub intent_accuracy: Option<f64>,
    /// Agreement of the predicted and true BER categories.
    pub capability_accuracy: Option<f64>,
    /// Exact agreement of the threat scale.
    pub assessment_accuracy: Option<f64>,
    pub rho_mse: Option<f64>,
    pub intent_confusion: Confusion,
    pub scale_confusion: Confusion,
    pub per_scale: Vec<ScaleRow>,
    pub classifier_invocations: Option<usize>,
    pub loss: Option<LossBreakdown>,
}

pub fn report_per_scale(preds: &[Prediction]) -> Vec<ScaleRow> {
    let cm = scale_confusion(preds);
    (0..SCALES)
        .map(|s| {
            let support = cm.support(s);
            ScaleRow {
                scale: s as u8,
                support,
                predicted: cm.predicted(s),
                accuracy: if support == 0 { None } else { cm.precision(s) },
                recall: cm.recall(s),
            }
        })
        .collect()
}

fn scale_confusion(preds: &[Prediction]) -> Confusion {
    let mut cm = Confusion::new(SCALES);
    for p in preds {
        cm.add(p.true_scale as usize, p.pred_scale as usize);
    }
    cm
}

pub fn build_report(mode: &str, theta: Option<f64>, preds: &[Prediction], thresholds: &BerThresholds) -> MetricsReport {
    let mut intent_cm = Confusion::new(3);
    for p in preds {
        intent_cm.add(p.true_kind.index(), p.pred_kind.index());
    }
    let scale_cm = scale_confusion(preds);
    let cap_ok = preds
        .iter()
        .filter(|p| categorize_ber(p.true_rho, thresholds) == categorize_ber(p.rho_hat, thresholds))
        .count() as u64;
    let sq: f64 = preds.iter().map(|p| (p.true_rho - p.rho_hat).powi(2)).sum();
    let invoked = preds.iter().filter(|p| p.classifier_invoked).count();
    MetricsReport {
        mode: mode.to_string(),
        theta,
        samples: preds.len(),
        intent: ThreatKind::ALL
            .iter()
            .map(|&k| ClassScore {
                kind: k,
                support: intent_cm.support(k.index()),
                precision: intent_cm.precision(k.index()),
                recall: intent_cm.recall(k.index()),
            })
            .collect(),
        intent_accuracy: intent_cm.accuracy(),
        capability_accuracy: ratio(cap_ok, preds.len() as u64),
        assessment_accuracy: scale_cm.accuracy(),
        rho_mse: (!preds.is_empty()).then(|| sq / preds.len() as f64),
        per_scale: report_per_scale(preds),
        intent_confusion: intent_cm,
        scale_confusion: scale_cm,
        classifier_invocations: theta.map(|_| invoked),
        loss: None,
    }
}

pub fn fmt_ratio(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.2}%", 100.0 * x),
        None => "n/a".into(),
    }
}

impl MetricsReport {
    pub fn recall_of(&self, kind: ThreatKind) -> Option<f64> {
        self.intent[kind.index()].recall
    }

    pub fn per_scale_csv(&self) -> String {
        let mut out = String::from("scale,support,predicted,accuracy,recall\n");
        let cell = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
        for r in &self.per_scale {
            out.push_str(&format!("{},{},{},{},{}\n", r.scale, r.support, r.predicted, cell(r.accuracy), cell(r.recall)));
        }
        out
    }

    pub fn intent_csv(&self) -> String {
        let mut out = String::from("class,support,precision,recall\n");
        let cell = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
        for c in &self.intent {
            out.push_str(&format!("{},{},{},{}\n", c.kind.name(), c.support, cell(c.precision), cell(c.recall)));
        }
        out
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.theta {
            Some(t) => writeln!(f, "== {} (theta = {t:e}), {} samples ==", self.mode, self.samples)?,
            None => writeln!(f, "== {}, {} samples ==", self.mode, self.samples)?,
        }
        writeln!(f, "intent accuracy      {}", fmt_ratio(self.intent_accuracy))?;
        writeln!(f, "capability accuracy  {}", fmt_ratio(self.capability_accuracy))?;
        writeln!(f, "assessment accuracy  {}", fmt_ratio(self.assessment_accuracy))?;
        if let Some(mse) = self.rho_mse {
            writeln!(f, "log-BER MSE          {mse:.4}")?;
        }
        if let Some(n) = self.classifier_invocations {
            writeln!(f, "classifier calls     {n}")?;
        }
        if let Some(l) = self.loss {
            writeln!(f, "loss cls {:.4}  reg {:.4}  l2 {:.4}  total {:.4}", l.classification, l.regression, l.l2, l.total)?;
        }
        writeln!(f, "{:<16} {:>7} {:>10} {:>10}", "class", "support", "precision", "recall")?;
        for c in &self.intent {
            writeln!(f, "{:<16} {:>7} {:>10} {:>10}", c.kind.name(), c.support, fmt_ratio(c.precision), fmt_ratio(c.recall))?;
        }
        writeln!(f, "intent confusion (rows true, cols predicted; deceptive, disruptive, non-adversarial)")?;
        for t in 0..3 {
            writeln!(f, "  {:>6} {:>6} {:>6}", self.intent_confusion.get(t, 0), self.intent_confusion.get(t, 1), self.intent_confusion.get(t, 2))?;
        }
        writeln!(f, "{:<6} {:>7} {:>9} {:>10} {:>10}", "scale", "support", "predicted", "accuracy", "recall")?;
        for r in &self.per_scale {
            writeln!(f, "{:<6} {:>7} {:>9} {:>10} {:>10}", r.scale, r.support, r.predicted, fmt_ratio(r.accuracy), fmt_ratio(r.recall))?;
        }
        writeln!(f, "scale confusion (rows true 0-7, cols predicted 0-7)")?;
        for t in 0..SCALES {
            let row: Vec<String> = (0..SCALES).map(|p| format!("{:>4}", self.scale_confusion.get(t, p))).collect();
            writeln!(f, "  {}", row.join(""))?;
        }
        Ok(())
    }
}
