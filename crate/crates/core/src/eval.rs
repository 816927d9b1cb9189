//! Evaluation metrics: Spearman rank correlation, mean squared error, and
//! precision/recall of faulty-clip detection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::Prediction;

/// 1-based average ranks; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start+1 ..= end share their mean.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn has_ties(values: &[f64]) -> bool {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).any(|w| w[0] == w[1])
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let den = (sxx * syy).sqrt();
    (den > 0.0).then(|| (sxy / den).clamp(-1.0, 1.0))
}

/// Spearman's ρ. Uses `1 − 6Σd²/(n(n²−1))` when neither list has ties and
/// the Pearson correlation of average ranks otherwise.
pub fn spearman_rho(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape("spearman inputs", pred.len(), truth.len()));
    }
    if pred.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two samples"));
    }
    if pred.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(Error::UndefinedCorrelation("non-finite value"));
    }
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(pred) || constant(truth) {
        return Err(Error::UndefinedCorrelation("constant input list"));
    }
    let rp = average_ranks(pred);
    let rt = average_ranks(truth);
    if !has_ties(pred) && !has_ties(truth) {
        let n = pred.len() as f64;
        let d2: f64 = rp.iter().zip(&rt).map(|(a, b)| (a - b) * (a - b)).sum();
        return Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)));
    }
    pearson(&rp, &rt).ok_or(Error::UndefinedCorrelation("zero rank variance"))
}

/// Mean squared error.
pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape("mse inputs", pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("mse of empty lists"));
    }
    Ok(pred.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64)
}

/// `(precision, recall)`. An empty predicted set has precision 1 when the
/// truth is also empty and 0 otherwise; recall of an empty truth is 1.
pub fn precision_recall(predicted: &BTreeSet<usize>, truth: &BTreeSet<usize>) -> (f64, f64) {
    let hits = predicted.intersection(truth).count() as f64;
    let precision = if predicted.is_empty() {
        if truth.is_empty() { 1.0 } else { 0.0 }
    } else {
        hits / predicted.len() as f64
    };
    let recall = if truth.is_empty() { 1.0 } else { hits / truth.len() as f64 };
    (precision, recall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeMetrics {
    pub n: usize,
    /// Absent when the type has too few or constant scores.
    pub rho: Option<f64>,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rho: f64,
    pub mse: f64,
    pub n: usize,
    pub per_type: BTreeMap<u32, TypeMetrics>,
}

impl EvalReport {
    /// Metrics over predictions that carry a true score.
    pub fn from_predictions(predictions: &[Prediction]) -> Result<Self> {
        let scored: Vec<&Prediction> = predictions.iter().filter(|p| p.true_score.is_some()).collect();
        let split = |ps: &[&Prediction]| -> (Vec<f64>, Vec<f64>) {
            ps.iter().map(|p| (p.predicted_score, p.true_score.unwrap_or_default())).unzip()
        };
        let (pred, truth) = split(&scored);
        let mut by_type: BTreeMap<u32, Vec<&Prediction>> = BTreeMap::new();
        for p in &scored {
            by_type.entry(p.action_type).or_default().push(p);
        }
        let mut per_type = BTreeMap::new();
        for (t, ps) in by_type {
            let (p, y) = split(&ps);
            per_type.insert(
                t,
                TypeMetrics {
                    n: ps.len(),
                    rho: spearman_rho(&p, &y).ok(),
                    mse: mse(&p, &y)?,
                },
            );
        }
        Ok(Self {
            rho: spearman_rho(&pred, &truth)?,
            mse: mse(&pred, &truth)?,
            n: scored.len(),
            per_type,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(format!("serializing report: {e}")))
    }

    /// One row for the whole set (`scope = all`) and one per action type.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scope,n,rho,mse\n");
        let _ = writeln!(out, "all,{},{},{}", self.n, self.rho, self.mse);
        for (t, m) in &self.per_type {
            let rho = m.rho.map(|r| r.to_string()).unwrap_or_default();
            let _ = writeln!(out, "type_{t},{},{rho},{}", m.n, m.mse);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_examples() {
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[6.0, 5.0, 4.0]).unwrap(), -1.0);
        let r = spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-15);
        assert_eq!(mse(&[0.0], &[10.0]).unwrap(), 100.0);
        assert_eq!(mse(&[1.5, 2.0], &[1.5, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(spearman_rho(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(spearman_rho(&[1.0], &[1.0]).is_err());
        assert!(spearman_rho(&[1.0, 2.0], &[1.0]).is_err());
        assert!(mse(&[1.0, 2.0], &[1.0]).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn tie_path_reduces_to_closed_form_without_ties() {
        let x = [0.3, 1.2, -0.5, 2.2, 0.9];
        let y = [1.0, 0.0, 2.0, 5.0, 3.0];
        let closed = spearman_rho(&x, &y).unwrap();
        let via_ranks = pearson(&average_ranks(&x), &average_ranks(&y)).unwrap();
        assert!((closed - via_ranks).abs() < 1e-12);
    }

    #[test]
    fn precision_recall_examples() {
        let s = |v: &[usize]| v.iter().copied().collect::<BTreeSet<_>>();
        assert_eq!(precision_recall(&s(&[2, 5]), &s(&[2, 3])), (0.5, 0.5));
        assert_eq!(precision_recall(&s(&[1, 4]), &s(&[1, 4])), (1.0, 1.0));
        assert_eq!(precision_recall(&s(&[]), &s(&[])), (1.0, 1.0));
        assert_eq!(precision_recall(&s(&[]), &s(&[3])), (0.0, 0.0));
    }

    #[test]
    fn report_from_predictions() {
        let p = |id: &str, t: u32, truth: f64, pred: f64| Prediction {
            video_id: id.into(),
            action_type: t,
            true_score: Some(truth),
            predicted_score: pred,
            expert_id: "e".into(),
        };
        let preds = vec![p("a", 1, 10.0, 12.0), p("b", 1, 20.0, 18.0), p("c", 2, 30.0, 33.0), p("d", 2, 40.0, 41.0)];
        let r = EvalReport::from_predictions(&preds).unwrap();
        assert_eq!(r.n, 4);
        assert_eq!(r.rho, 1.0);
        assert_eq!(r.mse, (4.0 + 4.0 + 9.0 + 1.0) / 4.0);
        assert_eq!(r.per_type[&1].rho, Some(1.0));
        let json = r.to_json().unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(r.to_csv().starts_with("scope,n,rho,mse\nall,4,1,4.5\n"));
    }
}
