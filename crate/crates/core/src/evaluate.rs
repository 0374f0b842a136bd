//! Scoring DA calls against ground truth: ROC/AUC, achieved FDR and
//! sensitivity, Jaccard overlap between call sets, and replicate aggregation.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Scores and counts for one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub auc: f64,
    /// ROC points from (0,0) to (1,1), nondecreasing in both coordinates.
    pub roc: Vec<(f64, f64)>,
    pub achieved_fdr: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// ROC curve and trapezoidal AUC for per-taxon DA scores against binary
/// truth. Equal scores collapse into one threshold step.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Result<(f64, Vec<(f64, f64)>)> {
    assert_eq!(scores.len(), truth.len());
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Config(
            "ROC needs both classes present in the truth".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut roc = vec![(0.0, 0.0)];
    let mut auc = 0.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_fpr, mut prev_tpr) = (0.0f64, 0.0f64);
    let mut idx = 0;
    while idx < order.len() {
        let s = scores[order[idx]];
        while idx < order.len() && scores[order[idx]] == s {
            if truth[order[idx]] {
                tp += 1;
            } else {
                fp += 1;
            }
            idx += 1;
        }
        let tpr = tp as f64 / pos as f64;
        let fpr = fp as f64 / neg as f64;
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        roc.push((fpr, tpr));
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    Ok((auc, roc))
}

/// Achieved FDR and sensitivity for one call set. An empty call set scores
/// (0, 0) by convention.
pub fn fdr_sensitivity(called: &BTreeSet<usize>, truth: &[bool]) -> (f64, f64) {
    let tp = called.iter().filter(|&&j| truth[j]).count();
    let fp = called.len() - tp;
    let total_da = truth.iter().filter(|&&t| t).count();
    let fdr = fp as f64 / called.len().max(1) as f64;
    let sens = if total_da == 0 {
        0.0
    } else {
        tp as f64 / total_da as f64
    };
    (fdr, sens)
}

/// Full confusion-matrix evaluation of scores plus a call set.
pub fn evaluate_calls(
    scores: &[f64],
    called: &BTreeSet<usize>,
    truth: &[bool],
) -> Result<EvalResult> {
    let (auc, roc) = roc_auc(scores, truth)?;
    let tp = called.iter().filter(|&&j| truth[j]).count();
    let fp = called.len() - tp;
    let total_da = truth.iter().filter(|&&t| t).count();
    let total_nonda = truth.len() - total_da;
    let fn_ = total_da - tp;
    let tn = total_nonda - fp;
    let (achieved_fdr, sensitivity) = fdr_sensitivity(called, truth);
    let specificity = if total_nonda == 0 {
        0.0
    } else {
        tn as f64 / total_nonda as f64
    };
    Ok(EvalResult {
        auc,
        roc,
        achieved_fdr,
        sensitivity,
        specificity,
        tp,
        fp,
        tn,
        fn_,
    })
}

/// Jaccard overlap |A ∩ B| / |A ∪ B|; two empty sets count as identical.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    inter as f64 / union as f64
}

/// Linear-interpolation percentile of a sample (R type-7).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Replicate-level aggregate: means plus percentile 95% intervals.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BenchmarkSummary {
    pub replicates: usize,
    pub mean_auc: f64,
    pub auc_interval: (f64, f64),
    pub mean_fdr: f64,
    pub mean_sensitivity: f64,
}

pub fn benchmark_summary(results: &[EvalResult]) -> Result<BenchmarkSummary> {
    if results.is_empty() {
        return Err(Error::Config("no replicate results to aggregate".into()));
    }
    let n = results.len() as f64;
    let mut aucs: Vec<f64> = results.iter().map(|r| r.auc).collect();
    aucs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(BenchmarkSummary {
        replicates: results.len(),
        mean_auc: aucs.iter().sum::<f64>() / n,
        auc_interval: (percentile(&aucs, 0.025), percentile(&aucs, 0.975)),
        mean_fdr: results.iter().map(|r| r.achieved_fdr).sum::<f64>() / n,
        mean_sensitivity: results.iter().map(|r| r.sensitivity).sum::<f64>() / n,
    })
}

/// Per-replicate lines plus a trailing summary row.
pub fn results_csv(results: &[EvalResult], summary: &BenchmarkSummary) -> String {
    let mut out = String::from("replicate,auc,fdr,sensitivity\n");
    for (i, r) in results.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            i + 1,
            r.auc,
            r.achieved_fdr,
            r.sensitivity
        );
    }
    let _ = writeln!(
        out,
        "mean,{},{},{}",
        summary.mean_auc, summary.mean_fdr, summary.mean_sensitivity
    );
    out
}

/// Minimal static SVG: one polyline per replicate ROC plus the diagonal.
pub fn roc_svg(results: &[EvalResult]) -> String {
    let (w, h, pad) = (420.0, 420.0, 40.0);
    let scale_x = |v: f64| pad + v * (w - 2.0 * pad);
    let scale_y = |v: f64| h - pad - v * (h - 2.0 * pad);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    let _ = writeln!(
        svg,
        "  <rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let _ = writeln!(
        svg,
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"gray\" stroke-dasharray=\"4\"/>",
        scale_x(0.0),
        scale_y(0.0),
        scale_x(1.0),
        scale_y(1.0)
    );
    for r in results {
        let pts: Vec<String> = r
            .roc
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", scale_x(x), scale_y(y)))
            .collect();
        let _ = writeln!(
            svg,
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.2\"/>",
            pts.join(" ")
        );
    }
    let _ = writeln!(
        svg,
        "  <text x=\"{}\" y=\"{}\" font-size=\"12\">FPR</text>",
        w / 2.0 - 12.0,
        h - 10.0
    );
    let _ = writeln!(
        svg,
        "  <text x=\"12\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 12,{})\">TPR</text>",
        h / 2.0,
        h / 2.0
    );
    svg.push_str("</svg>\n");
    svg
}

pub fn write_svg(results: &[EvalResult], path: &Path) -> Result<()> {
    std::fs::write(path, roc_svg(results)).map_err(|e| Error::io(path, e))
}
