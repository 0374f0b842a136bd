//! Posterior differential-abundance calls.
//!
//! Each stored iteration carries conditional non-DA probabilities: per
//! cluster, the chance that all K group memberships tie; per taxon, the
//! allocation-weighted mixture of its candidate clusters' probabilities,
//! with the fresh-cluster candidate assigned the prior tie probability
//! sum_m pi_m^K. Averaging over the trace gives each taxon's posterior DA
//! probability, and the direct-posterior-probability rule picks the largest
//! call set whose mean non-DA probability stays under the nominal FDR.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::clusters::{self, AuxParams, Target};
use crate::data::AbundanceData;
use crate::error::{Error, Result};
use crate::math;
use crate::regression;
use crate::state::{ModelState, Priors};
use crate::trace::Trace;

/// Conditional probability that each cluster is non-DA, given the current
/// state: sum over components of the product across groups of the
/// membership full-conditional probabilities. Entry 0 (reference) is 1.
pub fn per_iter_cluster_nonda(state: &ModelState, data: &AbundanceData) -> Vec<f64> {
    let c = state.n_clusters();
    let m = state.pi.len();
    let mut out = Vec::with_capacity(c);
    out.push(1.0);
    for u in 1..c {
        // normalized membership probabilities per group
        let probs: Vec<Vec<f64>> = (0..state.k)
            .map(|k| {
                let lw = regression::membership_log_weights(state, data, k, u);
                let z = math::log_sum_exp(&lw);
                lw.iter().map(|&w| (w - z).exp()).collect()
            })
            .collect();
        let mut tie = 0.0;
        for comp in 0..m {
            let mut prod = 1.0;
            for kprobs in &probs {
                prod *= kprobs[comp];
            }
            tie += prod;
        }
        out.push(tie.clamp(0.0, 1.0));
    }
    out
}

/// Conditional probability that each taxon is non-DA: allocation
/// probabilities combined with the cluster probabilities. The reference
/// taxon is non-DA by construction.
pub fn per_iter_taxon_nonda<R: Rng>(
    state: &ModelState,
    data: &AbundanceData,
    priors: &Priors,
    cluster_nonda: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(state.p);
    out.push(1.0);
    // prior probability that a fresh cluster's K memberships tie
    let fresh_tie: f64 = state.pi.iter().map(|&p| p.powi(state.k as i32)).sum();
    for j in 1..state.p {
        let aux = clusters::draw_aux(state, data, j, rng);
        let cands = clusters::candidates_with_aux(state, data, priors, j, &aux);
        let z = math::log_sum_exp(&cands.log_weights);
        let mut acc = 0.0;
        for (target, &lw) in cands.targets.iter().zip(&cands.log_weights) {
            let prob = (lw - z).exp();
            let nonda = match target {
                Target::Existing(u) => cluster_nonda[*u],
                Target::Aux => match &aux {
                    AuxParams::Own(u0) => cluster_nonda[*u0],
                    AuxParams::Fresh { .. } => fresh_tie,
                },
            };
            acc += prob * nonda;
        }
        out.push(acc.clamp(0.0, 1.0));
    }
    out
}

/// Empirical-average posterior DA probability per taxon over a trace.
pub fn posterior_da_probability(trace: &Trace) -> Result<Vec<f64>> {
    if trace.records.is_empty() {
        return Err(Error::Model("empty trace".into()));
    }
    let p = trace.records[0].taxon_nonda.len();
    let mut acc = vec![0.0; p];
    for rec in &trace.records {
        if rec.taxon_nonda.len() != p {
            return Err(Error::Model("ragged trace records".into()));
        }
        for (a, &v) in acc.iter_mut().zip(&rec.taxon_nonda) {
            *a += v;
        }
    }
    let l = trace.records.len() as f64;
    Ok(acc.into_iter().map(|a| 1.0 - a / l).collect())
}

/// Pool stored iterations from several chains before averaging.
pub fn posterior_da_probability_multi(traces: &[Trace]) -> Result<Vec<f64>> {
    let mut pooled = traces
        .first()
        .ok_or_else(|| Error::Model("no traces".into()))?
        .clone();
    for t in &traces[1..] {
        pooled.records.extend(t.records.iter().cloned());
    }
    posterior_da_probability(&pooled)
}

/// Result of thresholding the posterior DA probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct DaResult {
    /// Posterior P[DA] per fitted taxon.
    pub prob_da: Vec<f64>,
    /// Probability threshold actually attained.
    pub kappa: f64,
    /// Called set as indices into the fitted taxa.
    pub called: Vec<usize>,
    pub nominal_fdr: f64,
    /// Mean posterior non-DA probability over the called set.
    pub achieved_bayes_fdr: f64,
}

/// Largest prefix of taxa, in decreasing posterior DA probability, whose
/// mean non-DA probability stays at or under the nominal rate. Ties at the
/// boundary enter or leave together; an empty call set reports kappa = 1.
pub fn bayesian_fdr_threshold(prob_da: &[f64], nominal: f64) -> Result<DaResult> {
    if !(0.0 < nominal && nominal < 1.0) {
        return Err(Error::Config(format!(
            "nominal FDR must be inside (0,1), got {nominal}"
        )));
    }
    let mut order: Vec<usize> = (0..prob_da.len()).collect();
    order.sort_by(|&a, &b| prob_da[b].partial_cmp(&prob_da[a]).unwrap().then(a.cmp(&b)));
    let mut called = Vec::new();
    let mut kappa = 1.0;
    let mut achieved = 0.0;
    let mut running = 0.0;
    let mut idx = 0;
    while idx < order.len() {
        // block of ties
        let mut end = idx + 1;
        while end < order.len() && prob_da[order[end]] == prob_da[order[idx]] {
            end += 1;
        }
        let block_sum: f64 = order[idx..end].iter().map(|&j| 1.0 - prob_da[j]).sum();
        let candidate = (running + block_sum) / end as f64;
        if candidate <= nominal {
            running += block_sum;
            kappa = prob_da[order[idx]];
            achieved = candidate;
            called.extend(order[idx..end].iter().copied());
            idx = end;
        } else {
            break;
        }
    }
    called.sort_unstable();
    Ok(DaResult {
        prob_da: prob_da.to_vec(),
        kappa: if called.is_empty() { 1.0 } else { kappa },
        called,
        nominal_fdr: nominal,
        achieved_bayes_fdr: achieved,
    })
}

/// Per-taxon rows of the DA report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub taxon: String,
    /// None for taxa that bypassed the model (screened or reference).
    pub prob_da: Option<f64>,
    pub called: bool,
    /// "model", "forced", or "reference".
    pub source: String,
}

/// Assemble report rows: fitted taxa from the result, screened taxa merged
/// back in as forced calls.
pub fn report_rows(
    result: &DaResult,
    taxon_names: &[String],
    reference_taxon: &str,
    forced_da: &[String],
) -> Vec<ReportRow> {
    let mut called = vec![false; taxon_names.len()];
    for &j in &result.called {
        called[j] = true;
    }
    let mut rows: Vec<ReportRow> = taxon_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            if name == reference_taxon {
                ReportRow {
                    taxon: name.clone(),
                    prob_da: Some(0.0),
                    called: false,
                    source: "reference".into(),
                }
            } else {
                ReportRow {
                    taxon: name.clone(),
                    prob_da: Some(result.prob_da[j]),
                    called: called[j],
                    source: "model".into(),
                }
            }
        })
        .collect();
    for name in forced_da {
        rows.push(ReportRow {
            taxon: name.clone(),
            prob_da: None,
            called: true,
            source: "forced".into(),
        });
    }
    rows
}

pub fn write_da_report(rows: &[ReportRow], path: &Path) -> Result<()> {
    let mut out = String::from("taxon\tprob_da\tcalled\tsource\n");
    for r in rows {
        let p = match r.prob_da {
            Some(v) => format!("{v}"),
            None => "NA".to_string(),
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.taxon,
            p,
            u8::from(r.called),
            r.source
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_da_report(path: &Path) -> Result<Vec<ReportRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Load(format!("{}: empty report", path.display())))?;
    let cols: Vec<&str> = header.split('\t').collect();
    let find = |name: &str| cols.iter().position(|c| *c == name);
    let (ti, pi, ci, si) = (
        find("taxon").ok_or_else(|| Error::Load("report missing taxon column".into()))?,
        find("prob_da").or_else(|| find("score")),
        find("called"),
        find("source"),
    );
    let mut rows = Vec::new();
    for (no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let prob_da = match pi.map(|i| f[i]) {
            Some("NA") | None => None,
            Some(v) => Some(v.parse().map_err(|_| {
                Error::Load(format!(
                    "{}: line {}: bad prob_da {v:?}",
                    path.display(),
                    no + 2
                ))
            })?),
        };
        let called = match ci.map(|i| f[i]) {
            Some("1") => true,
            Some("0") | None => false,
            Some(v) => {
                return Err(Error::Load(format!(
                    "{}: line {}: bad called flag {v:?}",
                    path.display(),
                    no + 2
                )))
            }
        };
        rows.push(ReportRow {
            taxon: f[ti].to_string(),
            prob_da,
            called,
            source: si
                .map(|i| f[i].to_string())
                .unwrap_or_else(|| "model".into()),
        });
    }
    Ok(rows)
}

/// Summary emitted next to the report.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct DaSummary {
    pub kappa: f64,
    pub nominal_fdr: f64,
    pub achieved_bayes_fdr: f64,
    pub n_called_model: usize,
    pub n_forced: usize,
    pub n_taxa: usize,
}

pub fn write_da_summary(summary: &DaSummary, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(summary)
        .map_err(|e| Error::Model(format!("summary serialization: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}
