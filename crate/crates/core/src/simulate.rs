//! Ground-truth-annotated synthetic dataset generator.
//!
//! The generating mechanism deliberately differs from the fitted model: the
//! cluster motifs come from a proportionality construction that splits each
//! sample's probability mass between the DA and non-DA cluster blocks with a
//! concentrated Beta draw, rather than from the fitted model's anchored
//! log-ratio map. Covariates are synthesized with the benchmark's structure:
//! three Bernoulli columns and one standardized continuous column, drawn for
//! half the samples and repeated across both groups.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_distr::{Beta, Distribution, Normal, Poisson};
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};

use crate::data::AbundanceData;
use crate::error::{Error, Result};
use crate::math::{self, Mat};
use crate::regression;
use crate::zeros;

pub const REFERENCE_TAXON_NAME: &str = "taxon_ref";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    /// Samples (must be even; two equal groups).
    pub n: usize,
    /// Taxa including the unit-count reference column.
    pub p: usize,
    pub binary_covariates: usize,
    pub continuous_covariates: usize,
    /// Range of the total cluster count, reference included.
    pub c_min: usize,
    pub c_max: usize,
    /// Mixture components for the generating regression vectors.
    pub m_gen: usize,
    pub tau2_gen: f64,
    /// Beta concentration for the DA/non-DA mass split.
    pub a_conc: f64,
    /// Sparsity knob: every zero-model coefficient equals this value.
    pub lambda0: f64,
    pub depth_mean_primary: f64,
    pub depth_mean_secondary: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 100,
            p: 1002,
            binary_covariates: 3,
            continuous_covariates: 1,
            c_min: 8,
            c_max: 20,
            m_gen: 7,
            tau2_gen: 1.0,
            a_conc: 200.0,
            lambda0: -0.1,
            depth_mean_primary: 10_000.0,
            depth_mean_secondary: 100.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 || self.n % 2 != 0 {
            return Err(Error::Config(format!(
                "n must be even and at least 4, got {}",
                self.n
            )));
        }
        if self.c_min < 2 || self.c_min > self.c_max {
            return Err(Error::Config(format!(
                "cluster range [{}, {}] invalid",
                self.c_min, self.c_max
            )));
        }
        if self.p < self.c_max + 1 {
            return Err(Error::Config(format!(
                "p = {} must exceed the maximum cluster count {}",
                self.p, self.c_max
            )));
        }
        if self.m_gen == 0 || self.a_conc <= 0.0 || self.tau2_gen <= 0.0 {
            return Err(Error::Config(
                "m_gen, a_conc, tau2_gen must be positive".into(),
            ));
        }
        if self.depth_mean_primary <= 0.0 || self.depth_mean_secondary <= 0.0 {
            return Err(Error::Config("depth means must be positive".into()));
        }
        Ok(())
    }
}

/// Ground truth alongside the observable data.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub c_total: usize,
    /// Cluster per taxon, 0 = reference cluster.
    pub alloc: Vec<usize>,
    /// Per-cluster status (1 non-DA, 2 DA), reference first.
    pub cluster_status: Vec<u8>,
    /// Per-taxon status, aligned with the emitted taxa.
    pub taxon_status: Vec<u8>,
    /// Generating regression vectors indexed [group][cluster].
    pub beta: Vec<Vec<Vec<f64>>>,
    /// Generating log ratios, n x C.
    pub eta: Mat,
    /// Generating motifs, n x C.
    pub qstar: Mat,
    /// Uncensored counts.
    pub ztilde: Vec<u64>,
    /// Censoring indicators.
    pub delta: Vec<bool>,
    pub lambda0: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub data: AbundanceData,
    pub truth: SimTruth,
}

/// Uniformly random composition of `total` into `parts` positive parts.
pub fn random_composition<R: Rng>(total: usize, parts: usize, rng: &mut R) -> Result<Vec<usize>> {
    if parts == 0 || parts > total {
        return Err(Error::Config(format!(
            "cannot split {total} items into {parts} positive parts"
        )));
    }
    if parts == 1 {
        return Ok(vec![total]);
    }
    // distinct cut points in 1..total
    let mut cuts = BTreeSet::new();
    while cuts.len() < parts - 1 {
        cuts.insert(1 + (rng.random::<u64>() as usize) % (total - 1));
    }
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0usize;
    for &c in &cuts {
        out.push(c - prev);
        prev = c;
    }
    out.push(total - prev);
    Ok(out)
}

/// Parse a user-supplied covariate block (headered TSV/CSV, numeric cells)
/// to stand in for the synthesized covariates: the first n/2 rows are used
/// and repeated across the two groups. Columns with values beyond {0,1} are
/// standardized.
pub fn read_covariate_block(path: &Path, half: usize) -> Result<(Vec<f64>, usize)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let delim = if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        ','
    } else {
        '\t'
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        // first column is a row identifier
        for (c, cell) in line.split(delim).enumerate().skip(1) {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Load(format!(
                    "{}: line {}, column {}: not numeric: {cell:?}",
                    path.display(),
                    lineno + 1,
                    c + 1
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.len() < half {
        return Err(Error::Load(format!(
            "{}: need at least {half} covariate rows, found {}",
            path.display(),
            rows.len()
        )));
    }
    rows.truncate(half);
    let t = rows[0].len();
    if t == 0 || rows.iter().any(|r| r.len() != t) {
        return Err(Error::Load(format!(
            "{}: ragged covariate rows",
            path.display()
        )));
    }
    let mut x = vec![0.0; half * t];
    for c in 0..t {
        let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        let binary = col.iter().all(|&v| v == 0.0 || v == 1.0);
        if binary {
            for i in 0..half {
                x[i * t + c] = col[i];
            }
        } else {
            let (m, var) = math::mean_var(&col);
            let sd = var.sqrt();
            if sd == 0.0 {
                return Err(Error::Load(format!(
                    "{}: covariate column {} is constant",
                    path.display(),
                    c + 1
                )));
            }
            for i in 0..half {
                x[i * t + c] = (col[i] - m) / sd;
            }
        }
    }
    Ok((x, t))
}

/// Covariates for n/2 subjects, repeated across the two groups.
fn generate_covariates<R: Rng>(config: &SimConfig, rng: &mut R) -> (Vec<f64>, Vec<usize>) {
    let half = config.n / 2;
    let t = config.binary_covariates + config.continuous_covariates;
    let mut half_x = vec![0.0; half * t];
    for b in 0..config.binary_covariates {
        loop {
            let pi_t = 0.2 + 0.6 * rng.random::<f64>();
            let mut any0 = false;
            let mut any1 = false;
            for i in 0..half {
                let v = if rng.random::<f64>() < pi_t { 1.0 } else { 0.0 };
                half_x[i * t + b] = v;
                any0 |= v == 0.0;
                any1 |= v == 1.0;
            }
            if any0 && any1 {
                break;
            }
            // constant column would make the design singular; redraw
        }
    }
    let normal = Normal::new(25.0, 4.0).unwrap();
    for c in 0..config.continuous_covariates {
        let col = config.binary_covariates + c;
        let vals: Vec<f64> = (0..half).map(|_| normal.sample(rng)).collect();
        let (m, v) = math::mean_var(&vals);
        let sd = v.sqrt().max(1e-12);
        for i in 0..half {
            half_x[i * t + col] = (vals[i] - m) / sd;
        }
    }
    let mut x = vec![0.0; config.n * t];
    x[..half * t].copy_from_slice(&half_x);
    x[half * t..].copy_from_slice(&half_x);
    let groups: Vec<usize> = (0..config.n).map(|i| usize::from(i >= half)).collect();
    (x, groups)
}

/// Generate one dataset with its ground truth.
pub fn generate(config: &SimConfig) -> Result<SimulatedDataset> {
    generate_with_covariates(config, None)
}

/// Like [`generate`], but with a caller-supplied covariate block for the
/// first n/2 subjects (repeated across groups) in place of synthesis.
pub fn generate_with_covariates(
    config: &SimConfig,
    covariate_block: Option<(Vec<f64>, usize)>,
) -> Result<SimulatedDataset> {
    config.validate()?;
    let mut rng = Pcg64Mcg::seed_from_u64(config.seed ^ 0x5151_c0de);
    let n = config.n;
    let p = config.p;
    let t = match &covariate_block {
        Some((block, t)) => {
            if block.len() != (n / 2) * t {
                return Err(Error::Config(format!(
                    "covariate block holds {} values, expected {} ({} rows x {t})",
                    block.len(),
                    (n / 2) * t,
                    n / 2
                )));
            }
            *t
        }
        None => config.binary_covariates + config.continuous_covariates,
    };
    let d = t + 1;

    // (a) covariates, duplicated across groups; synthesized designs are
    // redrawn until full column rank (small n makes collinear binary
    // columns likely), supplied ones must already be full rank
    let mut attempt = 0;
    let (x, groups, xdag, gram_chol) = loop {
        let (x, groups) = match &covariate_block {
            Some((block, _)) => {
                let mut x = vec![0.0; n * t];
                let half = n / 2;
                x[..half * t].copy_from_slice(block);
                x[half * t..].copy_from_slice(block);
                let groups = (0..n).map(|i| usize::from(i >= half)).collect();
                (x, groups)
            }
            None => generate_covariates(config, &mut rng),
        };
        let mut xdag = vec![0.0; n * d];
        for i in 0..n {
            xdag[i * d] = 1.0;
            for c in 0..t {
                xdag[i * d + 1 + c] = x[i * t + c];
            }
        }
        let mut gram = vec![0.0; d * d];
        for i in 0..n {
            for a in 0..d {
                for b in 0..d {
                    gram[a * d + b] += xdag[i * d + a] * xdag[i * d + b];
                }
            }
        }
        match math::cholesky(&gram, d) {
            Ok(chol) => break (x, groups, xdag, chol),
            Err(_) if attempt < 200 && covariate_block.is_none() => attempt += 1,
            Err(e) => {
                return Err(Error::Config(format!(
                    "simulated design is not full rank: {e}"
                )))
            }
        }
    };

    // (b) allocation: reference singleton plus a uniform composition
    let c_total = config.c_min + (rng.random::<u64>() as usize) % (config.c_max - config.c_min + 1);
    let parts = random_composition(p - 1, c_total - 1, &mut rng)?;
    let mut labels: Vec<usize> = parts
        .iter()
        .enumerate()
        .flat_map(|(u, &m)| std::iter::repeat_n(u + 1, m))
        .collect();
    // shuffle taxa into clusters
    for i in (1..labels.len()).rev() {
        let j = (rng.random::<u64>() as usize) % (i + 1);
        labels.swap(i, j);
    }
    let mut alloc = Vec::with_capacity(p);
    alloc.push(0);
    alloc.extend(labels);
    let mut sizes = vec![0usize; c_total];
    for &a in &alloc {
        sizes[a] += 1;
    }

    // (c) regression vectors from the finite mixture; cluster statuses
    let atoms: Vec<Vec<f64>> = (0..config.m_gen)
        .map(|_| regression::sample_atom_prior(&gram_chol, d, config.tau2_gen, &mut rng))
        .collect();
    let mut pi = Vec::with_capacity(config.m_gen);
    let mut total = 0.0;
    for _ in 0..config.m_gen {
        let g: f64 = rand_distr::Gamma::new(1.0 / config.m_gen as f64, 1.0)
            .unwrap()
            .sample(&mut rng);
        total += g;
        pi.push(g);
    }
    for v in pi.iter_mut() {
        *v /= total;
    }
    let lw: Vec<f64> = pi.iter().map(|v| v.max(1e-300).ln()).collect();
    let memberships: Vec<Vec<usize>> = (0..2)
        .map(|_| {
            (0..c_total)
                .map(|u| {
                    if u == 0 {
                        0
                    } else {
                        math::sample_log_categorical(&lw, &mut rng)
                    }
                })
                .collect()
        })
        .collect();
    let beta: Vec<Vec<Vec<f64>>> = (0..2)
        .map(|k| {
            (0..c_total)
                .map(|u| atoms[memberships[k][u]].clone())
                .collect()
        })
        .collect();
    let cluster_status: Vec<u8> = (0..c_total)
        .map(|u| regression::cluster_status(&memberships, u))
        .collect();
    let taxon_status: Vec<u8> = alloc.iter().map(|&u| cluster_status[u]).collect();

    // (d) log ratios, residual variance set for R^2 > 99%
    let mut predictors = Vec::with_capacity(n * (c_total - 1));
    for i in 0..n {
        let k = groups[i];
        for u in 1..c_total {
            predictors.push(math::dot(&xdag[i * d..(i + 1) * d], &beta[k][u]));
        }
    }
    let (_, pred_var) = math::mean_var(&predictors);
    let sigma_e2_gen = (pred_var * (1.0 / 0.99 - 1.0)).max(1e-12);
    let noise = Normal::new(0.0, sigma_e2_gen.sqrt()).unwrap();
    let mut eta = Mat::zeros(n, c_total);
    let mut idx = 0;
    for i in 0..n {
        for u in 1..c_total {
            eta.set(i, u, predictors[idx] + noise.sample(&mut rng));
            idx += 1;
        }
    }

    // (e) motifs via the proportional-mass construction
    let beta_split = Beta::new(0.5 * config.a_conc, 0.5 * config.a_conc).unwrap();
    let mut qstar = Mat::zeros(n, c_total);
    let any_da = cluster_status.iter().any(|&h| h == 2);
    for i in 0..n {
        let (rho1, rho2) = if any_da {
            let r1: f64 = beta_split.sample(&mut rng);
            (r1, 1.0 - r1)
        } else {
            (1.0, 0.0)
        };
        let mut mass = [0.0f64; 2];
        for u in 0..c_total {
            let h = cluster_status[u] as usize - 1;
            mass[h] += sizes[u] as f64 * eta.get(i, u).exp();
        }
        let alpha1 = rho1 / mass[0];
        let alpha2 = if mass[1] > 0.0 { rho2 / mass[1] } else { 0.0 };
        for u in 0..c_total {
            let a = if cluster_status[u] == 1 {
                alpha1
            } else {
                alpha2
            };
            qstar.set(i, u, a * eta.get(i, u).exp());
        }
    }

    // (f) uncensored depths and counts
    let pois_a = Poisson::new(config.depth_mean_primary).unwrap();
    let pois_b = Poisson::new(config.depth_mean_secondary).unwrap();
    let mut ztilde = vec![0u64; n * p];
    let mut ltilde = vec![0u64; n];
    for i in 0..n {
        let la: f64 = pois_a.sample(&mut rng);
        let lb: f64 = pois_b.sample(&mut rng);
        let depth = (la * lb).max(1.0) as u64;
        ltilde[i] = depth;
        let weights: Vec<f64> = (0..p).map(|j| qstar.get(i, alloc[j])).collect();
        let counts = zeros::sample_multinomial(depth, &weights, &mut rng);
        ztilde[i * p..(i + 1) * p].copy_from_slice(&counts);
    }

    // (g) censoring with every coefficient equal to lambda0, depths entering
    // through the uncensored totals
    let mut delta = vec![true; n * p];
    let mut z = vec![0u64; n * p];
    for i in 0..n {
        let covsum: f64 = (0..t).map(|c| x[i * t + c]).sum();
        let logit = config.lambda0 * (1.0 + covsum + (ltilde[i] as f64).ln());
        let r = math::logistic(logit);
        for j in 1..p {
            let keep = rng.random::<f64>() >= r;
            delta[i * p + j] = keep;
            z[i * p + j] = if keep { ztilde[i * p + j] } else { 0 };
        }
        // artificial reference: unit count regardless of the latent draw
        z[i * p] = 1;
        delta[i * p] = true;
    }

    let l: Vec<u64> = (0..n).map(|i| z[i * p..(i + 1) * p].iter().sum()).collect();
    let mut taxon_names = Vec::with_capacity(p);
    taxon_names.push(REFERENCE_TAXON_NAME.to_string());
    for j in 1..p {
        taxon_names.push(format!("t{j:05}"));
    }
    let sample_ids: Vec<String> = (0..n).map(|i| format!("s{:04}", i + 1)).collect();
    let data = AbundanceData {
        z,
        n,
        p,
        l,
        groups,
        k: 2,
        group_sizes: vec![n / 2, n / 2],
        x,
        t,
        xdag,
        sample_ids,
        taxon_names,
        group_labels: vec!["g1".into(), "g2".into()],
        reference_set: false,
        reference_augmented: false,
    };
    Ok(SimulatedDataset {
        data,
        truth: SimTruth {
            c_total,
            alloc,
            cluster_status,
            taxon_status,
            beta,
            eta,
            qstar,
            ztilde,
            delta,
            lambda0: config.lambda0,
            seed: config.seed,
        },
    })
}

/// Convenience for tests: just the observable data.
pub fn write_in_memory(config: &SimConfig) -> Result<AbundanceData> {
    Ok(generate(config)?.data)
}

/// Fraction of zero cells in the observed count matrix.
pub fn zero_fraction(data: &AbundanceData) -> f64 {
    let zeros = data.z.iter().filter(|&&v| v == 0).count();
    zeros as f64 / data.z.len() as f64
}

/// The persisted subset of the ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthFile {
    pub seed: u64,
    pub lambda0: f64,
    pub n: usize,
    pub p: usize,
    pub c_total: usize,
    pub taxa: Vec<String>,
    pub alloc: Vec<usize>,
    pub cluster_status: Vec<u8>,
    pub taxon_status: Vec<u8>,
}

impl TruthFile {
    pub fn from_dataset(ds: &SimulatedDataset) -> TruthFile {
        TruthFile {
            seed: ds.truth.seed,
            lambda0: ds.truth.lambda0,
            n: ds.data.n,
            p: ds.data.p,
            c_total: ds.truth.c_total,
            taxa: ds.data.taxon_names.clone(),
            alloc: ds.truth.alloc.clone(),
            cluster_status: ds.truth.cluster_status.clone(),
            taxon_status: ds.truth.taxon_status.clone(),
        }
    }
}

/// Write counts.tsv, covariates.tsv, and truth.json into `dir`.
pub fn write_dataset(ds: &SimulatedDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let d = &ds.data;

    let mut counts = String::from("sample");
    for name in &d.taxon_names {
        let _ = write!(counts, "\t{name}");
    }
    counts.push('\n');
    for i in 0..d.n {
        let _ = write!(counts, "{}", d.sample_ids[i]);
        for j in 0..d.p {
            let _ = write!(counts, "\t{}", d.count(i, j));
        }
        counts.push('\n');
    }
    let counts_path = dir.join("counts.tsv");
    std::fs::write(&counts_path, counts).map_err(|e| Error::io(&counts_path, e))?;

    let mut covs = String::from("sample\tgroup");
    for c in 0..d.t {
        let _ = write!(covs, "\tx{}", c + 1);
    }
    covs.push('\n');
    for i in 0..d.n {
        let _ = write!(covs, "{}\t{}", d.sample_ids[i], d.group_labels[d.groups[i]]);
        for c in 0..d.t {
            let _ = write!(covs, "\t{}", d.x[i * d.t + c]);
        }
        covs.push('\n');
    }
    let covs_path = dir.join("covariates.tsv");
    std::fs::write(&covs_path, covs).map_err(|e| Error::io(&covs_path, e))?;

    let truth = TruthFile::from_dataset(ds);
    let truth_path = dir.join("truth.json");
    let json = serde_json::to_string(&truth)
        .map_err(|e| Error::Model(format!("truth serialization: {e}")))?;
    std::fs::write(&truth_path, json).map_err(|e| Error::io(&truth_path, e))?;
    Ok(())
}

pub fn read_truth(path: &Path) -> Result<TruthFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Load(format!("{}: bad truth file: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariate_structure() {
        let cfg = SimConfig {
            n: 20,
            p: 30,
            c_min: 3,
            c_max: 6,
            seed: 1,
            ..SimConfig::default()
        };
        let ds = generate(&cfg).unwrap();
        let d = &ds.data;
        let half = d.n / 2;
        for i in 0..half {
            for c in 0..d.t {
                assert_eq!(d.x[i * d.t + c], d.x[(i + half) * d.t + c]);
            }
            assert_eq!(d.groups[i], 0);
            assert_eq!(d.groups[i + half], 1);
        }
        for i in 0..d.n {
            for b in 0..cfg.binary_covariates {
                let v = d.x[i * d.t + b];
                assert!(v == 0.0 || v == 1.0);
            }
        }
    }

    #[test]
    fn composition_sums_and_positivity() {
        let mut rng = Pcg64Mcg::seed_from_u64(5);
        for _ in 0..50 {
            let total = 10 + (rng.random::<u64>() as usize) % 100;
            let parts = 1 + (rng.random::<u64>() as usize) % 9;
            let comp = random_composition(total, parts, &mut rng).unwrap();
            assert_eq!(comp.len(), parts);
            assert_eq!(comp.iter().sum::<usize>(), total);
            assert!(comp.iter().all(|&c| c >= 1));
        }
        // degenerate shapes
        assert_eq!(random_composition(5, 1, &mut rng).unwrap(), vec![5]);
        let singletons = random_composition(4, 4, &mut rng).unwrap();
        assert_eq!(singletons, vec![1, 1, 1, 1]);
        assert!(random_composition(3, 4, &mut rng).is_err());
    }

    #[test]
    fn truth_is_self_consistent() {
        let cfg = SimConfig {
            n: 16,
            p: 40,
            c_min: 4,
            c_max: 8,
            seed: 3,
            ..SimConfig::default()
        };
        let ds = generate(&cfg).unwrap();
        let t = &ds.truth;
        assert_eq!(t.cluster_status[0], 1);
        for (j, &u) in t.alloc.iter().enumerate() {
            assert_eq!(t.taxon_status[j], t.cluster_status[u]);
        }
        // row-stochastic constraint on the generated motifs
        let mut sizes = vec![0usize; t.c_total];
        for &u in &t.alloc {
            sizes[u] += 1;
        }
        for i in 0..ds.data.n {
            let s: f64 = (0..t.c_total)
                .map(|u| sizes[u] as f64 * t.qstar.get(i, u))
                .sum();
            assert!((s - 1.0).abs() < 1e-10, "row {i}: {s}");
        }
        // reference column forced to ones
        for i in 0..ds.data.n {
            assert_eq!(ds.data.count(i, 0), 1);
        }
    }

    #[test]
    fn depth_scale() {
        // E[Lt] is the product of the two depth means
        let cfg = SimConfig {
            n: 40,
            p: 50,
            c_min: 4,
            c_max: 8,
            seed: 9,
            ..SimConfig::default()
        };
        let ds = generate(&cfg).unwrap();
        let mean_depth = ds
            .truth
            .ztilde
            .chunks(ds.data.p)
            .map(|row| row.iter().sum::<u64>() as f64)
            .sum::<f64>()
            / ds.data.n as f64;
        let want = cfg.depth_mean_primary * cfg.depth_mean_secondary;
        assert!(
            (mean_depth / want - 1.0).abs() < 0.05,
            "mean depth {mean_depth} vs {want}"
        );
    }

    #[test]
    fn beta_split_concentrates_for_large_a() {
        let mut rng = Pcg64Mcg::seed_from_u64(4);
        let b = Beta::new(0.5 * 1e6, 0.5 * 1e6).unwrap();
        for _ in 0..50 {
            let draw: f64 = b.sample(&mut rng);
            assert!((draw - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn dataset_files_round_trip() {
        let cfg = SimConfig {
            n: 10,
            p: 16,
            c_min: 3,
            c_max: 5,
            seed: 11,
            ..SimConfig::default()
        };
        let ds = generate(&cfg).unwrap();
        let dir = std::env::temp_dir().join("zibnp_sim_tests");
        write_dataset(&ds, &dir).unwrap();
        let loaded = crate::data::load_abundance(
            &dir.join("counts.tsv"),
            &dir.join("covariates.tsv"),
            "group",
            false,
        )
        .unwrap();
        assert_eq!(loaded.z, ds.data.z);
        assert_eq!(loaded.groups, ds.data.groups);
        assert_eq!(loaded.taxon_names, ds.data.taxon_names);
        let truth = read_truth(&dir.join("truth.json")).unwrap();
        assert_eq!(truth.taxon_status, ds.truth.taxon_status);
        assert_eq!(truth.c_total, ds.truth.c_total);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SimConfig {
            n: 12,
            p: 20,
            c_min: 3,
            c_max: 5,
            seed: 77,
            ..SimConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.data.z, b.data.z);
        assert_eq!(a.truth.taxon_status, b.truth.taxon_status);
    }
}
