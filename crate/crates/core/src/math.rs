//! Small numeric utilities shared by the samplers: a dense row-major matrix,
//! log-space helpers, ln-gamma, and a Cholesky solver for the low-dimensional
//! regression updates.

/// Dense row-major `f64` matrix with mutable column insertion/removal, sized
/// for n-by-C state blocks where C (the cluster count) changes over the run.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    v: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            v: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut v = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            v.extend_from_slice(row);
        }
        Mat {
            rows: r,
            cols: c,
            v,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.v[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.v[i * self.cols + j] = x;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.v[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.v[i * self.cols..(i + 1) * self.cols]
    }

    pub fn push_col(&mut self, col: &[f64]) {
        assert_eq!(col.len(), self.rows);
        let old = std::mem::take(&mut self.v);
        let c = self.cols;
        self.v = Vec::with_capacity(self.rows * (c + 1));
        for (i, chunk) in old.chunks(c.max(1)).enumerate().take(self.rows) {
            if c > 0 {
                self.v.extend_from_slice(chunk);
            }
            self.v.push(col[i]);
        }
        if self.rows == 0 {
            self.v.clear();
        }
        self.cols = c + 1;
    }

    pub fn remove_col(&mut self, j: usize) {
        assert!(j < self.cols);
        let c = self.cols;
        let mut w = 0;
        for idx in 0..self.v.len() {
            if idx % c != j {
                self.v[w] = self.v[idx];
                w += 1;
            }
        }
        self.v.truncate(w);
        self.cols = c - 1;
    }
}

/// log(sum(exp(x))) with the usual max shift; -inf for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Two-argument log-add-exp.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// ln(1 + e^x), stable across the whole real line.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Lanczos ln Γ(x) for x > 0 (g = 7, 9 coefficients); ~1e-13 relative error.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    assert!(x > 0.0, "ln_gamma domain: x = {x}");
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Symmetric positive-definite Cholesky factor (lower triangular, row-major
/// d x d). A pivot below 1e-10 of its diagonal entry counts as rank
/// deficiency, so exactly collinear designs fail instead of passing on
/// rounding noise.
pub fn cholesky(a: &[f64], d: usize) -> Result<Vec<f64>, String> {
    assert_eq!(a.len(), d * d);
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 1e-10 * a[i * d + i].abs() {
                    return Err(format!("matrix not positive definite at pivot {i}"));
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Ok(l)
}

/// Solve L y = b (forward substitution) for lower-triangular L.
pub fn solve_lower(l: &[f64], d: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * d + k] * y[k];
        }
        y[i] = s / l[i * d + i];
    }
    y
}

/// Solve L' x = y (backward substitution) for lower-triangular L.
pub fn solve_lower_t(l: &[f64], d: usize, y: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let mut s = y[i];
        for k in i + 1..d {
            s -= l[k * d + i] * x[k];
        }
        x[i] = s / l[i * d + i];
    }
    x
}

/// Solve (L L') x = b.
pub fn solve_spd(l: &[f64], d: usize, b: &[f64]) -> Vec<f64> {
    let y = solve_lower(l, d, b);
    solve_lower_t(l, d, &y)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sample mean and (population) variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v)
}

/// Draw from a categorical distribution given unnormalized log weights.
pub fn sample_log_categorical<R: rand::Rng>(log_w: &[f64], rng: &mut R) -> usize {
    let z = log_sum_exp(log_w);
    assert!(z.is_finite(), "all categorical weights vanished");
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &lw) in log_w.iter().enumerate() {
        acc += (lw - z).exp();
        if u < acc {
            return i;
        }
    }
    log_w.len() - 1
}
