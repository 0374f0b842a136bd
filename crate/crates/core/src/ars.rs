//! Derivative-free adaptive rejection sampling for log-concave densities.
//!
//! The envelope is built from secants only: inside the abscissa range a
//! concave function lies above its chords, and outside a chord's own interval
//! the extended chord line lies above the function. Rejected proposals refine
//! the hull, so acceptance rates climb quickly; the returned draw is an exact
//! sample from the normalized density.

use rand::Rng;

use crate::math::{log_add_exp, log_sum_exp};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ArsError {
    #[error("failed to bracket the mode after {0} doublings")]
    Bracket(usize),
    #[error("rejection loop exceeded {0} iterations")]
    MaxIterations(usize),
    #[error("log density returned a non-finite value at x = {0}")]
    NonFinite(f64),
}

const MAX_DOUBLINGS: usize = 50;
const MAX_ITERATIONS: usize = 10_000;
const MAX_HULL_POINTS: usize = 64;

/// One linear piece of the upper hull. `lo`/`hi` may be infinite on the
/// outermost pieces; `y_at` anchors the line at a finite abscissa.
#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    anchor_x: f64,
    anchor_y: f64,
    slope: f64,
}

impl Segment {
    #[inline]
    fn value(&self, x: f64) -> f64 {
        self.anchor_y + self.slope * (x - self.anchor_x)
    }

    /// log of the integral of exp(line) over [lo, hi].
    fn log_mass(&self) -> f64 {
        let s = self.slope;
        if self.lo.is_infinite() {
            // left tail, requires s > 0
            debug_assert!(s > 0.0);
            return self.value(self.hi) - s.ln();
        }
        if self.hi.is_infinite() {
            debug_assert!(s < 0.0);
            return self.value(self.lo) - (-s).ln();
        }
        let w = self.hi - self.lo;
        let y0 = self.value(self.lo);
        let sw = s * w;
        if sw.abs() < 1e-10 {
            y0 + (w * (1.0 + 0.5 * sw)).ln()
        } else if sw > 0.0 {
            y0 + sw + (-(-sw).exp()).ln_1p() - s.ln()
        } else {
            y0 + (-(sw).exp()).ln_1p() - (-s).ln()
        }
    }

    /// Inverse-CDF draw of a point within the segment.
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let u = u.max(1e-300);
        let s = self.slope;
        if self.lo.is_infinite() {
            return self.hi + u.ln() / s;
        }
        if self.hi.is_infinite() {
            return self.lo + u.ln() / s;
        }
        let w = self.hi - self.lo;
        let sw = s * w;
        if sw.abs() < 1e-10 {
            return self.lo + u * w;
        }
        // x = lo + log(1 + u (e^{sw} - 1)) / s, evaluated in log space
        let ln_em1 = if sw > 0.0 {
            sw + (-(-sw).exp()).ln_1p()
        } else {
            ((sw).exp_m1()).abs().ln()
        };
        let inner = if sw > 0.0 {
            log_add_exp(0.0, u.ln() + ln_em1)
        } else {
            // 1 - u (1 - e^{sw}), still in (e^{sw}, 1)
            (1.0 - u * (-(sw).exp_m1())).ln()
        };
        (self.lo + inner / s).clamp(self.lo, self.hi)
    }
}

struct Hull {
    xs: Vec<f64>,
    hs: Vec<f64>,
}

impl Hull {
    fn new(points: Vec<(f64, f64)>) -> Self {
        let mut pts = points;
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Hull {
            xs: pts.iter().map(|p| p.0).collect(),
            hs: pts.iter().map(|p| p.1).collect(),
        }
    }

    fn insert(&mut self, x: f64, h: f64) {
        let pos = self.xs.partition_point(|&v| v < x);
        self.xs.insert(pos, x);
        self.hs.insert(pos, h);
    }

    #[inline]
    fn slope(&self, i: usize, j: usize) -> f64 {
        (self.hs[j] - self.hs[i]) / (self.xs[j] - self.xs[i])
    }

    fn chord(&self, i: usize) -> Segment {
        Segment {
            lo: self.xs[i],
            hi: self.xs[i + 1],
            anchor_x: self.xs[i],
            anchor_y: self.hs[i],
            slope: self.slope(i, i + 1),
        }
    }

    /// Lower bound on the log density (chords; -inf outside the range).
    fn squeeze(&self, x: f64) -> f64 {
        let k = self.xs.len();
        if x < self.xs[0] || x > self.xs[k - 1] {
            return f64::NEG_INFINITY;
        }
        let i = self.xs.partition_point(|&v| v <= x).min(k - 1);
        let i = i.saturating_sub(1);
        self.chord(i).value(x)
    }

    /// Piecewise-linear envelope segments covering the whole real line.
    fn envelope(&self) -> Vec<Segment> {
        let k = self.xs.len();
        debug_assert!(k >= 3);
        let mut out = Vec::with_capacity(2 * k);
        // left tail: extension of the first chord
        let s01 = self.slope(0, 1);
        out.push(Segment {
            lo: f64::NEG_INFINITY,
            hi: self.xs[0],
            anchor_x: self.xs[0],
            anchor_y: self.hs[0],
            slope: s01,
        });
        for i in 0..k - 1 {
            let (lo, hi) = (self.xs[i], self.xs[i + 1]);
            // upper bounds: left neighbor chord extended right, and right
            // neighbor chord extended left; either alone is valid.
            let left = (i >= 1).then(|| Segment {
                lo,
                hi,
                anchor_x: self.xs[i],
                anchor_y: self.hs[i],
                slope: self.slope(i - 1, i),
            });
            let right = (i + 2 < k).then(|| Segment {
                lo,
                hi,
                anchor_x: self.xs[i + 1],
                anchor_y: self.hs[i + 1],
                slope: self.slope(i + 1, i + 2),
            });
            match (left, right) {
                (Some(a), None) => out.push(a),
                (None, Some(b)) => out.push(b),
                (Some(a), Some(b)) => {
                    // a is below b at lo, above at hi; split where they cross
                    let cross = if (a.slope - b.slope).abs() < 1e-300 {
                        hi
                    } else {
                        ((b.anchor_y - b.slope * b.anchor_x) - (a.anchor_y - a.slope * a.anchor_x))
                            / (a.slope - b.slope)
                    };
                    let cross = cross.clamp(lo, hi);
                    if cross > lo {
                        out.push(Segment { hi: cross, ..a });
                    }
                    if cross < hi {
                        out.push(Segment { lo: cross, ..b });
                    }
                }
                (None, None) => unreachable!("k >= 3 guarantees a neighbor chord"),
            }
        }
        // right tail: extension of the last chord
        out.push(Segment {
            lo: self.xs[k - 1],
            hi: f64::INFINITY,
            anchor_x: self.xs[k - 1],
            anchor_y: self.hs[k - 1],
            slope: self.slope(k - 2, k - 1),
        });
        out
    }
}

/// Draw one exact sample from a log-concave density.
///
/// `center` and `spread` seed the three initial abscissae at center and
/// center +/- 2 spread; the bracket widens by doubling when the mode lies
/// outside, up to a hard limit.
pub fn sample_log_concave<F, R>(
    log_density: F,
    center: f64,
    spread: f64,
    rng: &mut R,
) -> Result<f64, ArsError>
where
    F: Fn(f64) -> f64,
    R: Rng,
{
    let spread = if spread > 0.0 { spread } else { 1.0 };
    let eval = |x: f64| -> Result<f64, ArsError> {
        let h = log_density(x);
        if h.is_nan() || h == f64::INFINITY {
            return Err(ArsError::NonFinite(x));
        }
        Ok(h)
    };

    // Bracket the mode: middle point strictly above both ends.
    let mut w = 2.0 * spread;
    let (mut a, mut b, mut c) = (center - w, center, center + w);
    let (mut ha, mut hb, mut hc) = (eval(a)?, eval(b)?, eval(c)?);
    let mut doublings = 0;
    loop {
        if hb > ha && hb > hc {
            break;
        }
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(ArsError::Bracket(MAX_DOUBLINGS));
        }
        w *= 2.0;
        if ha >= hb {
            // mode is off to the left
            (c, hc) = (b, hb);
            (b, hb) = (a, ha);
            a -= w;
            ha = eval(a)?;
        } else {
            (a, ha) = (b, hb);
            (b, hb) = (c, hc);
            c += w;
            hc = eval(c)?;
        }
    }

    let mut hull = Hull::new(vec![(a, ha), (b, hb), (c, hc)]);
    for _ in 0..MAX_ITERATIONS {
        let segments = hull.envelope();
        let log_masses: Vec<f64> = segments.iter().map(|s| s.log_mass()).collect();
        let total = log_sum_exp(&log_masses);
        if !total.is_finite() {
            return Err(ArsError::NonFinite(total));
        }
        // pick a segment, then a point within it
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut idx = segments.len() - 1;
        for (i, &lm) in log_masses.iter().enumerate() {
            acc += (lm - total).exp();
            if u < acc {
                idx = i;
                break;
            }
        }
        let x = segments[idx].sample(rng);
        if !x.is_finite() {
            continue;
        }
        let env = segments[idx].value(x);
        let u2: f64 = rng.random::<f64>().max(1e-300);
        let lu = u2.ln();
        if lu <= hull.squeeze(x) - env {
            return Ok(x);
        }
        let h = eval(x)?;
        if lu <= h - env {
            return Ok(x);
        }
        // refine only with usable points: finite, not duplicating an abscissa
        let near_existing = hull
            .xs
            .iter()
            .any(|&v| (v - x).abs() < 1e-12 * (1.0 + v.abs()));
        if h.is_finite() && !near_existing && hull.xs.len() < MAX_HULL_POINTS {
            hull.insert(x, h);
        }
    }
    Err(ArsError::MaxIterations(MAX_ITERATIONS))
}
