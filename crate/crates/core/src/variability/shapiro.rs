//! Shapiro–Wilk W test for normality.
//!
//! Coefficients and p-value follow Royston's approximation (Applied
//! Statistics algorithm AS R94), valid for 3 <= n <= 5000. For n = 3 the
//! p-value is exact.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const MAX_SAMPLES: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapiroWilk {
    pub w: f64,
    pub p_value: f64,
}

impl ShapiroWilk {
    pub fn rejects_normality(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

/// Runs the test on an unsorted sample.
pub fn shapiro_wilk(samples: &[f64]) -> Result<ShapiroWilk> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, given: n });
    }
    if n > MAX_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "Shapiro-Wilk approximation supports at most {MAX_SAMPLES} samples, got {n}"
        )));
    }
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite sample at index {i}")));
    }

    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let range = x[n - 1] - x[0];
    if range <= 0.0 {
        return Err(Error::Degenerate("all samples are identical".into()));
    }

    let a = coefficients(n);
    let w = statistic(&x, &a, range);
    let p_value = p_value(w, n);
    Ok(ShapiroWilk { w, p_value })
}

/// Evaluates `cc[0] + cc[1] x + ... + cc[k] x^k`.
fn poly(cc: &[f64], x: f64) -> f64 {
    cc.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Upper-half coefficients a[0..n/2], positive, largest first.
fn coefficients(n: usize) -> Vec<f64> {
    let half = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let an = n as f64;
    let normal = std_normal();
    // Blom-type approximations of the expected normal order statistics.
    let m: Vec<f64> = (1..=half).map(|i| normal.inverse_cdf((i as f64 - 0.375) / (an + 0.25))).collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / an.sqrt();

    let a1 = poly(&C1, rsn) - m[0] / ssumm2;
    let mut a = vec![0.0; half];
    let (first_scaled, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
        a[1] = a2;
        (2, fac)
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        (1, fac)
    };
    a[0] = a1;
    for i in first_scaled..half {
        a[i] = -m[i] / fac;
    }
    a
}

/// Signed coefficient for sorted position `i` (negative in the lower half).
fn signed_coefficient(a: &[f64], n: usize, i: usize) -> f64 {
    let j = n - 1 - i;
    match i.cmp(&j) {
        std::cmp::Ordering::Less => -a[i],
        std::cmp::Ordering::Greater => a[j],
        std::cmp::Ordering::Equal => 0.0,
    }
}

/// W as the squared correlation between the sorted sample and the coefficients.
fn statistic(x: &[f64], a: &[f64], range: f64) -> f64 {
    let n = x.len();
    let an = n as f64;
    let coef: Vec<f64> = (0..n).map(|i| signed_coefficient(a, n, i)).collect();
    let mean_a = coef.iter().sum::<f64>() / an;
    let mean_x = x.iter().map(|v| v / range).sum::<f64>() / an;

    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    for (xi, ai) in x.iter().zip(&coef) {
        let da = ai - mean_a;
        let dx = xi / range - mean_x;
        ssa += da * da;
        ssx += dx * dx;
        sax += da * dx;
    }
    // 1 - W computed directly keeps precision when W is close to 1.
    let ssassx = (ssa * ssx).sqrt();
    let one_minus_w = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    (1.0 - one_minus_w).clamp(0.0, 1.0)
}

fn p_value(w: f64, n: usize) -> f64 {
    if n == 3 {
        let six_over_pi = 6.0 / std::f64::consts::PI;
        let p = six_over_pi * (w.sqrt().asin() - std::f64::consts::FRAC_PI_3);
        return p.clamp(0.0, 1.0);
    }
    if w >= 1.0 {
        return 1.0;
    }
    let an = n as f64;
    let mut y = (1.0 - w).ln();
    let (mean, sd) = if n <= 11 {
        let gamma = poly(&G, an);
        if y >= gamma {
            return 0.0;
        }
        y = -(gamma - y).ln();
        (poly(&C3, an), poly(&C4, an).exp())
    } else {
        let ln_n = an.ln();
        (poly(&C5, ln_n), poly(&C6, ln_n).exp())
    };
    std_normal().sf((y - mean) / sd).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_points_on_a_line_are_perfectly_normal() {
        let r = shapiro_wilk(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.w, 1.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn n3_coefficients_are_closed_form() {
        let a = coefficients(3);
        assert_eq!(a, vec![std::f64::consts::FRAC_1_SQRT_2]);
        assert_eq!(signed_coefficient(&a, 3, 0), -a[0]);
        assert_eq!(signed_coefficient(&a, 3, 1), 0.0);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(matches!(shapiro_wilk(&[1.0, 2.0]), Err(Error::InsufficientData { .. })));
        assert!(matches!(shapiro_wilk(&[4.0; 10]), Err(Error::Degenerate(_))));
        assert!(shapiro_wilk(&[1.0, f64::NAN, 2.0]).is_err());
        assert!(shapiro_wilk(&vec![0.5; MAX_SAMPLES + 1]).is_err());
    }

    #[test]
    fn arithmetic_sequences_match_reference() {
        // scipy.stats.shapiro(np.arange(1, n + 1))
        for (n, w_ref, p_ref) in [
            (5usize, 0.986762155211559, 0.9671739349728582),
            (10, 0.9701646110856056, 0.8923673061902978),
            (20, 0.9603751832429884, 0.5513717457916771),
        ] {
            let x: Vec<f64> = (1..=n).map(|i| i as f64).collect();
            let r = shapiro_wilk(&x).unwrap();
            assert!((r.w - w_ref).abs() < 1e-6, "n={n} W={}", r.w);
            assert!((r.p_value - p_ref).abs() < 1e-3, "n={n} p={}", r.p_value);
        }
    }

    #[test]
    fn poly_evaluates_ascending_coefficients() {
        assert_eq!(poly(&[1.0, 2.0, 3.0], 2.0), 17.0);
        assert_eq!(poly(&[5.0], 9.0), 5.0);
    }
}
