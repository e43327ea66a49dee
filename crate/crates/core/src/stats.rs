//! Small numeric kernels shared by the signal, memory and metrics code.

/// Standard deviations at or below this are treated as zero.
pub const DEGENERATE_STD: f64 = 1e-12;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (divides by n - 1). Zero for fewer than two points.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Population standard deviation (divides by n).
pub fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (ss / xs.len() as f64).sqrt()
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Simple close-to-close returns.
pub fn simple_returns(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

/// Least-squares slope of `ys` against `0..n`. `None` for fewer than two points.
pub fn index_slope(ys: &[f64]) -> Option<f64> {
    let n = ys.len();
    if n < 2 {
        return None;
    }
    let x_mean = (n - 1) as f64 / 2.0;
    let y_mean = mean(ys);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    Some(sxy / sxx)
}

/// Polynomial `c[0] + c[1] x + c[2] x^2 + ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub coefficients: Vec<f64>,
}

impl Polynomial {
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative_at(&self, x: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c)
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }
}

/// Least-squares polynomial fit through the normal equations.
///
/// Returns `None` when there are fewer than `degree + 1` points or the system is singular.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Option<Polynomial> {
    let m = degree + 1;
    if xs.len() != ys.len() || xs.len() < m {
        return None;
    }
    // powers[k] = sum x^k for k in 0..2m-1
    let mut power_sums = vec![0.0; 2 * m - 1];
    let mut rhs = vec![0.0; m];
    for (&x, &y) in xs.iter().zip(ys) {
        let mut p = 1.0;
        for (k, s) in power_sums.iter_mut().enumerate() {
            *s += p;
            if k < m {
                rhs[k] += p * y;
            }
            p *= x;
        }
    }
    let mut a: Vec<Vec<f64>> = (0..m)
        .map(|r| (0..m).map(|c| power_sums[r + c]).collect())
        .collect();
    solve_in_place(&mut a, &mut rhs)?;
    Some(Polynomial { coefficients: rhs })
}

/// Gaussian elimination with partial pivoting; the solution overwrites `b`.
fn solve_in_place(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<()> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= scale * 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let tail: f64 = (col + 1..n).map(|k| a[col][k] * b[k]).sum();
        b[col] = (b[col] - tail) / a[col][col];
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_line() {
        assert_eq!(index_slope(&[1.0, 2.0, 3.0]), Some(1.0));
        assert_eq!(index_slope(&[4.0, 4.0, 4.0, 4.0]), Some(0.0));
        assert_eq!(index_slope(&[1.0]), None);
    }

    #[test]
    fn polyfit_recovers_quadratic() {
        let xs: Vec<f64> = (0..12).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x + 0.25 * x * x).collect();
        let p = polyfit(&xs, &ys, 2).unwrap();
        for (got, want) in p.coefficients.iter().zip([3.0, -0.5, 0.25]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!((p.derivative_at(2.0) - (-0.5 + 0.5 * 2.0)).abs() < 1e-9);
    }

    #[test]
    fn polyfit_needs_enough_points() {
        assert!(polyfit(&[0.0, 1.0], &[1.0, 2.0], 2).is_none());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
