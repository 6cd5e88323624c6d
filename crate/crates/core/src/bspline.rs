//! B-spline bases on an interval and Gauss–Legendre quadrature.

use crate::error::{Error, Result};

/// Clamped B-spline basis of a given order (degree + 1).
#[derive(Debug, Clone)]
pub struct BSplineBasis {
    order: usize,
    knots: Vec<f64>,
    num_basis: usize,
    uniform: Option<(f64, f64)>,
}

impl BSplineBasis {
    /// Basis with `num_basis` functions and equally spaced interior knots on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, num_basis: usize, order: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInput(format!("bad interval [{lo}, {hi}]")));
        }
        if order < 2 || num_basis < order {
            return Err(Error::InvalidInput(format!(
                "need num_basis >= order >= 2 (got {num_basis}, {order})"
            )));
        }
        let spans = num_basis - order + 1;
        let h = (hi - lo) / spans as f64;
        let mut interior: Vec<f64> = (1..spans).map(|k| lo + h * k as f64).collect();
        let mut basis = Self::with_interior(lo, hi, &mut interior, order)?;
        basis.uniform = Some((lo, h));
        Ok(basis)
    }

    /// Basis with the given interior knots (sorted, deduplicated, strictly inside `(lo, hi)`).
    pub fn with_interior(lo: f64, hi: f64, interior: &mut Vec<f64>, order: usize) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidInput(format!("bad interval [{lo}, {hi}]")));
        }
        interior.retain(|&t| t > lo && t < hi);
        interior.sort_by(|a, b| a.partial_cmp(b).unwrap());
        interior.dedup();
        let mut knots = Vec::with_capacity(interior.len() + 2 * order);
        knots.extend(std::iter::repeat(lo).take(order));
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat(hi).take(order));
        let num_basis = knots.len() - order;
        Ok(Self { order, knots, num_basis, uniform: None })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    pub fn lo(&self) -> f64 {
        self.knots[0]
    }

    pub fn hi(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Distinct knot values, including both endpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.knots.clone();
        b.dedup();
        b
    }

    /// Knot span index `i` with `t_i <= x < t_{i+1}` (the last span is closed).
    pub fn span(&self, x: f64) -> usize {
        let p = self.order - 1;
        let last = self.num_basis - 1;
        if x >= self.hi() {
            return last;
        }
        if x <= self.lo() {
            return p;
        }
        if let Some((lo, h)) = self.uniform {
            let k = ((x - lo) / h).floor() as usize;
            let mut i = (p + k).min(last);
            // guard against rounding at knot values
            while i > p && x < self.knots[i] {
                i -= 1;
            }
            while i < last && x >= self.knots[i + 1] {
                i += 1;
            }
            return i;
        }
        let upper = self.knots.partition_point(|&t| t <= x);
        (upper - 1).clamp(p, last)
    }

    /// Values and derivatives up to order `nd` of the `order` basis functions
    /// that are nonzero on `span`. `out[k][j]` is the k-th derivative of
    /// basis function `span - degree + j`. Derivatives above the degree are zero.
    pub fn derivatives(&self, span: usize, x: f64, nd: usize) -> Vec<Vec<f64>> {
        let p = self.order - 1;
        let u = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; nd + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let kmax = nd.min(p);
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=kmax {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if rk >= 0 {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut fac = p as f64;
        for k in 1..=kmax {
            for v in ders[k].iter_mut() {
                *v *= fac;
            }
            fac *= (p - k) as f64;
        }
        ders
    }
}

/// Four-point Gauss–Legendre rule on `[-1, 1]`.
pub const GAUSS_LEGENDRE_4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_all(b: &BSplineBasis, x: f64, nd: usize) -> Vec<Vec<f64>> {
        let span = b.span(x);
        let d = b.derivatives(span, x, nd);
        let p = b.order() - 1;
        let mut full = vec![vec![0.0; b.num_basis()]; nd + 1];
        for k in 0..=nd {
            for j in 0..=p {
                full[k][span - p + j] = d[k][j];
            }
        }
        full
    }

    #[test]
    fn partition_of_unity_and_zero_derivative_sum() {
        let b = BSplineBasis::uniform(-1.0, 2.0, 20, 4).unwrap();
        for i in 0..=100 {
            let x = -1.0 + 3.0 * i as f64 / 100.0;
            let f = eval_all(&b, x, 3);
            let s: f64 = f[0].iter().sum();
            assert!((s - 1.0).abs() < 1e-13, "sum {s} at {x}");
            for k in 1..=3 {
                let s: f64 = f[k].iter().sum();
                assert!(s.abs() < 1e-8, "deriv {k} sum {s}");
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = BSplineBasis::uniform(0.0, 1.0, 12, 5).unwrap();
        let h = 1e-6;
        for &x in &[0.013, 0.2501, 0.5, 0.77, 0.99] {
            let f = eval_all(&b, x, 2);
            let fp = eval_all(&b, x + h, 2);
            let fm = eval_all(&b, x - h, 2);
            for i in 0..b.num_basis() {
                let d1 = (fp[0][i] - fm[0][i]) / (2.0 * h);
                assert!((d1 - f[1][i]).abs() < 1e-5 * (1.0 + f[1][i].abs()));
                let d2 = (fp[1][i] - fm[1][i]) / (2.0 * h);
                assert!((d2 - f[2][i]).abs() < 1e-4 * (1.0 + f[2][i].abs()));
            }
        }
    }

    #[test]
    fn nonuniform_knots_reproduce_linear_function() {
        let mut interior = vec![0.3, 0.1, 0.3, 0.75];
        let b = BSplineBasis::with_interior(0.0, 1.0, &mut interior, 4).unwrap();
        assert_eq!(b.num_basis(), 3 + 4);
        // Greville abscissae reproduce x exactly.
        let knots = {
            let mut k = vec![0.0; 4];
            k.extend([0.1, 0.3, 0.75]);
            k.extend(vec![1.0; 4]);
            k
        };
        let grev: Vec<f64> = (0..b.num_basis()).map(|i| (knots[i + 1] + knots[i + 2] + knots[i + 3]) / 3.0).collect();
        for &x in &[0.0, 0.05, 0.3, 0.6, 1.0] {
            let f = eval_all(&b, x, 0);
            let v: f64 = f[0].iter().zip(&grev).map(|(a, g)| a * g).sum();
            assert!((v - x).abs() < 1e-13);
        }
    }

    #[test]
    fn span_handles_endpoints() {
        let b = BSplineBasis::uniform(0.0, 1.0, 10, 4).unwrap();
        assert_eq!(b.span(0.0), 3);
        assert_eq!(b.span(1.0), 9);
        assert_eq!(b.breakpoints().len(), 8);
    }
}
