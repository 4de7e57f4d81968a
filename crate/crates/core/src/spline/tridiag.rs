//! Tridiagonal solves and uniform-knot natural cubic splines.

use std::ops::{Add, AddAssign, Mul, Sub, SubAssign};

use num_complex::Complex64;

use super::counter::OpCounter;
use crate::error::{Error, Result};

/// Scalar carried through the spline kernels: real, or complex with both
/// channels processed by the same real coefficients.
pub trait Lane:
    Copy
    + Default
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<f64, Output = Self>
    + AddAssign
    + SubAssign
{
    /// Real channels per value.
    const CHANNELS: u64;
}

impl Lane for f64 {
    const CHANNELS: u64 = 1;
}

impl Lane for Complex64 {
    const CHANNELS: u64 = 2;
}

/// System a_i·x_{i−1} + b_i·x_i + c_i·x_{i+1} = d_i.
///
/// `sub[i]` couples row i+1 to x_i, `sup[i]` couples row i to x_{i+1}.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem<T = f64> {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    pub rhs: Vec<T>,
}

impl<T: Lane> TridiagonalSystem<T> {
    fn check(&self) -> Result<()> {
        let n = self.diag.len();
        if n == 0 || self.rhs.len() != n || self.sub.len() + 1 != n || self.sup.len() + 1 != n {
            return Err(Error::InvalidArgument(format!(
                "tridiagonal shape mismatch: diag {}, rhs {}, sub {}, sup {}",
                n,
                self.rhs.len(),
                self.sub.len(),
                self.sup.len()
            )));
        }
        Ok(())
    }

    /// The transposed system with a new right-hand side.
    pub fn transposed_with(&self, rhs: Vec<T>) -> Self {
        Self {
            sub: self.sup.clone(),
            diag: self.diag.clone(),
            sup: self.sub.clone(),
            rhs,
        }
    }
}

/// Thomas algorithm: forward elimination into (c*, d*) then back
/// substitution m_n = d*_n, m_i = d*_i − c*_i·m_{i+1}.
pub fn thomas_solve<T: Lane>(sys: &TridiagonalSystem<T>) -> Result<Vec<T>> {
    thomas_solve_counted(sys, &mut OpCounter::default())
}

/// [`thomas_solve`] charging 2 + 5(n−1) for the sweep and n−1 for the back
/// substitution, per real channel.
pub fn thomas_solve_counted<T: Lane>(
    sys: &TridiagonalSystem<T>,
    counter: &mut OpCounter,
) -> Result<Vec<T>> {
    sys.check()?;
    let n = sys.diag.len();
    let mut c_star = vec![0.0; n];
    let mut d_star = vec![T::default(); n];

    if sys.diag[0] == 0.0 {
        return Err(Error::SingularSystem { row: 0 });
    }
    let first_sup = if n > 1 { sys.sup[0] } else { 0.0 };
    c_star[0] = first_sup / sys.diag[0];
    d_star[0] = sys.rhs[0] * sys.diag[0].recip();
    for i in 1..n {
        let pivot = sys.diag[i] - sys.sub[i - 1] * c_star[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::SingularSystem { row: i });
        }
        let r = pivot.recip();
        let sup = if i + 1 < n { sys.sup[i] } else { 0.0 };
        c_star[i] = sup * r;
        d_star[i] = (sys.rhs[i] - d_star[i - 1] * sys.sub[i - 1]) * r;
    }

    let mut x = d_star;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= next * c_star[i];
    }

    let n64 = n as u64;
    counter.pipeline(T::CHANNELS * ((2 + 5 * (n64 - 1)) + (n64 - 1)));
    Ok(x)
}

/// Natural spline system over n uniform knots: identity boundary rows
/// (m_0 = m_{n−1} = 0) and h·m_{i−1} + 4h·m_i + h·m_{i+1} = 6/h·Δ²y_i.
fn natural_system<T: Lane>(values: &[T], h: f64) -> TridiagonalSystem<T> {
    let n = values.len();
    let mut sub = vec![h; n - 1];
    let mut sup = vec![h; n - 1];
    let mut diag = vec![4.0 * h; n];
    let mut rhs = vec![T::default(); n];
    diag[0] = 1.0;
    diag[n - 1] = 1.0;
    sup[0] = 0.0;
    sub[n - 2] = 0.0;
    let c = 6.0 / h;
    for i in 1..n - 1 {
        rhs[i] = (values[i + 1] - values[i] * 2.0 + values[i - 1]) * c;
    }
    TridiagonalSystem {
        sub,
        diag,
        sup,
        rhs,
    }
}

/// Second derivatives m and knot first derivatives b of the natural cubic
/// spline through `values` with uniform spacing `h`.
pub fn natural_spline(values: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    natural_spline_counted(values, h, &mut OpCounter::default())
}

pub fn natural_spline_counted<T: Lane>(
    values: &[T],
    h: f64,
    counter: &mut OpCounter,
) -> Result<(Vec<T>, Vec<T>)> {
    let n = values.len();
    if n < 3 {
        return Err(Error::DegenerateInput { len: n });
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("knot spacing {h} must be positive")));
    }
    let sys = natural_system(values, h);
    let m = thomas_solve_counted(&sys, counter)?;

    // Piece coefficients b_i = Δy/h − h·m_i/2 − h·(m_{i+1} − m_i)/6,
    // c_i = m_i/2, d_i = (m_{i+1} − m_i)/(6h); only b is kept. The last knot
    // uses S'(x_n) = Δy/h + h·m_{n−1}/6 + h·m_n/3.
    let inv_h = h.recip();
    let h2 = h / 2.0;
    let h6 = h / 6.0;
    let mut b = Vec::with_capacity(n);
    for i in 0..n - 1 {
        let dm = m[i + 1] - m[i];
        b.push((values[i + 1] - values[i]) * inv_h - m[i] * h2 - dm * h6);
    }
    b.push((values[n - 1] - values[n - 2]) * inv_h + m[n - 2] * h6 + m[n - 1] * (2.0 * h6));
    counter.pipeline(T::CHANNELS * 7 * n as u64);
    Ok((m, b))
}

/// Knot first derivatives only.
pub(crate) fn spline_derivatives<T: Lane>(
    values: &[T],
    h: f64,
    counter: &mut OpCounter,
) -> Result<Vec<T>> {
    natural_spline_counted(values, h, counter).map(|(_, b)| b)
}

/// Adjoint of `values ↦ b` (knot first derivatives): maps a cotangent on b
/// to the cotangent on the values. The inner solve uses the transposed
/// natural-spline system.
pub(crate) fn spline_derivatives_adjoint<T: Lane>(b_bar: &[T], h: f64) -> Result<Vec<T>> {
    let n = b_bar.len();
    if n < 3 {
        return Err(Error::DegenerateInput { len: n });
    }
    let inv_h = h.recip();
    let h3 = h / 3.0;
    let h6 = h / 6.0;
    let mut y_bar = vec![T::default(); n];
    let mut m_bar = vec![T::default(); n];

    for i in 0..n - 1 {
        let g = b_bar[i];
        y_bar[i + 1] += g * inv_h;
        y_bar[i] -= g * inv_h;
        m_bar[i] -= g * h3;
        m_bar[i + 1] -= g * h6;
    }
    let g = b_bar[n - 1];
    y_bar[n - 1] += g * inv_h;
    y_bar[n - 2] -= g * inv_h;
    m_bar[n - 2] += g * h6;
    m_bar[n - 1] += g * h3;

    // m = A⁻¹·r  ⇒  r̄ = A⁻ᵀ·m̄
    let zeros = vec![T::default(); n];
    let sys = natural_system(&zeros, h).transposed_with(m_bar);
    let r_bar = thomas_solve(&sys)?;

    let c = 6.0 / h;
    for i in 1..n - 1 {
        let g = r_bar[i] * c;
        y_bar[i + 1] += g;
        y_bar[i] -= g * 2.0;
        y_bar[i - 1] += g;
    }
    Ok(y_bar)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        // Gaussian elimination with partial pivoting.
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut r = b.to_vec();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
            m.swap(k, p);
            r.swap(k, p);
            for i in k + 1..n {
                let f = m[i][k] / m[k][k];
                for j in k..n {
                    m[i][j] -= f * m[k][j];
                }
                r[i] -= f * r[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
            x[i] = (r[i] - s) / m[i][i];
        }
        x
    }

    #[test]
    fn identity_system() {
        let sys = TridiagonalSystem {
            sub: vec![0.0; 3],
            diag: vec![1.0; 4],
            sup: vec![0.0; 3],
            rhs: vec![1.0, -2.0, 3.5, 0.25],
        };
        assert_eq!(thomas_solve(&sys).unwrap(), sys.rhs);
    }

    #[test]
    fn matches_dense_oracle_on_dominant_system() {
        let sys = TridiagonalSystem {
            sub: vec![0.3, -1.1, 0.7],
            diag: vec![4.0, 5.2, -3.9, 2.5],
            sup: vec![1.2, 0.4, -0.8],
            rhs: vec![1.0, -2.0, 0.5, 3.0],
        };
        let mut a = vec![vec![0.0; 4]; 4];
        for i in 0..4 {
            a[i][i] = sys.diag[i];
            if i > 0 {
                a[i][i - 1] = sys.sub[i - 1];
            }
            if i < 3 {
                a[i][i + 1] = sys.sup[i];
            }
        }
        let x = thomas_solve(&sys).unwrap();
        let oracle = dense_solve(&a, &sys.rhs);
        for (p, q) in x.iter().zip(&oracle) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let sys = TridiagonalSystem {
            sub: vec![1.0],
            diag: vec![1.0, 1.0],
            sup: vec![1.0],
            rhs: vec![1.0, 1.0],
        };
        assert!(matches!(thomas_solve(&sys), Err(Error::SingularSystem { row: 1 })));
        let sys = TridiagonalSystem {
            sub: vec![],
            diag: vec![0.0],
            sup: vec![],
            rhs: vec![1.0],
        };
        assert!(matches!(thomas_solve(&sys), Err(Error::SingularSystem { row: 0 })));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let sys = TridiagonalSystem {
            sub: vec![1.0],
            diag: vec![1.0, 1.0, 1.0],
            sup: vec![1.0, 1.0],
            rhs: vec![1.0, 1.0, 1.0],
        };
        assert!(matches!(thomas_solve(&sys), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn linear_and_constant_data_are_reproduced() {
        let h = 0.4;
        let y: Vec<f64> = (0..7).map(|i| 1.5 - 2.5 * i as f64 * h).collect();
        let (m, b) = natural_spline(&y, h).unwrap();
        assert!(m.iter().all(|v| v.abs() < 1e-12));
        assert!(b.iter().all(|v| (v + 2.5).abs() < 1e-12));
        let (m, b) = natural_spline(&[3.0; 5], 1.0).unwrap();
        assert!(m.iter().chain(&b).all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn three_knot_hat() {
        // 4·m₁ = 6·(0 − 2 + 0) ⇒ m₁ = −3; S on [0,1] is 1.5x − 0.5x³.
        let (m, b) = natural_spline(&[0.0, 1.0, 0.0], 1.0).unwrap();
        assert_eq!(m, vec![0.0, -3.0, 0.0]);
        assert!((b[0] - 1.5).abs() < 1e-15);
        assert!(b[1].abs() < 1e-15);
        assert!((b[2] + 1.5).abs() < 1e-15);
    }

    #[test]
    fn too_few_knots() {
        assert!(matches!(
            natural_spline(&[1.0, 2.0], 1.0),
            Err(Error::DegenerateInput { len: 2 })
        ));
        assert!(natural_spline(&[1.0, 2.0, 3.0], 0.0).is_err());
    }

    #[test]
    fn adjoint_matches_dense_jacobian_transpose() {
        let n = 6;
        let h = 0.7;
        // Jacobian columns by probing unit vectors.
        let jac: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                natural_spline(&e, h).unwrap().1
            })
            .collect();
        let cot = [0.3, -1.0, 2.0, 0.5, -0.7, 1.1];
        let adj = spline_derivatives_adjoint(&cot, h).unwrap();
        for k in 0..n {
            let expect: f64 = (0..n).map(|i| jac[k][i] * cot[i]).sum();
            assert!((adj[k] - expect).abs() < 1e-12);
        }
    }

    #[cfg(feature = "op-count")]
    #[test]
    fn pipeline_count_is_13n_minus_4() {
        for n in [3usize, 5, 32, 64, 512] {
            let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
            let mut c = OpCounter::default();
            natural_spline_counted(&y, 0.5, &mut c).unwrap();
            assert_eq!(c.pipeline_mults, 13 * n as u64 - 4);
            let yc: Vec<Complex64> = y.iter().map(|v| Complex64::new(*v, -v)).collect();
            let mut c = OpCounter::default();
            natural_spline_counted(&yc, 0.5, &mut c).unwrap();
            assert_eq!(c.pipeline_mults, 2 * (13 * n as u64 - 4));
        }
    }
}
