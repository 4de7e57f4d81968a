//! Dense-solve reference for the spline surface.

use fibertwin::nlse::{GridSpec, SignalMatrix};
use fibertwin::spline::{Coeffs, SplineSurface};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn random_matrix(n: usize, m: usize, dt: f64, dz: f64, seed: u64) -> SignalMatrix {
    let grid = GridSpec {
        n_samples: n,
        dt,
        m_segments: m,
        dz,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals: Vec<Complex64> = (0..n * (m + 1))
        .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    SignalMatrix::from_fn(grid, |i, j| vals[i * (m + 1) + j])
}

/// Smooth field, so derivative checks are not dominated by knot noise.
pub fn smooth_matrix(n: usize, m: usize) -> SignalMatrix {
    let grid = GridSpec {
        n_samples: n,
        dt: 0.4,
        m_segments: m,
        dz: 0.25,
    };
    SignalMatrix::from_fn(grid, |i, j| {
        let t = i as f64 * 0.4;
        let z = j as f64 * 0.25;
        Complex64::from_polar(1.0 + 0.3 * (0.7 * t).sin(), 0.5 * z * z - 0.4 * t + 0.2 * t * z)
    })
}

/// Natural-spline knot slopes by a dense LU solve of the full system.
pub fn dense_slopes(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    a[(0, 0)] = 1.0;
    a[(n - 1, n - 1)] = 1.0;
    for i in 1..n - 1 {
        a[(i, i - 1)] = h;
        a[(i, i)] = 4.0 * h;
        a[(i, i + 1)] = h;
        b[i] = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]) / h;
    }
    let m = a.lu().solve(&b).unwrap();
    (0..n)
        .map(|i| {
            if i + 1 < n {
                (y[i + 1] - y[i]) / h - h * (2.0 * m[i] + m[i + 1]) / 6.0
            } else {
                (y[i] - y[i - 1]) / h + h * (m[i - 1] + 2.0 * m[i]) / 6.0
            }
        })
        .collect()
}

pub fn dense_slopes_c(y: &[Complex64], h: f64) -> Vec<Complex64> {
    let re: Vec<f64> = y.iter().map(|v| v.re).collect();
    let im: Vec<f64> = y.iter().map(|v| v.im).collect();
    dense_slopes(&re, h)
        .into_iter()
        .zip(dense_slopes(&im, h))
        .map(|(r, i)| c(r, i))
        .collect()
}

/// Patch coefficients from the 16 Hermite corner conditions, solved densely.
pub fn oracle_patches(mat: &SignalMatrix) -> Vec<Coeffs> {
    let (n, cols) = (mat.rows(), mat.cols());
    let (ht, hz) = (mat.grid().dt, mat.grid().dz);
    let f = |i: usize, j: usize| mat.get(i, j);
    let mut ft = vec![vec![Complex64::default(); cols]; n];
    let mut fz = vec![vec![Complex64::default(); cols]; n];
    let mut ftz = vec![vec![Complex64::default(); cols]; n];
    for j in 0..cols {
        let col: Vec<Complex64> = (0..n).map(|i| f(i, j)).collect();
        for (i, v) in dense_slopes_c(&col, ht).into_iter().enumerate() {
            ft[i][j] = v;
        }
    }
    for i in 0..n {
        let row: Vec<Complex64> = (0..cols).map(|j| f(i, j)).collect();
        fz[i] = dense_slopes_c(&row, hz);
        ftz[i] = dense_slopes_c(&ft[i], hz);
    }

    // Row layout of the 16×16 system: for each corner (cu, cw) the four
    // conditions p, p_u, p_w, p_uw. Column k = 4i + j is a_ij.
    let mut sys = DMatrix::<f64>::zeros(16, 16);
    let corners = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)];
    for (ci, &(u, w)) in corners.iter().enumerate() {
        for i in 0..4 {
            for j in 0..4 {
                let k = 4 * i + j;
                let pu = |p: i32, x: f64| if p < 0 { 0.0 } else { x.powi(p) };
                sys[(4 * ci, k)] = pu(i as i32, u) * pu(j as i32, w);
                sys[(4 * ci + 1, k)] = i as f64 * pu(i as i32 - 1, u) * pu(j as i32, w);
                sys[(4 * ci + 2, k)] = pu(i as i32, u) * j as f64 * pu(j as i32 - 1, w);
                sys[(4 * ci + 3, k)] = i as f64 * pu(i as i32 - 1, u) * j as f64 * pu(j as i32 - 1, w);
            }
        }
    }
    let lu = sys.lu();

    let mut out = Vec::new();
    for pt in 0..n - 1 {
        for pz in 0..cols - 1 {
            let mut rhs = vec![Complex64::default(); 16];
            for (ci, &(u, w)) in corners.iter().enumerate() {
                let (i, j) = (pt + u as usize, pz + w as usize);
                rhs[4 * ci] = f(i, j);
                rhs[4 * ci + 1] = ft[i][j] * ht;
                rhs[4 * ci + 2] = fz[i][j] * hz;
                rhs[4 * ci + 3] = ftz[i][j] * (ht * hz);
            }
            let re = lu.solve(&DVector::from_iterator(16, rhs.iter().map(|v| v.re))).unwrap();
            let im = lu.solve(&DVector::from_iterator(16, rhs.iter().map(|v| v.im))).unwrap();
            let mut a = [[Complex64::default(); 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    a[i][j] = c(re[4 * i + j], im[4 * i + j]);
                }
            }
            out.push(a);
        }
    }
    out
}

/// ∂^(du+dw) p / ∂u^du ∂w^dw at (u, w).
pub fn poly(a: &Coeffs, u: f64, w: f64, du: u32, dw: u32) -> Complex64 {
    let term = |p: u32, d: u32, x: f64| -> f64 {
        if p < d {
            0.0
        } else {
            let fall: u32 = (p - d + 1..=p).product();
            fall as f64 * x.powi((p - d) as i32)
        }
    };
    let mut acc = Complex64::default();
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            acc += v * (term(i as u32, du, u) * term(j as u32, dw, w));
        }
    }
    acc
}

pub fn max_coeff(s: &SplineSurface) -> f64 {
    let (n, m) = s.knots();
    let mut best = 0.0_f64;
    for pt in 0..n - 1 {
        for pz in 0..m - 1 {
            for row in s.patch(pt, pz) {
                for v in row {
                    best = best.max(v.norm());
                }
            }
        }
    }
    best
}

