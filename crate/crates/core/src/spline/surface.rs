//! Natural bicubic spline surface over an intermediate wavefield.
//!
//! Knot derivatives come from 1-D natural splines: f_t along every column,
//! f_z along every row, and the cross derivative f_tz by splining f_t along
//! z. Each patch maps to the unit square (u, w) and stores the 16
//! coefficients of p(u, w) = Σ a_ij·u^i·w^j with a = C·Q·Cᵀ.

use num_complex::Complex64;

use super::counter::OpCounter;
use super::tridiag::{spline_derivatives, spline_derivatives_adjoint};
use crate::error::{Error, Result};
use crate::nlse::SignalMatrix;

pub type Coeffs = [[Complex64; 4]; 4];

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Left factor of the patch product; the right factor is its transpose.
const LEFT: [[f64; 4]; 4] = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [-3.0, 3.0, -2.0, -1.0],
    [2.0, -2.0, 1.0, 1.0],
];

/// Order of the mixed derivative f_tz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossOrder {
    /// Spline f_t along z.
    #[default]
    TimeThenZ,
    /// Spline f_z along t.
    ZThenTime,
}

/// Point query result in the units of the source grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub value: Complex64,
    pub d_dz: Complex64,
    pub d2_dt2: Complex64,
}

/// Bicubic surface with (N−1)·M patches over N t-knots and M+1 z-knots.
#[derive(Debug, Clone)]
pub struct SplineSurface {
    patches: Vec<Coeffs>,
    n_t: usize,
    n_z: usize,
    h_t: f64,
    h_z: f64,
}

/// Corner data on the knot grid, row-major N × (M+1).
struct KnotData {
    f: Vec<Complex64>,
    f_t: Vec<Complex64>,
    f_z: Vec<Complex64>,
    f_tz: Vec<Complex64>,
}

fn column(data: &[Complex64], cols: usize, m: usize) -> Vec<Complex64> {
    data.iter().skip(m).step_by(cols).copied().collect()
}

fn set_column(data: &mut [Complex64], cols: usize, m: usize, values: &[Complex64]) {
    for (i, v) in values.iter().enumerate() {
        data[i * cols + m] = *v;
    }
}

fn along_t(data: &[Complex64], rows: usize, cols: usize, h: f64, c: &mut OpCounter) -> Result<Vec<Complex64>> {
    let mut out = vec![ZERO; rows * cols];
    for m in 0..cols {
        let d = spline_derivatives(&column(data, cols, m), h, c)?;
        set_column(&mut out, cols, m, &d);
    }
    Ok(out)
}

fn along_z(data: &[Complex64], cols: usize, h: f64, c: &mut OpCounter) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks(cols) {
        out.extend(spline_derivatives(row, h, c)?);
    }
    Ok(out)
}

fn along_t_adjoint(bar: &[Complex64], cols: usize, h: f64) -> Result<Vec<Complex64>> {
    let mut out = vec![ZERO; bar.len()];
    for m in 0..cols {
        let d = spline_derivatives_adjoint(&column(bar, cols, m), h)?;
        set_column(&mut out, cols, m, &d);
    }
    Ok(out)
}

fn along_z_adjoint(bar: &[Complex64], cols: usize, h: f64) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(bar.len());
    for row in bar.chunks(cols) {
        out.extend(spline_derivatives_adjoint(row, h)?);
    }
    Ok(out)
}

fn matmul_left(l: &[[f64; 4]; 4], q: &Coeffs) -> Coeffs {
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = ZERO;
            for k in 0..4 {
                acc += q[k][j] * l[i][k];
            }
            out[i][j] = acc;
        }
    }
    out
}

/// q·lᵀ
fn matmul_right_t(q: &Coeffs, l: &[[f64; 4]; 4]) -> Coeffs {
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = ZERO;
            for k in 0..4 {
                acc += q[i][k] * l[j][k];
            }
            out[i][j] = acc;
        }
    }
    out
}

fn transpose(l: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut t = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            t[i][j] = l[j][i];
        }
    }
    t
}

impl SplineSurface {
    /// Build the surface from an N×(M+1) wavefield.
    pub fn build(matrix: &SignalMatrix) -> Result<Self> {
        Self::build_counted(matrix, &mut OpCounter::default())
    }

    pub fn build_counted(matrix: &SignalMatrix, counter: &mut OpCounter) -> Result<Self> {
        Self::build_with(matrix, CrossOrder::default(), counter)
    }

    pub fn build_with(matrix: &SignalMatrix, order: CrossOrder, counter: &mut OpCounter) -> Result<Self> {
        let grid = matrix.grid();
        let rows = matrix.rows();
        let cols = matrix.cols();
        if cols < 3 {
            return Err(Error::InsufficientZKnots { knots: cols });
        }
        if rows < 3 {
            return Err(Error::DegenerateInput { len: rows });
        }
        let (h_t, h_z) = (grid.dt, grid.dz);
        let f = matrix.as_slice().to_vec();
        let f_t = along_t(&f, rows, cols, h_t, counter)?;
        let f_z = along_z(&f, cols, h_z, counter)?;
        let f_tz = match order {
            CrossOrder::TimeThenZ => along_z(&f_t, cols, h_z, counter)?,
            CrossOrder::ZThenTime => along_t(&f_z, rows, cols, h_t, counter)?,
        };
        let knots = KnotData { f, f_t, f_z, f_tz };

        let mut patches = Vec::with_capacity((rows - 1) * (cols - 1));
        for pt in 0..rows - 1 {
            for pz in 0..cols - 1 {
                let q = corner_matrix(&knots, cols, pt, pz, h_t, h_z);
                let cq = matmul_left(&LEFT, &q);
                patches.push(matmul_right_t(&cq, &LEFT));
            }
        }
        counter.patch(2 * 128 * patches.len() as u64);

        // appendix convention, see OpCounter::appendix_coeff_mults
        let (n, m) = (rows as u64, (cols - 1) as u64);
        counter.appendix_coeff(4 * (13 * n - 4) + 2 * 128 * m.saturating_sub(1) * (n - 1));

        Ok(Self {
            patches,
            n_t: rows,
            n_z: cols,
            h_t,
            h_z,
        })
    }

    pub fn knots(&self) -> (usize, usize) {
        (self.n_t, self.n_z)
    }

    pub fn spacing(&self) -> (f64, f64) {
        (self.h_t, self.h_z)
    }

    pub fn patch_count(&self) -> usize {
        self.patches.len()
    }

    pub fn t_span(&self) -> f64 {
        (self.n_t - 1) as f64 * self.h_t
    }

    pub fn z_span(&self) -> f64 {
        (self.n_z - 1) as f64 * self.h_z
    }

    pub fn patch(&self, pt: usize, pz: usize) -> &Coeffs {
        &self.patches[pt * (self.n_z - 1) + pz]
    }

    /// Patch indices and local coordinates; the upper boundary belongs to
    /// the last patch.
    fn locate(&self, z: f64, t: f64) -> Result<(usize, usize, f64, f64)> {
        let (ts, zs) = (self.t_span(), self.z_span());
        if !(0.0..=ts).contains(&t) || !(0.0..=zs).contains(&z) {
            return Err(Error::OutOfDomain { z, t });
        }
        let xt = t / self.h_t;
        let xz = z / self.h_z;
        let pt = (xt.floor() as usize).min(self.n_t - 2);
        let pz = (xz.floor() as usize).min(self.n_z - 2);
        Ok((pt, pz, xt - pt as f64, xz - pz as f64))
    }

    /// Evaluate patch (pt, pz) at local (u, w), without locating. Lets
    /// callers compare neighbouring patches on a shared edge.
    pub fn eval_in_patch(&self, pt: usize, pz: usize, u: f64, w: f64) -> SurfacePoint {
        let a = self.patch(pt, pz);
        point_from_coeffs(a, u, w, self.h_t, self.h_z)
    }

    /// Value only.
    pub fn value(&self, z: f64, t: f64) -> Result<Complex64> {
        self.value_counted(z, t, &mut OpCounter::default())
    }

    pub fn value_counted(&self, z: f64, t: f64, counter: &mut OpCounter) -> Result<Complex64> {
        let (pt, pz, u, w) = self.locate(z, t)?;
        let a = self.patch(pt, pz);
        let g = row_contract(a, u);
        counter.query(2 * 26);
        Ok(g[0] + (g[1] + (g[2] + g[3] * w) * w) * w)
    }

    /// Value, ∂/∂z and ∂²/∂t² at (z, t).
    pub fn eval(&self, z: f64, t: f64) -> Result<SurfacePoint> {
        self.eval_counted(z, t, &mut OpCounter::default())
    }

    pub fn eval_counted(&self, z: f64, t: f64, counter: &mut OpCounter) -> Result<SurfacePoint> {
        let (pt, pz, u, w) = self.locate(z, t)?;
        counter.query(2 * 26);
        counter.derivative_query(33);
        Ok(point_from_coeffs(self.patch(pt, pz), u, w, self.h_t, self.h_z))
    }

    /// Accumulate the cotangent of one query into per-patch coefficient
    /// cotangents.
    pub fn eval_adjoint(
        &self,
        z: f64,
        t: f64,
        bar: &SurfacePoint,
        acc: &mut SurfaceCotangent,
    ) -> Result<()> {
        let (pt, pz, u, w) = self.locate(z, t)?;
        let up = [1.0, u, u * u, u * u * u];
        let wp = [1.0, w, w * w, w * w * w];
        let dwp = [0.0, 1.0, 2.0 * w, 3.0 * w * w];
        let duup = [0.0, 0.0, 2.0, 6.0 * u];
        let sz = self.h_z.recip();
        let stt = (self.h_t * self.h_t).recip();
        let slot = &mut acc.patches[pt * (self.n_z - 1) + pz];
        for i in 0..4 {
            for j in 0..4 {
                slot[i][j] += bar.value * (up[i] * wp[j])
                    + bar.d_dz * (up[i] * dwp[j] * sz)
                    + bar.d2_dt2 * (duup[i] * wp[j] * stt);
            }
        }
        Ok(())
    }

    pub fn zero_cotangent(&self) -> SurfaceCotangent {
        SurfaceCotangent {
            patches: vec![[[ZERO; 4]; 4]; self.patches.len()],
        }
    }

    /// Pull a coefficient cotangent back to the knot values (row-major
    /// N×(M+1)). The build is linear in the knot values, so this is the
    /// exact transpose of the construction.
    pub fn backprop(&self, cot: &SurfaceCotangent) -> Result<Vec<Complex64>> {
        let rows = self.n_t;
        let cols = self.n_z;
        let (h_t, h_z) = (self.h_t, self.h_z);
        let right = transpose(&LEFT);
        let left_t = transpose(&LEFT);

        let mut f_bar = vec![ZERO; rows * cols];
        let mut ft_bar = vec![ZERO; rows * cols];
        let mut fz_bar = vec![ZERO; rows * cols];
        let mut ftz_bar = vec![ZERO; rows * cols];

        for pt in 0..rows - 1 {
            for pz in 0..cols - 1 {
                let a_bar = &cot.patches[pt * (cols - 1) + pz];
                // a = L·Q·R  ⇒  Q̄ = Lᵀ·Ā·Rᵀ
                let q_bar = matmul_right_t(&matmul_left(&left_t, a_bar), &right);
                for ci in 0..2 {
                    for cj in 0..2 {
                        let idx = (pt + ci) * cols + pz + cj;
                        f_bar[idx] += q_bar[ci][cj];
                        fz_bar[idx] += q_bar[ci][2 + cj] * h_z;
                        ft_bar[idx] += q_bar[2 + ci][cj] * h_t;
                        ftz_bar[idx] += q_bar[2 + ci][2 + cj] * (h_t * h_z);
                    }
                }
            }
        }

        let from_tz = along_z_adjoint(&ftz_bar, cols, h_z)?;
        for (a, b) in ft_bar.iter_mut().zip(&from_tz) {
            *a += b;
        }
        let from_z = along_z_adjoint(&fz_bar, cols, h_z)?;
        let from_t = along_t_adjoint(&ft_bar, cols, h_t)?;
        for ((f, a), b) in f_bar.iter_mut().zip(&from_z).zip(&from_t) {
            *f += a + b;
        }
        Ok(f_bar)
    }
}

fn point_from_coeffs(a: &Coeffs, u: f64, w: f64, h_t: f64, h_z: f64) -> SurfacePoint {
    let g = row_contract(a, u);
    let value = g[0] + (g[1] + (g[2] + g[3] * w) * w) * w;
    let d_dw = g[1] + (g[2] * 2.0 + g[3] * (3.0 * w)) * w;
    // ∂²/∂u² of Σ_i a_ij u^i = 2a_2j + 6u·a_3j
    let six_u = 6.0 * u;
    let q: [Complex64; 4] = std::array::from_fn(|j| a[2][j] * 2.0 + a[3][j] * six_u);
    let d_uu = q[0] + (q[1] + (q[2] + q[3] * w) * w) * w;
    SurfacePoint {
        value,
        d_dz: d_dw * h_z.recip(),
        d2_dt2: d_uu * (h_t * h_t).recip(),
    }
}

/// Σ_i u^i·a_ij for each j.
fn row_contract(a: &Coeffs, u: f64) -> [Complex64; 4] {
    std::array::from_fn(|j| a[0][j] + (a[1][j] + (a[2][j] + a[3][j] * u) * u) * u)
}

fn corner_matrix(k: &KnotData, cols: usize, pt: usize, pz: usize, h_t: f64, h_z: f64) -> Coeffs {
    let idx = |ci: usize, cj: usize| (pt + ci) * cols + pz + cj;
    let mut q = [[ZERO; 4]; 4];
    for ci in 0..2 {
        for cj in 0..2 {
            let i = idx(ci, cj);
            q[ci][cj] = k.f[i];
            q[ci][2 + cj] = k.f_z[i] * h_z;
            q[2 + ci][cj] = k.f_t[i] * h_t;
            q[2 + ci][2 + cj] = k.f_tz[i] * (h_t * h_z);
        }
    }
    q
}

/// Cotangent with respect to every patch coefficient, patch-major in the
/// same order as [`SplineSurface::patch`].
#[derive(Debug, Clone)]
pub struct SurfaceCotangent {
    patches: Vec<Coeffs>,
}

impl SurfaceCotangent {
    pub fn from_patches(patches: Vec<Coeffs>) -> Self {
        Self { patches }
    }

    pub fn patches(&self) -> &[Coeffs] {
        &self.patches
    }
}
