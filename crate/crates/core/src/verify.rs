//! Dynamical cross-checks on small grids: heat-kernel decay of constant
//! coefficient systems, Kawashima and Goodman energies, and resolvent norm
//! scans of a finite-difference discretization of the linearized operator.
//!
//! Nothing here calls into `evans`; the discretized operator is the
//! independent witness used to confirm Evans windings.

use crate::linalg::{
    c, eigenvalues, linear_fit, min_herm_eig, to_complex, CMat, CVec, RMat, RVec, I,
};
use crate::model::{flux_jacobian, ModelSystem, ShockData};
use crate::profile::Profile;
use crate::structure::{compensating_matrix, directional, symmetric_form, Compensator};
use crate::{Error, Result};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;
use std::f64::consts::PI;

// ---------------------------------------------------------------------------
// Discretized linearized operator

/// Uniform interior grid on `[−half_width, half_width]` with zero boundary
/// values just outside.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn doubled(&self) -> GridSpec {
        GridSpec {
            half_width: self.half_width,
            points: 2 * self.points + 1,
        }
    }
}

pub struct Discretization {
    pub x: Vec<f64>,
    pub h: f64,
    pub n: usize,
    pub xi: Vec<f64>,
    pub op: CMat,
}

struct Coeffs {
    a: Vec<RMat>,
    b: Vec<Vec<RMat>>,
    db: Vec<RMat>,
}

fn coefficients(model: &dyn ModelSystem, u: &RVec, up: &RVec) -> Result<Coeffs> {
    let n = model.n();
    let d = model.d();
    let a: Vec<RMat> = (0..d)
        .map(|j| flux_jacobian(model, u, j))
        .collect::<Result<_>>()?;
    let b: Vec<Vec<RMat>> = (0..d)
        .map(|j| {
            (0..d)
                .map(|k| model.viscosity(j, k, u))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let mut db = Vec::with_capacity(d);
    for j in 0..d {
        let mut m = RMat::zeros(n, n);
        if up.norm() > 0.0 {
            for i in 0..n {
                let h = f64::EPSILON.cbrt() * (1.0 + u.norm());
                let mut p = u.clone();
                let mut q = u.clone();
                p[i] += h;
                q[i] -= h;
                let dbi = (model.viscosity(j, 0, &p)? - model.viscosity(j, 0, &q)?) / (2.0 * h);
                m.set_column(i, &(dbi * up));
            }
        }
        db.push(m);
    }
    Ok(Coeffs { a, b, db })
}

/// Finite-difference matrix of `L_ξ̃` about the profile:
/// `(B¹¹U′ + dB¹¹[U]Ū′)′` in flux form, `−(A¹U)′` by a second-order
/// upwind-biased split `A¹ = ½(A¹ + σ) + ½(A¹ − σ)`, centred differences for
/// the mixed terms, zero values outside the grid.
pub fn discretize_operator(
    model: &dyn ModelSystem,
    shock: &ShockData,
    profile: &Profile,
    xi_t: &[f64],
    grid: &GridSpec,
) -> Result<Discretization> {
    let fr = shock.framed(model);
    let n = model.n();
    let d = model.d();
    if xi_t.len() + 1 != d {
        return Err(Error::Domain(format!(
            "ξ̃ has {} entries, expected {}",
            xi_t.len(),
            d - 1
        )));
    }
    let npts = grid.points;
    if npts < 8 {
        return Err(Error::Domain("grid too small".into()));
    }
    let h = 2.0 * grid.half_width / (npts + 1) as f64;
    // nodes −1..=npts, stored shifted by one
    let xs: Vec<f64> = (0..npts + 2)
        .map(|k| -grid.half_width + h * k as f64)
        .collect();
    let co: Vec<Coeffs> = xs
        .par_iter()
        .map(|&x| {
            let (u, up) = profile.eval(x);
            coefficients(&fr, &u, &up)
        })
        .collect::<Result<_>>()?;
    let sigma = co
        .iter()
        .map(|k| k.a[0].abs().row_sum().max())
        .fold(0.0, f64::max)
        .max(1e-12);
    let eye = RMat::identity(n, n);
    let ap: Vec<RMat> = co.iter().map(|k| (&k.a[0] + &eye * sigma) * 0.5).collect();
    let am: Vec<RMat> = co.iter().map(|k| (&k.a[0] - &eye * sigma) * 0.5).collect();
    let size = npts * n;
    let mut op = CMat::zeros(size, size);
    let mut add = |row: usize, col: isize, m: &CMat| {
        if col < 0 || col as usize >= npts {
            return;
        }
        let col = col as usize;
        let mut blk = op.view_mut((row * n, col * n), (n, n));
        blk += m;
    };
    let cm = |m: &RMat, f: Complex64| to_complex(m).map(|z| z * f);
    let one = c(1.0, 0.0);
    for i in 0..npts {
        let k = i + 1; // coefficient index
        let ii = i as isize;
        // diffusion flux differences
        for (side, kk) in [(1.0, k), (-1.0, k - 1)] {
            let bh = (&co[kk].b[0][0] + &co[kk + 1].b[0][0]) * 0.5;
            let dbh = (&co[kk].db[0] + &co[kk + 1].db[0]) * 0.5;
            let left = kk as isize - 1;
            let right = kk as isize;
            add(
                i,
                right,
                &cm(&(&bh / (h * h) + &dbh / (2.0 * h)), one * side),
            );
            add(
                i,
                left,
                &cm(&(-&bh / (h * h) + &dbh / (2.0 * h)), one * side),
            );
        }
        // convection: backward differences for the forward-moving part
        if i >= 2 {
            add(i, ii, &cm(&ap[k], c(-1.5 / h, 0.0)));
            add(i, ii - 1, &cm(&ap[k - 1], c(2.0 / h, 0.0)));
            add(i, ii - 2, &cm(&ap[k - 2], c(-0.5 / h, 0.0)));
        } else {
            add(i, ii, &cm(&ap[k], c(-1.0 / h, 0.0)));
            add(i, ii - 1, &cm(&ap[k - 1], c(1.0 / h, 0.0)));
        }
        if i + 2 < npts {
            add(i, ii, &cm(&am[k], c(1.5 / h, 0.0)));
            add(i, ii + 1, &cm(&am[k + 1], c(-2.0 / h, 0.0)));
            add(i, ii + 2, &cm(&am[k + 2], c(0.5 / h, 0.0)));
        } else {
            add(i, ii, &cm(&am[k], c(1.0 / h, 0.0)));
            add(i, ii + 1, &cm(&am[k + 1], c(-1.0 / h, 0.0)));
        }
        for (jt, &xj) in xi_t.iter().enumerate() {
            let j = jt + 1;
            if xj == 0.0 {
                continue;
            }
            // iξ_j (B^{1j} U)′
            add(i, ii + 1, &cm(&co[k + 1].b[0][j], I * (xj / (2.0 * h))));
            add(i, ii - 1, &cm(&co[k - 1].b[0][j], -I * (xj / (2.0 * h))));
            // iξ_j (B^{j1} U′ + dB^{j1}[U] Ū′)
            add(i, ii + 1, &cm(&co[k].b[j][0], I * (xj / (2.0 * h))));
            add(i, ii - 1, &cm(&co[k].b[j][0], -I * (xj / (2.0 * h))));
            add(i, ii, &cm(&co[k].db[j], I * xj));
            // −iξ_j A^j
            add(i, ii, &cm(&co[k].a[j], -I * xj));
            for (lt, &xl) in xi_t.iter().enumerate() {
                add(i, ii, &cm(&co[k].b[j][lt + 1], c(-xj * xl, 0.0)));
            }
        }
    }
    Ok(Discretization {
        x: xs[1..=npts].to_vec(),
        h,
        n,
        xi: xi_t.to_vec(),
        op,
    })
}

impl Discretization {
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        eigenvalues(&self.op)
    }

    /// Apply the operator to a real grid function given per node.
    pub fn apply(&self, v: &[RVec]) -> Vec<CVec> {
        let mut flat = CVec::zeros(self.op.nrows());
        for (i, vi) in v.iter().enumerate() {
            for k in 0..self.n {
                flat[i * self.n + k] = c(vi[k], 0.0);
            }
        }
        let out = &self.op * flat;
        (0..v.len())
            .map(|i| out.rows(i * self.n, self.n).into_owned())
            .collect()
    }
}

/// Discrete eigenvalues in the region enclosed by an indented half-disk.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumCheck {
    pub xi: Vec<f64>,
    pub size: usize,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub re_tol: f64,
    /// Largest real part among eigenvalues with `r < |λ| < R`.
    pub max_re_in_annulus: f64,
    pub unstable_inside: Vec<(f64, f64)>,
    pub eigenvalue_nearest_origin: (f64, f64),
}

pub fn spectrum_check(disc: &Discretization, r: f64, big_r: f64, re_tol: f64) -> SpectrumCheck {
    let eig = disc.eigenvalues();
    let mut max_re = f64::NEG_INFINITY;
    let mut bad = Vec::new();
    let mut nearest = c(f64::INFINITY, 0.0);
    for z in &eig {
        if z.norm() < nearest.norm() {
            nearest = *z;
        }
        let m = z.norm();
        if m > r && m < big_r {
            max_re = max_re.max(z.re);
            if z.re > re_tol {
                bad.push((z.re, z.im));
            }
        }
    }
    SpectrumCheck {
        xi: disc.xi.clone(),
        size: disc.op.nrows(),
        inner_radius: r,
        outer_radius: big_r,
        re_tol,
        max_re_in_annulus: max_re,
        unstable_inside: bad,
        eigenvalue_nearest_origin: (nearest.re, nearest.im),
    }
}

// ---------------------------------------------------------------------------
// Resolvent norms

#[derive(Clone, Debug, Serialize)]
pub struct ResolventSample {
    pub xi: Vec<f64>,
    pub lambda: (f64, f64),
    pub norm: f64,
    pub near_spectrum: bool,
    pub iterations: usize,
}

/// Gram matrix of `|f|² = h Σ ((1 + |ξ̃|)²|f_i|² + |(f_{i+1} − f_i)/h|²)`.
fn h1_gram(npts: usize, n: usize, h: f64, xi_norm: f64) -> RMat {
    let size = npts * n;
    let w = (1.0 + xi_norm).powi(2);
    let mut g = RMat::zeros(size, size);
    for i in 0..npts {
        for k in 0..n {
            let r = i * n + k;
            g[(r, r)] = h * (w + 2.0 / (h * h));
            if i + 1 < npts {
                g[(r, r + n)] = -1.0 / h;
                g[(r + n, r)] = -1.0 / h;
            }
        }
    }
    g
}

/// Ĥ¹ operator norm of `(λ − L)⁻¹` by power iteration on `G⁻¹R*GR`.
pub fn resolvent_norm(disc: &Discretization, lambda: Complex64) -> ResolventSample {
    let size = disc.op.nrows();
    let npts = disc.x.len();
    let xi_norm = disc.xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    let g = to_complex(&h1_gram(npts, disc.n, disc.h, xi_norm));
    let chol = nalgebra::Cholesky::new(h1_gram(npts, disc.n, disc.h, xi_norm))
        .expect("Gram matrix is SPD");
    let shifted = CMat::identity(size, size) * lambda - &disc.op;
    let lu = shifted.clone().lu();
    let lu_adj = shifted.adjoint().lu();
    let sample = |norm: f64, near: bool, it: usize| ResolventSample {
        xi: disc.xi.clone(),
        lambda: (lambda.re, lambda.im),
        norm,
        near_spectrum: near,
        iterations: it,
    };
    let gnorm = |v: &CVec| v.dotc(&(&g * v)).re.max(0.0).sqrt();
    let mut x = CVec::from_fn(size, |i, _| {
        c(
            1.0 + 0.1 * ((i as f64) * 0.7).sin(),
            0.05 * ((i as f64) * 1.3).cos(),
        )
    });
    let nx = gnorm(&x);
    x /= c(nx, 0.0);
    let mut mu_old = 0.0;
    let mut mu = 0.0;
    let mut it = 0;
    while it < 300 {
        it += 1;
        let Some(y) = lu.solve(&x) else {
            return sample(f64::INFINITY, true, it);
        };
        mu = gnorm(&y).powi(2);
        if !mu.is_finite() {
            return sample(f64::INFINITY, true, it);
        }
        let z = &g * &y;
        let Some(w) = lu_adj.solve(&z) else {
            return sample(f64::INFINITY, true, it);
        };
        let mut v = CVec::zeros(size);
        let re = chol.solve(&w.map(|z| z.re));
        let im = chol.solve(&w.map(|z| z.im));
        for i in 0..size {
            v[i] = c(re[i], im[i]);
        }
        let nv = gnorm(&v);
        if nv == 0.0 || !nv.is_finite() {
            break;
        }
        x = v / c(nv, 0.0);
        if it > 3 && (mu - mu_old).abs() <= 1e-9 * mu {
            break;
        }
        mu_old = mu;
    }
    let norm = mu.sqrt();
    let near = !norm.is_finite() || norm * (1.0 + lambda.norm()) > 1e10;
    sample(norm, near, it)
}

/// Samples on `{|(ξ̃, λ)| = R, Re λ ≥ −θ}` for `d − 1 = dt` transverse
/// directions; transverse frequency is placed along the first axis.
pub fn shell_samples(dt: usize, big_r: f64, theta: f64, m: usize) -> Vec<(Vec<f64>, Complex64)> {
    let phi_max = (-theta / big_r).clamp(-1.0, 1.0).acos();
    let tilts: Vec<f64> = if dt == 0 {
        vec![0.0]
    } else {
        vec![0.0, PI / 4.0, 0.45 * PI]
    };
    let mut out = Vec::new();
    for &psi in &tilts {
        let rl = big_r * psi.cos();
        let mut xi = vec![0.0; dt];
        if dt > 0 {
            xi[0] = big_r * psi.sin();
        }
        let phi_max = if rl > 0.0 {
            (-theta / rl).clamp(-1.0, 1.0).acos()
        } else {
            phi_max
        };
        for k in 0..m {
            let phi = -phi_max + 2.0 * phi_max * k as f64 / (m - 1).max(1) as f64;
            out.push((xi.clone(), Complex64::from_polar(rl, phi)));
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct ResolventTable {
    pub grid: GridSpec,
    pub rows: Vec<ResolventSample>,
    pub sup: f64,
    pub near_spectrum: bool,
}

/// Resolvent norms at `(ξ̃, λ)` samples on one grid.
pub fn resolvent_scan(
    model: &dyn ModelSystem,
    shock: &ShockData,
    profile: &Profile,
    samples: &[(Vec<f64>, Complex64)],
    grid: &GridSpec,
) -> Result<ResolventTable> {
    let mut xis: Vec<Vec<f64>> = Vec::new();
    for (xi, _) in samples {
        if !xis.contains(xi) {
            xis.push(xi.clone());
        }
    }
    let mut rows = vec![None; samples.len()];
    for xi in &xis {
        let disc = discretize_operator(model, shock, profile, xi, grid)?;
        let idx: Vec<usize> = (0..samples.len())
            .filter(|&i| &samples[i].0 == xi)
            .collect();
        let got: Vec<(usize, ResolventSample)> = idx
            .par_iter()
            .map(|&i| (i, resolvent_norm(&disc, samples[i].1)))
            .collect();
        for (i, s) in got {
            rows[i] = Some(s);
        }
    }
    let rows: Vec<ResolventSample> = rows
        .into_iter()
        .map(|r| r.expect("every sample evaluated"))
        .collect();
    let sup = rows.iter().map(|r| r.norm).fold(0.0, f64::max);
    let near_spectrum = rows.iter().any(|r| r.near_spectrum);
    Ok(ResolventTable {
        grid: *grid,
        rows,
        sup,
        near_spectrum,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GridStability {
    pub coarse: ResolventTable,
    pub fine: ResolventTable,
    pub relative_change: f64,
}

/// Shell sup on `grid` and on the doubled grid.
pub fn resolvent_grid_stability(
    model: &dyn ModelSystem,
    shock: &ShockData,
    profile: &Profile,
    samples: &[(Vec<f64>, Complex64)],
    grid: &GridSpec,
) -> Result<GridStability> {
    let coarse = resolvent_scan(model, shock, profile, samples, grid)?;
    let fine = resolvent_scan(model, shock, profile, samples, &grid.doubled())?;
    let relative_change = (fine.sup - coarse.sup).abs() / fine.sup;
    Ok(GridStability {
        coarse,
        fine,
        relative_change,
    })
}

/// Log-log slope of the norm against `|λ|`.
pub fn tail_exponent(rows: &[ResolventSample]) -> (f64, f64) {
    let x: Vec<f64> = rows
        .iter()
        .map(|r| c(r.lambda.0, r.lambda.1).norm().ln())
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| r.norm.ln()).collect();
    let (_, slope, r2) = linear_fit(&x, &y);
    (slope, r2)
}

// ---------------------------------------------------------------------------
// Heat-kernel decay of constant-coefficient systems

#[derive(Clone, Debug, Serialize)]
pub struct DecayOptions {
    pub half_width: f64,
    pub points: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
    pub bump_radius: f64,
    /// Largest admissible fraction of `|U|²` in the outer fifth of the box.
    pub boundary_threshold: f64,
}

impl DecayOptions {
    pub fn for_dimension(d: usize) -> DecayOptions {
        match d {
            1 => DecayOptions {
                half_width: 200.0,
                points: 2048,
                t_start: 10.0,
                t_end: 400.0,
                samples: 16,
                bump_radius: 1.0,
                boundary_threshold: 1e-10,
            },
            _ => DecayOptions {
                half_width: 128.0,
                points: 512,
                t_start: 10.0,
                t_end: 200.0,
                samples: 12,
                bump_radius: 2.0,
                boundary_threshold: 1e-10,
            },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub d: usize,
    pub exponent: f64,
    pub r2: f64,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub boundary_fraction: f64,
    pub advisory: Option<String>,
}

impl DecayFit {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,l2_norm\n");
        for (t, v) in self.times.iter().zip(&self.norms) {
            s.push_str(&format!("{t:.10e},{v:.10e}\n"));
        }
        s
    }
}

fn wavenumber(k: usize, npts: usize, len: f64) -> f64 {
    let kk = if k <= npts / 2 {
        k as f64
    } else {
        k as f64 - npts as f64
    };
    2.0 * PI * kk / len
}

fn fft_nd(data: &mut [Complex64], npts: usize, d: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(npts)
    } else {
        planner.plan_fft_forward(npts)
    };
    if d == 1 {
        fft.process(data);
        return;
    }
    for row in data.chunks_mut(npts) {
        fft.process(row);
    }
    let mut col = vec![c(0.0, 0.0); npts];
    for j in 0..npts {
        for i in 0..npts {
            col[i] = data[i * npts + j];
        }
        fft.process(&mut col);
        for i in 0..npts {
            data[i * npts + j] = col[i];
        }
    }
}

/// Evolves `Û_t = (−iΣξ_jA^j − Σξ_jξ_kB^{jk})Û` mode by mode from a compact
/// bump times `amplitude` and fits `|U(t)|_{L²} ~ t^{−p}`.
pub fn const_coeff_decay(
    a: &[RMat],
    b: &[Vec<RMat>],
    amplitude: &RVec,
    opts: &DecayOptions,
) -> Result<DecayFit> {
    let d = a.len();
    if d == 0 || d > 2 {
        return Err(Error::Domain(format!(
            "decay runs support d = 1, 2 (got {d})"
        )));
    }
    let n = a[0].nrows();
    let npts = opts.points;
    let len = 2.0 * opts.half_width;
    let h = len / npts as f64;
    let total = npts.pow(d as u32);
    let coord = |k: usize| -opts.half_width + h * k as f64;
    let idx = |flat: usize| -> Vec<usize> {
        if d == 1 {
            vec![flat]
        } else {
            vec![flat / npts, flat % npts]
        }
    };
    let bump = |flat: usize| {
        let r2: f64 =
            idx(flat).iter().map(|&k| coord(k).powi(2)).sum::<f64>() / opts.bump_radius.powi(2);
        if r2 < 1.0 {
            (1.0 - r2).powi(4)
        } else {
            0.0
        }
    };
    let hat: Vec<Vec<Complex64>> = (0..n)
        .map(|comp| {
            let mut v: Vec<Complex64> = (0..total)
                .map(|f| c(bump(f) * amplitude[comp], 0.0))
                .collect();
            fft_nd(&mut v, npts, d, false);
            v
        })
        .collect();
    let times: Vec<f64> = (0..opts.samples)
        .map(|k| {
            opts.t_start * (opts.t_end / opts.t_start).powf(k as f64 / (opts.samples - 1) as f64)
        })
        .collect();
    let symbol = |flat: usize| -> CMat {
        let ks = idx(flat);
        let xi: Vec<f64> = ks.iter().map(|&k| wavenumber(k, npts, len)).collect();
        let mut p = CMat::zeros(n, n);
        for j in 0..d {
            p -= to_complex(&a[j]) * (I * xi[j]);
            for k in 0..d {
                p -= to_complex(&b[j][k]) * c(xi[j] * xi[k], 0.0);
            }
        }
        p
    };
    let weight = h.powi(d as i32) / total as f64;
    // Mass in the emptiest periodic band of width 0.2·(2·half_width) per
    // axis; with the bump centred this is the band |x| > 0.8·half_width, and
    // it does not depend on where convection has carried the solution.
    let band = ((0.2 * npts as f64).round() as usize).max(1);
    let emptiest = |marg: &[f64]| -> f64 {
        let mut cur: f64 = marg[..band].iter().sum();
        let mut best = cur;
        for k in 0..npts {
            cur += marg[(k + band) % npts] - marg[k];
            best = best.min(cur);
        }
        best.max(0.0)
    };
    let results: Vec<(f64, f64)> = times
        .par_iter()
        .map(|&t| {
            let mut evolved: Vec<Vec<Complex64>> = vec![vec![c(0.0, 0.0); total]; n];
            for f in 0..total {
                let u0 = CVec::from_fn(n, |comp, _| hat[comp][f]);
                if u0.iter().all(|z| z.norm() == 0.0) {
                    continue;
                }
                let ut = if n == 1 {
                    u0 * (symbol(f)[(0, 0)] * t).exp()
                } else {
                    (symbol(f) * c(t, 0.0)).exp() * u0
                };
                for comp in 0..n {
                    evolved[comp][f] = ut[comp];
                }
            }
            let norm2: f64 = evolved.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>() * weight;
            let mut marg = vec![vec![0.0; npts]; d];
            for comp in evolved.iter_mut() {
                fft_nd(comp, npts, d, true);
                for (f, z) in comp.iter().enumerate() {
                    let m2 = z.norm_sqr() / (total as f64).powi(2) * h.powi(d as i32);
                    for (axis, &k) in idx(f).iter().enumerate() {
                        marg[axis][k] += m2;
                    }
                }
            }
            let edge: f64 = marg.iter().map(|m| emptiest(m)).sum();
            (norm2.sqrt(), edge / norm2.max(1e-300))
        })
        .collect();
    let norms: Vec<f64> = results.iter().map(|r| r.0).collect();
    let boundary_fraction = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let lx: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let (_, slope, r2) = linear_fit(&lx, &ly);
    let advisory = (boundary_fraction > opts.boundary_threshold).then(|| {
        format!(
            "boundary fraction {boundary_fraction:.2e} above threshold: rerun with a larger box"
        )
    });
    Ok(DecayFit {
        d,
        exponent: -slope,
        r2,
        times,
        norms,
        boundary_fraction,
        advisory,
    })
}

/// Decay run for the linearization of a model at a constant state.
pub fn const_coeff_decay_model(
    model: &dyn ModelSystem,
    u: &RVec,
    amplitude: &RVec,
    opts: &DecayOptions,
) -> Result<DecayFit> {
    let d = model.d();
    let a: Vec<RMat> = (0..d)
        .map(|j| flux_jacobian(model, u, j))
        .collect::<Result<_>>()?;
    let b: Vec<Vec<RMat>> = (0..d)
        .map(|j| {
            (0..d)
                .map(|k| model.viscosity(j, k, u))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    const_coeff_decay(&a, &b, amplitude, opts)
}

// ---------------------------------------------------------------------------
// Kawashima energy

#[derive(Clone, Debug, Serialize)]
pub struct EnergyOptions {
    pub box_length: f64,
    pub xi_cut: f64,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        EnergyOptions {
            box_length: 80.0,
            xi_cut: 10.0,
            dt: 2e-3,
            t_end: 4.0,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyTrace {
    pub c: f64,
    pub t: Vec<f64>,
    /// `𝓔 = ½(C⟨Ã⁰W, W⟩ + ⟨K∂ₓW, W⟩ + C⟨Ã⁰Wₓ, Wₓ⟩)`, normalized to 1 at t = 0.
    pub energy: Vec<f64>,
    /// `|W|² + |Wₓ|²` on the same scale.
    pub plain: Vec<f64>,
    pub dwx: Vec<f64>,
    pub dwii: Vec<f64>,
    pub rate: Vec<f64>,
    pub max_violation: f64,
    pub violation_step: Option<usize>,
    pub plain_max_increase: f64,
    /// Largest `|Δ𝓔 − ∫ d𝓔/dt|` per step (trapezoid in time).
    pub identity_defect: f64,
    /// `min_ξ λ_min(E(ξ))/(1 + ξ²)`: positive when `𝓔^{1/2}` is a norm.
    pub norm_margin: f64,
    /// `min_ξ λ_min(Q(ξ))` with `d𝓔/dt = −Ŵ*QŴ` per mode.
    pub dissipation_margin: f64,
}

impl EnergyTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,energy,plain,dwx,dwii,rate\n");
        for i in 0..self.t.len() {
            s.push_str(&format!(
                "{:.10e},{:.16e},{:.16e},{:.10e},{:.10e},{:.10e}\n",
                self.t[i], self.energy[i], self.plain[i], self.dwx[i], self.dwii[i], self.rate[i]
            ));
        }
        s
    }
}

/// Simulates `Ã⁰W_t + ÃW_x = B̃W_xx` spectrally with RK4 and tracks `𝓔`.
/// `C` starts at the compensator's constant and is doubled until `𝓔^{1/2}`
/// is a norm and every mode dissipates it. `r` is the parabolic block size.
pub fn kawashima_energy_trace(
    a0: &RMat,
    at: &RMat,
    bt: &RMat,
    k: &RMat,
    c0: f64,
    r: usize,
    opts: &EnergyOptions,
) -> Result<EnergyTrace> {
    let n = a0.nrows();
    let a0i = a0
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("Ã⁰ singular".into()))?;
    let dxi = 2.0 * PI / opts.box_length;
    let kmax = (opts.xi_cut / dxi).floor() as i64;
    let xis: Vec<f64> = (-kmax..=kmax).map(|k| k as f64 * dxi).collect();
    let wq = dxi / (2.0 * PI);
    let a0c = to_complex(a0);
    let kc = to_complex(k);
    let ms: Vec<CMat> = xis
        .iter()
        .map(|&x| to_complex(&a0i) * (to_complex(at) * (I * x) + to_complex(bt) * c(x * x, 0.0)))
        .collect();
    let e_of = |cc: f64, x: f64| (&a0c * c(cc * (1.0 + x * x), 0.0) + &kc * (I * x)) * c(0.5, 0.0);
    let scale = at.abs().max().max(bt.abs().max()).max(1e-300);
    let mut cc = c0.max(1e-3);
    let (mut norm_margin, mut diss_margin);
    loop {
        norm_margin = f64::INFINITY;
        diss_margin = f64::INFINITY;
        for (i, &x) in xis.iter().enumerate() {
            let e = e_of(cc, x);
            norm_margin = norm_margin.min(min_herm_eig(&e) / (1.0 + x * x));
            let q = &e * &ms[i] + ms[i].adjoint() * &e;
            diss_margin = diss_margin.min(min_herm_eig(&q));
        }
        if (norm_margin > 0.0 && diss_margin >= -1e-12 * scale * cc) || cc > 1e8 {
            break;
        }
        cc *= 2.0;
    }
    if norm_margin <= 0.0 || diss_margin < -1e-12 * scale * cc {
        return Err(Error::Hypothesis {
            hyp: "K0".into(),
            msg: format!("no C ≤ 1e8 makes 𝓔 a dissipated norm (margins {norm_margin:.3e}, {diss_margin:.3e})"),
        });
    }
    // data: a few Gaussians with random centres and vector amplitudes
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let bumps: Vec<(f64, f64, RVec)> = (0..4)
        .map(|_| {
            let x0 = rng.random_range(-5.0..5.0);
            let w = rng.random_range(0.7..1.5);
            let v = RVec::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            (x0, w, v)
        })
        .collect();
    let mut modes: Vec<CVec> = xis
        .iter()
        .map(|&x| {
            let mut v = CVec::zeros(n);
            for (x0, w, amp) in &bumps {
                let f = Complex64::from_polar((-(x * w).powi(2) / 2.0).exp() * w, -x * x0);
                v += amp.map(|a| c(a, 0.0)) * f;
            }
            v
        })
        .collect();
    let es: Vec<CMat> = xis.iter().map(|&x| e_of(cc, x)).collect();
    let qs: Vec<CMat> = xis
        .iter()
        .enumerate()
        .map(|(i, _)| &es[i] * &ms[i] + ms[i].adjoint() * &es[i])
        .collect();
    let steps = (opts.t_end / opts.dt).round() as usize;
    let stepper: Vec<CMat> = ms
        .iter()
        .map(|m| {
            let z = m * c(-opts.dt, 0.0);
            let mut s = CMat::identity(n, n);
            let mut term = CMat::identity(n, n);
            for j in 1..=4 {
                term = &term * &z / c(j as f64, 0.0);
                s += &term;
            }
            s
        })
        .collect();
    let measure = |modes: &[CVec]| {
        let mut e = 0.0;
        let mut plain = 0.0;
        let mut dwx = 0.0;
        let mut dwii = 0.0;
        let mut rate = 0.0;
        for (i, v) in modes.iter().enumerate() {
            let x2 = xis[i] * xis[i];
            e += v.dotc(&(&es[i] * v)).re * wq;
            rate -= v.dotc(&(&qs[i] * v)).re * wq;
            let nv = v.norm_squared();
            plain += (1.0 + x2) * nv * wq;
            dwx += x2 * nv * wq;
            dwii += x2 * v.rows(n - r, r).norm_squared() * wq;
        }
        (e, plain, dwx, dwii, rate)
    };
    let (e0, p0, _, _, _) = measure(&modes);
    let mut tr = EnergyTrace {
        c: cc,
        t: Vec::new(),
        energy: Vec::new(),
        plain: Vec::new(),
        dwx: Vec::new(),
        dwii: Vec::new(),
        rate: Vec::new(),
        max_violation: 0.0,
        violation_step: None,
        plain_max_increase: 0.0,
        identity_defect: 0.0,
        norm_margin,
        dissipation_margin: diss_margin,
    };
    let push = |tr: &mut EnergyTrace, t: f64, m: (f64, f64, f64, f64, f64)| {
        tr.t.push(t);
        tr.energy.push(m.0 / e0);
        tr.plain.push(m.1 / p0);
        tr.dwx.push(m.2.sqrt());
        tr.dwii.push(m.3.sqrt());
        tr.rate.push(m.4 / e0);
    };
    push(&mut tr, 0.0, measure(&modes));
    for s in 1..=steps {
        for (v, st) in modes.iter_mut().zip(&stepper) {
            *v = st * &*v;
        }
        push(&mut tr, s as f64 * opts.dt, measure(&modes));
        let de = tr.energy[s] - tr.energy[s - 1];
        if de > tr.max_violation {
            tr.max_violation = de;
            tr.violation_step = Some(s);
        }
        tr.plain_max_increase = tr.plain_max_increase.max(tr.plain[s] - tr.plain[s - 1]);
        let defect = (de - 0.5 * opts.dt * (tr.rate[s] + tr.rate[s - 1])).abs();
        tr.identity_defect = tr.identity_defect.max(defect);
    }
    Ok(tr)
}

/// Kawashima trace for the linearization of a 1-D model at `u`, with `K`
/// from the compensating-matrix construction.
pub fn kawashima_energy_model(
    model: &dyn ModelSystem,
    u: &RVec,
    opts: &EnergyOptions,
) -> Result<(EnergyTrace, Compensator)> {
    let sf = symmetric_form(model, u)?.map_err(|f| Error::Hypothesis {
        hyp: "A1".into(),
        msg: f.reason,
    })?;
    let (at, bt) = directional(&sf, &[1.0]);
    let a0i = sf
        .a0
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("Ã⁰ singular".into()))?;
    let comp = compensating_matrix(&sf.a0, &(a0i * &at), &bt).map_err(|f| Error::Hypothesis {
        hyp: "K0".into(),
        msg: f.reason,
    })?;
    let tr = kawashima_energy_trace(&sf.a0, &at, &bt, &comp.k, comp.c, model.r(), opts)?;
    Ok((tr, comp))
}

// ---------------------------------------------------------------------------
// Goodman weight

/// Envelope `Θ(x) = c± e^{−μ±|x|}` on each side.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Envelope {
    pub c_minus: f64,
    pub rate_minus: f64,
    pub c_plus: f64,
    pub rate_plus: f64,
}

impl Envelope {
    pub fn zero() -> Envelope {
        Envelope {
            c_minus: 0.0,
            rate_minus: 1.0,
            c_plus: 0.0,
            rate_plus: 1.0,
        }
    }
    pub fn at(&self, x: f64) -> f64 {
        if x < 0.0 {
            self.c_minus * (self.rate_minus * x).exp()
        } else {
            self.c_plus * (-self.rate_plus * x).exp()
        }
    }
    pub fn integral(&self) -> f64 {
        self.c_minus / self.rate_minus + self.c_plus / self.rate_plus
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GoodmanWeight {
    pub envelope: Envelope,
    pub c_star: f64,
    pub theta: f64,
    pub x: Vec<f64>,
    pub alpha: Vec<f64>,
    pub theta_env: Vec<f64>,
    /// `max α / min α` from the quadrature.
    pub ratio: f64,
    /// `exp(2C*∫Θ/θ)`.
    pub ratio_closed_form: f64,
    /// Leading trapezoid error of `ratio`.
    pub quadrature_error: f64,
}

impl GoodmanWeight {
    /// `α(x)` by linear interpolation in `ln α`; constant beyond the samples.
    pub fn at(&self, x: f64) -> f64 {
        let k = self.x.partition_point(|&v| v <= x);
        if k == 0 {
            return self.alpha[0];
        }
        if k >= self.x.len() {
            return *self.alpha.last().unwrap();
        }
        let t = (x - self.x[k - 1]) / (self.x[k] - self.x[k - 1]);
        (self.alpha[k - 1].ln() * (1.0 - t) + self.alpha[k].ln() * t).exp()
    }
}

/// `α(x) = exp(−∫₀ˣ 2C*Θ/θ)` by trapezoidal quadrature on a grid reaching
/// well into both tails.
pub fn weight_from_envelope(
    env: Envelope,
    c_star: f64,
    theta: f64,
    points: usize,
) -> GoodmanWeight {
    let reach = 40.0 / env.rate_minus.min(env.rate_plus);
    let half = points / 2;
    let h = reach / half as f64;
    let x: Vec<f64> = (0..=2 * half)
        .map(|i| h * (i as f64 - half as f64))
        .collect();
    let th: Vec<f64> = x.iter().map(|&v| env.at(v)).collect();
    let k = 2.0 * c_star / theta;
    let mut log_alpha = vec![0.0; x.len()];
    // one-sided limits at the origin, where Θ may jump
    for i in half + 1..x.len() {
        let left = if i == half + 1 { env.c_plus } else { th[i - 1] };
        log_alpha[i] = log_alpha[i - 1] - k * 0.5 * h * (th[i] + left);
    }
    for i in (0..half).rev() {
        let right = if i + 1 == half {
            env.c_minus
        } else {
            th[i + 1]
        };
        log_alpha[i] = log_alpha[i + 1] + k * 0.5 * h * (th[i] + right);
    }
    let alpha: Vec<f64> = log_alpha.iter().map(|l| l.exp()).collect();
    let mx = alpha.iter().cloned().fold(0.0, f64::max);
    let mn = alpha.iter().cloned().fold(f64::INFINITY, f64::min);
    GoodmanWeight {
        envelope: env,
        c_star,
        theta,
        x,
        alpha,
        theta_env: th,
        ratio: mx / mn,
        ratio_closed_form: (k * env.integral()).exp(),
        quadrature_error: mx / mn * k * h * h / 12.0
            * (env.c_minus * env.rate_minus + env.c_plus * env.rate_plus),
    }
}

/// Envelope bounding `|Ū − U±|` and `|Ū′|` on each side, with rates from
/// the profile's decay certificate.
pub fn profile_envelope(profile: &Profile) -> Result<Envelope> {
    let cert = profile.decay.as_ref().ok_or_else(|| Error::Hypothesis {
        hyp: "H1".into(),
        msg: "profile has no decay certificate; ∫Θ not controlled".into(),
    })?;
    let rate = |f: &crate::profile::SideFit| 0.98 * f.theta_fit.min(f.gap);
    let (rm, rp) = (rate(&cert.minus), rate(&cert.plus));
    if !(rm > 0.0 && rp > 0.0) {
        return Err(Error::Hypothesis {
            hyp: "H1".into(),
            msg: "nonpositive decay rate; ∫Θ diverges".into(),
        });
    }
    let um = profile.um();
    let upl = profile.upl();
    let mut cm = 0.0f64;
    let mut cp = 0.0f64;
    for (i, &x) in profile.x.iter().enumerate() {
        if x < 0.0 {
            let v = (&profile.u[i] - &um).amax().max(profile.up[i].amax());
            cm = cm.max(v * (rm * x.abs()).exp());
        } else {
            let v = (&profile.u[i] - &upl).amax().max(profile.up[i].amax());
            cp = cp.max(v * (rp * x).exp());
        }
    }
    Ok(Envelope {
        c_minus: cm,
        rate_minus: rm,
        c_plus: cp,
        rate_plus: rp,
    })
}

pub fn goodman_weight(profile: &Profile, c_star: f64, theta: f64) -> Result<GoodmanWeight> {
    Ok(weight_from_envelope(
        profile_envelope(profile)?,
        c_star,
        theta,
        40001,
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct TransportOptions {
    pub half_width: f64,
    pub points: usize,
    pub t_end: f64,
    pub cfl: f64,
    pub a_base: f64,
    pub a_ramp: f64,
    pub pulse_center: f64,
    pub pulse_width: f64,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions {
            half_width: 30.0,
            points: 1200,
            t_end: 25.0,
            cfl: 0.4,
            a_base: 1.0,
            a_ramp: 1.0,
            pulse_center: -12.0,
            pulse_width: 3.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TransportTrace {
    pub t: Vec<f64>,
    pub weighted: Vec<f64>,
    pub unweighted: Vec<f64>,
    /// Largest step increase of the weighted energy relative to its start.
    pub weighted_max_increase: f64,
    /// `max_t |w(t)|² / |w(0)|²` without the weight.
    pub unweighted_peak_growth: f64,
}

impl TransportTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,weighted,unweighted\n");
        for i in 0..self.t.len() {
            s.push_str(&format!(
                "{:.10e},{:.16e},{:.16e}\n",
                self.t[i], self.weighted[i], self.unweighted[i]
            ));
        }
        s
    }
}

/// `w_t + a(x)w_x = 0` with `a = a_base + a_ramp·(ū₁ − u₋)/(u₊ − u₋)`
/// rising across the profile, first-order upwind in space, RK4 in time,
/// zero inflow. Tracks `⟨w, αw⟩` and `⟨w, w⟩`.
pub fn goodman_transport(
    profile: &Profile,
    weight: &GoodmanWeight,
    opts: &TransportOptions,
) -> TransportTrace {
    let npts = opts.points;
    let h = 2.0 * opts.half_width / npts as f64;
    let x: Vec<f64> = (1..=npts)
        .map(|i| -opts.half_width + h * i as f64)
        .collect();
    let (um, upl) = (profile.u_minus[0], profile.u_plus[0]);
    let a: Vec<f64> = x
        .iter()
        .map(|&v| opts.a_base + opts.a_ramp * (profile.eval(v).0[0] - um) / (upl - um))
        .collect();
    let alpha: Vec<f64> = x.iter().map(|&v| weight.at(v)).collect();
    let mut w: Vec<f64> = x
        .iter()
        .map(|&v| (-((v - opts.pulse_center) / opts.pulse_width).powi(2)).exp())
        .collect();
    let amax = a.iter().cloned().fold(0.0, f64::max);
    let steps = (opts.t_end * amax / (opts.cfl * h)).ceil() as usize;
    let dt = opts.t_end / steps as f64;
    let rhs = |w: &[f64]| -> Vec<f64> {
        (0..npts)
            .map(|i| {
                let left = if i == 0 { 0.0 } else { w[i - 1] };
                -a[i] * (w[i] - left) / h
            })
            .collect()
    };
    let energies = |w: &[f64]| {
        let wt: f64 = w.iter().zip(&alpha).map(|(v, al)| al * v * v).sum::<f64>() * h;
        let un: f64 = w.iter().map(|v| v * v).sum::<f64>() * h;
        (wt, un)
    };
    let (w0, u0) = energies(&w);
    let mut tr = TransportTrace {
        t: vec![0.0],
        weighted: vec![1.0],
        unweighted: vec![1.0],
        weighted_max_increase: 0.0,
        unweighted_peak_growth: 1.0,
    };
    let axpy = |w: &[f64], k: &[f64], s: f64| -> Vec<f64> {
        w.iter().zip(k).map(|(a, b)| a + s * b).collect()
    };
    for s in 1..=steps {
        let k1 = rhs(&w);
        let k2 = rhs(&axpy(&w, &k1, 0.5 * dt));
        let k3 = rhs(&axpy(&w, &k2, 0.5 * dt));
        let k4 = rhs(&axpy(&w, &k3, dt));
        for i in 0..npts {
            w[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let (we, ue) = energies(&w);
        let (we, ue) = (we / w0, ue / u0);
        tr.weighted_max_increase = tr
            .weighted_max_increase
            .max(we - tr.weighted.last().unwrap());
        tr.unweighted_peak_growth = tr.unweighted_peak_growth.max(ue);
        tr.t.push(s as f64 * dt);
        tr.weighted.push(we);
        tr.unweighted.push(ue);
    }
    tr
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{hugoniot_solve, Burgers, Constraint, Isentropic};
    use crate::profile::{decay_certificate, solve_profile, ProfileOptions};

    fn burgers() -> (Burgers, ShockData, Profile) {
        let b = Burgers::new(1);
        let sh = ShockData::new(RVec::from_element(1, 1.0), RVec::from_element(1, -1.0), 0.0);
        let mut p = solve_profile(&b, &sh, &ProfileOptions::default()).unwrap();
        if p.decay.is_none() {
            p.decay = Some(decay_certificate(&b, &sh, &p).unwrap());
        }
        (b, sh, p)
    }

    #[test]
    fn derivative_of_profile_is_in_the_kernel() {
        let (b, sh, p) = burgers();
        let mut errs = Vec::new();
        for pts in [199, 399] {
            let disc = discretize_operator(
                &b,
                &sh,
                &p,
                &[],
                &GridSpec {
                    half_width: 20.0,
                    points: pts,
                },
            )
            .unwrap();
            let v: Vec<RVec> = disc.x.iter().map(|&x| p.eval(x).1).collect();
            let lv = disc.apply(&v);
            errs.push(lv.iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
        // second order: the residual drops by about four
        assert!(errs[1] < 1e-2 && errs[0] / errs[1] > 3.0, "{errs:?}");
    }

    #[test]
    fn burgers_discrete_spectrum_is_stable() {
        let (b, sh, p) = burgers();
        let disc = discretize_operator(
            &b,
            &sh,
            &p,
            &[],
            &GridSpec {
                half_width: 20.0,
                points: 300,
            },
        )
        .unwrap();
        let chk = spectrum_check(&disc, 1e-3, 10.0, 1e-4);
        assert!(chk.unstable_inside.is_empty(), "{chk:?}");
        let (re, im) = chk.eigenvalue_nearest_origin;
        assert!(re.hypot(im) < 1e-4, "{chk:?}");
    }

    #[test]
    fn transverse_shift_of_discrete_spectrum() {
        // B = I and a linear transverse flux shift the spectrum by −icξ − ξ².
        let b = Burgers::with_transverse(vec![0.5], vec![0.0]);
        let sh = ShockData::new(RVec::from_element(1, 1.0), RVec::from_element(1, -1.0), 0.0);
        let p = solve_profile(&b, &sh, &ProfileOptions::default()).unwrap();
        let g = GridSpec {
            half_width: 15.0,
            points: 120,
        };
        let d0 = discretize_operator(&b, &sh, &p, &[0.0], &g).unwrap();
        let d1 = discretize_operator(&b, &sh, &p, &[0.8], &g).unwrap();
        let shift = CMat::identity(120, 120) * c(-0.64, -0.4);
        assert!((&d1.op - &d0.op - shift).norm() < 1e-9);
    }

    #[test]
    fn resolvent_tail_and_planted_eigenvalue() {
        let (b, sh, p) = burgers();
        let g = GridSpec {
            half_width: 20.0,
            points: 200,
        };
        let samples: Vec<(Vec<f64>, Complex64)> = (0..6)
            .map(|k| (vec![], c(20.0 * 10f64.powf(k as f64 / 2.5), 0.0)))
            .collect();
        let tab = resolvent_scan(&b, &sh, &p, &samples, &g).unwrap();
        let (slope, _) = tail_exponent(&tab.rows);
        assert!((slope + 1.0).abs() < 0.05, "{slope}");
        assert!(!tab.near_spectrum);
        let disc = discretize_operator(&b, &sh, &p, &[], &g).unwrap();
        let eig = disc.eigenvalues();
        let z = eig.iter().find(|z| z.re < -0.5).unwrap();
        assert!(resolvent_norm(&disc, *z).near_spectrum);
    }

    #[test]
    fn resolvent_norm_of_scalar_multiple() {
        // L = −I ⇒ |(λ − L)⁻¹| = 1/|λ + 1| in any norm.
        let disc = Discretization {
            x: vec![0.0; 10],
            h: 0.1,
            n: 1,
            xi: vec![],
            op: CMat::identity(10, 10) * c(-1.0, 0.0),
        };
        let s = resolvent_norm(&disc, c(2.0, 1.0));
        assert!(
            (s.norm - 1.0 / c(3.0, 1.0).norm()).abs() < 1e-10,
            "{}",
            s.norm
        );
    }

    #[test]
    fn heat_decay_one_dimension() {
        let a = vec![RMat::zeros(1, 1)];
        let b = vec![vec![RMat::identity(1, 1)]];
        let fit = const_coeff_decay(
            &a,
            &b,
            &RVec::from_element(1, 1.0),
            &DecayOptions::for_dimension(1),
        )
        .unwrap();
        assert!((fit.exponent - 0.25).abs() < 0.02, "{fit:?}");
        assert!(fit.advisory.is_none(), "{fit:?}");
    }

    #[test]
    fn convected_bump_is_not_flagged() {
        // Drift carries the bump around the periodic box; decay is unchanged.
        let a = vec![RMat::identity(1, 1)];
        let b = vec![vec![RMat::identity(1, 1)]];
        let fit = const_coeff_decay(
            &a,
            &b,
            &RVec::from_element(1, 1.0),
            &DecayOptions::for_dimension(1),
        )
        .unwrap();
        assert!((fit.exponent - 0.25).abs() < 0.02, "{fit:?}");
        assert!(fit.advisory.is_none(), "{fit:?}");
    }

    #[test]
    fn small_box_is_flagged() {
        let a = vec![RMat::zeros(1, 1)];
        let b = vec![vec![RMat::identity(1, 1)]];
        let opts = DecayOptions {
            half_width: 30.0,
            points: 256,
            ..DecayOptions::for_dimension(1)
        };
        let fit = const_coeff_decay(&a, &b, &RVec::from_element(1, 1.0), &opts).unwrap();
        assert!(fit.advisory.is_some());
    }

    #[test]
    fn viscous_p_system_decays_like_heat() {
        let m = Isentropic::default();
        let u = RVec::from_vec(vec![1.0, 0.0]);
        let opts = DecayOptions {
            half_width: 400.0,
            points: 4096,
            t_start: 10.0,
            t_end: 200.0,
            samples: 12,
            bump_radius: 1.0,
            boundary_threshold: 1e-10,
        };
        let fit = const_coeff_decay_model(&m, &u, &RVec::from_vec(vec![1.0, 0.5]), &opts).unwrap();
        assert!((fit.exponent - 0.25).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn heat_energy_decreases() {
        let one = RMat::identity(1, 1);
        let tr = kawashima_energy_trace(
            &one,
            &RMat::zeros(1, 1),
            &one,
            &RMat::zeros(1, 1),
            1.0,
            1,
            &EnergyOptions::default(),
        )
        .unwrap();
        assert!(tr.energy.windows(2).all(|w| w[1] < w[0]));
        assert!(tr.max_violation == 0.0);
    }

    #[test]
    fn skew_evolution_conserves_energy() {
        let one = RMat::identity(2, 2);
        let a = RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let tr = kawashima_energy_trace(
            &one,
            &a,
            &RMat::zeros(2, 2),
            &RMat::zeros(2, 2),
            1.0,
            1,
            &EnergyOptions::default(),
        )
        .unwrap();
        let spread = tr
            .energy
            .iter()
            .map(|e| (e - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(spread < 1e-10, "{spread}");
    }

    #[test]
    fn p_system_energy_with_compensator() {
        let m = Isentropic::default();
        let u = RVec::from_vec(vec![1.0, 0.0]);
        let (tr, comp) = kawashima_energy_model(&m, &u, &EnergyOptions::default()).unwrap();
        assert!(comp.margin > 0.0);
        assert!(tr.norm_margin > 0.0 && tr.dissipation_margin > -1e-12);
        assert!(tr.max_violation <= 1e-10, "{}", tr.max_violation);
        assert!(tr.energy.last().unwrap() < &0.9);
        let fine = kawashima_energy_model(
            &m,
            &u,
            &EnergyOptions {
                dt: 1e-3,
                ..EnergyOptions::default()
            },
        )
        .unwrap()
        .0;
        assert!(
            fine.identity_defect <= 0.5 * tr.identity_defect,
            "{} {}",
            fine.identity_defect,
            tr.identity_defect
        );
    }

    #[test]
    fn goodman_weight_closed_form() {
        let (_, _, p) = burgers();
        let gw = goodman_weight(&p, 1.0, 1.0).unwrap();
        assert!(gw.alpha.iter().all(|&a| a > 0.0));
        assert!(
            (gw.ratio - gw.ratio_closed_form).abs() < 1.5 * gw.quadrature_error,
            "{} {} {}",
            gw.ratio,
            gw.ratio_closed_form,
            gw.quadrature_error
        );
        let flat = weight_from_envelope(Envelope::zero(), 1.0, 1.0, 1001);
        assert!(flat.alpha.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn weighted_transport_energy_is_monotone() {
        let (_, _, p) = burgers();
        let gw = goodman_weight(&p, 1.0, 1.0).unwrap();
        let tr = goodman_transport(&p, &gw, &TransportOptions::default());
        assert!(
            tr.weighted_max_increase <= 1e-12,
            "{}",
            tr.weighted_max_increase
        );
        assert!(
            tr.unweighted_peak_growth > 1.05,
            "{}",
            tr.unweighted_peak_growth
        );
    }

    #[test]
    fn burgers_shock_decay_certificate_is_used() {
        let b = Burgers::new(1);
        let sh = hugoniot_solve(&b, &RVec::from_element(1, 1.0), &Constraint::Speed(0.0)).unwrap();
        let mut p = solve_profile(&b, &sh, &ProfileOptions::default()).unwrap();
        p.decay = None;
        assert!(goodman_weight(&p, 1.0, 1.0).is_err());
    }
}
