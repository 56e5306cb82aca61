//! Hyperbolic side of the shock problem: IBVP symbols, analytic frames of
//! their stable/unstable subspaces, the Lopatinski and Liu-Majda
//! determinants, glancing sets and the inviscid verdict.

use crate::evans::{winding_number, Contour, WindingOptions};
use crate::linalg::{
    eigenvalues, inverse, null_space, null_space_r, real_eigenvalues_sorted, riesz_projector,
    to_complex, CMat, RMat, RVec, I,
};
use crate::model::{flux_jacobian, symbol_a, ModelSystem, ShockData, Side};
use crate::ode::{dopri5, Control, OdeOptions};
use crate::structure::{clusters, sphere_grid};
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::cell::RefCell;

/// Full frequency vector `(0, ξ̃)`.
pub fn full_xi(xi_t: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0];
    v.extend_from_slice(xi_t);
    v
}

fn endstate_a1(model: &dyn ModelSystem, shock: &ShockData, side: Side) -> Result<(RVec, RMat)> {
    let f = shock.framed(model);
    let u = shock.side(side);
    let a1 = flux_jacobian(&f, &u, 0)?;
    Ok((u, a1))
}

/// `(A¹)⁻¹(λ + iA^ξ̃)` at the endstate on `side`, in the shock frame.
pub fn ibvp_symbol(
    model: &dyn ModelSystem,
    shock: &ShockData,
    side: Side,
    xi_t: &[f64],
    lambda: Complex64,
) -> Result<CMat> {
    let f = shock.framed(model);
    let (u, a1) = endstate_a1(model, shock, side)?;
    let a1inv = inverse(&to_complex(&a1)).ok_or_else(|| Error::Hypothesis {
        hyp: "H2".into(),
        msg: format!("A¹ singular at the {side:?} endstate"),
    })?;
    let at = to_complex(&symbol_a(&f, &u, &full_xi(xi_t))?);
    let n = a1.nrows();
    Ok(&a1inv * (CMat::identity(n, n) * lambda + at * I))
}

/// Eigenvalues of `m` grouped into clusters, with algebraic and geometric
/// multiplicities. A cluster with `geometric < algebraic` is a Jordan block.
#[derive(Clone, Debug, Serialize)]
pub struct EigenCluster {
    pub value: (f64, f64),
    pub algebraic: usize,
    pub geometric: usize,
}

pub fn eigen_clusters(m: &CMat, tol: f64) -> Vec<EigenCluster> {
    let eigs = eigenvalues(m);
    let scale = crate::linalg::max_abs(m).max(1e-300);
    let mut used = vec![false; eigs.len()];
    let mut out = Vec::new();
    for i in 0..eigs.len() {
        if used[i] {
            continue;
        }
        let mut members = vec![i];
        used[i] = true;
        for j in i + 1..eigs.len() {
            if !used[j] && (eigs[j] - eigs[i]).norm() <= tol.sqrt() * scale {
                members.push(j);
                used[j] = true;
            }
        }
        let mean = members.iter().map(|&k| eigs[k]).sum::<Complex64>() / members.len() as f64;
        let n = m.nrows();
        let shifted = m - CMat::identity(n, n) * mean;
        let geo = null_space(&shifted, tol.sqrt() * scale)
            .ncols()
            .clamp(1, members.len());
        out.push(EigenCluster {
            value: (mean.re, mean.im),
            algebraic: members.len(),
            geometric: geo,
        });
    }
    out
}

// ---------------------------------------------------------------------------
// Frame continuation

/// An analytic frame of a spectral subspace carried along a path.
#[derive(Clone, Debug)]
pub struct FrameBundle {
    /// Parameter point the frame belongs to.
    pub xi_t: Vec<f64>,
    pub lambda: Complex64,
    /// Accepted path parameters.
    pub path: Vec<f64>,
    pub frame: CMat,
    pub orthonormal: CMat,
    pub method: &'static str,
    /// `log det` normalization removed during transport (zero for Kato).
    pub log_correction: Complex64,
    /// `|(I − Π)R| / |R|` at the end of the path.
    pub projector_residual: f64,
}

/// A smooth matrix family `t ↦ (M(t), M'(t))` on `[0, 1]`.
pub trait MatrixPath: Sync {
    fn at(&self, t: f64) -> (CMat, CMat);
}

/// Which eigenvalues are followed, if this can be decided from the value
/// alone; `None` for values too close to the imaginary axis.
pub type Selector = dyn Fn(Complex64, f64) -> Option<bool> + Sync;

pub fn stable_selector(z: Complex64, scale: f64) -> Option<bool> {
    if z.re < -1e-9 * scale {
        Some(true)
    } else if z.re > 1e-9 * scale {
        Some(false)
    } else {
        None
    }
}

pub fn unstable_selector(z: Complex64, scale: f64) -> Option<bool> {
    stable_selector(z, scale).map(|b| !b)
}

fn no_selector(_: Complex64, _: f64) -> Option<bool> {
    None
}

fn label(
    eigs: &[Complex64],
    prev: &[(Complex64, bool)],
    select: &Selector,
    scale: f64,
) -> Vec<bool> {
    let old: Vec<Complex64> = prev.iter().map(|p| p.0).collect();
    let perm = crate::linalg::match_eigenvalues(&old, eigs);
    eigs.iter()
        .enumerate()
        .map(|(i, &z)| match select(z, scale) {
            Some(b) => b,
            None => prev[perm[i]].1,
        })
        .collect()
}

/// Transport `r0` (spanning the followed subspace of `M(0)`) along the path
/// by Kato's rule `R' = (Π'Π − ΠΠ')R`.
pub fn continue_frames(
    path: &dyn MatrixPath,
    r0: &CMat,
    select: &Selector,
    rtol: f64,
) -> Result<FrameBundle> {
    continue_frames_with(path, r0, select, select, rtol)
}

/// As [`continue_frames`], but labels are fixed at the anchor by `select`
/// and carried by continuity, so the path may leave the right half-plane.
pub fn continue_frames_tracked(
    path: &dyn MatrixPath,
    r0: &CMat,
    select: &Selector,
    rtol: f64,
) -> Result<FrameBundle> {
    continue_frames_with(path, r0, select, &no_selector, rtol)
}

fn continue_frames_with(
    path: &dyn MatrixPath,
    r0: &CMat,
    anchor: &Selector,
    select: &Selector,
    rtol: f64,
) -> Result<FrameBundle> {
    let (m0, _) = path.at(0.0);
    let n = m0.nrows();
    let e0 = eigenvalues(&m0);
    let scale0 = e0.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let mut lab0 = Vec::with_capacity(n);
    for &z in &e0 {
        lab0.push((
            z,
            anchor(z, scale0).ok_or_else(|| Error::Continuation {
                t: 0.0,
                msg: "anchor eigenvalue on the imaginary axis".into(),
            })?,
        ));
    }
    let k = lab0.iter().filter(|p| p.1).count();
    if k != r0.ncols() {
        return Err(Error::Continuation {
            t: 0.0,
            msg: format!(
                "anchor frame has {} columns, subspace has dimension {k}",
                r0.ncols()
            ),
        });
    }
    let last = RefCell::new(lab0);
    let accepted = RefCell::new(vec![0.0]);
    let proj = |t: f64,
                want_d: bool|
     -> std::result::Result<(CMat, Option<CMat>, Vec<(Complex64, bool)>), String> {
        let (m, dm) = path.at(t);
        let e = eigenvalues(&m);
        if e.iter().any(|z| !z.re.is_finite()) {
            return Err("eigenvalue computation failed".into());
        }
        let scale = e.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
        let lab = label(&e, &last.borrow(), select, scale);
        if lab.iter().filter(|&&b| b).count() != k {
            return Err("followed subspace changed dimension".into());
        }
        let (p, dp) = riesz_projector(&m, &e, &lab, if want_d { Some(&dm) } else { None })
            .map_err(|g| format!("spectral gap collapsed ({:.3e})", g.gap))?;
        Ok((p, dp, e.into_iter().zip(lab).collect()))
    };
    let opts = OdeOptions {
        rtol,
        atol: rtol * 1e-2,
        h0: 1e-2,
        h_max: 0.125,
        h_min: 1e-10,
        max_steps: 100_000,
    };
    let res = dopri5(
        |t, r: &CMat| {
            let (p, dp, _) = proj(t, true)?;
            let dp = dp.unwrap();
            Ok((&dp * &p - &p * &dp) * r)
        },
        0.0,
        r0.clone(),
        1.0,
        &[],
        &opts,
        |t, _r| {
            if let Ok((_, _, lab)) = proj(t, false) {
                *last.borrow_mut() = lab;
            }
            accepted.borrow_mut().push(t);
            Control::Continue
        },
    );
    let (_, r) = res.map_err(|e| {
        let t = *accepted.borrow().last().unwrap();
        Error::Continuation {
            t,
            msg: e.to_string(),
        }
    })?;
    let (p, _, _) = proj(1.0, false).map_err(|msg| Error::Continuation { t: 1.0, msg })?;
    let resid = (&r - &p * &r).norm() / r.norm().max(1e-300);
    let (q, _) = crate::linalg::orthonormalize(&r);
    Ok(FrameBundle {
        xi_t: vec![],
        lambda: Complex64::new(0.0, 0.0),
        path: accepted.into_inner(),
        frame: r,
        orthonormal: q,
        method: "kato",
        log_correction: Complex64::new(0.0, 0.0),
        projector_residual: resid,
    })
}

/// Unit real eigenvectors of a real diagonalizable matrix for the selected
/// eigenvalues, in increasing order, largest component positive.
pub fn real_eigenvectors(a: &RMat, keep: impl Fn(f64) -> bool) -> Result<Vec<(f64, RVec)>> {
    let (ev, im) = real_eigenvalues_sorted(a);
    let scale = ev.iter().fold(1e-300f64, |m, x| m.max(x.abs()));
    if im > 1e-8 * scale {
        return Err(Error::Hypothesis {
            hyp: "H0".into(),
            msg: "A¹ has complex eigenvalues".into(),
        });
    }
    let mut out = Vec::new();
    for (lo, len) in clusters(&ev, 1e-8 * scale) {
        let hi = lo + len;
        let a_mean = ev[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        if !keep(a_mean) {
            continue;
        }
        let n = a.nrows();
        let ns = null_space_r(&(a - RMat::identity(n, n) * a_mean), 1e-7 * scale);
        if ns.ncols() != hi - lo {
            return Err(Error::Hypothesis {
                hyp: "H0".into(),
                msg: "A¹ is not diagonalizable".into(),
            });
        }
        for j in 0..ns.ncols() {
            let mut v = ns.column(j).into_owned();
            v /= v.norm();
            let imax = v.iamax();
            if v[imax] < 0.0 {
                v = -v;
            }
            out.push((a_mean, v));
        }
    }
    Ok(out)
}

struct IbvpPath {
    a1inv: CMat,
    at: CMat,
    lambda: Complex64,
}

impl MatrixPath for IbvpPath {
    fn at(&self, t: f64) -> (CMat, CMat) {
        let n = self.a1inv.nrows();
        let id = CMat::identity(n, n);
        let lam = Complex64::new(1.0 - t, 0.0) + self.lambda * t;
        let m = &self.a1inv * (&id * lam + &self.at * (I * t));
        let dm = &self.a1inv * (&id * (self.lambda - 1.0) + &self.at * I);
        (m, dm)
    }
}

/// Kato frame of the outgoing subspace of `𝒜±` at the unit-normalized point
/// `(ξ̃, λ)/|(ξ̃, λ)|`, transported from the anchor `(0, 1)` where the columns
/// are `r_j / a_j` for the outgoing eigenvectors `r_j` of `A¹`.
pub fn lopatinski_frame(
    model: &dyn ModelSystem,
    shock: &ShockData,
    side: Side,
    xi_t: &[f64],
    lambda: Complex64,
) -> Result<FrameBundle> {
    let f = shock.framed(model);
    let (u, a1) = endstate_a1(model, shock, side)?;
    let outgoing = |a: f64| match side {
        Side::Minus => a < 0.0,
        Side::Plus => a > 0.0,
    };
    let vecs = real_eigenvectors(&a1, outgoing)?;
    let n = a1.nrows();
    let mut r0 = CMat::zeros(n, vecs.len());
    for (j, (a, v)) in vecs.iter().enumerate() {
        r0.set_column(
            j,
            &to_complex(&RMat::from_column_slice(n, 1, (v / *a).as_slice())).column(0),
        );
    }
    let rho = (xi_t.iter().map(|x| x * x).sum::<f64>() + lambda.norm_sqr()).sqrt();
    if rho == 0.0 {
        return Err(Error::Domain("Lopatinski frame at the origin".into()));
    }
    let xin: Vec<f64> = xi_t.iter().map(|x| x / rho).collect();
    let a1inv = inverse(&to_complex(&a1)).ok_or_else(|| Error::Hypothesis {
        hyp: "H2".into(),
        msg: "A¹ singular".into(),
    })?;
    let path = IbvpPath {
        a1inv,
        at: to_complex(&symbol_a(&f, &u, &full_xi(&xin))?),
        lambda: lambda / rho,
    };
    let sel: &Selector = match side {
        Side::Minus => &stable_selector,
        Side::Plus => &unstable_selector,
    };
    let mut fb = continue_frames(&path, &r0, sel, 1e-11)?;
    fb.xi_t = xi_t.to_vec();
    fb.lambda = lambda;
    Ok(fb)
}

/// Lopatinski determinant `det(A¹₋R₋, A¹₊R₊, λ[U] + i[F^ξ̃])`.
pub fn lopatinski(
    model: &dyn ModelSystem,
    shock: &ShockData,
    xi_t: &[f64],
    lambda: Complex64,
) -> Result<Complex64> {
    Ok(lopatinski_detail(model, shock, xi_t, lambda)?.0)
}

/// Δ together with the outgoing columns (`A¹r` form) used to build it.
pub fn lopatinski_detail(
    model: &dyn ModelSystem,
    shock: &ShockData,
    xi_t: &[f64],
    lambda: Complex64,
) -> Result<(Complex64, CMat)> {
    let n = model.n();
    let fm = lopatinski_frame(model, shock, Side::Minus, xi_t, lambda)?;
    let fp = lopatinski_frame(model, shock, Side::Plus, xi_t, lambda)?;
    let k = fm.frame.ncols() + fp.frame.ncols();
    if k + 1 != n {
        return Err(Error::Hypothesis {
            hyp: "Lax".into(),
            msg: format!("outgoing modes number {k}, a Lax shock needs {}", n - 1),
        });
    }
    let (_, a1m) = endstate_a1(model, shock, Side::Minus)?;
    let (_, a1p) = endstate_a1(model, shock, Side::Plus)?;
    let mut cols = CMat::zeros(n, n - 1);
    let am = to_complex(&a1m) * &fm.frame;
    let ap = to_complex(&a1p) * &fp.frame;
    for j in 0..am.ncols() {
        cols.set_column(j, &am.column(j));
    }
    for j in 0..ap.ncols() {
        cols.set_column(am.ncols() + j, &ap.column(j));
    }
    let mut mat = CMat::zeros(n, n);
    mat.view_mut((0, 0), (n, n - 1)).copy_from(&cols);
    let jump = shock.jump();
    let mut fj = RVec::zeros(n);
    for (j, &x) in xi_t.iter().enumerate() {
        if x != 0.0 {
            fj += (model.flux(j + 1, &shock.up())? - model.flux(j + 1, &shock.um())?) * x;
        }
    }
    for i in 0..n {
        mat[(i, n - 1)] = lambda * jump[i] + I * fj[i];
    }
    Ok((mat.determinant(), cols))
}

/// Liu-Majda determinant: outgoing unit eigenvectors of `A¹±` and `[U]`.
pub fn liu_majda(model: &dyn ModelSystem, shock: &ShockData) -> Result<f64> {
    let (_, a1m) = endstate_a1(model, shock, Side::Minus)?;
    let (_, a1p) = endstate_a1(model, shock, Side::Plus)?;
    let vm = real_eigenvectors(&a1m, |a| a < 0.0)?;
    let vp = real_eigenvectors(&a1p, |a| a > 0.0)?;
    let n = model.n();
    if vm.len() + vp.len() + 1 != n {
        return Err(Error::Hypothesis {
            hyp: "Lax".into(),
            msg: format!("{} outgoing modes for n = {n}", vm.len() + vp.len()),
        });
    }
    let mut m = RMat::zeros(n, n);
    for (j, (_, v)) in vm.iter().chain(vp.iter()).enumerate() {
        m.set_column(j, v);
    }
    m.set_column(n - 1, &shock.jump());
    Ok(m.determinant())
}

// ---------------------------------------------------------------------------
// Characteristic data and glancing sets

#[derive(Clone, Debug, Serialize)]
pub struct CharacteristicData {
    pub side: Side,
    pub directions: Vec<Vec<f64>>,
    /// Sorted eigenvalues `a_j(ξ)` per direction.
    pub eigenvalues: Vec<Vec<f64>>,
    pub multiplicities: Vec<Vec<usize>>,
    /// Max relative deviation of `a(2ξ) = 2a(ξ)`.
    pub homogeneity_error: f64,
    pub multiplicity_constant: bool,
}

pub fn characteristic_data(
    model: &dyn ModelSystem,
    shock: &ShockData,
    side: Side,
    m: usize,
) -> Result<CharacteristicData> {
    let f = shock.framed(model);
    let u = shock.side(side);
    let dirs = sphere_grid(model.d(), m);
    let mut eig = Vec::new();
    let mut mult = Vec::new();
    let mut hom: f64 = 0.0;
    for w in &dirs {
        let a = symbol_a(&f, &u, w)?;
        let (ev, _) = real_eigenvalues_sorted(&a);
        let w2: Vec<f64> = w.iter().map(|x| 2.0 * x).collect();
        let (ev2, _) = real_eigenvalues_sorted(&symbol_a(&f, &u, &w2)?);
        let sc = ev.iter().fold(1e-300f64, |m, x| m.max(x.abs()));
        for (x, y) in ev.iter().zip(&ev2) {
            hom = hom.max((y - 2.0 * x).abs() / sc);
        }
        mult.push(clusters(&ev, 1e-8 * sc).iter().map(|c| c.1).collect());
        eig.push(ev);
    }
    let constant = mult.windows(2).all(|w: &[Vec<usize>]| w[0] == w[1]);
    Ok(CharacteristicData {
        side,
        directions: dirs,
        eigenvalues: eig,
        multiplicities: mult,
        homogeneity_error: hom,
        multiplicity_constant: constant,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GlancingPoint {
    pub xi_t: Vec<f64>,
    /// Branch index among the distinct characteristic clusters.
    pub branch: usize,
    /// Dimension of the branch eigenspace.
    pub m: usize,
    pub xi1: f64,
    pub tau: f64,
    /// Order of `ξ₁` as a root of `iτ + a(·, ξ̃)`.
    pub s: usize,
    /// Taylor coefficients `∂^k a/∂ξ₁^k / k!` for `k = 1..=s`.
    pub taylor: Vec<f64>,
}

/// Branch value and `∂a/∂ξ₁` (via `tr(Π A¹)/m`) for every cluster.
fn branches(
    model: &dyn ModelSystem,
    u: &RVec,
    a1: &RMat,
    xi: &[f64],
) -> Result<Vec<(f64, f64, usize)>> {
    let a = symbol_a(model, u, xi)?;
    let ca = to_complex(&a);
    let e = eigenvalues(&ca);
    let mut ev: Vec<f64> = e.iter().map(|z| z.re).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let sc = ev
        .iter()
        .fold(1e-300f64, |m, x| m.max(x.abs()))
        .max(xi.iter().map(|x| x.abs()).fold(0.0, f64::max));
    let cl: Vec<(usize, usize)> = clusters(&ev, 1e-7 * sc)
        .into_iter()
        .map(|(a, l)| (a, a + l))
        .collect();
    let ca1 = to_complex(a1);
    let mut out = Vec::new();
    for (lo, hi) in cl {
        let val = ev[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        let followed: Vec<bool> = e.iter().map(|z| (z.re - val).abs() <= 1e-7 * sc).collect();
        let (p, _) = riesz_projector(&ca, &e, &followed, None).map_err(|g| Error::Hypothesis {
            hyp: "H4".into(),
            msg: format!("branches not separated (gap {:.2e})", g.gap),
        })?;
        let d = (&p * &ca1).trace().re / (hi - lo) as f64;
        out.push((val, d, hi - lo));
    }
    Ok(out)
}

/// Glancing points of the characteristic branches at a fixed state `u`.
pub fn glancing_at_state(
    model: &dyn ModelSystem,
    u: &RVec,
    xi_grid: &[Vec<f64>],
) -> Result<Vec<GlancingPoint>> {
    let a1 = flux_jacobian(model, u, 0)?;
    let n = model.n();
    let mut out = Vec::new();
    for xt in xi_grid {
        let nt = xt.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nt == 0.0 {
            continue;
        }
        let xi_of = |x1: f64| -> Vec<f64> {
            let mut v = vec![x1];
            v.extend_from_slice(xt);
            v
        };
        let ns = 801;
        let mut samples = Vec::with_capacity(ns);
        for i in 0..ns {
            let phi = -std::f64::consts::FRAC_PI_2 * 0.999
                + std::f64::consts::PI * 0.999 * i as f64 / (ns - 1) as f64;
            let x1 = nt * phi.tan();
            samples.push((x1, branches(model, u, &a1, &xi_of(x1))?));
        }
        let nb = samples[0].1.len();
        if samples.iter().any(|s| s.1.len() != nb) {
            return Err(Error::Hypothesis {
                hyp: "H4".into(),
                msg: format!("branch multiplicity changes at ξ̃ = {xt:?}"),
            });
        }
        for b in 0..nb {
            let dmax = samples.iter().map(|s| s.1[b].1.abs()).fold(0.0, f64::max);
            let sc = samples
                .iter()
                .map(|s| s.1[b].0.abs())
                .fold(0.0, f64::max)
                .max(nt);
            if dmax <= 1e-10 * sc / nt {
                // Stationary branch: every ξ₁ is critical; no isolated glancing.
                continue;
            }
            let d_at = |x1: f64| -> Result<f64> { Ok(branches(model, u, &a1, &xi_of(x1))?[b].1) };
            let mut roots = Vec::new();
            for w in samples.windows(2) {
                let (x0, d0) = (w[0].0, w[0].1[b].1);
                let (x1, d1) = (w[1].0, w[1].1[b].1);
                if d0 == 0.0 {
                    roots.push(x0);
                } else if d0 * d1 < 0.0 {
                    let (mut lo, mut hi, mut flo) = (x0, x1, d0);
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        let fm = d_at(mid)?;
                        if fm == 0.0 || (hi - lo).abs() < 1e-15 * (1.0 + mid.abs()) {
                            lo = mid;
                            hi = mid;
                            break;
                        }
                        if (fm < 0.0) == (flo < 0.0) {
                            lo = mid;
                            flo = fm;
                        } else {
                            hi = mid;
                        }
                    }
                    roots.push(0.5 * (lo + hi));
                }
            }
            for x in roots {
                let bset = branches(model, u, &a1, &xi_of(x))?;
                let (aval, _, m) = bset[b];
                // Taylor coefficients from differences of ∂a/∂ξ₁.
                let h = 1e-3 * nt;
                let mut taylor = vec![0.0];
                let mut s = n;
                let pts: Vec<f64> = (-3..=3).map(|k| x + k as f64 * h).collect();
                let vals: Vec<f64> = pts.iter().map(|&p| d_at(p)).collect::<Result<_>>()?;
                let w = crate::linalg::fd_weights(x, &pts, 4);
                let mut fact = 1.0;
                for k in 2..=n.min(5) {
                    fact *= k as f64;
                    let dk: f64 = w[k - 1].iter().zip(&vals).map(|(a, b)| a * b).sum();
                    let coef = dk / fact;
                    taylor.push(coef);
                    if coef.abs() * nt.powi(k as i32 - 1) > 1e-6 * dmax {
                        s = k;
                        break;
                    }
                }
                out.push(GlancingPoint {
                    xi_t: xt.clone(),
                    branch: b,
                    m,
                    xi1: x,
                    tau: -aval,
                    s: s.min(n),
                    taylor,
                });
            }
        }
    }
    Ok(out)
}

/// Glancing points at an endstate of the shock (shock frame).
pub fn glancing_set(
    model: &dyn ModelSystem,
    shock: &ShockData,
    side: Side,
    xi_grid: &[Vec<f64>],
) -> Result<Vec<GlancingPoint>> {
    let f = shock.framed(model);
    glancing_at_state(&f, &shock.side(side), xi_grid)
}

// ---------------------------------------------------------------------------
// Verdict

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
pub enum InviscidVerdict {
    StronglyStable,
    /// Weak condition holds but Δ has boundary roots (transition zone).
    WeaklyStable,
    StronglyUnstable,
    Indeterminate,
}

#[derive(Clone, Debug)]
pub struct InviscidResolution {
    /// Transverse directions on the sphere (d ≥ 3) or ±1 (d = 2).
    pub directions: usize,
    /// Initial contour samples per piece.
    pub per_piece: usize,
    /// Boundary scan points on `τ ∈ [−R, R]`.
    pub boundary_points: usize,
}

impl Default for InviscidResolution {
    fn default() -> Self {
        InviscidResolution {
            directions: 8,
            per_piece: 24,
            boundary_points: 401,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TracePoint {
    pub xi_t: Vec<f64>,
    pub lambda: (f64, f64),
    pub value: (f64, f64),
    pub cumulative_arg: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct InviscidReport {
    pub verdict: InviscidVerdict,
    pub delta: f64,
    pub windings: Vec<(Vec<f64>, i64)>,
    /// `(ξ̃, τ, |Δ|/max|Δ|)` for each located boundary root.
    pub boundary_roots: Vec<(Vec<f64>, f64, f64)>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub traces: Vec<TracePoint>,
}

fn contour_radius(model: &dyn ModelSystem, shock: &ShockData, w: &[f64]) -> Result<f64> {
    let mut r: f64 = 1.0;
    for side in [Side::Minus, Side::Plus] {
        let m = ibvp_symbol(model, shock, side, w, Complex64::new(0.0, 0.0))?;
        let (_, a1) = endstate_a1(model, shock, side)?;
        r = r.max(crate::linalg::max_abs(&m) * a1.abs().max() * model.n() as f64);
    }
    Ok(10.0 * r)
}

pub fn inviscid_verdict(
    model: &dyn ModelSystem,
    shock: &ShockData,
    res: &InviscidResolution,
) -> Result<InviscidReport> {
    let delta = liu_majda(model, shock)?;
    let jump = shock.jump().norm();
    let mut notes = Vec::new();
    let mut windings = Vec::new();
    let mut roots = Vec::new();
    let mut traces = Vec::new();
    let mut indeterminate = false;
    let d = model.d();
    if delta.abs() <= 1e-10 * jump.powi(model.n() as i32).max(1e-300) {
        notes.push("Liu-Majda determinant vanishes: Δ(0, λ) ≡ 0".into());
        return Ok(InviscidReport {
            verdict: InviscidVerdict::StronglyUnstable,
            delta,
            windings,
            boundary_roots: roots,
            notes,
            traces,
        });
    }
    if d >= 2 {
        let dirs: Vec<Vec<f64>> = if d == 2 {
            vec![vec![1.0], vec![-1.0]]
        } else {
            sphere_grid(d - 1, res.directions)
        };
        for w in dirs {
            let big_r = contour_radius(model, shock, &w)?;
            let eps = 1e-6 * big_r;
            let contour = Contour::half_disk(eps, big_r);
            let f = |z: Complex64| lopatinski(model, shock, &w, z);
            let opts = WindingOptions {
                per_piece: res.per_piece,
                abs_tol: 1e-12 * big_r * jump,
                max_depth: 30,
            };
            match winding_number(&f, &contour, &opts) {
                Ok(wr) => {
                    for s in &wr.samples {
                        traces.push(TracePoint {
                            xi_t: w.clone(),
                            lambda: (s.0.re, s.0.im),
                            value: (s.1.re, s.1.im),
                            cumulative_arg: s.2,
                        });
                    }
                    windings.push((w.clone(), wr.winding));
                }
                Err(e) => {
                    notes.push(format!("winding at ξ̃ = {w:?}: {e}"));
                    indeterminate = true;
                    continue;
                }
            }
            // Boundary scan along λ = iτ.
            let np = res.boundary_points.max(3) | 1;
            let taus: Vec<f64> = (0..np)
                .map(|i| -big_r + 2.0 * big_r * i as f64 / (np - 1) as f64)
                .collect();
            let vals: Vec<Option<f64>> = taus
                .par_iter()
                .map(|&t| {
                    lopatinski(model, shock, &w, Complex64::new(0.0, t))
                        .ok()
                        .map(|z| z.norm())
                })
                .collect();
            let vmax = vals.iter().flatten().fold(0.0f64, |m, &v| m.max(v));
            let refused = vals.iter().filter(|v| v.is_none()).count();
            if refused > 0 {
                notes.push(format!(
                    "{refused} boundary points at ξ̃ = {w:?} refused (glancing)"
                ));
            }
            for i in 0..np {
                let Some(v) = vals[i] else { continue };
                let left = if i > 0 { vals[i - 1] } else { None };
                let right = if i + 1 < np { vals[i + 1] } else { None };
                let is_min = left.map_or(true, |l| v <= l) && right.map_or(true, |r| v < r);
                if !is_min {
                    continue;
                }
                let h = 2.0 * big_r / (np - 1) as f64;
                let g = |t: f64| {
                    lopatinski(model, shock, &w, Complex64::new(0.0, t))
                        .map(|z| z.norm())
                        .unwrap_or(f64::INFINITY)
                };
                let (t, fv) = golden_min(g, taus[i] - h, taus[i] + h, v, taus[i]);
                if fv <= 1e-7 * vmax {
                    roots.push((w.clone(), t, fv / vmax));
                }
            }
        }
    }
    let verdict = if windings.iter().any(|w| w.1 != 0) {
        InviscidVerdict::StronglyUnstable
    } else if indeterminate {
        InviscidVerdict::Indeterminate
    } else if !roots.is_empty() {
        notes.push("boundary roots of Δ: weak Lopatinski condition only".into());
        InviscidVerdict::WeaklyStable
    } else {
        InviscidVerdict::StronglyStable
    };
    Ok(InviscidReport {
        verdict,
        delta,
        windings,
        boundary_roots: roots,
        notes,
        traces,
    })
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, f0: f64, x0: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let (x, v) = if fc < fd { (c, fc) } else { (d, fd) };
    if v < f0 {
        (x, v)
    } else {
        (x0, f0)
    }
}
