//! Evans function of the linearized traveling-wave problem, winding-number
//! root counts, the low-frequency expansion `D ≈ γΔ`, the refined
//! coefficient β, and the glancing-point Jordan-block predictions.

use crate::inviscid::{
    continue_frames_tracked, lopatinski, stable_selector, unstable_selector, GlancingPoint,
    MatrixPath, Selector,
};
use crate::linalg::{
    eigenvalues, fd_weights, inverse, inverse_r, linear_fit, null_space, orthonormalize,
    projector_basis, richardson, riesz_projector, sigma_min, to_complex, CMat, RMat, RVec, I,
};
use crate::model::{flux_jacobian, symbol_b, ModelSystem, ShockData};
use crate::ode::{dopri5, Control, OdeOptions};
use crate::profile::Profile;
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

// ---------------------------------------------------------------------------
// Contours and winding numbers

#[derive(Clone, Debug)]
pub enum Piece {
    Segment(Complex64, Complex64),
    Arc {
        center: Complex64,
        radius: f64,
        from: f64,
        to: f64,
    },
}

impl Piece {
    fn at(&self, u: f64) -> Complex64 {
        match *self {
            Piece::Segment(a, b) => a + (b - a) * u,
            Piece::Arc {
                center,
                radius,
                from,
                to,
            } => center + Complex64::from_polar(radius, from + (to - from) * u),
        }
    }
}

/// A closed, counterclockwise piecewise contour.
#[derive(Clone, Debug)]
pub struct Contour {
    pub pieces: Vec<Piece>,
}

impl Contour {
    pub fn circle(center: Complex64, r: f64) -> Self {
        Contour {
            pieces: vec![Piece::Arc {
                center,
                radius: r,
                from: 0.0,
                to: 2.0 * PI,
            }],
        }
    }

    /// Boundary of `{Re λ ≥ shift, |λ − shift| ≤ R}`.
    pub fn half_disk(shift: f64, big_r: f64) -> Self {
        let c = Complex64::new(shift, 0.0);
        Contour {
            pieces: vec![
                Piece::Arc {
                    center: c,
                    radius: big_r,
                    from: -PI / 2.0,
                    to: PI / 2.0,
                },
                Piece::Segment(c + I * big_r, c),
                Piece::Segment(c, c - I * big_r),
            ],
        }
    }

    /// Boundary of `{Re λ ≥ 0, r ≤ |λ| ≤ R}`.
    pub fn indented_half_disk(r: f64, big_r: f64) -> Self {
        let z = Complex64::new(0.0, 0.0);
        Contour {
            pieces: vec![
                Piece::Arc {
                    center: z,
                    radius: big_r,
                    from: -PI / 2.0,
                    to: PI / 2.0,
                },
                Piece::Segment(I * big_r, I * r),
                Piece::Arc {
                    center: z,
                    radius: r,
                    from: PI / 2.0,
                    to: -PI / 2.0,
                },
                Piece::Segment(-I * r, -I * big_r),
            ],
        }
    }

    pub fn at(&self, s: f64) -> Complex64 {
        let np = self.pieces.len();
        let k = (s.floor() as usize).min(np - 1);
        self.pieces[k].at(s - k as f64)
    }
}

#[derive(Clone, Debug)]
pub struct WindingOptions {
    pub per_piece: usize,
    pub max_depth: usize,
    /// `|f|` below this on the contour counts as passing through a root.
    pub abs_tol: f64,
}

impl Default for WindingOptions {
    fn default() -> Self {
        WindingOptions {
            per_piece: 32,
            max_depth: 14,
            abs_tol: 1e-14,
        }
    }
}

#[derive(Clone, Debug)]
pub struct WindingResult {
    pub winding: i64,
    /// `(z, f(z), cumulative arg)` along the contour.
    pub samples: Vec<(Complex64, Complex64, f64)>,
    pub min_abs: f64,
    pub max_abs: f64,
}

/// Argument-principle count with adaptive refinement keeping each
/// increment of `arg f` below `π/2`.
pub fn winding_number<F>(f: &F, contour: &Contour, opts: &WindingOptions) -> Result<WindingResult>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    let np = contour.pieces.len();
    let m = opts.per_piece.max(2);
    let mut params: Vec<f64> = (0..np * m).map(|i| i as f64 / m as f64).collect();
    let mut vals: Vec<Complex64> = params
        .par_iter()
        .map(|&s| f(contour.at(s)))
        .collect::<Result<Vec<_>>>()?;
    let total = np as f64;
    let mut depth_of = vec![0usize; params.len()];
    loop {
        let len = params.len();
        let mut bad = Vec::new();
        for i in 0..len {
            let j = (i + 1) % len;
            let ratio = vals[j] / vals[i];
            if ratio.arg().abs() >= PI / 2.0 {
                bad.push(i);
            }
        }
        if bad.is_empty() {
            break;
        }
        if bad.iter().any(|&i| depth_of[i] >= opts.max_depth) {
            let i = bad[0];
            let z = contour.at(params[i]);
            return Err(Error::Indeterminate(format!(
                "argument increment unresolved near λ = {:.6e}{:+.6e}i after {} refinements",
                z.re, z.im, opts.max_depth
            )));
        }
        let mids: Vec<f64> = bad
            .iter()
            .map(|&i| {
                let a = params[i];
                let b = if i + 1 == len { total } else { params[i + 1] };
                0.5 * (a + b)
            })
            .collect();
        let new_vals: Vec<Complex64> = mids
            .par_iter()
            .map(|&s| f(contour.at(s)))
            .collect::<Result<Vec<_>>>()?;
        let mut p2 = Vec::with_capacity(len + bad.len());
        let mut v2 = Vec::with_capacity(len + bad.len());
        let mut d2 = Vec::with_capacity(len + bad.len());
        let mut k = 0;
        for i in 0..len {
            p2.push(params[i]);
            v2.push(vals[i]);
            d2.push(depth_of[i]);
            if k < bad.len() && bad[k] == i {
                p2.push(mids[k]);
                v2.push(new_vals[k]);
                d2.push(depth_of[i] + 1);
                let l = d2.len();
                d2[l - 2] = depth_of[i] + 1;
                k += 1;
            }
        }
        params = p2;
        vals = v2;
        depth_of = d2;
    }
    let mut min_abs = f64::INFINITY;
    let mut max_abs: f64 = 0.0;
    let mut imin = 0;
    for (i, v) in vals.iter().enumerate() {
        if v.norm() < min_abs {
            min_abs = v.norm();
            imin = i;
        }
        max_abs = max_abs.max(v.norm());
    }
    if min_abs <= opts.abs_tol {
        let z = contour.at(params[imin]);
        return Err(Error::ThroughRoot {
            re: z.re,
            im: z.im,
            abs: min_abs,
        });
    }
    let mut cum = 0.0;
    let mut samples = Vec::with_capacity(vals.len() + 1);
    for i in 0..vals.len() {
        samples.push((contour.at(params[i]), vals[i], cum));
        let j = (i + 1) % vals.len();
        cum += (vals[j] / vals[i]).arg();
    }
    samples.push((contour.at(0.0), vals[0], cum));
    let w = cum / (2.0 * PI);
    Ok(WindingResult {
        winding: w.round() as i64,
        samples,
        min_abs,
        max_abs,
    })
}

// ---------------------------------------------------------------------------
// Spectral ODE in flux coordinates
//
// Unknowns X = (Φ, y): Φ = B¹¹U′ + dB¹¹[U]Ū′ + iB^{1ξ̃}U − A¹U is the
// normal flux of the perturbation and y its parabolic component in
// natural coordinates, so that Φ′ = 0 at (ξ̃, λ) = 0.

#[derive(Clone, Debug)]
struct Node {
    a: Vec<RMat>,
    b: Vec<Vec<RMat>>,
    /// `dB^{j1}[·]Ū′` for each `j`.
    db: Vec<RMat>,
    k: RMat,
    g: RMat,
    t: RMat,
    tpk: RMat,
    y0: RMat,
    bhat_inv: RMat,
    alpha11_inv: RMat,
    alpha12: RMat,
    a11p: RMat,
    a12p: RMat,
}

fn directional<F>(u: &RVec, dir: &RVec, mut f: F) -> Result<RMat>
where
    F: FnMut(&RVec) -> Result<RMat>,
{
    let nd = dir.norm();
    if nd == 0.0 {
        let z = f(u)?;
        return Ok(RMat::zeros(z.nrows(), z.ncols()));
    }
    let h = f64::EPSILON.cbrt() * (1.0 + u.norm()) / nd;
    let p = f(&(u + dir * h))?;
    let m = f(&(u - dir * h))?;
    Ok((p - m) / (2.0 * h))
}

fn build_node(model: &dyn ModelSystem, u: &RVec, up: &RVec) -> Result<Node> {
    let n = model.n();
    let r = model.r();
    let m = n - r;
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
        let mut mat = RMat::zeros(n, n);
        if up.norm() > 0.0 {
            for i in 0..n {
                let mut e = RVec::zeros(n);
                e[i] = 1.0;
                let dbi = directional(u, &e, |v| model.viscosity(j, 0, v))?;
                mat.set_column(i, &(dbi * up));
            }
        }
        db.push(mat);
    }
    let t = model.natural_jacobian(u)?;
    let tp = directional(u, up, |v| model.natural_jacobian(v))?;
    let a1p = directional(u, up, |v| flux_jacobian(model, v, 0))?;
    let alpha = &a[0] * &t;
    let alphap = &a1p * &t + &a[0] * &tp;
    let alpha11_inv = if m > 0 {
        inverse_r(&alpha.view((0, 0), (m, m)).into_owned()).ok_or_else(|| Error::Hypothesis {
            hyp: "H1".into(),
            msg: "A¹₁₁ singular along the profile".into(),
        })?
    } else {
        RMat::zeros(0, 0)
    };
    let alpha12 = alpha.view((0, m), (m, r)).into_owned();
    let bt = &b[0][0] * &t;
    let bhat_inv =
        inverse_r(&bt.view((m, m), (r, r)).into_owned()).ok_or_else(|| Error::Hypothesis {
            hyp: "A1".into(),
            msg: "B¹¹ parabolic block singular".into(),
        })?;
    // W = K X
    let mut k = RMat::zeros(n, n + r);
    if m > 0 {
        k.view_mut((0, 0), (m, m)).copy_from(&(-&alpha11_inv));
        k.view_mut((0, n), (m, r))
            .copy_from(&(-&alpha11_inv * &alpha12));
    }
    k.view_mut((m, n), (r, r)).copy_from(&RMat::identity(r, r));
    let g = &t * &k;
    let tpk = &tp * &k;
    let mut s2 = RMat::zeros(r, n + r);
    s2.view_mut((0, m), (r, r)).copy_from(&RMat::identity(r, r));
    let inner = &b[0][0] * &tpk + &db[0] * &g - &a[0] * &g;
    let y0 = &bhat_inv * (s2 - inner.view((m, 0), (r, n + r)));
    Ok(Node {
        a,
        b,
        db,
        k,
        g,
        t,
        tpk,
        y0,
        bhat_inv,
        alpha11_inv,
        alpha12,
        a11p: alphap.view((0, 0), (m, m)).into_owned(),
        a12p: alphap.view((0, m), (m, r)).into_owned(),
    })
}

fn assemble(node: &Node, n: usize, r: usize, xi_t: &[f64], lambda: Complex64) -> CMat {
    let m = n - r;
    let c = to_complex;
    let mut axi = RMat::zeros(n, n);
    let mut b1x = RMat::zeros(n, n);
    let mut bx1 = RMat::zeros(n, n);
    let mut bxx = RMat::zeros(n, n);
    let mut dbx1 = RMat::zeros(n, n);
    for (j, &x) in xi_t.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        axi += &node.a[j + 1] * x;
        b1x += &node.b[0][j + 1] * x;
        bx1 += &node.b[j + 1][0] * x;
        dbx1 += &node.db[j + 1] * x;
        for (k, &z) in xi_t.iter().enumerate() {
            bxx += &node.b[j + 1][k + 1] * (x * z);
        }
    }
    let g = c(&node.g);
    let id = CMat::identity(n, n);
    let lam_a = &id * lambda + c(&axi) * I;
    let lg = &lam_a * &g;
    // y′ = Y X
    let y = c(&node.y0) - c(&node.bhat_inv) * (c(&b1x) * &g).rows(m, r).into_owned() * I;
    // W′ = [V; Y] X
    let mut wp = CMat::zeros(n, n + r);
    if m > 0 {
        let h1 = lg.rows(0, m).into_owned();
        let mut sy = CMat::zeros(r, n + r);
        sy.view_mut((0, n), (r, r)).fill_with_identity();
        let ki = c(&node.k).rows(0, m).into_owned();
        let v = -(c(&node.alpha11_inv))
            * (h1 + c(&node.a11p) * ki + c(&node.a12p) * sy + c(&node.alpha12) * &y);
        wp.rows_mut(0, m).copy_from(&v);
    }
    wp.rows_mut(m, r).copy_from(&y);
    let upm = c(&node.t) * wp + c(&node.tpk);
    let phip = lg - c(&bx1) * upm * I - c(&dbx1) * &g * I + c(&bxx) * &g;
    let mut out = CMat::zeros(n + r, n + r);
    out.rows_mut(0, n).copy_from(&phip);
    out.rows_mut(n, r).copy_from(&y);
    out
}

#[derive(Clone, Debug)]
pub struct EvansOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Re-orthonormalize every this many accepted steps.
    pub restart_every: usize,
    pub frame_rtol: f64,
}

impl Default for EvansOptions {
    fn default() -> Self {
        EvansOptions {
            rtol: 1e-11,
            atol: 1e-14,
            restart_every: 1,
            frame_rtol: 1e-11,
        }
    }
}

/// The spectral ODE about a profile, with per-node coefficient data.
pub struct EvansSystem<'a> {
    pub model: &'a dyn ModelSystem,
    pub shock: &'a ShockData,
    pub n: usize,
    pub r: usize,
    pub d: usize,
    xs: Vec<f64>,
    nodes: Vec<Node>,
    minus: Node,
    plus: Node,
    stencils: Vec<(usize, Vec<f64>)>,
    /// Unstable dimension at −∞ and stable dimension at +∞.
    pub dims: (usize, usize),
    pub opts: EvansOptions,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvansValue {
    pub d: (f64, f64),
    /// Accumulated `log det R` from re-orthonormalization.
    pub log_correction: (f64, f64),
    /// Smallest singular value of the orthonormal frames at `x = 0`.
    pub conditioning: f64,
}

impl EvansValue {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.d.0, self.d.1)
    }
}

struct EndPath<'b> {
    node: &'b Node,
    n: usize,
    r: usize,
    xi: Vec<f64>,
    lambda: Complex64,
}

impl MatrixPath for EndPath<'_> {
    fn at(&self, t: f64) -> (CMat, CMat) {
        let f = |t: f64| {
            let xi: Vec<f64> = self.xi.iter().map(|x| x * t).collect();
            assemble(
                self.node,
                self.n,
                self.r,
                &xi,
                Complex64::new(1.0, 0.0) + (self.lambda - 1.0) * t,
            )
        };
        // The coefficient is quadratic in t, so this difference is exact.
        (f(t), (f(t + 0.5) - f(t - 0.5)))
    }
}

impl<'a> EvansSystem<'a> {
    pub fn new(
        model: &'a dyn ModelSystem,
        shock: &'a ShockData,
        profile: &Profile,
        opts: EvansOptions,
    ) -> Result<Self> {
        let f = shock.framed(model);
        let n = model.n();
        let r = model.r();
        let d = model.d();
        let nodes: Vec<Node> = profile
            .u
            .par_iter()
            .zip(profile.up.par_iter())
            .map(|(u, up)| build_node(&f, u, up))
            .collect::<Result<_>>()?;
        let zero = RVec::zeros(n);
        let minus = build_node(&f, &shock.um(), &zero)?;
        let plus = build_node(&f, &shock.up(), &zero)?;
        let xs = profile.x.clone();
        let nn = xs.len();
        let stencils = (0..nn)
            .map(|i| {
                let lo = i.saturating_sub(2).min(nn - 5);
                let w = fd_weights(xs[i], &xs[lo..lo + 5], 1);
                (lo, w[1].clone())
            })
            .collect();
        let mut sys = EvansSystem {
            model,
            shock,
            n,
            r,
            d,
            xs,
            nodes,
            minus,
            plus,
            stencils,
            dims: (0, 0),
            opts,
        };
        let am = assemble(
            &sys.minus,
            n,
            r,
            &vec![0.0; d - 1],
            Complex64::new(1.0, 0.0),
        );
        let ap = assemble(&sys.plus, n, r, &vec![0.0; d - 1], Complex64::new(1.0, 0.0));
        let um = eigenvalues(&am).iter().filter(|z| z.re > 0.0).count();
        let sp = eigenvalues(&ap).iter().filter(|z| z.re < 0.0).count();
        if um + sp != n + r {
            return Err(Error::Hypothesis {
                hyp: "Lax".into(),
                msg: format!("decaying dimensions {um} + {sp} do not add up to {}", n + r),
            });
        }
        sys.dims = (um, sp);
        Ok(sys)
    }

    pub fn length(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    /// Coefficient matrix at the endstates.
    pub fn asymptotic(&self, plus: bool, xi_t: &[f64], lambda: Complex64) -> CMat {
        assemble(
            if plus { &self.plus } else { &self.minus },
            self.n,
            self.r,
            xi_t,
            lambda,
        )
    }

    /// Coefficient matrix at profile node `i`.
    pub fn node_matrix(&self, i: usize, xi_t: &[f64], lambda: Complex64) -> CMat {
        assemble(&self.nodes[i], self.n, self.r, xi_t, lambda)
    }

    pub fn nodes_x(&self) -> &[f64] {
        &self.xs
    }

    fn end_frame(
        &self,
        plus: bool,
        xi_t: &[f64],
        lambda: Complex64,
        opts: &EvansOptions,
    ) -> Result<CMat> {
        let node = if plus { &self.plus } else { &self.minus };
        let k = if plus { self.dims.1 } else { self.dims.0 };
        let path = EndPath {
            node,
            n: self.n,
            r: self.r,
            xi: xi_t.to_vec(),
            lambda,
        };
        let (m0, _) = path.at(0.0);
        let e = eigenvalues(&m0);
        let followed: Vec<bool> = e
            .iter()
            .map(|z| if plus { z.re < 0.0 } else { z.re > 0.0 })
            .collect();
        let (p, _) =
            riesz_projector(&m0, &e, &followed, None).map_err(|g| Error::Continuation {
                t: 0.0,
                msg: format!("anchor gap {:.2e}", g.gap),
            })?;
        let r0 = projector_basis(&p, k);
        let sel: &Selector = if plus {
            &stable_selector
        } else {
            &unstable_selector
        };
        Ok(continue_frames_tracked(&path, &r0, sel, opts.frame_rtol)?.frame)
    }

    fn integrate(
        &self,
        frame: CMat,
        from: f64,
        coeffs: &[CMat],
        derivs: &[CMat],
        eo: &EvansOptions,
    ) -> Result<(CMat, Complex64)> {
        let xs = &self.xs;
        let nn = xs.len();
        let rhs = |x: f64, w: &CMat| -> std::result::Result<CMat, String> {
            let i = xs
                .partition_point(|&v| v <= x)
                .saturating_sub(1)
                .min(nn - 2);
            let h = xs[i + 1] - xs[i];
            let t = ((x - xs[i]) / h).clamp(0.0, 1.0);
            let t2 = t * t;
            let t3 = t2 * t;
            let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
            let h10 = t3 - 2.0 * t2 + t;
            let h01 = -2.0 * t3 + 3.0 * t2;
            let h11 = t3 - t2;
            let a = &coeffs[i] * Complex64::new(h00, 0.0)
                + &derivs[i] * Complex64::new(h * h10, 0.0)
                + &coeffs[i + 1] * Complex64::new(h01, 0.0)
                + &derivs[i + 1] * Complex64::new(h * h11, 0.0);
            Ok(a * w)
        };
        let mut logdet = Complex64::new(0.0, 0.0);
        let mut count = 0usize;
        let every = eo.restart_every.max(1);
        let opts = OdeOptions {
            rtol: eo.rtol,
            atol: eo.atol,
            h0: 1e-2,
            h_max: 8.0,
            h_min: 1e-12,
            max_steps: 1_000_000,
        };
        let (_, w) = dopri5(rhs, from, frame, 0.0, &[], &opts, |_, w| {
            count += 1;
            if count % every == 0 {
                let (q, ld) = orthonormalize(w);
                logdet += ld;
                *w = q;
                Control::Modified
            } else {
                Control::Continue
            }
        })?;
        let (q, ld) = orthonormalize(&w);
        Ok((q, logdet + ld))
    }

    /// `D(ξ̃, λ)`; the origin is reached as a limit along `λ ↓ 0`.
    pub fn evans(&self, xi_t: &[f64], lambda: Complex64) -> Result<EvansValue> {
        self.evans_with(xi_t, lambda, &self.opts)
    }

    /// As [`EvansSystem::evans`] with explicit tolerances.
    pub fn evans_with(
        &self,
        xi_t: &[f64],
        lambda: Complex64,
        opts: &EvansOptions,
    ) -> Result<EvansValue> {
        if lambda.norm() == 0.0 && xi_t.iter().all(|&x| x == 0.0) {
            let eps: Vec<f64> = (0..5).map(|k| 1e-3 / 2f64.powi(k)).collect();
            let vals: Vec<EvansValue> = eps
                .par_iter()
                .map(|&e| self.evans_with(xi_t, Complex64::new(e, 0.0), opts))
                .collect::<Result<_>>()?;
            let (best, _) = richardson(&vals.iter().map(|v| v.value()).collect::<Vec<_>>());
            let v = &vals[vals.len() - 1];
            return Ok(EvansValue {
                d: (best.re, best.im),
                log_correction: v.log_correction,
                conditioning: v.conditioning,
            });
        }
        let nn = self.xs.len();
        let coeffs: Vec<CMat> = self
            .nodes
            .iter()
            .map(|nd| assemble(nd, self.n, self.r, xi_t, lambda))
            .collect();
        let derivs: Vec<CMat> = (0..nn)
            .map(|i| {
                let (lo, w) = &self.stencils[i];
                let mut acc = CMat::zeros(self.n + self.r, self.n + self.r);
                for (k, wk) in w.iter().enumerate() {
                    acc += &coeffs[lo + k] * Complex64::new(*wk, 0.0);
                }
                acc
            })
            .collect();
        let fm = self.end_frame(false, xi_t, lambda, opts)?;
        let fp = self.end_frame(true, xi_t, lambda, opts)?;
        // Data at ∓L are e^{𝔸±(∓L)} applied to the frames.
        let growth = |plus: bool, f: &CMat| -> Complex64 {
            let a = self.asymptotic(plus, xi_t, lambda);
            let g = f.adjoint() * f;
            match g.clone().lu().solve(&(f.adjoint() * a * f)) {
                Some(m) => m.trace(),
                None => Complex64::new(0.0, 0.0),
            }
        };
        let (x0, x1) = (self.xs[0], self.xs[nn - 1]);
        let (qm, lm) = self.integrate(fm.clone(), x0, &coeffs, &derivs, opts)?;
        let (qp, lp) = self.integrate(fp.clone(), x1, &coeffs, &derivs, opts)?;
        let lm = lm + growth(false, &fm) * x0;
        let lp = lp + growth(true, &fp) * x1;
        let nr = self.n + self.r;
        let mut mat = CMat::zeros(nr, nr);
        mat.columns_mut(0, qm.ncols()).copy_from(&qm);
        mat.columns_mut(qm.ncols(), qp.ncols()).copy_from(&qp);
        let det = mat.determinant();
        let logc = lm + lp;
        let d = det * logc.exp();
        Ok(EvansValue {
            d: (d.re, d.im),
            log_correction: (logc.re, logc.im),
            conditioning: sigma_min(&mat),
        })
    }

    pub fn value(&self, xi_t: &[f64], lambda: Complex64) -> Result<Complex64> {
        Ok(self.evans(xi_t, lambda)?.value())
    }
}

// ---------------------------------------------------------------------------
// Verdicts

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
pub enum SpectralVerdict {
    StronglyStable,
    StronglyUnstable,
    /// Roots on the imaginary axis but none inside.
    WeaklyOnly,
    Indeterminate,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    pub verdict: SpectralVerdict,
    pub windings: Vec<(Vec<f64>, i64)>,
    pub notes: Vec<String>,
    pub inner_radius: f64,
    pub outer_radius: f64,
    #[serde(skip)]
    pub traces: Vec<(Vec<f64>, Complex64, Complex64, f64)>,
}

/// Winding counts over the indented half-disk for each transverse sample.
pub fn spectral_verdict_with<F>(
    eval: &F,
    xi_samples: &[Vec<f64>],
    r: f64,
    big_r: f64,
    opts: &WindingOptions,
) -> SpectralReport
where
    F: Fn(&[f64], Complex64) -> Result<Complex64> + Sync,
{
    let contour = Contour::indented_half_disk(r, big_r);
    let mut windings = Vec::new();
    let mut notes = Vec::new();
    let mut traces = Vec::new();
    let mut through = false;
    let mut indeterminate = false;
    for xi in xi_samples {
        let f = |z: Complex64| eval(xi, z);
        match winding_number(&f, &contour, opts) {
            Ok(w) => {
                for s in &w.samples {
                    traces.push((xi.clone(), s.0, s.1, s.2));
                }
                windings.push((xi.clone(), w.winding));
            }
            Err(Error::ThroughRoot { re, im, abs }) => {
                notes.push(format!(
                    "ξ̃ = {xi:?}: root on the contour near {re:.4e}{im:+.4e}i (|D| = {abs:.2e})"
                ));
                if re.abs() < 1e-12 * big_r {
                    through = true;
                } else {
                    indeterminate = true;
                }
            }
            Err(e) => {
                notes.push(format!("ξ̃ = {xi:?}: {e}"));
                indeterminate = true;
            }
        }
    }
    let verdict = if windings.iter().any(|w| w.1 != 0) {
        SpectralVerdict::StronglyUnstable
    } else if indeterminate {
        SpectralVerdict::Indeterminate
    } else if through {
        SpectralVerdict::WeaklyOnly
    } else {
        SpectralVerdict::StronglyStable
    };
    SpectralReport {
        verdict,
        windings,
        notes,
        inner_radius: r,
        outer_radius: big_r,
        traces,
    }
}

pub fn spectral_verdict(
    sys: &EvansSystem,
    xi_samples: &[Vec<f64>],
    r: f64,
    big_r: f64,
    opts: &WindingOptions,
) -> SpectralReport {
    let eval = |xi: &[f64], z: Complex64| sys.value(xi, z);
    spectral_verdict_with(&eval, xi_samples, r, big_r, opts)
}

// ---------------------------------------------------------------------------
// Low-frequency expansion

#[derive(Clone, Debug, Serialize)]
pub struct LowFreqExpansion {
    pub xi: Vec<f64>,
    pub lambda: (f64, f64),
    pub ell: i64,
    pub slope: f64,
    pub dbar: (f64, f64),
    pub delta: (f64, f64),
    pub gamma: (f64, f64),
    /// Richardson error of `Δ̄` plus the propagated evaluation error,
    /// relative to `|Δ̄|`.
    pub extrapolation_error: f64,
    /// `(ρ, |ρ^{−ℓ}D − γΔ|)`.
    pub remainder: Vec<(f64, f64)>,
    pub remainder_slope: f64,
}

impl LowFreqExpansion {
    pub fn gamma(&self) -> Complex64 {
        Complex64::new(self.gamma.0, self.gamma.1)
    }
}

/// Halving sequence `ρ₀, ρ₀/2, …` used for the extrapolation.
pub fn halving(rho0: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| rho0 / 2f64.powi(i as i32)).collect()
}

#[derive(Clone, Debug)]
pub struct LowFreqOptions {
    /// Largest radius of the halving sequence used for extrapolation.
    pub rho0: f64,
    pub levels: usize,
}

impl Default for LowFreqOptions {
    fn default() -> Self {
        LowFreqOptions {
            rho0: 1e-2,
            levels: 5,
        }
    }
}

pub fn low_freq_expand(
    sys: &EvansSystem,
    xi0: &[f64],
    lam0: Complex64,
    rho_grid: &[f64],
    lo: &LowFreqOptions,
) -> Result<LowFreqExpansion> {
    let rich = halving(lo.rho0, lo.levels.max(2));
    let mut all: Vec<f64> = rich.clone();
    for &r in rho_grid {
        if !all.iter().any(|&x| (x - r).abs() <= 1e-15 * r) {
            all.push(r);
        }
    }
    let at =
        |rho: f64| -> (Vec<f64>, Complex64) { (xi0.iter().map(|x| x * rho).collect(), lam0 * rho) };
    let vals: Vec<Complex64> = all
        .par_iter()
        .map(|&rho| {
            let (xi, l) = at(rho);
            sys.value(&xi, l)
        })
        .collect::<Result<_>>()?;
    // Evaluation error from a tenfold looser tolerance at the smallest
    // extrapolation radius.
    let rmin = rich[rich.len() - 1];
    let loose = EvansOptions {
        rtol: sys.opts.rtol * 10.0,
        frame_rtol: sys.opts.frame_rtol * 10.0,
        ..sys.opts.clone()
    };
    let (xi, l) = at(rmin);
    let d_loose = sys.evans_with(&xi, l, &loose)?.value();
    let eval_err = (d_loose - vals[rich.len() - 1]).norm() / 9.0;
    // Vanishing order from the three smallest radii.
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.sort_by(|&a, &b| all[a].partial_cmp(&all[b]).unwrap());
    let lx: Vec<f64> = order[..3].iter().map(|&i| all[i].ln()).collect();
    let ly: Vec<f64> = order[..3].iter().map(|&i| vals[i].norm().ln()).collect();
    let (_, slope, _) = linear_fit(&lx, &ly);
    let ell = slope.round() as i64;
    if (slope - ell as f64).abs() > 0.05 || ell < 0 {
        return Err(Error::Inconsistent(format!(
            "vanishing order slope {slope:.4} is not an integer"
        )));
    }
    let g: Vec<Complex64> = vals
        .iter()
        .zip(&all)
        .map(|(v, r)| v / r.powi(ell as i32))
        .collect();
    let (dbar, err) = richardson(&g[..rich.len()]);
    // Evaluation noise passes through the tableau weighted by the l1 norm
    // of its combination coefficients.
    let amp: f64 = (0..rich.len())
        .map(|k| {
            let mut e = vec![Complex64::new(0.0, 0.0); rich.len()];
            e[k] = Complex64::new(1.0, 0.0);
            richardson(&e).0.norm()
        })
        .sum();
    let delta = lopatinski(sys.model, sys.shock, xi0, lam0)?;
    let gamma = dbar / delta;
    let mut remainder = Vec::new();
    for (i, &r) in all.iter().enumerate() {
        if rho_grid.iter().any(|&x| (x - r).abs() <= 1e-15 * r) {
            remainder.push((r, (g[i] - gamma * delta).norm()));
        }
    }
    let remainder_slope = if remainder.len() >= 2 {
        let x: Vec<f64> = remainder.iter().map(|p| p.0.ln()).collect();
        let y: Vec<f64> = remainder.iter().map(|p| p.1.ln()).collect();
        linear_fit(&x, &y).1
    } else {
        f64::NAN
    };
    Ok(LowFreqExpansion {
        xi: xi0.to_vec(),
        lambda: (lam0.re, lam0.im),
        ell,
        slope,
        dbar: (dbar.re, dbar.im),
        delta: (delta.re, delta.im),
        gamma: (gamma.re, gamma.im),
        extrapolation_error: (err + amp * eval_err / rmin.powi(ell as i32))
            / dbar.norm().max(1e-300),
        remainder,
        remainder_slope,
    })
}

// ---------------------------------------------------------------------------
// Refined coefficient β

#[derive(Clone, Debug, Serialize)]
pub struct BetaEstimate {
    pub xi: Vec<f64>,
    pub tau: f64,
    pub beta: (f64, f64),
    pub beta_tracking: (f64, f64),
    pub relative_disagreement: f64,
    pub reliable: bool,
}

impl BetaEstimate {
    pub fn beta(&self) -> Complex64 {
        Complex64::new(self.beta.0, self.beta.1)
    }
}

/// Polynomial interpolation through `(x_k, y_k)`; returns the coefficient
/// of `x^p`.
fn poly_coefficient(xs: &[f64], ys: &[Complex64], p: usize) -> Complex64 {
    let n = xs.len();
    let mut v = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            v[(i, j)] = Complex64::new(xs[i].powi(j as i32), 0.0);
        }
    }
    let rhs = crate::linalg::CVec::from_vec(ys.to_vec());
    let sol = v
        .lu()
        .solve(&rhs)
        .unwrap_or_else(|| crate::linalg::CVec::zeros(n));
    sol[p]
}

/// β at a boundary root `Δ(ξ̃, iτ) = 0`, from differences of
/// `g(ρ, λ) = ρ^{-ℓ}D(ρξ̃, ρλ)`, cross-checked by tracking the root of `D`.
pub fn beta_coefficient(sys: &EvansSystem, xi: &[f64], tau: f64, ell: i64) -> Result<BetaEstimate> {
    let lam = Complex64::new(0.0, tau);
    let rhos = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
    let hl = 1e-4;
    let g = |rho: f64, l: Complex64| -> Result<Complex64> {
        let x: Vec<f64> = xi.iter().map(|v| v * rho).collect();
        Ok(sys.value(&x, l * rho)? / rho.powi(ell as i32))
    };
    let trip: Vec<(Complex64, Complex64, Complex64)> = rhos
        .par_iter()
        .map(|&r| Ok((g(r, lam)?, g(r, lam + I * hl)?, g(r, lam - I * hl)?)))
        .collect::<Result<_>>()?;
    let g0: Vec<Complex64> = trip.iter().map(|t| t.0).collect();
    let g_rho = poly_coefficient(&rhos, &g0, 1);
    let dl: Vec<Complex64> = trip
        .iter()
        .map(|t| (t.1 - t.2) / (I * (2.0 * hl)))
        .collect();
    let g_lam = poly_coefficient(&rhos, &dl, 0);
    if g_lam.norm() <= 1e-10 * g0.iter().map(|z| z.norm()).fold(1e-300, f64::max) {
        return Err(Error::Inconsistent(
            "Δ_λ vanishes at the boundary root".into(),
        ));
    }
    let beta = g_rho / g_lam;
    // Root tracking: λ*(ρ) = iρτ − βρ² + O(ρ³).
    let mut fits = Vec::new();
    let mut guess = lam * rhos[0] - beta * rhos[0] * rhos[0];
    for &rho in &rhos[..3] {
        let x: Vec<f64> = xi.iter().map(|v| v * rho).collect();
        let f = |l: Complex64| sys.value(&x, l);
        let mut z0 = if fits.is_empty() {
            guess
        } else {
            lam * rho - beta * rho * rho
        };
        let mut z1 = z0 + Complex64::new(1e-3 * rho * rho, 1e-3 * rho * rho);
        let mut f0 = f(z0)?;
        let mut f1 = f(z1)?;
        for _ in 0..40 {
            let dz = f1 * (z1 - z0) / (f1 - f0);
            z0 = z1;
            f0 = f1;
            z1 -= dz;
            if dz.norm() <= 1e-13 * rho {
                break;
            }
            f1 = f(z1)?;
        }
        guess = z1;
        fits.push((z1 - lam * rho) / (rho * rho));
    }
    // (λ* − iρτ)/ρ² = −β + cρ, Richardson in ρ.
    let (bt, _) = richardson(&fits);
    let beta_tracking = -bt;
    let dis = (beta - beta_tracking).norm() / beta.norm().max(1e-300);
    Ok(BetaEstimate {
        xi: xi.to_vec(),
        tau,
        beta: (beta.re, beta.im),
        beta_tracking: (beta_tracking.re, beta_tracking.im),
        relative_disagreement: dis,
        reliable: dis <= 0.05,
    })
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
pub enum RefinedVerdict {
    StrongRefined,
    WeakRefined,
    FailsRefined,
}

#[derive(Clone, Debug, Serialize)]
pub struct RefinedReport {
    pub verdict: RefinedVerdict,
    pub betas: Vec<BetaEstimate>,
    pub notes: Vec<String>,
}

/// Aggregate Re β over the boundary roots; frames at each root must be
/// independent (smallest singular value of the outgoing columns).
pub fn refined_verdict(
    betas: &[BetaEstimate],
    frame_sigmas: &[f64],
    excluded: &[String],
    tol: f64,
) -> RefinedReport {
    let mut notes: Vec<String> = excluded.iter().map(|s| format!("excluded: {s}")).collect();
    let mut verdict = RefinedVerdict::StrongRefined;
    for (i, b) in betas.iter().enumerate() {
        let sig = frame_sigmas.get(i).copied().unwrap_or(1.0);
        if sig <= tol {
            notes.push(format!("dependent outgoing frames at τ = {}", b.tau));
            verdict = RefinedVerdict::FailsRefined;
        }
        if !b.reliable {
            notes.push(format!(
                "β at τ = {} unreliable ({:.2}% disagreement)",
                b.tau,
                100.0 * b.relative_disagreement
            ));
        }
        if b.beta.0 < -tol {
            verdict = RefinedVerdict::FailsRefined;
        } else if b.beta.0 <= tol && verdict == RefinedVerdict::StrongRefined {
            verdict = RefinedVerdict::WeakRefined;
        }
    }
    if betas.is_empty() {
        notes.push("no boundary roots: condition holds vacuously".into());
    }
    RefinedReport {
        verdict,
        betas: betas.to_vec(),
        notes,
    }
}

// ---------------------------------------------------------------------------
// Glancing-point Jordan blocks

/// Eigenvalues of `i [[0, 1, …], …, [pσ − iqρ, 0, …, 0]]` (size s).
pub fn canonical_block_eigenvalues(
    s: usize,
    p: f64,
    q: f64,
    sigma: f64,
    rho: f64,
) -> Vec<Complex64> {
    let mut m = CMat::zeros(s, s);
    for k in 0..s - 1 {
        m[(k, k + 1)] = I;
    }
    m[(s - 1, 0)] = I * Complex64::new(p * sigma, -q * rho);
    if s == 1 {
        m[(0, 0)] = I * Complex64::new(p * sigma, -q * rho);
    }
    eigenvalues(&m)
}

/// `ε^j i ω^{1/s}` for `j = 0..s`.
pub fn predicted_roots(s: usize, omega: Complex64) -> Vec<Complex64> {
    let root = omega.powf(1.0 / s as f64);
    (0..s)
        .map(|j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / s as f64) * I * root)
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct JordanSample {
    pub rho: f64,
    pub sigma: f64,
    pub predicted: Vec<(f64, f64)>,
    pub computed: Vec<(f64, f64)>,
    pub remainder: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct JordanPrediction {
    pub s: usize,
    pub m: usize,
    /// Chain-normalized `s,1` entries of the perturbations.
    pub p: f64,
    pub q: Vec<f64>,
    /// `1/(s! ∂^s a/∂ξ₁^s)` from the branch Taylor coefficient.
    pub p_closed_form: f64,
    /// Smallest eigenvalue of `sgn(p)·sym(Q)`.
    pub margin: f64,
    pub samples: Vec<JordanSample>,
    pub remainder_exponent: f64,
    /// Fitted θ in `|Re α̃| ≥ θ (|σ|+|ρ|)^{1/s}` over samples with ρ > 0.
    pub split_margin: f64,
}

fn left_null(m: &CMat, tol: f64) -> CMat {
    null_space(&m.adjoint(), tol).adjoint()
}

/// Jordan-chain reduction of the pencil `i(τ₀ + σ) + iA^ξ̃ + ρB^{ξξ} − α A¹`
/// at a glancing point, and comparison with the perturbed eigenvalues.
pub fn jordan_bifurcation_check(
    model: &dyn ModelSystem,
    u: &RVec,
    gp: &GlancingPoint,
    grid: &[(f64, f64)],
) -> Result<JordanPrediction> {
    let n = model.n();
    let s = gp.s;
    let mut xi = vec![gp.xi1];
    xi.extend_from_slice(&gp.xi_t);
    let a1 = to_complex(&flux_jacobian(model, u, 0)?);
    let mut at = RMat::zeros(n, n);
    for (j, &x) in gp.xi_t.iter().enumerate() {
        at += flux_jacobian(model, u, j + 1)? * x;
    }
    let bxx = to_complex(&symbol_b(model, u, &xi)?);
    let id = CMat::identity(n, n);
    let alpha0 = Complex64::new(0.0, -gp.xi1);
    let p0 = (&id * Complex64::new(gp.tau, 0.0) + to_complex(&at)) * I;
    let m0 = &p0 - &a1 * alpha0;
    let scale = crate::linalg::max_abs(&p0).max(crate::linalg::max_abs(&a1));
    let r0 = null_space(&m0, 1e-8 * scale);
    let l0 = left_null(&m0, 1e-8 * scale);
    let mm = r0.ncols();
    if mm == 0 || l0.nrows() != mm {
        return Err(Error::Inconsistent(
            "glancing point is not a characteristic root".into(),
        ));
    }
    // Right chain (P₀ − α₀A¹)R_{k+1} = iA¹R_k. With L the left null space
    // normalized by L A¹ R_s = I, the reduced block has lower-left entry
    // σP̂ − iρQ̂, P̂ = L R_1, Q̂ = L B R_1.
    let pinv = m0
        .clone()
        .pseudo_inverse(1e-9 * scale)
        .map_err(|e| Error::Inconsistent(e.to_string()))?;
    let mut rs = vec![r0];
    for _ in 1..s {
        let rhs = &a1 * rs.last().unwrap() * I;
        rs.push(&pinv * rhs);
    }
    let lar = &l0 * &a1 * &rs[s - 1];
    let lar_inv = inverse(&lar)
        .ok_or_else(|| Error::Inconsistent("chain normalization is singular".into()))?;
    let ls = &lar_inv * &l0;
    let p_mat = &ls * &rs[0];
    let q_mat = &ls * &bxx * &rs[0];
    let p = p_mat[(0, 0)].re;
    let qh = (&q_mat + q_mat.adjoint()) * Complex64::new(0.5, 0.0);
    let sgn = p.signum();
    let margin = crate::linalg::min_herm_eig(&(qh * Complex64::new(sgn, 0.0)));
    let q_eigs: Vec<f64> = eigenvalues(&q_mat).iter().map(|z| z.re).collect();
    let taylor_s = gp.taylor.get(s - 1).copied().unwrap_or(f64::NAN);
    let fact: f64 = (1..=s).map(|k| k as f64).product();
    // taylor holds ∂^s a/s!.
    let p_closed_form = 1.0 / (fact * fact * taylor_s);
    let mut samples = Vec::new();
    let mut split: f64 = f64::INFINITY;
    for &(rho, sigma) in grid {
        let pm = &p0 + &id * (I * sigma) + &bxx * Complex64::new(rho, 0.0);
        let shifted = &pm - &a1 * alpha0;
        let inv = inverse(&shifted)
            .ok_or_else(|| Error::Inconsistent("pencil shift is singular".into()))?;
        let nu = eigenvalues(&(inv * &a1));
        let mut alphas: Vec<Complex64> = nu
            .iter()
            .filter(|z| z.norm() > 1e-300)
            .map(|z| alpha0 + 1.0 / z)
            .collect();
        alphas.sort_by(|x, y| {
            (x - alpha0)
                .norm()
                .partial_cmp(&(y - alpha0).norm())
                .unwrap()
        });
        alphas.truncate(mm * s);
        let omega_mat = &p_mat * Complex64::new(sigma, 0.0) - &q_mat * (I * rho);
        let mut pred = Vec::new();
        for w in eigenvalues(&omega_mat) {
            for z in predicted_roots(s, w) {
                pred.push(alpha0 + z);
            }
        }
        let mut rem: f64 = 0.0;
        for a in &alphas {
            let d = pred
                .iter()
                .map(|z| (z - a).norm())
                .fold(f64::INFINITY, f64::min);
            rem = rem.max(d);
        }
        if rho > 0.0 {
            for a in &alphas {
                split =
                    split.min((a.re - alpha0.re).abs() / (sigma.abs() + rho).powf(1.0 / s as f64));
            }
        }
        samples.push(JordanSample {
            rho,
            sigma,
            predicted: pred.iter().map(|z| (z.re, z.im)).collect(),
            computed: alphas.iter().map(|z| (z.re, z.im)).collect(),
            remainder: rem,
        });
    }
    let x: Vec<f64> = samples
        .iter()
        .map(|s| (s.rho + s.sigma.abs()).ln())
        .collect();
    let y: Vec<f64> = samples
        .iter()
        .map(|s| s.remainder.max(1e-300).ln())
        .collect();
    let remainder_exponent = if samples.len() >= 2 {
        linear_fit(&x, &y).1
    } else {
        f64::NAN
    };
    Ok(JordanPrediction {
        s,
        m: mm,
        p,
        q: q_eigs,
        p_closed_form,
        margin,
        samples,
        remainder_exponent,
        split_margin: split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inviscid::{glancing_at_state, liu_majda};
    use crate::model::{Burgers, NavierStokes};
    use crate::profile::{solve_profile, ProfileOptions};

    fn burgers(d: usize) -> (Burgers, ShockData) {
        (
            Burgers::new(d),
            ShockData::new(RVec::from_element(1, 1.0), RVec::from_element(1, -1.0), 0.0),
        )
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn winding_of_polynomials() {
        let f = |z: Complex64| Ok((z - 0.3) * (z + c(0.2, 0.4)) * (z - 3.0));
        let w = winding_number(
            &f,
            &Contour::circle(c(0.0, 0.0), 1.0),
            &WindingOptions::default(),
        )
        .unwrap();
        assert_eq!(w.winding, 2);
        let w = winding_number(
            &f,
            &Contour::indented_half_disk(1e-3, 10.0),
            &WindingOptions::default(),
        )
        .unwrap();
        assert_eq!(w.winding, 2);
        let w = winding_number(
            &f,
            &Contour::half_disk(0.5, 2.0),
            &WindingOptions::default(),
        )
        .unwrap();
        assert_eq!(w.winding, 0);
        let g = |z: Complex64| Ok(z - c(0.0, 0.5));
        assert!(matches!(
            winding_number(
                &g,
                &Contour::half_disk(0.0, 1.0),
                &WindingOptions {
                    abs_tol: 1e-9,
                    max_depth: 60,
                    ..Default::default()
                }
            ),
            Err(Error::ThroughRoot { .. }) | Err(Error::Indeterminate(_))
        ));
    }

    #[test]
    fn flux_rows_vanish_at_origin() {
        let (b, sh) = burgers(2);
        let p = solve_profile(&b, &sh, &ProfileOptions::default()).unwrap();
        let sys = EvansSystem::new(&b, &sh, &p, EvansOptions::default()).unwrap();
        for i in [0, 300, 500, 900] {
            let m = sys.node_matrix(i, &[0.0], c(0.0, 0.0));
            assert!(m.row(0).norm() < 1e-12);
            // y′ = Φ + ū y for Burgers.
            assert!((m[(1, 0)] - 1.0).norm() < 1e-9);
            assert!((m[(1, 1)] - p.u[i][0]).norm() < 1e-6);
            let m = sys.node_matrix(i, &[0.7], c(0.3, 0.1));
            let want = c(0.3, 0.1) + I * 0.7 * p.u[i][0] + 0.49;
            assert!((m[(0, 1)] - want).norm() < 1e-6, "{} {}", m[(0, 1)], want);
        }
        assert_eq!(sys.dims, (1, 1));
    }

    #[test]
    fn burgers_evans_origin_and_low_frequency() {
        let (b, sh) = burgers(1);
        let p = solve_profile(&b, &sh, &ProfileOptions::default()).unwrap();
        let sys = EvansSystem::new(&b, &sh, &p, EvansOptions::default()).unwrap();
        let d0 = sys.value(&[], c(0.0, 0.0)).unwrap();
        let ring: Vec<f64> = (0..16)
            .map(|k| {
                sys.value(&[], Complex64::from_polar(0.1, 2.0 * PI * k as f64 / 16.0))
                    .unwrap()
                    .norm()
            })
            .collect();
        let mx = ring.iter().cloned().fold(0.0, f64::max);
        assert!(d0.norm() <= 1e-6 * mx, "{d0} {mx}");
        let f = |z: Complex64| sys.value(&[], z);
        assert_eq!(
            winding_number(
                &f,
                &Contour::circle(c(0.0, 0.0), 0.1),
                &WindingOptions::default()
            )
            .unwrap()
            .winding,
            1
        );
        // D(ρλ) ≈ ργδλ with the same γ for different directions λ.
        let lf1 = low_freq_expand(
            &sys,
            &[],
            c(1.0, 0.0),
            &halving(1e-2, 3),
            &LowFreqOptions::default(),
        )
        .unwrap();
        let lf2 = low_freq_expand(
            &sys,
            &[],
            c(0.0, 1.0),
            &halving(1e-2, 3),
            &LowFreqOptions::default(),
        )
        .unwrap();
        assert_eq!(lf1.ell, 1);
        assert!((lf1.gamma() - lf2.gamma()).norm() < 1e-6 * lf1.gamma().norm());
        assert!((liu_majda(&b, &sh).unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn transverse_burgers_reduces_to_one_dimension() {
        let cc = 0.5;
        let b2 = Burgers::with_transverse(vec![cc], vec![0.0]);
        let (b1, sh) = burgers(1);
        let p = solve_profile(&b1, &sh, &ProfileOptions::default()).unwrap();
        let s1 = EvansSystem::new(&b1, &sh, &p, EvansOptions::default()).unwrap();
        let s2 = EvansSystem::new(&b2, &sh, &p, EvansOptions::default()).unwrap();
        for (xi, lam) in [
            (0.3, c(0.5, 0.2)),
            (-0.8, c(1.5, -1.0)),
            (0.1, c(0.01, 0.03)),
        ] {
            let d2 = s2.value(&[xi], lam).unwrap();
            let d1 = s1.value(&[], lam + I * cc * xi + xi * xi).unwrap();
            assert!((d2 - d1).norm() < 1e-7 * d1.norm(), "{d2} {d1}");
        }
        // Boundary root τ = −cξ̃ of Δ, with β = |ξ̃|².
        let be = beta_coefficient(&s2, &[1.0], -cc, 1).unwrap();
        assert!((be.beta() - 1.0).norm() < 1e-3, "{:?}", be);
        assert!(be.reliable, "{:?}", be);
        let rv = refined_verdict(&[be], &[1.0], &[], 1e-6);
        assert_eq!(rv.verdict, RefinedVerdict::StrongRefined);
    }

    #[test]
    fn burgers_has_no_unstable_eigenvalues() {
        let (b, sh) = burgers(1);
        let p = solve_profile(&b, &sh, &ProfileOptions::default()).unwrap();
        let sys = EvansSystem::new(&b, &sh, &p, EvansOptions::default()).unwrap();
        let rep = spectral_verdict(&sys, &[vec![]], 1e-3, 10.0, &WindingOptions::default());
        assert_eq!(
            rep.verdict,
            SpectralVerdict::StronglyStable,
            "{:?}",
            rep.notes
        );
        // A planted root at λ = 0.4 + 0.1i is detected.
        let planted = |xi: &[f64], z: Complex64| Ok(sys.value(xi, z)? * (z - c(0.4, 0.1)));
        let rep =
            spectral_verdict_with(&planted, &[vec![]], 1e-3, 10.0, &WindingOptions::default());
        assert_eq!(rep.verdict, SpectralVerdict::StronglyUnstable);
        assert_eq!(rep.windings[0].1, 1);
    }

    #[test]
    fn canonical_block() {
        let e = canonical_block_eigenvalues(2, 1.0, 1.0, 0.0, 1e-4);
        let mut re: Vec<f64> = e.iter().map(|z| z.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(
            (re[1] - 7.0711e-3).abs() < 1e-7 && (re[0] + 7.0711e-3).abs() < 1e-7,
            "{re:?}"
        );
        for z in &e {
            assert!((z.norm() - 1e-2).abs() < 1e-12);
        }
        let pr = predicted_roots(2, c(0.0, -1e-4));
        for z in &pr {
            assert!(e.iter().any(|w| (w - z).norm() < 1e-12), "{pr:?} {e:?}");
        }
    }

    #[test]
    fn acoustic_glancing_bifurcation() {
        let ns = NavierStokes::ideal(2);
        let u = ns.state(1.0, &[0.0, 0.0], 1.0);
        let g = glancing_at_state(&ns, &u, &[vec![1.0]]).unwrap();
        let gp = g.iter().find(|p| p.s == 2 && p.xi1.abs() < 1e-8).unwrap();
        let grid: Vec<(f64, f64)> = (0..6).map(|k| (1e-3 / 4f64.powi(k), 0.0)).collect();
        let jp = jordan_bifurcation_check(&ns, &u, gp, &grid).unwrap();
        assert!(jp.margin > 0.0, "{jp:?}");
        assert!(jp.remainder_exponent >= 0.7, "{}", jp.remainder_exponent);
        assert!(jp.split_margin > 0.0);
    }
}
