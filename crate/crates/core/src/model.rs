//! Systems of viscous conservation laws `U_t + Σ F^j(U)_{x_j} = Σ (B^{jk}(U) U_{x_k})_{x_j}`
//! with the first `n - r` rows of every `B^{jk}` zero, plus Rankine-Hugoniot
//! tooling and the built-in models.
//!
//! Spatial directions are indexed from 0, so `j = 0` is the normal direction
//! `x_1` of a planar shock.

use crate::error::{Error, Result};
use crate::linalg::{inverse_r, real_eigenvalues_sorted, RMat, RVec};
use serde::Serialize;
use std::sync::Arc;

pub trait ModelSystem: Send + Sync {
    fn name(&self) -> String;
    fn d(&self) -> usize;
    fn n(&self) -> usize;
    fn r(&self) -> usize;
    fn flux(&self, j: usize, u: &RVec) -> Result<RVec>;
    fn viscosity(&self, j: usize, k: usize, u: &RVec) -> Result<RMat>;

    fn flux_jacobian_analytic(&self, _j: usize, _u: &RVec) -> Option<Result<RMat>> {
        None
    }

    fn admissible(&self, _u: &RVec) -> bool {
        true
    }

    /// Natural coordinates `W(U)`; the first `n - r` entries are `w^I`.
    fn to_natural(&self, u: &RVec) -> Result<RVec> {
        Ok(u.clone())
    }

    fn from_natural(&self, w: &RVec) -> Result<RVec> {
        Ok(w.clone())
    }

    /// `dU/dW` at `U`.
    fn natural_jacobian(&self, u: &RVec) -> Result<RMat> {
        let w = self.to_natural(u)?;
        let n = self.n();
        let mut jac = RMat::zeros(n, n);
        for i in 0..n {
            let h = fd_step(&w);
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[i] += h;
            wm[i] -= h;
            let d = (self.from_natural(&wp)? - self.from_natural(&wm)?) / (2.0 * h);
            jac.set_column(i, &d);
        }
        Ok(jac)
    }

    /// Symmetrizing multiplier `Ã⁰` acting on `W_t`, when the model has one.
    fn symmetrizer(&self, _u: &RVec) -> Option<RMat> {
        None
    }

    /// Sound speed, for Mach-number constraints.
    fn sound_speed(&self, _u: &RVec) -> Option<f64> {
        None
    }

    /// Index of the normal velocity in `W`, for Mach-number constraints.
    fn normal_velocity(&self, _u: &RVec) -> Option<f64> {
        None
    }

    /// `p_ρ` for gas models (genuine coupling and symmetry hinge on its sign).
    fn pressure_rho(&self, _u: &RVec) -> Option<f64> {
        None
    }

    fn params(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

/// Central-difference step `ε^{1/3}(1 + ‖U‖)`.
pub fn fd_step(u: &RVec) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + u.norm())
}

fn check_finite(v: &RVec, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("non-finite {what}")))
    }
}

/// `A^j = dF^j/dU`: analytic when the model supplies it, otherwise central
/// differences.
pub fn flux_jacobian(model: &dyn ModelSystem, u: &RVec, j: usize) -> Result<RMat> {
    if !model.admissible(u) {
        return Err(Error::Domain(format!(
            "state {:?} outside admissible region of {}",
            u.as_slice(),
            model.name()
        )));
    }
    if let Some(a) = model.flux_jacobian_analytic(j, u) {
        return a;
    }
    flux_jacobian_fd(model, u, j)
}

pub fn flux_jacobian_fd(model: &dyn ModelSystem, u: &RVec, j: usize) -> Result<RMat> {
    let n = model.n();
    let h = fd_step(u);
    let mut jac = RMat::zeros(n, n);
    for i in 0..n {
        let mut up = u.clone();
        let mut um = u.clone();
        up[i] += h;
        um[i] -= h;
        let fp = model.flux(j, &up)?;
        let fm = model.flux(j, &um)?;
        check_finite(&fp, "flux")?;
        check_finite(&fm, "flux")?;
        jac.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    Ok(jac)
}

/// `A^ξ = Σ ξ_j A^j`.
pub fn symbol_a(model: &dyn ModelSystem, u: &RVec, xi: &[f64]) -> Result<RMat> {
    let n = model.n();
    let mut a = RMat::zeros(n, n);
    for (j, &x) in xi.iter().enumerate() {
        if x != 0.0 {
            a += flux_jacobian(model, u, j)? * x;
        }
    }
    Ok(a)
}

/// `B^{ξξ} = Σ ξ_j ξ_k B^{jk}`.
pub fn symbol_b(model: &dyn ModelSystem, u: &RVec, xi: &[f64]) -> Result<RMat> {
    let n = model.n();
    let mut b = RMat::zeros(n, n);
    for (j, &x) in xi.iter().enumerate() {
        for (k, &y) in xi.iter().enumerate() {
            if x * y != 0.0 {
                b += model.viscosity(j, k, u)? * (x * y);
            }
        }
    }
    Ok(b)
}

/// `s(U₊ − U₋) − (F¹(U₊) − F¹(U₋))`.
pub fn rh_residual(model: &dyn ModelSystem, um: &RVec, up: &RVec, s: f64) -> Result<RVec> {
    Ok((up - um) * s - (model.flux(0, up)? - model.flux(0, um)?))
}

/// Model seen in the frame moving with speed `s` along `x_1`.
pub struct FrameShifted<'a> {
    pub inner: &'a dyn ModelSystem,
    pub s: f64,
}

impl ModelSystem for FrameShifted<'_> {
    fn name(&self) -> String {
        self.inner.name()
    }
    fn d(&self) -> usize {
        self.inner.d()
    }
    fn n(&self) -> usize {
        self.inner.n()
    }
    fn r(&self) -> usize {
        self.inner.r()
    }
    fn flux(&self, j: usize, u: &RVec) -> Result<RVec> {
        let f = self.inner.flux(j, u)?;
        Ok(if j == 0 { f - u * self.s } else { f })
    }
    fn viscosity(&self, j: usize, k: usize, u: &RVec) -> Result<RMat> {
        self.inner.viscosity(j, k, u)
    }
    fn flux_jacobian_analytic(&self, j: usize, u: &RVec) -> Option<Result<RMat>> {
        let n = self.n();
        self.inner.flux_jacobian_analytic(j, u).map(|a| {
            a.map(|a| {
                if j == 0 {
                    a - RMat::identity(n, n) * self.s
                } else {
                    a
                }
            })
        })
    }
    fn admissible(&self, u: &RVec) -> bool {
        self.inner.admissible(u)
    }
    fn to_natural(&self, u: &RVec) -> Result<RVec> {
        self.inner.to_natural(u)
    }
    fn from_natural(&self, w: &RVec) -> Result<RVec> {
        self.inner.from_natural(w)
    }
    fn natural_jacobian(&self, u: &RVec) -> Result<RMat> {
        self.inner.natural_jacobian(u)
    }
    fn symmetrizer(&self, u: &RVec) -> Option<RMat> {
        self.inner.symmetrizer(u)
    }
    fn sound_speed(&self, u: &RVec) -> Option<f64> {
        self.inner.sound_speed(u)
    }
    fn normal_velocity(&self, u: &RVec) -> Option<f64> {
        self.inner.normal_velocity(u).map(|v| v - self.s)
    }
    fn pressure_rho(&self, u: &RVec) -> Option<f64> {
        self.inner.pressure_rho(u)
    }
    fn params(&self) -> serde_json::Value {
        self.inner.params()
    }
}

// ---------------------------------------------------------------------------
// Built-in models

/// Scalar viscous Burgers-type law in `d` dimensions with `f_1 = u²/2`,
/// transverse fluxes `f_j = c_j u + q_j u²/2` and `B^{jk} = δ_{jk}`.
#[derive(Clone, Debug, Serialize)]
pub struct Burgers {
    pub d: usize,
    /// Linear transverse coefficients `c_2..c_d`.
    pub c: Vec<f64>,
    /// Quadratic transverse coefficients `q_2..q_d`.
    pub q: Vec<f64>,
}

impl Burgers {
    pub fn new(d: usize) -> Self {
        Burgers {
            d,
            c: vec![0.0; d.saturating_sub(1)],
            q: vec![1.0; d.saturating_sub(1)],
        }
    }
    pub fn with_transverse(c: Vec<f64>, q: Vec<f64>) -> Self {
        assert_eq!(c.len(), q.len());
        Burgers {
            d: c.len() + 1,
            c,
            q,
        }
    }
}

impl ModelSystem for Burgers {
    fn name(&self) -> String {
        "burgers".into()
    }
    fn d(&self) -> usize {
        self.d
    }
    fn n(&self) -> usize {
        1
    }
    fn r(&self) -> usize {
        1
    }
    fn flux(&self, j: usize, u: &RVec) -> Result<RVec> {
        let x = u[0];
        let v = if j == 0 {
            0.5 * x * x
        } else {
            self.c[j - 1] * x + 0.5 * self.q[j - 1] * x * x
        };
        Ok(RVec::from_element(1, v))
    }
    fn viscosity(&self, j: usize, k: usize, _u: &RVec) -> Result<RMat> {
        Ok(RMat::from_element(1, 1, if j == k { 1.0 } else { 0.0 }))
    }
    fn flux_jacobian_analytic(&self, j: usize, u: &RVec) -> Option<Result<RMat>> {
        let x = u[0];
        let v = if j == 0 {
            x
        } else {
            self.c[j - 1] + self.q[j - 1] * x
        };
        Some(Ok(RMat::from_element(1, 1, v)))
    }
    fn symmetrizer(&self, _u: &RVec) -> Option<RMat> {
        Some(RMat::identity(1, 1))
    }
    fn params(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap()
    }
}

/// One-dimensional isentropic gas dynamics `(ρ, m)` with `p = κρ^γ` and
/// viscous momentum flux `μ u_x`.
#[derive(Clone, Debug, Serialize)]
pub struct Isentropic {
    pub kappa: f64,
    pub gamma: f64,
    pub mu: f64,
}

impl Default for Isentropic {
    fn default() -> Self {
        Isentropic {
            kappa: 1.0,
            gamma: 1.4,
            mu: 1.0,
        }
    }
}

impl Isentropic {
    fn p(&self, rho: f64) -> f64 {
        self.kappa * rho.powf(self.gamma)
    }
    fn dp(&self, rho: f64) -> f64 {
        self.kappa * self.gamma * rho.powf(self.gamma - 1.0)
    }
}

impl ModelSystem for Isentropic {
    fn name(&self) -> String {
        "isentropic".into()
    }
    fn d(&self) -> usize {
        1
    }
    fn n(&self) -> usize {
        2
    }
    fn r(&self) -> usize {
        1
    }
    fn flux(&self, _j: usize, u: &RVec) -> Result<RVec> {
        if !self.admissible(u) {
            return Err(Error::Domain(format!("density {} not positive", u[0])));
        }
        let (rho, m) = (u[0], u[1]);
        Ok(RVec::from_vec(vec![m, m * m / rho + self.p(rho)]))
    }
    fn viscosity(&self, _j: usize, _k: usize, u: &RVec) -> Result<RMat> {
        if !self.admissible(u) {
            return Err(Error::Domain(format!("density {} not positive", u[0])));
        }
        let (rho, m) = (u[0], u[1]);
        // μ (m/ρ)_x written as B U_x.
        Ok(RMat::from_row_slice(
            2,
            2,
            &[0.0, 0.0, -self.mu * m / (rho * rho), self.mu / rho],
        ))
    }
    fn flux_jacobian_analytic(&self, _j: usize, u: &RVec) -> Option<Result<RMat>> {
        if !self.admissible(u) {
            return Some(Err(Error::Domain(format!("density {} not positive", u[0]))));
        }
        let (rho, m) = (u[0], u[1]);
        let v = m / rho;
        Some(Ok(RMat::from_row_slice(
            2,
            2,
            &[0.0, 1.0, self.dp(rho) - v * v, 2.0 * v],
        )))
    }
    fn admissible(&self, u: &RVec) -> bool {
        u[0] > 0.0 && u.iter().all(|x| x.is_finite())
    }
    fn to_natural(&self, u: &RVec) -> Result<RVec> {
        Ok(RVec::from_vec(vec![u[0], u[1] / u[0]]))
    }
    fn from_natural(&self, w: &RVec) -> Result<RVec> {
        Ok(RVec::from_vec(vec![w[0], w[0] * w[1]]))
    }
    fn natural_jacobian(&self, u: &RVec) -> Result<RMat> {
        let (rho, m) = (u[0], u[1]);
        Ok(RMat::from_row_slice(2, 2, &[1.0, 0.0, m / rho, rho]))
    }
    fn symmetrizer(&self, u: &RVec) -> Option<RMat> {
        let rho = u[0];
        Some(RMat::from_diagonal(&RVec::from_vec(vec![
            self.dp(rho) / rho,
            rho,
        ])))
    }
    fn sound_speed(&self, u: &RVec) -> Option<f64> {
        Some(self.dp(u[0]).sqrt())
    }
    fn normal_velocity(&self, u: &RVec) -> Option<f64> {
        Some(u[1] / u[0])
    }
    fn pressure_rho(&self, u: &RVec) -> Option<f64> {
        Some(self.dp(u[0]))
    }
    fn params(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap()
    }
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Eos {
    /// `p = ρRT`, `e = c_v T`.
    Ideal,
    /// `p = ρRT/(1 − bρ) − aρ²`, `e = c_v T − aρ`.
    VanDerWaals { a: f64, b: f64 },
}

/// Compressible Navier-Stokes in `d` dimensions, `U = (ρ, ρu, ρE)`,
/// natural variables `W = (ρ, u, T)`.
#[derive(Clone, Debug, Serialize)]
pub struct NavierStokes {
    pub d: usize,
    pub gamma: f64,
    pub r_gas: f64,
    pub mu: f64,
    /// Second (bulk) viscosity coefficient λ.
    pub lambda: f64,
    /// Heat conductivity κ.
    pub kappa: f64,
    pub eos: Eos,
}

impl NavierStokes {
    pub fn ideal(d: usize) -> Self {
        NavierStokes {
            d,
            gamma: 1.4,
            r_gas: 1.0,
            mu: 1.0,
            lambda: -2.0 / 3.0,
            kappa: 1.0,
            eos: Eos::Ideal,
        }
    }

    pub fn cv(&self) -> f64 {
        self.r_gas / (self.gamma - 1.0)
    }

    /// `(p, p_ρ, p_T, e, e_ρ, e_T)` at `(ρ, T)`.
    pub fn thermo(&self, rho: f64, t: f64) -> (f64, f64, f64, f64, f64, f64) {
        let r = self.r_gas;
        let cv = self.cv();
        match self.eos {
            Eos::Ideal => (rho * r * t, r * t, rho * r, cv * t, 0.0, cv),
            Eos::VanDerWaals { a, b } => {
                let den = 1.0 - b * rho;
                let p = rho * r * t / den - a * rho * rho;
                let p_rho = r * t / (den * den) - 2.0 * a * rho;
                let p_t = rho * r / den;
                (p, p_rho, p_t, cv * t - a * rho, -a, cv)
            }
        }
    }

    /// State from `(ρ, u, T)`.
    pub fn state(&self, rho: f64, u: &[f64], t: f64) -> RVec {
        let mut w = vec![rho];
        w.extend_from_slice(u);
        w.push(t);
        self.from_natural(&RVec::from_vec(w))
            .expect("admissible natural state")
    }

    fn unpack(&self, u: &RVec) -> Result<(f64, Vec<f64>, f64)> {
        if !self.admissible(u) {
            return Err(Error::Domain(format!(
                "state {:?} outside ρ > 0, T > 0",
                u.as_slice()
            )));
        }
        let w = self.to_natural(u)?;
        Ok((w[0], (1..=self.d).map(|i| w[i]).collect(), w[self.d + 1]))
    }

    /// Viscous flux coefficients in natural variables: `B_W^{jk}` maps
    /// `∂_k W` to the `j`-th viscous flux.
    fn natural_viscosity(&self, j: usize, k: usize, w: &RVec) -> RMat {
        let d = self.d;
        let n = d + 2;
        let mut b = RMat::zeros(n, n);
        let kd = |a: usize, c: usize| if a == c { 1.0 } else { 0.0 };
        for i in 0..d {
            for m in 0..d {
                b[(1 + i, 1 + m)] = self.mu * (kd(j, k) * kd(i, m) + kd(i, k) * kd(j, m))
                    + self.lambda * kd(i, j) * kd(k, m);
            }
        }
        for m in 0..d {
            b[(n - 1, 1 + m)] = self.mu * (kd(j, k) * w[1 + m] + w[1 + k] * kd(j, m))
                + self.lambda * w[1 + j] * kd(k, m);
        }
        b[(n - 1, n - 1)] = self.kappa * kd(j, k);
        b
    }
}

impl ModelSystem for NavierStokes {
    fn name(&self) -> String {
        "navier-stokes-ideal".into()
    }
    fn d(&self) -> usize {
        self.d
    }
    fn n(&self) -> usize {
        self.d + 2
    }
    fn r(&self) -> usize {
        self.d + 1
    }
    fn flux(&self, j: usize, u: &RVec) -> Result<RVec> {
        let (rho, v, t) = self.unpack(u)?;
        let (p, ..) = self.thermo(rho, t);
        let d = self.d;
        let mut f = RVec::zeros(d + 2);
        f[0] = rho * v[j];
        for i in 0..d {
            f[1 + i] = rho * v[i] * v[j] + if i == j { p } else { 0.0 };
        }
        f[d + 1] = (u[d + 1] + p) * v[j];
        Ok(f)
    }
    fn viscosity(&self, j: usize, k: usize, u: &RVec) -> Result<RMat> {
        let w = self.to_natural(u)?;
        if !self.admissible(u) {
            return Err(Error::Domain(format!(
                "state {:?} outside ρ > 0, T > 0",
                u.as_slice()
            )));
        }
        let bw = self.natural_viscosity(j, k, &w);
        let wu = inverse_r(&self.natural_jacobian(u)?)
            .ok_or_else(|| Error::Domain("singular dU/dW".into()))?;
        Ok(bw * wu)
    }
    fn flux_jacobian_analytic(&self, j: usize, u: &RVec) -> Option<Result<RMat>> {
        let res = (|| {
            let (rho, v, t) = self.unpack(u)?;
            let (p, p_rho, p_t, e, e_rho, e_t) = self.thermo(rho, t);
            let d = self.d;
            let n = d + 2;
            let q2: f64 = v.iter().map(|x| x * x).sum();
            let re = u[d + 1];
            let mut fw = RMat::zeros(n, n);
            fw[(0, 0)] = v[j];
            fw[(0, 1 + j)] = rho;
            for i in 0..d {
                fw[(1 + i, 0)] = v[i] * v[j] + if i == j { p_rho } else { 0.0 };
                for m in 0..d {
                    fw[(1 + i, 1 + m)] =
                        rho * (if i == m { v[j] } else { 0.0 } + if j == m { v[i] } else { 0.0 });
                }
                fw[(1 + i, n - 1)] = if i == j { p_t } else { 0.0 };
            }
            fw[(n - 1, 0)] = (e + rho * e_rho + 0.5 * q2 + p_rho) * v[j];
            for m in 0..d {
                fw[(n - 1, 1 + m)] = rho * v[m] * v[j] + if j == m { re + p } else { 0.0 };
            }
            fw[(n - 1, n - 1)] = (rho * e_t + p_t) * v[j];
            let wu = inverse_r(&self.natural_jacobian(u)?)
                .ok_or_else(|| Error::Domain("singular dU/dW".into()))?;
            Ok(fw * wu)
        })();
        Some(res)
    }
    fn admissible(&self, u: &RVec) -> bool {
        if !u.iter().all(|x| x.is_finite()) || u[0] <= 0.0 {
            return false;
        }
        if let Eos::VanDerWaals { b, .. } = self.eos {
            if b * u[0] >= 1.0 {
                return false;
            }
        }
        match self.to_natural(u) {
            Ok(w) => w[self.d + 1] > 0.0,
            Err(_) => false,
        }
    }
    fn to_natural(&self, u: &RVec) -> Result<RVec> {
        let d = self.d;
        let rho = u[0];
        let mut w = RVec::zeros(d + 2);
        w[0] = rho;
        let mut q2 = 0.0;
        for i in 0..d {
            w[1 + i] = u[1 + i] / rho;
            q2 += w[1 + i] * w[1 + i];
        }
        let e = u[d + 1] / rho - 0.5 * q2;
        let a = match self.eos {
            Eos::Ideal => 0.0,
            Eos::VanDerWaals { a, .. } => a,
        };
        w[d + 1] = (e + a * rho) / self.cv();
        Ok(w)
    }
    fn from_natural(&self, w: &RVec) -> Result<RVec> {
        let d = self.d;
        let rho = w[0];
        let t = w[d + 1];
        let (.., e, _, _) = self.thermo(rho, t);
        let mut u = RVec::zeros(d + 2);
        u[0] = rho;
        let mut q2 = 0.0;
        for i in 0..d {
            u[1 + i] = rho * w[1 + i];
            q2 += w[1 + i] * w[1 + i];
        }
        u[d + 1] = rho * (e + 0.5 * q2);
        Ok(u)
    }
    fn natural_jacobian(&self, u: &RVec) -> Result<RMat> {
        let w = self.to_natural(u)?;
        let d = self.d;
        let n = d + 2;
        let rho = w[0];
        let t = w[n - 1];
        let (_, _, _, e, e_rho, e_t) = self.thermo(rho, t);
        let q2: f64 = (1..=d).map(|i| w[i] * w[i]).sum();
        let mut m = RMat::zeros(n, n);
        m[(0, 0)] = 1.0;
        for i in 0..d {
            m[(1 + i, 0)] = w[1 + i];
            m[(1 + i, 1 + i)] = rho;
            m[(n - 1, 1 + i)] = rho * w[1 + i];
        }
        m[(n - 1, 0)] = e + rho * e_rho + 0.5 * q2;
        m[(n - 1, n - 1)] = rho * e_t;
        Ok(m)
    }
    /// `Ã⁰ = diag(p_ρ/ρ, ρI, ρe_T/T)`; where `p_ρ ≤ 0` the mass row is divided
    /// through by `p_ρ`, leaving `1/ρ` in its place.
    fn symmetrizer(&self, u: &RVec) -> Option<RMat> {
        let w = self.to_natural(u).ok()?;
        let d = self.d;
        let rho = w[0];
        let t = w[d + 1];
        let (_, p_rho, _, _, _, e_t) = self.thermo(rho, t);
        if e_t <= 0.0 || rho <= 0.0 || t <= 0.0 {
            return None;
        }
        let mut diag = vec![if p_rho > 0.0 { p_rho / rho } else { 1.0 / rho }];
        diag.extend(std::iter::repeat_n(rho, d));
        diag.push(rho * e_t / t);
        Some(RMat::from_diagonal(&RVec::from_vec(diag)))
    }
    fn sound_speed(&self, u: &RVec) -> Option<f64> {
        let w = self.to_natural(u).ok()?;
        let rho = w[0];
        let t = w[self.d + 1];
        let (_, p_rho, p_t, _, _, e_t) = self.thermo(rho, t);
        let c2 = p_rho + t * p_t * p_t / (rho * rho * e_t);
        (c2 > 0.0).then(|| c2.sqrt())
    }
    fn normal_velocity(&self, u: &RVec) -> Option<f64> {
        Some(u[1] / u[0])
    }
    fn pressure_rho(&self, u: &RVec) -> Option<f64> {
        let w = self.to_natural(u).ok()?;
        Some(self.thermo(w[0], w[self.d + 1]).1)
    }
    fn params(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap()
    }
}

/// Built-in model by id, with parameters overriding the defaults.
pub fn builtin(id: &str, params: &serde_json::Value) -> Result<Arc<dyn ModelSystem>> {
    let get = |k: &str, dflt: f64| -> Result<f64> {
        match params.get(k) {
            None | Some(serde_json::Value::Null) => Ok(dflt),
            Some(v) => v
                .as_f64()
                .ok_or_else(|| Error::Config(format!("parameter {k} must be a number"))),
        }
    };
    let get_vec = |k: &str| -> Result<Option<Vec<f64>>> {
        match params.get(k) {
            None | Some(serde_json::Value::Null) => Ok(None),
            Some(serde_json::Value::Array(a)) => a
                .iter()
                .map(|x| {
                    x.as_f64()
                        .ok_or_else(|| Error::Config(format!("{k} must hold numbers")))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            _ => Err(Error::Config(format!("{k} must be an array"))),
        }
    };
    let d = get("d", 1.0)? as usize;
    if d == 0 || d > 3 {
        return Err(Error::Config(format!(
            "dimension d = {d} not supported (1..3)"
        )));
    }
    match id {
        "burgers" => {
            let mut b = Burgers::new(d);
            if let Some(c) = get_vec("c")? {
                b.c = c;
            }
            if let Some(q) = get_vec("q")? {
                b.q = q;
            }
            if b.c.len() != d - 1 || b.q.len() != d - 1 {
                return Err(Error::Config("burgers: c and q need d - 1 entries".into()));
            }
            Ok(Arc::new(b))
        }
        "isentropic" => {
            if d != 1 {
                return Err(Error::Config("isentropic model is one-dimensional".into()));
            }
            Ok(Arc::new(Isentropic {
                kappa: get("kappa", 1.0)?,
                gamma: get("gamma", 1.4)?,
                mu: get("mu", 1.0)?,
            }))
        }
        "navier-stokes-ideal" | "navier-stokes" => {
            let mut ns = NavierStokes::ideal(d);
            ns.gamma = get("gamma", ns.gamma)?;
            ns.r_gas = get("R", ns.r_gas)?;
            ns.mu = get("mu", ns.mu)?;
            ns.lambda = get("lambda", ns.lambda)?;
            ns.kappa = get("kappa", ns.kappa)?;
            if let Some(a) = params.get("vdw_a").and_then(|v| v.as_f64()) {
                let b = get("vdw_b", 0.0)?;
                ns.eos = Eos::VanDerWaals { a, b };
            }
            Ok(Arc::new(ns))
        }
        other => Err(Error::Config(format!("unknown model id '{other}'"))),
    }
}

// ---------------------------------------------------------------------------
// Shocks

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
pub enum Side {
    Minus,
    Plus,
}

/// Branch selector for the Rankine-Hugoniot solve.
#[derive(Clone, Debug)]
pub enum Constraint {
    /// Prescribed shock speed.
    Speed(f64),
    /// Prescribed Mach number of the upstream state relative to the shock.
    /// Upstream on the `Minus` side gives a 1-shock, on the `Plus` side a
    /// `(d+2)`-shock.
    Mach { mach: f64, upstream: Side },
    /// Component `index` of `U₊` fixed; the speed is solved for.
    FixedComponent { index: usize, value: f64 },
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct TypeCertificate {
    pub i_plus: usize,
    pub i_minus: usize,
    pub d_plus: usize,
    pub d_minus: usize,
    pub ell_hat: i64,
    pub lax: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ShockData {
    pub u_minus: Vec<f64>,
    pub u_plus: Vec<f64>,
    /// Speed in the original frame; everything downstream works in the
    /// co-moving frame via [`ShockData::framed`].
    pub s: f64,
    pub p: Option<usize>,
    pub certificate: Option<TypeCertificate>,
}

impl ShockData {
    pub fn new(um: RVec, up: RVec, s: f64) -> Self {
        ShockData {
            u_minus: um.as_slice().to_vec(),
            u_plus: up.as_slice().to_vec(),
            s,
            p: None,
            certificate: None,
        }
    }
    pub fn um(&self) -> RVec {
        RVec::from_vec(self.u_minus.clone())
    }
    pub fn up(&self) -> RVec {
        RVec::from_vec(self.u_plus.clone())
    }
    pub fn side(&self, side: Side) -> RVec {
        match side {
            Side::Minus => self.um(),
            Side::Plus => self.up(),
        }
    }
    pub fn jump(&self) -> RVec {
        self.up() - self.um()
    }
    pub fn framed<'a>(&self, model: &'a dyn ModelSystem) -> FrameShifted<'a> {
        FrameShifted {
            inner: model,
            s: self.s,
        }
    }
}

fn newton(
    mut g: impl FnMut(&RVec) -> Result<RVec>,
    x0: RVec,
    tol: f64,
    max_iter: usize,
) -> Option<RVec> {
    let mut x = x0;
    let n = x.len();
    for _ in 0..max_iter {
        let fx = g(&x).ok()?;
        let nf = fx.norm();
        if !nf.is_finite() {
            return None;
        }
        if nf <= tol {
            return Some(x);
        }
        let h = fd_step(&x) * 1e-1;
        let mut jac = RMat::zeros(fx.len(), n);
        for i in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let d = (g(&xp).ok()? - g(&xm).ok()?) / (2.0 * h);
            jac.set_column(i, &d);
        }
        let step = jac
            .clone()
            .lu()
            .solve(&fx)
            .or_else(|| jac.svd(true, true).solve(&fx, 1e-14).ok())?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let xn = &x - &step * t;
            if let Ok(fnew) = g(&xn) {
                if fnew.norm().is_finite() && fnew.norm() < nf * (1.0 - 1e-4 * t) {
                    x = xn;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            let fx = g(&x).ok()?;
            return (fx.norm() <= tol * 10.0).then_some(x);
        }
    }
    let fx = g(&x).ok()?;
    (fx.norm() <= tol).then_some(x)
}

/// Follow the weak-shock branch leaving the characteristic speed nearest
/// to `s` out to speed `s`.
fn continue_in_speed(
    model: &dyn ModelSystem,
    um: &RVec,
    s: f64,
    a1: &RMat,
    tol: f64,
) -> Option<RVec> {
    let n = um.len();
    let scale = 1.0 + um.norm();
    let (evals, _) = real_eigenvalues_sorted(a1);
    let a = *evals
        .iter()
        .min_by(|x, y| (*x - s).abs().total_cmp(&(*y - s).abs()))?;
    let v = crate::linalg::null_space_r(&(a1 - RMat::identity(n, n) * a), 1e-8);
    if v.ncols() != 1 || (s - a).abs() < 1e-14 {
        return None;
    }
    let v = v.column(0).into_owned();
    let solve = |sk: f64, seed: RVec| {
        newton(
            |x: &RVec| {
                if !model.admissible(x) {
                    return Err(Error::Domain(String::new()));
                }
                rh_residual(model, um, x, sk)
            },
            seed,
            tol,
            80,
        )
        .filter(|u| (u - um).norm() > 1e-9 * scale)
    };
    let mut t = 1.0 / 64.0;
    let mut sk = a + (s - a) * t;
    let mut cur = None;
    for amp in [1e-3, 3e-3, 1e-2, 3e-2, 0.1] {
        for sg in [1.0, -1.0] {
            if cur.is_none() {
                cur = solve(sk, um + &v * (sg * amp * scale));
            }
        }
    }
    let mut cur = cur?;
    let mut prev: Option<(f64, RVec)> = None;
    let mut dt = 1.0 / 64.0;
    while t < 1.0 {
        let tn = (t + dt).min(1.0);
        let sn = a + (s - a) * tn;
        let seed = match &prev {
            Some((sp, up)) => &cur + (&cur - up) * ((sn - sk) / (sk - sp)),
            None => cur.clone(),
        };
        match solve(sn, seed) {
            Some(u) => {
                prev = Some((sk, cur));
                cur = u;
                sk = sn;
                t = tn;
                dt = (dt * 1.5).min(0.25);
            }
            None => {
                dt *= 0.5;
                if dt < 1e-6 {
                    return None;
                }
            }
        }
    }
    Some(cur)
}

/// Solve the Rankine-Hugoniot conditions for `U₊` given `U₋` and a branch
/// constraint, rejecting the trivial root, and classify the result.
pub fn hugoniot_solve(
    model: &dyn ModelSystem,
    um: &RVec,
    constraint: &Constraint,
) -> Result<ShockData> {
    let n = model.n();
    if !model.admissible(um) {
        return Err(Error::Domain("upstream state not admissible".into()));
    }
    let scale = 1.0 + um.norm();
    let tol = 1e-12 * scale;
    // Unknowns: U₊ (n) and possibly s.
    let a1 = flux_jacobian(model, um, 0)?;
    let (evals, _) = real_eigenvalues_sorted(&a1);
    let mut dirs: Vec<RVec> = Vec::new();
    for &a in &evals {
        let ns = crate::linalg::null_space_r(&(&a1 - RMat::identity(n, n) * a), 1e-8);
        for c in 0..ns.ncols() {
            dirs.push(ns.column(c).into_owned());
        }
    }
    for i in 0..n {
        let mut e = RVec::zeros(n);
        e[i] = 1.0;
        dirs.push(e);
    }
    let amps = [
        0.1, 0.3, 1.0, 2.0, 4.0, 8.0, -0.1, -0.3, -1.0, -2.0, -4.0, -8.0,
    ];
    let mut roots: Vec<(RVec, f64)> = Vec::new();
    let fixed_s = match constraint {
        Constraint::Speed(s) => Some(*s),
        Constraint::Mach {
            mach,
            upstream: Side::Minus,
        } => {
            let c = model
                .sound_speed(um)
                .ok_or_else(|| Error::Config("model has no sound speed".into()))?;
            let v = model
                .normal_velocity(um)
                .ok_or_else(|| Error::Config("model has no normal velocity".into()))?;
            Some(v - mach * c)
        }
        _ => None,
    };
    for dir in &dirs {
        for &amp in &amps {
            let seed_u = um + dir * (amp * scale);
            if !model.admissible(&seed_u) {
                continue;
            }
            let found = if let Some(s) = fixed_s {
                newton(
                    |x: &RVec| {
                        if !model.admissible(x) {
                            return Err(Error::Domain(String::new()));
                        }
                        rh_residual(model, um, x, s)
                    },
                    seed_u,
                    tol,
                    80,
                )
                .map(|x| (x, s))
            } else {
                // Augmented unknown (U₊, s) with one extra equation.
                let s0 = {
                    let j = &seed_u - um;
                    let fj = model.flux(0, &seed_u)? - model.flux(0, um)?;
                    fj.dot(&j) / j.dot(&j).max(1e-300)
                };
                let mut x0 = RVec::zeros(n + 1);
                x0.rows_mut(0, n).copy_from(&seed_u);
                x0[n] = s0;
                newton(
                    |x: &RVec| {
                        let u = x.rows(0, n).into_owned();
                        if !model.admissible(&u) {
                            return Err(Error::Domain(String::new()));
                        }
                        let s = x[n];
                        let r = rh_residual(model, um, &u, s)?;
                        let extra = match constraint {
                            Constraint::FixedComponent { index, value } => u[*index] - value,
                            Constraint::Mach { mach, .. } => {
                                let c = model
                                    .sound_speed(&u)
                                    .ok_or_else(|| Error::Domain(String::new()))?;
                                let v = model
                                    .normal_velocity(&u)
                                    .ok_or_else(|| Error::Domain(String::new()))?;
                                (s - v) - mach * c
                            }
                            Constraint::Speed(_) => unreachable!(),
                        };
                        let mut out = RVec::zeros(n + 1);
                        out.rows_mut(0, n).copy_from(&r);
                        out[n] = extra;
                        Ok(out)
                    },
                    x0,
                    tol,
                    80,
                )
                .map(|x| (x.rows(0, n).into_owned(), x[n]))
            };
            if let Some((u, s)) = found {
                if (&u - um).norm() <= 1e-6 * scale {
                    continue;
                }
                if !roots.iter().any(|(r, _)| (r - &u).norm() <= 1e-7 * scale) {
                    roots.push((u, s));
                }
            }
        }
    }
    if roots.is_empty() {
        if let Some(s) = fixed_s {
            if let Some(u) = continue_in_speed(model, um, s, &a1, tol) {
                roots.push((u, s));
            }
        }
    }
    match roots.len() {
        0 => Err(Error::NoConnection(
            "Rankine-Hugoniot Newton found no nontrivial root".into(),
        )),
        1 => {
            let (up, s) = roots.pop().unwrap();
            let res = rh_residual(model, um, &up, s)?;
            if res.norm() > 1e-10 * scale {
                return Err(Error::NoConnection(format!(
                    "residual {} above 1e-10",
                    res.norm()
                )));
            }
            let mut shock = ShockData::new(um.clone(), up, s);
            let cert = crate::profile::classify_shock(model, &shock)?;
            shock.p = cert.lax.then_some(cert.i_plus);
            shock.certificate = Some(cert);
            Ok(shock)
        }
        k => Err(Error::Ambiguous(format!(
            "{k} Hugoniot branches match the constraint"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_ns_state(ns: &NavierStokes, rng: &mut ChaCha8Rng) -> RVec {
        let rho = rng.random_range(0.3..3.0);
        let u: Vec<f64> = (0..ns.d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let t = rng.random_range(0.3..3.0);
        ns.state(rho, &u, t)
    }

    #[test]
    fn burgers_jacobian_is_u() {
        let b = Burgers::new(1);
        let a = flux_jacobian(&b, &RVec::from_element(1, 2.0), 0).unwrap();
        assert_eq!(a[(0, 0)], 2.0);
    }

    #[test]
    fn linear_flux_gives_constant_jacobian() {
        let b = Burgers::with_transverse(vec![0.7], vec![0.0]);
        for u in [-3.0, 0.0, 5.0] {
            let a = flux_jacobian_fd(&b, &RVec::from_element(1, u), 1).unwrap();
            assert!((a[(0, 0)] - 0.7).abs() < 1e-9);
        }
    }

    #[test]
    fn viscosity_first_rows_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 1..=3 {
            let ns = NavierStokes::ideal(d);
            for _ in 0..20 {
                let u = random_ns_state(&ns, &mut rng);
                for j in 0..d {
                    for k in 0..d {
                        let b = ns.viscosity(j, k, &u).unwrap();
                        assert!(b.row(0).iter().all(|&x| x == 0.0));
                    }
                }
            }
        }
        let iso = Isentropic::default();
        let b = iso
            .viscosity(0, 0, &RVec::from_vec(vec![1.3, 0.4]))
            .unwrap();
        assert!(b.row(0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn analytic_and_fd_jacobians_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut models: Vec<Box<dyn ModelSystem>> = vec![
            Box::new(Isentropic::default()),
            Box::new(Burgers::with_transverse(vec![0.3, -0.2], vec![1.0, 0.5])),
        ];
        for d in 1..=3 {
            models.push(Box::new(NavierStokes::ideal(d)));
            let mut v = NavierStokes::ideal(d);
            v.eos = Eos::VanDerWaals { a: 0.2, b: 0.1 };
            models.push(Box::new(v));
        }
        for m in &models {
            for _ in 0..10 {
                let u = if m.name().starts_with("navier") {
                    let ns = NavierStokes::ideal(m.d());
                    let w = random_ns_state(&ns, &mut rng);
                    // Re-express through the model's own EOS.
                    let nat = ns.to_natural(&w).unwrap();
                    m.from_natural(&nat).unwrap()
                } else if m.n() == 2 {
                    RVec::from_vec(vec![
                        rng.random_range(0.3..3.0),
                        rng.random_range(-2.0..2.0),
                    ])
                } else {
                    RVec::from_element(1, rng.random_range(-2.0..2.0))
                };
                for j in 0..m.d() {
                    let a = flux_jacobian(m.as_ref(), &u, j).unwrap();
                    let f = flux_jacobian_fd(m.as_ref(), &u, j).unwrap();
                    let err = (&a - &f).abs().max() / (1.0 + a.abs().max());
                    assert!(err < 1e-6, "{} j={j}: {err}", m.name());
                }
            }
        }
    }

    #[test]
    fn euler_characteristics_at_rest() {
        for d in 1..=3 {
            let ns = NavierStokes::ideal(d);
            let u = ns.state(1.0, &vec![0.0; d], 1.0);
            let a = flux_jacobian(&ns, &u, 0).unwrap();
            let (ev, im) = real_eigenvalues_sorted(&a);
            let c = (1.4f64).sqrt();
            assert!(im < 1e-10);
            assert!((ev[0] + c).abs() < 1e-10 && (ev[d + 1] - c).abs() < 1e-10);
            for e in &ev[1..=d] {
                assert!(e.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn natural_coordinates_round_trip() {
        let ns = NavierStokes::ideal(2);
        let u = ns.state(1.2, &[0.3, -0.4], 0.8);
        let w = ns.to_natural(&u).unwrap();
        assert!((ns.from_natural(&w).unwrap() - &u).norm() < 1e-14);
        let fd = (|| {
            let h = 1e-6;
            let mut jac = RMat::zeros(4, 4);
            for i in 0..4 {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[i] += h;
                wm[i] -= h;
                jac.set_column(
                    i,
                    &((ns.from_natural(&wp).unwrap() - ns.from_natural(&wm).unwrap()) / (2.0 * h)),
                );
            }
            jac
        })();
        assert!((ns.natural_jacobian(&u).unwrap() - fd).abs().max() < 1e-8);
    }

    #[test]
    fn rh_residual_burgers_and_zero_jump() {
        let b = Burgers::new(1);
        let r = rh_residual(
            &b,
            &RVec::from_element(1, 1.0),
            &RVec::from_element(1, -1.0),
            0.0,
        )
        .unwrap();
        assert_eq!(r[0], 0.0);
        let ns = NavierStokes::ideal(2);
        let u = ns.state(1.0, &[0.5, 0.1], 2.0);
        assert_eq!(rh_residual(&ns, &u, &u, 3.7).unwrap().norm(), 0.0);
    }

    #[test]
    fn hugoniot_burgers_standing() {
        let b = Burgers::new(1);
        let sh = hugoniot_solve(&b, &RVec::from_element(1, 1.0), &Constraint::Speed(0.0)).unwrap();
        assert!((sh.u_plus[0] + 1.0).abs() < 1e-12);
        assert_eq!(sh.p, Some(1));
    }

    #[test]
    fn hugoniot_rejects_trivial_only() {
        // With s equal to the characteristic speed the only root is trivial.
        let b = Burgers::new(1);
        let r = hugoniot_solve(&b, &RVec::from_element(1, 1.0), &Constraint::Speed(1.0));
        assert!(matches!(r, Err(Error::NoConnection(_))));
    }

    #[test]
    fn mach_two_normal_shock_tables() {
        let ns = NavierStokes::ideal(1);
        let um = ns.state(1.0, &[0.0], 1.0);
        let sh = hugoniot_solve(
            &ns,
            &um,
            &Constraint::Mach {
                mach: 2.0,
                upstream: Side::Minus,
            },
        )
        .unwrap();
        let wm = ns.to_natural(&sh.um()).unwrap();
        let wp = ns.to_natural(&sh.up()).unwrap();
        let rho_ratio = wp[0] / wm[0];
        let t_ratio = wp[2] / wm[2];
        assert!((rho_ratio - 8.0 / 3.0).abs() < 1e-9, "{rho_ratio}");
        assert!((rho_ratio * t_ratio - 4.5).abs() < 1e-9);
        assert!((t_ratio - 1.6875).abs() < 1e-9);
        let fr = sh.framed(&ns);
        assert!(rh_residual(&fr, &sh.um(), &sh.up(), 0.0).unwrap().norm() < 1e-10);
        assert_eq!(sh.p, Some(1));
    }
}
