//! Structural hypotheses: symmetric hyperbolic-parabolic form, genuine
//! coupling, compensating matrices, strict dissipativity and constant
//! multiplicity of the characteristic speeds.

use crate::error::Result;
use crate::linalg::{
    eigenvalues, eigenvalues_r, inverse_r, min_sym_eig, null_space_r, spd_sqrt, sym_part,
    to_complex, RMat, RVec, I,
};
use crate::model::{flux_jacobian, ModelSystem};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Tri {
    Pass,
    Fail,
    Indeterminate,
}

impl Tri {
    pub fn and(self, other: Tri) -> Tri {
        match (self, other) {
            (Tri::Fail, _) | (_, Tri::Fail) => Tri::Fail,
            (Tri::Indeterminate, _) | (_, Tri::Indeterminate) => Tri::Indeterminate,
            _ => Tri::Pass,
        }
    }
}

/// `(Ã⁰, Ãʲ, B̃ʲᵏ)` in natural coordinates at one state.
#[derive(Clone, Debug, Serialize)]
pub struct SymmetricForm {
    #[serde(skip)]
    pub a0: RMat,
    #[serde(skip)]
    pub a: Vec<RMat>,
    #[serde(skip)]
    pub b: Vec<Vec<RMat>>,
    /// `Ã⁰` symmetric positive definite.
    pub a0_spd: bool,
    pub a0_block_diagonal: bool,
    /// All `Ãʲ` symmetric: first-order symmetry, part of (A2).
    pub first_order_symmetric: bool,
    /// `B̃ʲᵏ = block-diag{0, b̃ʲᵏ}`.
    pub b_block_structure: bool,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StructuralFailure {
    pub reason: String,
}

fn rel_asym(m: &RMat) -> f64 {
    (m - m.transpose()).abs().max() / (1.0 + m.abs().max())
}

/// Symmetric form at `U`: `Ãʲ = Ã⁰ W_U Aʲ U_W`, `B̃ʲᵏ = Ã⁰ W_U Bʲᵏ U_W`.
pub fn symmetric_form(
    model: &dyn ModelSystem,
    u: &RVec,
) -> Result<std::result::Result<SymmetricForm, StructuralFailure>> {
    let n = model.n();
    let r = model.r();
    let Some(a0) = model.symmetrizer(u) else {
        return Ok(Err(StructuralFailure {
            reason: "symmetrizer undefined at this state (e_T ≤ 0 or outside region)".into(),
        }));
    };
    let uw = model.natural_jacobian(u)?;
    let Some(wu) = inverse_r(&uw) else {
        return Ok(Err(StructuralFailure {
            reason: "natural coordinate map singular".into(),
        }));
    };
    let d = model.d();
    let mut a = Vec::with_capacity(d);
    let mut b = Vec::with_capacity(d);
    for j in 0..d {
        a.push(&a0 * &wu * flux_jacobian(model, u, j)? * &uw);
        let mut row = Vec::with_capacity(d);
        for k in 0..d {
            row.push(&a0 * &wu * model.viscosity(j, k, u)? * &uw);
        }
        b.push(row);
    }
    let a0_spd = rel_asym(&a0) < 1e-12 && min_sym_eig(&a0) > 0.0;
    let m = n - r;
    let a0_block_diagonal = (0..m).all(|i| (m..n).all(|k| a0[(i, k)] == 0.0 && a0[(k, i)] == 0.0));
    let first_order_symmetric = a.iter().all(|x| rel_asym(x) < 1e-8);
    let scale = b
        .iter()
        .flatten()
        .map(|x| x.abs().max())
        .fold(1.0, f64::max);
    let b_block_structure = b.iter().flatten().all(|x| {
        (0..n).all(|i| (0..n).all(|k| (i >= m && k >= m) || x[(i, k)].abs() <= 1e-10 * scale))
    });
    let mut notes = Vec::new();
    if !first_order_symmetric {
        notes.push("first-order symmetry fails".to_string());
    }
    if let Some(p_rho) = model.pressure_rho(u) {
        if p_rho <= 0.0 {
            notes.push(format!(
                "p_rho = {p_rho:.6e} ≤ 0: mass row divided through by p_rho"
            ));
        }
    }
    Ok(Ok(SymmetricForm {
        a0,
        a,
        b,
        a0_spd,
        a0_block_diagonal,
        first_order_symmetric,
        b_block_structure,
        notes,
    }))
}

/// Groups of a sorted list whose consecutive gaps are at most `tol`;
/// returns `(start, len)` pairs.
pub fn clusters(sorted: &[f64], tol: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=sorted.len() {
        if i == sorted.len() || sorted[i] - sorted[i - 1] > tol {
            out.push((start, i - start));
            start = i;
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct CouplingResult {
    pub verdict: Tri,
    /// Smallest `σ_min(B V)/‖B‖` over eigenspaces `V` of `A`.
    pub min_sigma: f64,
    pub note: Option<String>,
}

/// (K0): no eigenvector of `A` lies in `ker B`; repeated eigenvalues are
/// tested on their whole eigenspace.
pub fn genuine_coupling(a: &RMat, b: &RMat, tol: f64) -> CouplingResult {
    let n = a.nrows();
    let scale = a.abs().max().max(1e-300);
    let bscale = b.abs().max();
    if bscale == 0.0 {
        return CouplingResult {
            verdict: Tri::Fail,
            min_sigma: 0.0,
            note: Some("B vanishes".into()),
        };
    }
    let ev = eigenvalues_r(a);
    let im = ev.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    if im > 1e-7 * scale {
        return CouplingResult {
            verdict: Tri::Indeterminate,
            min_sigma: f64::NAN,
            note: Some(format!("A not real-diagonalizable (|Im σ| = {im:.3e})")),
        };
    }
    let mut re: Vec<f64> = ev.iter().map(|z| z.re).collect();
    re.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut min_sigma = f64::INFINITY;
    for (start, len) in clusters(&re, 1e-8 * scale) {
        let mean = re[start..start + len].iter().sum::<f64>() / len as f64;
        let shifted = a - RMat::identity(n, n) * mean;
        // Null space tolerance relative to the cluster spread.
        let spread = re[start + len - 1] - re[start];
        let ntol = (1e-7f64).max(10.0 * spread / scale);
        let v = null_space_r(&(shifted / scale), ntol);
        if v.ncols() < len {
            return CouplingResult {
                verdict: Tri::Indeterminate,
                min_sigma: f64::NAN,
                note: Some(format!("defective eigenvalue near {mean:.6e}")),
            };
        }
        let bv = b * &v / bscale;
        let svd = nalgebra::SVD::new(bv, false, false);
        let s = svd
            .singular_values
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        min_sigma = min_sigma.min(s);
    }
    let verdict = if min_sigma <= tol {
        Tri::Fail
    } else {
        Tri::Pass
    };
    CouplingResult {
        verdict,
        min_sigma,
        note: None,
    }
}

/// Skew-symmetric compensator with its positivity margin.
#[derive(Clone, Debug, Serialize)]
pub struct Compensator {
    #[serde(skip)]
    pub k: RMat,
    /// Scaling constant applied to `B̃`.
    pub c: f64,
    /// `λ_min(Re(C B̃ − K A))`.
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompensatorFailure {
    pub reason: String,
    pub margin: f64,
}

/// Compensating matrix for `(Ã⁰, A, B̃)` with `Ã⁰A` symmetric and `B̃ ≥ 0`.
/// In symmetric coordinates with `A` diagonal the off-diagonal blocks are
/// `K_ij = 2 M_ij / (a_j − a_i)`, `M = Re B`, which makes
/// `Re(B − KA) = Re block-diag B`.
pub fn compensating_matrix(
    a0: &RMat,
    a: &RMat,
    bt: &RMat,
) -> std::result::Result<Compensator, CompensatorFailure> {
    let n = a.nrows();
    let fail = |reason: &str| CompensatorFailure {
        reason: reason.into(),
        margin: f64::NAN,
    };
    let (s, si) = spd_sqrt(a0).ok_or_else(|| fail("A0 not positive definite"))?;
    let a_s = &s * a * &si;
    if rel_asym(&a_s) > 1e-8 {
        return Err(fail("A0 A not symmetric"));
    }
    let a_s = sym_part(&a_s);
    let b_s = sym_part(&(&si * bt * &si));
    let eig = nalgebra::SymmetricEigen::new(a_s.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut o = RMat::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        o.set_column(c, &eig.eigenvectors.column(i));
    }
    let scale = a_s.abs().max().max(1e-300);
    let cl = clusters(&vals, 1e-8 * scale);
    let mut block = vec![0usize; n];
    for (bi, (start, len)) in cl.iter().enumerate() {
        for item in block.iter_mut().skip(*start).take(*len) {
            *item = bi;
        }
    }
    let bp = o.transpose() * &b_s * &o;
    let mut kp = RMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if block[i] != block[j] {
                kp[(i, j)] = 2.0 * bp[(i, j)] / (vals[j] - vals[i]);
            }
        }
    }
    let k = &s * (&o * kp * o.transpose()) * &s;
    let k = (&k - k.transpose()) * 0.5;
    let ka = &k * a;
    let bscale = bt.abs().max().max(1e-300);
    let mut c = 1.0;
    let mut margin = f64::NEG_INFINITY;
    while c <= 65536.0 {
        margin = min_sym_eig(&(bt * c - &ka));
        if margin > 1e-11 * bscale * c {
            return Ok(Compensator { k, c, margin });
        }
        c *= 2.0;
    }
    Err(CompensatorFailure {
        reason: "positivity not reached with C ≤ 2^16".into(),
        margin,
    })
}

/// `K(ξ) = |ξ| K(ξ/|ξ|)` for a model state, built in natural coordinates.
pub fn compensator_field(
    model: &dyn ModelSystem,
    u: &RVec,
    xi: &[f64],
) -> Result<std::result::Result<(RMat, f64), CompensatorFailure>> {
    let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n = model.n();
    if norm == 0.0 {
        return Ok(Ok((RMat::zeros(n, n), 0.0)));
    }
    let omega: Vec<f64> = xi.iter().map(|x| x / norm).collect();
    let sf = match symmetric_form(model, u)? {
        Ok(sf) => sf,
        Err(f) => {
            return Ok(Err(CompensatorFailure {
                reason: f.reason,
                margin: f64::NAN,
            }))
        }
    };
    let (at, bt) = directional(&sf, &omega);
    let a0i = inverse_r(&sf.a0).expect("A0 invertible");
    Ok(compensating_matrix(&sf.a0, &(a0i * at), &bt).map(|c| (c.k * norm, c.margin)))
}

/// `(Ã^ω, B̃^{ωω})` from a symmetric form.
pub fn directional(sf: &SymmetricForm, omega: &[f64]) -> (RMat, RMat) {
    let n = sf.a0.nrows();
    let mut a = RMat::zeros(n, n);
    let mut b = RMat::zeros(n, n);
    for (j, &x) in omega.iter().enumerate() {
        a += &sf.a[j] * x;
        for (k, &y) in omega.iter().enumerate() {
            b += &sf.b[j][k] * (x * y);
        }
    }
    (a, b)
}

/// Unit vectors covering the sphere in `ℝ^d`; `m` controls resolution.
pub fn sphere_grid(d: usize, m: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..m)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            // Fibonacci lattice; extra dimensions beyond 3 are not used.
            let k = m * m / 2 + 2;
            let g = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..k)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / k as f64;
                    let rr = (1.0 - z * z).sqrt();
                    let t = g * i as f64;
                    vec![z, rr * t.cos(), rr * t.sin()]
                })
                .collect()
        }
    }
}

/// Radii for dissipativity scans, log-spaced over `[1e-3, 1e3]`.
pub fn radii(m: usize) -> Vec<f64> {
    (0..m)
        .map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / (m - 1) as f64))
        .collect()
}

/// θ from one symbol: `−max Re σ(−iA − B)·(1+|ξ|²)/|ξ|²` with `A = A^ξ`,
/// `B = B^{ξξ}` at `|ξ| = r`.
fn theta_at(a: &RMat, b: &RMat, r: f64) -> f64 {
    let m = to_complex(a) * (-I) - to_complex(b);
    let mx = eigenvalues(&m)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    -mx * (1.0 + r * r) / (r * r)
}

/// Largest θ with `max Re σ(−iξA − |ξ|²B) ≤ −θ|ξ|²/(1+|ξ|²)` over `±ξ` at
/// the given radii, for a one-dimensional symbol pair.
pub fn dissipativity_theta(a: &RMat, b: &RMat, radii: &[f64]) -> f64 {
    radii
        .iter()
        .flat_map(|&r| [r, -r])
        .map(|x| theta_at(&(a * x), &(b * (x * x)), x.abs()))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, Serialize)]
pub struct DissipativityScan {
    pub theta: f64,
    pub worst_xi: Vec<f64>,
    pub points: usize,
}

/// Uniform dissipativity over a sphere grid times radii.
pub fn dissipativity_scan(
    model: &dyn ModelSystem,
    u: &RVec,
    dirs: &[Vec<f64>],
    radii: &[f64],
) -> Result<DissipativityScan> {
    let d = model.d();
    let mut a = Vec::with_capacity(d);
    let mut b = vec![Vec::with_capacity(d); d];
    for j in 0..d {
        a.push(flux_jacobian(model, u, j)?);
        for k in 0..d {
            b[j].push(model.viscosity(j, k, u)?);
        }
    }
    let n = model.n();
    let pts: Vec<(Vec<f64>, f64)> = dirs
        .iter()
        .flat_map(|w| radii.iter().map(move |&r| (w.clone(), r)))
        .collect();
    let best = pts
        .par_iter()
        .map(|(w, r)| {
            let mut ax = RMat::zeros(n, n);
            let mut bx = RMat::zeros(n, n);
            for j in 0..d {
                ax += &a[j] * (w[j] * r);
                for k in 0..d {
                    bx += &b[j][k] * (w[j] * w[k] * r * r);
                }
            }
            (
                theta_at(&ax, &bx, *r),
                w.iter().map(|x| x * r).collect::<Vec<f64>>(),
            )
        })
        .reduce(
            || (f64::INFINITY, vec![]),
            |x, y| {
                if y.0 < x.0 || (y.0 == x.0 && y.1 < x.1) {
                    y
                } else {
                    x
                }
            },
        );
    Ok(DissipativityScan {
        theta: best.0,
        worst_xi: best.1,
        points: pts.len(),
    })
}

/// Ellipticity constant of `b₂^{ξξ}` (the lower-right `r×r` block) over a
/// direction grid: `min Re σ(b₂^{ωω})`.
pub fn ellipticity_theta(model: &dyn ModelSystem, u: &RVec, dirs: &[Vec<f64>]) -> Result<f64> {
    let n = model.n();
    let r = model.r();
    let mut th = f64::INFINITY;
    for w in dirs {
        let b = crate::model::symbol_b(model, u, w)?;
        let b2 = b.view((n - r, n - r), (r, r)).into_owned();
        let m = eigenvalues_r(&b2)
            .iter()
            .map(|z| z.re)
            .fold(f64::INFINITY, f64::min);
        th = th.min(m);
    }
    Ok(th)
}

#[derive(Clone, Debug, Serialize)]
pub struct MultiplicityReport {
    pub verdict: Tri,
    /// Cluster sizes at the first grid direction.
    pub profile: Vec<usize>,
    /// Smallest gap between distinct clusters, relative to `‖A^ξ‖`.
    pub min_rel_gap: f64,
    /// First direction whose profile differs, if any.
    pub mismatch_at: Option<Vec<f64>>,
}

/// (H4): cluster sizes of `σ(A^ξ)` constant over the sphere grid.
pub fn constant_multiplicity_check(
    model: &dyn ModelSystem,
    u: &RVec,
    dirs: &[Vec<f64>],
    tol: f64,
) -> Result<MultiplicityReport> {
    let mut first: Option<Vec<usize>> = None;
    let mut min_rel_gap = f64::INFINITY;
    let mut mismatch = None;
    let mut borderline = false;
    for w in dirs {
        let a = crate::model::symbol_a(model, u, w)?;
        let scale = a.abs().max().max(1e-300);
        let ev = eigenvalues_r(&a);
        let mut re: Vec<f64> = ev.iter().map(|z| z.re).collect();
        re.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let cl = clusters(&re, tol * scale);
        for win in cl.windows(2) {
            let gap = (re[win[1].0] - re[win[0].0 + win[0].1 - 1]) / scale;
            min_rel_gap = min_rel_gap.min(gap);
            if gap <= 10.0 * tol {
                borderline = true;
            }
        }
        let prof: Vec<usize> = cl.iter().map(|c| c.1).collect();
        match &first {
            None => first = Some(prof),
            Some(f) if *f != prof && mismatch.is_none() => mismatch = Some(w.clone()),
            _ => {}
        }
    }
    let verdict = if mismatch.is_some() {
        Tri::Fail
    } else if borderline {
        Tri::Indeterminate
    } else {
        Tri::Pass
    };
    Ok(MultiplicityReport {
        verdict,
        profile: first.unwrap_or_default(),
        min_rel_gap,
        mismatch_at: mismatch,
    })
}

/// Genuine coupling of a model state over a direction grid, in natural
/// coordinates. Returns the raw kernel test and the (A2)-level verdict,
/// which additionally needs first-order symmetry.
#[derive(Clone, Debug, Serialize)]
pub struct StateCoupling {
    pub raw: Tri,
    pub a2: Tri,
    pub min_sigma: f64,
    pub first_order_symmetric: bool,
    pub notes: Vec<String>,
}

pub fn state_coupling(
    model: &dyn ModelSystem,
    u: &RVec,
    dirs: &[Vec<f64>],
) -> Result<StateCoupling> {
    let sf = match symmetric_form(model, u)? {
        Ok(sf) => sf,
        Err(f) => {
            return Ok(StateCoupling {
                raw: Tri::Indeterminate,
                a2: Tri::Fail,
                min_sigma: f64::NAN,
                first_order_symmetric: false,
                notes: vec![f.reason],
            })
        }
    };
    let a0i = inverse_r(&sf.a0).expect("A0 invertible");
    let mut raw = Tri::Pass;
    let mut min_sigma = f64::INFINITY;
    let mut notes = sf.notes.clone();
    for w in dirs {
        let (at, bt) = directional(&sf, w);
        let res = genuine_coupling(&(&a0i * at), &(&a0i * bt), 1e-8);
        raw = raw.and(res.verdict);
        min_sigma = min_sigma.min(res.min_sigma);
        if let Some(nt) = res.note {
            if !notes.contains(&nt) {
                notes.push(nt);
            }
        }
    }
    let a2 = if sf.first_order_symmetric && sf.a0_spd {
        raw
    } else {
        Tri::Fail
    };
    Ok(StateCoupling {
        raw,
        a2,
        min_sigma,
        first_order_symmetric: sf.first_order_symmetric,
        notes,
    })
}

/// Random `(Ã⁰, A, B̃)` with `Ã⁰` SPD, `Ã⁰A` symmetric and
/// `B̃ = block-diag{0, b̃}`, `b̃` SPD of size `r`. With `planted` an
/// eigenvector of `A` is placed in `ker B̃`, so (K0) fails.
pub fn random_symmetrizable<R: Rng>(
    rng: &mut R,
    n: usize,
    r: usize,
    planted: bool,
) -> (RMat, RMat, RMat) {
    let g = |rng: &mut R, k: usize| RMat::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    let x = g(rng, n);
    let a0 = &x * x.transpose() + RMat::identity(n, n) * 0.5;
    let y = g(rng, r);
    let b2 = &y * y.transpose() + RMat::identity(r, r) * 0.2;
    let mut bt = RMat::zeros(n, n);
    bt.view_mut((n - r, n - r), (r, r)).copy_from(&b2);
    let (s, si) = spd_sqrt(&a0).unwrap();
    let z = g(rng, n);
    let mut a_s = sym_part(&(&z + z.transpose()));
    if planted {
        let mut v = RVec::zeros(n);
        for i in 0..n - r {
            v[i] = rng.random_range(-1.0..1.0);
        }
        if v.norm() == 0.0 {
            v[0] = 1.0;
        }
        let w = &s * &v;
        let w = &w / w.norm();
        let p = RMat::identity(n, n) - &w * w.transpose();
        let mu = rng.random_range(-1.0..1.0);
        a_s = &w * w.transpose() * mu + &p * a_s * &p;
    }
    let a = &si * a_s * &s;
    (a0, a, bt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Burgers, Eos, NavierStokes};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ns_symmetrizer_ideal_rest() {
        let ns = NavierStokes::ideal(2);
        let u = ns.state(1.0, &[0.0, 0.0], 1.0);
        let sf = symmetric_form(&ns, &u).unwrap().unwrap();
        let expect = RMat::from_diagonal(&RVec::from_vec(vec![1.0, 1.0, 1.0, 2.5]));
        assert!((&sf.a0 - expect).abs().max() < 1e-14);
        assert!(sf.first_order_symmetric && sf.b_block_structure && sf.a0_spd);
    }

    #[test]
    fn ns_symmetric_wherever_thermodynamically_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ns = NavierStokes::ideal(3);
        for _ in 0..20 {
            let u = ns.state(
                rng.random_range(0.2..4.0),
                &[rng.random_range(-2.0..2.0), 0.3, -0.7],
                rng.random_range(0.2..4.0),
            );
            let sf = symmetric_form(&ns, &u).unwrap().unwrap();
            assert!(sf.first_order_symmetric);
            assert!(sf.b_block_structure);
        }
    }

    #[test]
    fn burgers_scalar_form() {
        let b = Burgers::new(1);
        let sf = symmetric_form(&b, &RVec::from_element(1, 0.7))
            .unwrap()
            .unwrap();
        assert_eq!(sf.a0[(0, 0)], 1.0);
        assert!((sf.a[0][(0, 0)] - 0.7).abs() < 1e-15);
        assert_eq!(sf.b[0][0][(0, 0)], 1.0);
    }

    fn vdw_spinodal() -> (NavierStokes, RVec) {
        let mut ns = NavierStokes::ideal(1);
        ns.eos = Eos::VanDerWaals {
            a: 3.0,
            b: 1.0 / 3.0,
        };
        // p_ρ = RT/(1−bρ)² − 2aρ < 0 at ρ = 1, T = 0.5.
        let u = ns.state(1.0, &[0.0], 0.5);
        (ns, u)
    }

    #[test]
    fn vdw_spinodal_flags_first_order_symmetry() {
        let (ns, u) = vdw_spinodal();
        assert!(ns.pressure_rho(&u).unwrap() < 0.0);
        let sf = symmetric_form(&ns, &u).unwrap().unwrap();
        assert!(!sf.first_order_symmetric);
        assert!(sf
            .notes
            .iter()
            .any(|s| s.contains("first-order symmetry fails")));
    }

    #[test]
    fn coupling_simple_cases() {
        let a = RMat::from_diagonal(&RVec::from_vec(vec![1.0, 2.0]));
        assert_eq!(
            genuine_coupling(&a, &RMat::identity(2, 2), 1e-8).verdict,
            Tri::Pass
        );
        let b = RMat::from_diagonal(&RVec::from_vec(vec![0.0, 1.0]));
        assert_eq!(genuine_coupling(&a, &b, 1e-8).verdict, Tri::Fail);
        // Repeated eigenvalue: the eigenspace meets ker B.
        let a = RMat::identity(2, 2);
        assert_eq!(genuine_coupling(&a, &b, 1e-8).verdict, Tri::Fail);
        // Jordan block is flagged.
        let j = RMat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert_eq!(genuine_coupling(&j, &b, 1e-8).verdict, Tri::Indeterminate);
    }

    #[test]
    fn compensator_two_by_two() {
        let a = RMat::from_diagonal(&RVec::from_vec(vec![1.0, 2.0]));
        let b = RMat::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]);
        let c = compensating_matrix(&RMat::identity(2, 2), &a, &b).unwrap();
        let expect = RMat::from_row_slice(2, 2, &[0.0, 6.0, -6.0, 0.0]);
        assert!((&c.k - expect).abs().max() < 1e-12);
        let re = sym_part(&(b - &c.k * a));
        assert!((re - RMat::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn compensator_scalar_is_zero() {
        let c = compensating_matrix(
            &RMat::identity(1, 1),
            &RMat::from_element(1, 1, 3.0),
            &RMat::from_element(1, 1, 0.5),
        )
        .unwrap();
        assert_eq!(c.k[(0, 0)], 0.0);
        assert!((c.margin - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kawashima_loop_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for i in 0..60 {
            let planted = i % 3 == 0;
            let (a0, a, bt) = random_symmetrizable(&mut rng, 4, 2, planted);
            let b = inverse_r(&a0).unwrap() * &bt;
            let gc = genuine_coupling(&a, &b, 1e-8).verdict == Tri::Pass;
            let comp = compensating_matrix(&a0, &a, &bt);
            let th = dissipativity_theta(&a, &b, &radii(41));
            assert_eq!(gc, !planted);
            assert_eq!(comp.is_ok(), gc, "case {i}");
            assert_eq!(th > 1e-9, gc, "case {i}: θ = {th}");
            if let Ok(c) = comp {
                assert!((&c.k + c.k.transpose()).abs().max() == 0.0);
            }
        }
    }

    #[test]
    fn burgers_dissipativity() {
        let b = Burgers::new(1);
        let sc = dissipativity_scan(
            &b,
            &RVec::from_element(1, 1.0),
            &sphere_grid(1, 0),
            &radii(25),
        )
        .unwrap();
        // Re σ = −|ξ|², so θ = 1 + |ξ|² at the smallest radius 1e−3.
        assert!((sc.theta - (1.0 + 1e-6)).abs() < 1e-10, "{}", sc.theta);
        // B ≡ 0 gives no decay.
        let th = dissipativity_theta(&RMat::identity(1, 1), &RMat::zeros(1, 1), &radii(10));
        assert!(th <= 1e-14);
    }

    #[test]
    fn ns_dissipativity_grid_stable() {
        let ns = NavierStokes::ideal(2);
        let u = ns.state(1.0, &[0.5, 0.2], 1.0);
        let t1 = dissipativity_scan(&ns, &u, &sphere_grid(2, 24), &radii(31))
            .unwrap()
            .theta;
        let t2 = dissipativity_scan(&ns, &u, &sphere_grid(2, 48), &radii(61))
            .unwrap()
            .theta;
        assert!(t1 > 0.0 && t2 > 0.0);
        assert!((t1 - t2).abs() / t2 < 0.02, "{t1} {t2}");
    }

    #[test]
    fn ns_coupling_tracks_p_rho() {
        let ns = NavierStokes::ideal(2);
        let u = ns.state(1.0, &[0.3, 0.0], 1.0);
        let dirs = sphere_grid(2, 12);
        let sc = state_coupling(&ns, &u, &dirs).unwrap();
        assert_eq!(sc.a2, Tri::Pass);
        let (vdw, u) = vdw_spinodal();
        let sc = state_coupling(&vdw, &u, &sphere_grid(1, 0)).unwrap();
        assert_eq!(sc.a2, Tri::Fail);
    }

    #[test]
    fn multiplicity_checks() {
        let b = Burgers::new(2);
        let r =
            constant_multiplicity_check(&b, &RVec::from_element(1, 0.5), &sphere_grid(2, 16), 1e-8)
                .unwrap();
        assert_eq!(r.verdict, Tri::Pass);
        assert_eq!(r.profile, vec![1]);
        let ns = NavierStokes::ideal(3);
        let u = ns.state(1.0, &[0.2, 0.1, -0.3], 1.0);
        let r = constant_multiplicity_check(&ns, &u, &sphere_grid(3, 8), 1e-8).unwrap();
        assert_eq!(r.verdict, Tri::Pass);
        assert_eq!(r.profile, vec![1, 3, 1]);
    }

    /// Two decoupled linear fields with speeds ξ₁ and ξ₂.
    struct Crossing;
    impl ModelSystem for Crossing {
        fn name(&self) -> String {
            "crossing".into()
        }
        fn d(&self) -> usize {
            2
        }
        fn n(&self) -> usize {
            2
        }
        fn r(&self) -> usize {
            2
        }
        fn flux(&self, j: usize, u: &RVec) -> Result<RVec> {
            Ok(if j == 0 {
                RVec::from_vec(vec![u[0], 0.0])
            } else {
                RVec::from_vec(vec![0.0, u[1]])
            })
        }
        fn viscosity(&self, j: usize, k: usize, _u: &RVec) -> Result<RMat> {
            Ok(RMat::identity(2, 2) * if j == k { 1.0 } else { 0.0 })
        }
    }

    #[test]
    fn crossing_fields_fail_at_cone() {
        let r = constant_multiplicity_check(&Crossing, &RVec::zeros(2), &sphere_grid(2, 16), 1e-8)
            .unwrap();
        assert_eq!(r.verdict, Tri::Fail);
        let w = r.mismatch_at.unwrap();
        assert!((w[0] - w[1]).abs() < 1e-12);
    }

    #[test]
    fn compensator_homogeneous() {
        let ns = NavierStokes::ideal(2);
        let u = ns.state(1.0, &[0.4, 0.1], 1.2);
        let (k1, m1) = compensator_field(&ns, &u, &[0.6, 0.8]).unwrap().unwrap();
        let (k3, _) = compensator_field(&ns, &u, &[1.8, 2.4]).unwrap().unwrap();
        assert!(m1 > 0.0);
        assert!((k1 * 3.0 - k3).abs().max() < 1e-10);
    }
}
