//! Dense linear-algebra helpers on top of nalgebra: complex eigenvalues,
//! Riesz spectral projectors, null spaces and orthonormal frames.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;
pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn cvec(v: &RVec) -> CVec {
    v.map(|x| Complex64::new(x, 0.0))
}

/// Max-abs entry, used as a cheap scale.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

pub fn max_abs_r(m: &RMat) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.abs()))
}

/// Eigenvalues of a complex matrix from the complex Schur form.
pub fn eigenvalues(m: &CMat) -> Vec<Complex64> {
    let n = m.nrows();
    if n == 0 {
        return vec![];
    }
    if n == 1 {
        return vec![m[(0, 0)]];
    }
    let attempt = |a: &CMat| {
        [f64::EPSILON, 8.0 * f64::EPSILON, 1e-13, 1e-11]
            .iter()
            .find_map(|&eps| nalgebra::Schur::try_new(a.clone(), eps, 10_000))
            .map(|s| {
                let (_, t) = s.unpack();
                (0..n).map(|i| t[(i, i)]).collect::<Vec<_>>()
            })
    };
    if let Some(ev) = attempt(m) {
        return ev;
    }
    // QR without exceptional shifts can stall on symmetric patterns; an
    // orthogonal similarity breaks them.
    let r = CMat::from_fn(n, n, |i, j| {
        c(
            ((7 * i + 3 * j + 1) as f64).sin(),
            ((5 * i + 11 * j + 2) as f64).cos(),
        )
    });
    let q = r.qr().q();
    if let Some(ev) = attempt(&(q.adjoint() * m * &q)) {
        return ev;
    }
    let scale = m.iter().fold(0.0f64, |a, z| a.max(z.norm())).max(1e-300);
    let pert = CMat::from_fn(n, n, |i, j| {
        c(1e-14 * scale * ((i * n + j) as f64).sin(), 0.0)
    });
    attempt(&(m + pert)).unwrap_or_else(|| vec![c(f64::NAN, f64::NAN); n])
}

/// Eigenvalues of a real matrix.
pub fn eigenvalues_r(m: &RMat) -> Vec<Complex64> {
    eigenvalues(&to_complex(m))
}

/// Real eigenvalues of a matrix known to be real-diagonalizable, sorted
/// increasingly. Returns the largest imaginary part seen as well.
pub fn real_eigenvalues_sorted(m: &RMat) -> (Vec<f64>, f64) {
    let ev = eigenvalues_r(m);
    let im = ev.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
    let mut re: Vec<f64> = ev.iter().map(|z| z.re).collect();
    re.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (re, im)
}

/// Orthonormal basis of the numerical null space (singular values below
/// `tol * max(1, sigma_max)`).
pub fn null_space(m: &CMat, tol: f64) -> CMat {
    let n = m.ncols();
    let rows = m.nrows();
    // Pad to square so the SVD gives a full right basis.
    let mut a = CMat::zeros(rows.max(n), n);
    a.view_mut((0, 0), (rows, n)).copy_from(m);
    let svd = nalgebra::SVD::new(a, false, true);
    let vt = svd.v_t.unwrap();
    let s = svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max).max(1.0);
    let cols: Vec<usize> = (0..n).filter(|&i| s[i] <= tol * smax).collect();
    let mut out = CMat::zeros(n, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        for k in 0..n {
            out[(k, j)] = vt[(i, k)].conj();
        }
    }
    out
}

pub fn null_space_r(m: &RMat, tol: f64) -> RMat {
    let n = m.ncols();
    let rows = m.nrows();
    let mut a = RMat::zeros(rows.max(n), n);
    a.view_mut((0, 0), (rows, n)).copy_from(m);
    let svd = nalgebra::SVD::new(a, false, true);
    let vt = svd.v_t.unwrap();
    let s = svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max).max(1.0);
    let cols: Vec<usize> = (0..n).filter(|&i| s[i] <= tol * smax).collect();
    let mut out = RMat::zeros(n, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        for k in 0..n {
            out[(k, j)] = vt[(i, k)];
        }
    }
    out
}

/// Smallest singular value.
pub fn sigma_min(m: &CMat) -> f64 {
    if m.ncols() == 0 {
        return f64::INFINITY;
    }
    let svd = nalgebra::SVD::new(m.clone(), false, false);
    svd.singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Thin QR of a frame; returns the orthonormal factor and log det R
/// (sum of complex logs of the diagonal).
pub fn orthonormalize(m: &CMat) -> (CMat, Complex64) {
    let k = m.ncols();
    let qr = m.clone().qr();
    let (q, r) = qr.unpack();
    let mut logdet = Complex64::new(0.0, 0.0);
    for i in 0..k {
        logdet += r[(i, i)].ln();
    }
    (q.columns(0, k).into_owned(), logdet)
}

/// Deterministic real orthonormal basis for the range of a (nearly real)
/// rank-k projector, by Gram-Schmidt with column pivoting.
pub fn projector_basis(p: &CMat, k: usize) -> CMat {
    let n = p.nrows();
    let mut cols: Vec<CVec> = (0..n).map(|j| p.column(j).into_owned()).collect();
    let mut basis: Vec<CVec> = Vec::with_capacity(k);
    for _ in 0..k {
        let (jbest, _) =
            cols.iter()
                .enumerate()
                .map(|(j, v)| (j, v.norm()))
                .fold(
                    (0, -1.0),
                    |acc, x| if x.1 > acc.1 + 1e-12 { x } else { acc },
                );
        let mut v = cols[jbest].clone();
        for b in &basis {
            let pr = b.dotc(&v);
            v -= b * pr;
        }
        let nv = v.norm();
        v /= Complex64::new(nv, 0.0);
        // Fix the phase: largest entry real positive.
        let (imax, _) = v.iter().enumerate().fold((0, -1.0), |acc, (i, z)| {
            if z.norm() > acc.1 + 1e-12 {
                (i, z.norm())
            } else {
                acc
            }
        });
        let ph = v[imax] / v[imax].norm();
        v /= ph;
        for col in cols.iter_mut() {
            let pr = v.dotc(col);
            *col -= &v * pr;
        }
        basis.push(v);
    }
    let mut out = CMat::zeros(n, k);
    for (j, b) in basis.iter().enumerate() {
        out.set_column(j, b);
    }
    out
}

/// Symmetric positive square root and inverse square root of an SPD matrix.
pub fn spd_sqrt(a: &RMat) -> Option<(RMat, RMat)> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let q = &eig.eigenvectors;
    let s = RMat::from_diagonal(&eig.eigenvalues.map(|l| l.sqrt()));
    let si = RMat::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Some((q * s * q.transpose(), q * si * q.transpose()))
}

pub fn sym_part(a: &RMat) -> RMat {
    (a + a.transpose()) * 0.5
}

pub fn min_sym_eig(a: &RMat) -> f64 {
    let e = nalgebra::SymmetricEigen::new(sym_part(a));
    e.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Hermitian part min eigenvalue of a complex matrix (via real embedding).
pub fn min_herm_eig(a: &CMat) -> f64 {
    let n = a.nrows();
    let h = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let mut r = RMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            r[(i, j)] = h[(i, j)].re;
            r[(i + n, j + n)] = h[(i, j)].re;
            r[(i, j + n)] = -h[(i, j)].im;
            r[(i + n, j)] = h[(i, j)].im;
        }
    }
    min_sym_eig(&r)
}

pub fn inverse(m: &CMat) -> Option<CMat> {
    m.clone().try_inverse()
}

pub fn inverse_r(m: &RMat) -> Option<RMat> {
    m.clone().try_inverse()
}

/// Greedy nearest matching of `new` eigenvalues to `old` ones; returns for
/// each new eigenvalue the index of its partner in `old`.
pub fn match_eigenvalues(old: &[Complex64], new: &[Complex64]) -> Vec<usize> {
    let n = old.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, a) in new.iter().enumerate() {
        for (j, b) in old.iter().enumerate() {
            pairs.push(((a - b).norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut out = vec![usize::MAX; new.len()];
    let mut used = vec![false; n];
    for (_, i, j) in pairs {
        if out[i] == usize::MAX && !used[j] {
            out[i] = j;
            used[j] = true;
        }
    }
    out
}

/// A group of followed eigenvalues enclosed by one quadrature circle.
#[derive(Clone, Debug)]
struct Circle {
    center: Complex64,
    radius: f64,
    nodes: usize,
}

/// Failure to separate a followed eigenvalue group from its complement.
#[derive(Clone, Debug)]
pub struct SeparationError {
    pub gap: f64,
}

fn circles_for(eigs: &[Complex64], followed: &[bool]) -> Result<Vec<Circle>, SeparationError> {
    let idx: Vec<usize> = (0..eigs.len()).filter(|&i| followed[i]).collect();
    let mut groups: Vec<Vec<usize>> = idx.iter().map(|&i| vec![i]).collect();
    loop {
        let mut merge: Option<(usize, usize)> = None;
        let mut circles = Vec::with_capacity(groups.len());
        for (g, members) in groups.iter().enumerate() {
            let cen = members.iter().map(|&i| eigs[i]).sum::<Complex64>() / members.len() as f64;
            let d_in = members
                .iter()
                .map(|&i| (eigs[i] - cen).norm())
                .fold(0.0, f64::max);
            let mut d_out = f64::INFINITY;
            let mut nearest = usize::MAX;
            let mut d_comp = f64::INFINITY;
            for (j, e) in eigs.iter().enumerate() {
                if members.contains(&j) {
                    continue;
                }
                let d = (e - cen).norm();
                if d < d_out {
                    d_out = d;
                    nearest = j;
                }
                if !followed[j] {
                    d_comp = d_comp.min(d);
                }
            }
            // Followed neighbours much closer than the complement share a circle.
            if nearest != usize::MAX && followed[nearest] && d_out < 1e-3 * d_comp {
                let h = groups.iter().position(|m| m.contains(&nearest)).unwrap();
                merge = Some((g, h));
                break;
            }
            if nearest == usize::MAX {
                // Everything followed: any circle enclosing all works.
                let r = (d_in * 2.0).max(1.0);
                circles.push(Circle {
                    center: cen,
                    radius: r,
                    nodes: 16,
                });
                continue;
            }
            let q = if d_out > 0.0 {
                d_in / d_out
            } else {
                f64::INFINITY
            };
            if q > 0.5 {
                if followed[nearest] {
                    let h = groups.iter().position(|m| m.contains(&nearest)).unwrap();
                    merge = Some((g, h));
                    break;
                }
                return Err(SeparationError { gap: d_out - d_in });
            }
            let (r, ratio) = if q < 1e-3 {
                (0.5 * d_out, 0.5)
            } else {
                let r = (d_in * d_out).sqrt();
                (r, q.sqrt())
            };
            let nodes = ((-38.0 / ratio.ln()).ceil() as usize + 6).clamp(16, 600);
            circles.push(Circle {
                center: cen,
                radius: r,
                nodes,
            });
        }
        match merge {
            Some((a, b)) => {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                let gb = groups.remove(hi);
                groups[lo].extend(gb);
            }
            None => return Ok(circles),
        }
    }
}

/// Minimum distance between followed and non-followed eigenvalues.
pub fn separation(eigs: &[Complex64], followed: &[bool]) -> f64 {
    let mut g = f64::INFINITY;
    for (i, a) in eigs.iter().enumerate() {
        if !followed[i] {
            continue;
        }
        for (j, b) in eigs.iter().enumerate() {
            if followed[j] {
                continue;
            }
            g = g.min((a - b).norm());
        }
    }
    g
}

/// Projector and derivative from a well-conditioned eigenbasis; `None`
/// when eigenvalues are too close or the basis is ill-conditioned.
fn eigenbasis_projector(
    m: &CMat,
    eigs: &[Complex64],
    followed: &[bool],
    dm: Option<&CMat>,
) -> Option<(CMat, Option<CMat>)> {
    let n = m.nrows();
    let scale = eigs
        .iter()
        .map(|z| z.norm())
        .fold(max_abs(m), f64::max)
        .max(1e-300);
    for i in 0..n {
        for j in i + 1..n {
            if (eigs[i] - eigs[j]).norm() < 1e-5 * scale {
                return None;
            }
        }
    }
    let id = CMat::identity(n, n);
    let mut v = CMat::zeros(n, n);
    for (i, &lam) in eigs.iter().enumerate() {
        let shift = lam + Complex64::new(1e-10 * scale, 1e-10 * scale);
        let lu = (m - &id * shift).lu();
        let mut x = CVec::from_fn(n, |k, _| {
            Complex64::new(1.0 + 0.1 * k as f64, 0.3 - 0.05 * k as f64)
        });
        for _ in 0..3 {
            x = lu.solve(&x)?;
            let nx = x.norm();
            if !nx.is_finite() || nx == 0.0 {
                return None;
            }
            x /= Complex64::new(nx, 0.0);
        }
        if (m * &x - &x * lam).norm() > 1e-10 * scale {
            return None;
        }
        v.set_column(i, &x);
    }
    let vinv = v.clone().try_inverse()?;
    if vinv.norm() > 1e6 * (n as f64).sqrt() {
        return None;
    }
    let mut p = CMat::zeros(n, n);
    for i in 0..n {
        if followed[i] {
            p += v.column(i) * vinv.row(i);
        }
    }
    let dp = dm.map(|dm| {
        let md = &vinv * dm * &v;
        let mut e = CMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if followed[i] != followed[j] {
                    let sj = if followed[j] { 1.0 } else { 0.0 };
                    let si = if followed[i] { 1.0 } else { 0.0 };
                    e[(i, j)] = md[(i, j)] * (sj - si) / (eigs[j] - eigs[i]);
                }
            }
        }
        &v * e * &vinv
    });
    Some((p, dp))
}

/// Riesz projector onto the followed eigenvalues, and optionally its
/// derivative along a matrix direction `dm`.
pub fn riesz_projector(
    m: &CMat,
    eigs: &[Complex64],
    followed: &[bool],
    dm: Option<&CMat>,
) -> Result<(CMat, Option<CMat>), SeparationError> {
    let n = m.nrows();
    let nf = followed.iter().filter(|&&b| b).count();
    if nf == 0 {
        return Ok((CMat::zeros(n, n), dm.map(|_| CMat::zeros(n, n))));
    }
    if nf == n {
        return Ok((CMat::identity(n, n), dm.map(|_| CMat::zeros(n, n))));
    }
    if let Some(out) = eigenbasis_projector(m, eigs, followed, dm) {
        return Ok(out);
    }
    // Quadrature over whichever side needs fewer nodes.
    let comp: Vec<bool> = followed.iter().map(|b| !b).collect();
    let cf = circles_for(eigs, followed);
    let cc = circles_for(eigs, &comp);
    let cost = |c: &Result<Vec<Circle>, SeparationError>| match c {
        Ok(v) => v.iter().map(|x| x.nodes).sum::<usize>(),
        Err(_) => usize::MAX,
    };
    let (circles, complement) = if cost(&cf) <= cost(&cc) {
        (cf?, false)
    } else {
        (cc?, true)
    };
    let mut p = CMat::zeros(n, n);
    let mut dp = dm.map(|_| CMat::zeros(n, n));
    let id = CMat::identity(n, n);
    for circ in &circles {
        let nn = circ.nodes;
        for k in 0..nn {
            let th = 2.0 * PI * (k as f64 + 0.5) / nn as f64;
            let e = Complex64::from_polar(1.0, th);
            let z = circ.center + e * circ.radius;
            let w = e * circ.radius / nn as f64;
            let res = match (&id * z - m).try_inverse() {
                Some(r) => r,
                None => return Err(SeparationError { gap: 0.0 }),
            };
            if let (Some(dp), Some(dm)) = (dp.as_mut(), dm) {
                *dp += (&res * dm * &res) * w;
            }
            p += res * w;
        }
    }
    if complement {
        p = id - p;
        if let Some(dp) = dp.as_mut() {
            *dp = -dp.clone();
        }
    }
    Ok((p, dp))
}

/// Least-squares fit y = a + b x; returns (a, b, r2).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    (a, b, r2)
}

/// Richardson table for values g(h_k) with h_{k+1} = h_k / 2 and an error
/// expansion in integer powers of h. Returns (extrapolated, error estimate).
pub fn richardson(vals: &[Complex64]) -> (Complex64, f64) {
    let m = vals.len();
    let mut t: Vec<Vec<Complex64>> = vec![vals.to_vec()];
    for j in 1..m {
        let prev = &t[j - 1];
        let f = 2f64.powi(j as i32);
        let row: Vec<Complex64> = (1..prev.len())
            .map(|i| (prev[i] * f - prev[i - 1]) / (f - 1.0))
            .collect();
        t.push(row);
    }
    let best = t[m - 1][0];
    let err = if m >= 2 {
        (t[m - 1][0] - t[m - 2][t[m - 2].len() - 1]).norm()
    } else {
        f64::INFINITY
    };
    (best, err)
}

/// Finite-difference weights (Fornberg) for derivatives `0..=m` at `z`
/// from nodes `xs`; `w[k][i]` multiplies `f(xs[i])` for the k-th derivative.
pub fn fd_weights(z: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schur_eigenvalues_of_rotation() {
        let m = to_complex(&RMat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        let mut e = eigenvalues(&m);
        e.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((e[0] - c(0.0, -1.0)).norm() < 1e-12);
        assert!((e[1] - c(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn projector_is_idempotent_and_commutes() {
        let m = to_complex(&RMat::from_row_slice(
            3,
            3,
            &[-1.0, 2.0, 0.5, 0.0, 0.5, 1.0, 0.3, 0.0, -3.0],
        ));
        let e = eigenvalues(&m);
        let f: Vec<bool> = e.iter().map(|z| z.re < 0.0).collect();
        let (p, _) = riesz_projector(&m, &e, &f, None).unwrap();
        assert!(max_abs(&(&p * &p - &p)) < 1e-12);
        assert!(max_abs(&(&p * &m - &m * &p)) < 1e-12);
        let tr: Complex64 = (0..3).map(|i| p[(i, i)]).sum();
        assert!((tr.re - f.iter().filter(|&&b| b).count() as f64).abs() < 1e-12);
    }

    #[test]
    fn projector_derivative_matches_difference() {
        let a = to_complex(&RMat::from_row_slice(
            3,
            3,
            &[-1.0, 2.0, 0.5, 0.0, 0.5, 1.0, 0.3, 0.0, -3.0],
        ));
        let b = to_complex(&RMat::from_row_slice(
            3,
            3,
            &[0.2, 0.1, 0.0, -0.3, 0.0, 0.4, 0.0, 0.5, 0.1],
        ));
        let at = |t: f64| &a + &b * Complex64::new(t, 0.0);
        let proj = |t: f64| {
            let m = at(t);
            let e = eigenvalues(&m);
            let f: Vec<bool> = e.iter().map(|z| z.re < 0.0).collect();
            riesz_projector(&m, &e, &f, Some(&b)).unwrap()
        };
        let h = 1e-5;
        let fd = (proj(h).0 - proj(-h).0) / Complex64::new(2.0 * h, 0.0);
        let (_, d) = proj(0.0);
        assert!(max_abs(&(fd - d.unwrap())) < 1e-8);
    }

    #[test]
    fn null_space_of_rank_one() {
        let m = RMat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let ns = null_space_r(&m, 1e-12);
        assert_eq!(ns.ncols(), 1);
        assert!((&m * &ns).norm() < 1e-12);
    }

    #[test]
    fn richardson_removes_linear_and_quadratic_terms() {
        let g = |h: f64| c(3.0 + 2.0 * h - 5.0 * h * h, 1.0 + h);
        let v: Vec<Complex64> = (0..4).map(|k| g(0.1 / 2f64.powi(k))).collect();
        let (x, _) = richardson(&v);
        assert!((x - c(3.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn fornberg_weights_differentiate_polynomials() {
        let xs = [0.0, 0.3, 0.7, 1.2, 2.0];
        let w = fd_weights(0.5, &xs, 2);
        let f = |x: f64| x * x * x - 2.0 * x;
        let d1: f64 = xs.iter().zip(&w[1]).map(|(x, c)| c * f(*x)).sum();
        let d2: f64 = xs.iter().zip(&w[2]).map(|(x, c)| c * f(*x)).sum();
        assert!((d1 - (3.0 * 0.25 - 2.0)).abs() < 1e-12);
        assert!((d2 - 3.0).abs() < 1e-11);
    }
}
