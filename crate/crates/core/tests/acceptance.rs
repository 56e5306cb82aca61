//! Acceptance run: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shockstab::cli::{hemisphere_directions, run};
use shockstab::evans::{
    canonical_block_eigenvalues, jordan_bifurcation_check, low_freq_expand, predicted_roots,
    spectral_verdict, winding_number, Contour, EvansOptions, EvansSystem, LowFreqOptions,
    SpectralVerdict, WindingOptions,
};
use shockstab::inviscid::{glancing_at_state, inviscid_verdict, liu_majda, InviscidResolution};
use shockstab::linalg::{eigenvalues, inverse_r, linear_fit, RMat, RVec};
use shockstab::model::{
    hugoniot_solve, Burgers, Constraint, Eos, ModelSystem, NavierStokes, ShockData, Side,
};
use shockstab::profile::{solve_profile, Profile, ProfileOptions};
use shockstab::structure::{
    compensating_matrix, dissipativity_theta, genuine_coupling, radii, random_symmetrizable,
    sphere_grid, state_coupling, Tri,
};
use shockstab::verify::{
    const_coeff_decay, discretize_operator, kawashima_energy_model, resolvent_grid_stability,
    resolvent_scan, shell_samples, spectrum_check, tail_exponent, DecayOptions, EnergyOptions,
    GridSpec,
};
use std::f64::consts::PI;
use std::time::Instant;

type Outcome = Result<(bool, String), String>;

fn burgers(d: usize) -> (Burgers, ShockData) {
    (
        Burgers::new(d),
        ShockData::new(RVec::from_element(1, 1.0), RVec::from_element(1, -1.0), 0.0),
    )
}

fn gas(d: usize, mach: f64) -> (NavierStokes, ShockData) {
    let ns = NavierStokes::ideal(d);
    let mut v = vec![0.0; d];
    v[0] = mach * 1.4f64.sqrt();
    let um = ns.state(1.0, &v, 1.0);
    let sh = hugoniot_solve(&ns, &um, &Constraint::Speed(0.0)).unwrap();
    (ns, sh)
}

fn profile(m: &dyn ModelSystem, sh: &ShockData) -> Profile {
    solve_profile(m, sh, &ProfileOptions::default()).unwrap()
}

fn e<E: std::fmt::Display>(x: E) -> String {
    x.to_string()
}

fn xi_samples() -> Vec<Vec<f64>> {
    [0.0, 0.5, -0.5, 1.5, -1.5, 3.0]
        .iter()
        .map(|&v| vec![v])
        .collect()
}

fn c1_burgers_profile() -> Outcome {
    let t = Instant::now();
    let (b, sh) = burgers(1);
    let p = solve_profile(&b, &sh, &ProfileOptions::default()).map_err(e)?;
    let secs = t.elapsed().as_secs_f64();
    let mut err = 0.0f64;
    for i in 0..=4000 {
        let x = -20.0 + 0.01 * i as f64;
        err = err.max((p.eval(x).0[0] + (x / 2.0).tanh()).abs());
    }
    Ok((
        err <= 1e-8 && secs < 1.0,
        format!("max error {err:.2e} on [-20, 20], {secs:.3} s"),
    ))
}

fn c2_zero_mode() -> Outcome {
    let (b, sh) = burgers(1);
    let p = profile(&b, &sh);
    let sys = EvansSystem::new(&b, &sh, &p, EvansOptions::default()).map_err(e)?;
    let d0 = sys.value(&[], Complex64::new(0.0, 0.0)).map_err(e)?.norm();
    let mut mx = 0.0f64;
    for k in 0..64 {
        mx = mx.max(
            sys.value(&[], Complex64::from_polar(0.1, 2.0 * PI * k as f64 / 64.0))
                .map_err(e)?
                .norm(),
        );
    }
    let f = |z: Complex64| sys.value(&[], z);
    let w = winding_number(
        &f,
        &Contour::circle(Complex64::new(0.0, 0.0), 0.1),
        &WindingOptions::default(),
    )
    .map_err(e)?
    .winding;
    let rel = d0 / mx;
    Ok((
        rel <= 1e-6 && w == 1,
        format!("|D(0,0)|/max|D| = {rel:.2e}, winding {w}"),
    ))
}

fn c3_spectral() -> Outcome {
    let mut ok = true;
    let mut msg = Vec::new();
    let xis = xi_samples();
    // Burgers in two dimensions.
    let (b, sh) = burgers(2);
    let p = profile(&b, &sh);
    let sys = EvansSystem::new(&b, &sh, &p, EvansOptions::default()).map_err(e)?;
    let rep = spectral_verdict(&sys, &xis, 1e-3, 10.0, &WindingOptions::default());
    let wb: Vec<i64> = rep.windings.iter().map(|w| w.1).collect();
    ok &= rep.verdict == SpectralVerdict::StronglyStable
        && wb.len() >= 5
        && wb.iter().all(|&w| w == 0);
    let mut worst = f64::NEG_INFINITY;
    for xi in &xis {
        let disc = discretize_operator(
            &b,
            &sh,
            &p,
            xi,
            &GridSpec {
                half_width: 20.0,
                points: 200,
            },
        )
        .map_err(e)?;
        let sc = spectrum_check(&disc, 1e-3, 10.0, 1e-4);
        ok &= sc.unstable_inside.is_empty();
        worst = worst.max(sc.max_re_in_annulus);
    }
    msg.push(format!(
        "Burgers d=2 windings {wb:?}, discrete max Re {worst:.2e}"
    ));
    // Mach-1.1 ideal gas in two dimensions.
    let (ns, sh) = gas(2, 1.1);
    let p = profile(&ns, &sh);
    let sys = EvansSystem::new(
        &ns,
        &sh,
        &p,
        EvansOptions {
            rtol: 1e-8,
            frame_rtol: 1e-10,
            ..EvansOptions::default()
        },
    )
    .map_err(e)?;
    let gxis = &xis[..5];
    let rep = spectral_verdict(
        &sys,
        gxis,
        1e-3,
        10.0,
        &WindingOptions {
            per_piece: 16,
            ..WindingOptions::default()
        },
    );
    let wg: Vec<i64> = rep.windings.iter().map(|w| w.1).collect();
    ok &= rep.verdict == SpectralVerdict::StronglyStable
        && wg.len() >= 5
        && wg.iter().all(|&w| w == 0);
    let mut worst = f64::NEG_INFINITY;
    for xi in gxis {
        let disc = discretize_operator(
            &ns,
            &sh,
            &p,
            xi,
            &GridSpec {
                half_width: 60.0,
                points: 150,
            },
        )
        .map_err(e)?;
        let sc = spectrum_check(&disc, 1e-3, 10.0, 1e-4);
        ok &= sc.unstable_inside.is_empty();
        worst = worst.max(sc.max_re_in_annulus);
    }
    msg.push(format!(
        "gas M=1.1 d=2 windings {wg:?}, discrete max Re {worst:.2e}"
    ));
    Ok((ok, msg.join("; ")))
}

fn c4_low_frequency() -> Outcome {
    let (b, sh) = burgers(2);
    let p = profile(&b, &sh);
    let sys = EvansSystem::new(&b, &sh, &p, EvansOptions::default()).map_err(e)?;
    let grid: Vec<f64> = (0..9)
        .map(|k| 1e-2 * (1e-2f64).powf(k as f64 / 8.0))
        .collect();
    let mut slopes = Vec::new();
    let mut gammas = Vec::new();
    let mut errs = Vec::new();
    for (xi, lam) in hemisphere_directions(1, 5, 2024) {
        let lf = low_freq_expand(&sys, &xi, lam, &grid, &LowFreqOptions::default()).map_err(e)?;
        slopes.push(lf.remainder_slope);
        gammas.push(lf.gamma());
        errs.push(lf.extrapolation_error * lf.gamma().norm());
    }
    let min_slope = slopes.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut spread = 0.0f64;
    for i in 0..gammas.len() {
        for j in 0..i {
            spread = spread.max((gammas[i] - gammas[j]).norm() / (errs[i] + errs[j]));
        }
    }
    Ok((
        min_slope >= 0.9 && spread <= 3.0,
        format!(
            "min slope {min_slope:.4}, max |γi−γj|/(erri+errj) = {spread:.3}, γ = {:.8}",
            gammas[0]
        ),
    ))
}

fn c5_liu_majda() -> Outcome {
    let (b, sh) = burgers(1);
    let db = liu_majda(&b, &sh).map_err(e)?;
    let jump = sh.up()[0] - sh.um()[0];
    let (ns, sh) = gas(1, 1.1);
    let d1 = liu_majda(&ns, &sh).map_err(e)?;
    let d2 = liu_majda(&ns, &sh).map_err(e)?;
    // Independent recomputation: the shock re-solved from a Mach constraint.
    let sh2 = hugoniot_solve(
        &ns,
        &sh.um(),
        &Constraint::Mach {
            mach: 1.1,
            upstream: Side::Minus,
        },
    )
    .map_err(e)?;
    let d3 = liu_majda(&ns, &sh2).map_err(e)?;
    let d4 = inviscid_verdict(&ns, &sh, &InviscidResolution::default())
        .map_err(e)?
        .delta;
    let spread = [d2, d3, d4]
        .iter()
        .map(|d| (d - d1).abs())
        .fold(0.0, f64::max)
        / d1.abs();
    let ok = (db - jump).abs() <= 4.0 * f64::EPSILON * jump.abs() && d1 != 0.0 && spread <= 1e-8;
    Ok((
        ok,
        format!(
            "δ(Burgers) = {db} (jump {jump}); δ(gas) = {d1:.12e}, relative spread {spread:.1e}"
        ),
    ))
}

fn c6_kawashima_loop() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut bad = 0;
    let mut planted_count = 0;
    for i in 0..100 {
        let planted = i % 4 == 1;
        planted_count += planted as usize;
        let (a0, a, bt) = random_symmetrizable(&mut rng, 4, 2, planted);
        let b = inverse_r(&a0).unwrap() * &bt;
        let gc = genuine_coupling(&a, &b, 1e-8).verdict == Tri::Pass;
        let comp = compensating_matrix(&a0, &a, &bt)
            .map(|c| c.margin > 0.0)
            .unwrap_or(false);
        let th = dissipativity_theta(&a, &b, &radii(41)) > 1e-9;
        if gc != comp || gc != th {
            bad += 1;
        }
    }
    // van der Waals gas across the spinodal: coupling follows sgn p_ρ.
    let mut ns = NavierStokes::ideal(1);
    ns.eos = Eos::VanDerWaals {
        a: 3.0,
        b: 1.0 / 3.0,
    };
    let mut flips = 0;
    let mut states = 0;
    for k in 0..21 {
        let t = 0.3 + 0.05 * k as f64;
        for rho in [0.5, 1.0, 1.5] {
            let u = ns.state(rho, &[0.0], t);
            let pr = ns.pressure_rho(&u).unwrap();
            if pr.abs() < 1e-6 {
                continue;
            }
            states += 1;
            let sc = state_coupling(&ns, &u, &sphere_grid(1, 0)).map_err(e)?;
            if (sc.a2 == Tri::Pass) != (pr > 0.0) {
                flips += 1;
            }
        }
    }
    Ok((bad == 0 && flips == 0, format!("{bad} counterexamples in 100 systems ({planted_count} planted); {flips} mismatches over {states} vdW states")))
}

fn c7_jordan() -> Outcome {
    // Canonical s = 2 block with an O(σ + ρ) perturbation off the lower-left
    // slot; that slot is what p and q record.
    let (p, q) = (1.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pert = DMatrix::<Complex64>::from_fn(2, 2, |_, _| {
        use rand::Rng;
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    pert[(1, 0)] = Complex64::new(0.0, 0.0);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 0..6 {
        let rho = 1e-3 / 4f64.powi(k);
        let sigma = 0.5 * rho;
        let omega = Complex64::new(p * sigma, -q * rho);
        let base = canonical_block_eigenvalues(2, p, q, sigma, rho);
        let mut m = DMatrix::<Complex64>::zeros(2, 2);
        m[(0, 1)] = Complex64::i();
        m[(1, 0)] = Complex64::i() * omega;
        let computed = eigenvalues(&(m + pert.clone() * Complex64::new(sigma + rho, 0.0)));
        let pred = predicted_roots(2, omega);
        let exact = base
            .iter()
            .map(|z| {
                pred.iter()
                    .map(|w| (z - w).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        if exact > 1e-12 * omega.norm().sqrt() {
            return Ok((
                false,
                format!("unperturbed block differs from prediction by {exact:.2e}"),
            ));
        }
        let rem = computed
            .iter()
            .map(|z| {
                pred.iter()
                    .map(|w| (z - w).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        xs.push((sigma + rho).ln());
        ys.push(rem.ln());
    }
    let canon_exp = linear_fit(&xs, &ys).1;
    let canon_margin = p.signum() * q;
    let ns = NavierStokes::ideal(2);
    let u = ns.state(1.0, &[0.0, 0.0], 1.0);
    let g = glancing_at_state(&ns, &u, &[vec![1.0]]).map_err(e)?;
    let gp = g
        .iter()
        .find(|p| p.s == 2 && p.xi1.abs() < 1e-8)
        .ok_or("no acoustic glancing point")?;
    let grid: Vec<(f64, f64)> = (0..6).map(|k| (1e-3 / 4f64.powi(k), 0.0)).collect();
    let jp = jordan_bifurcation_check(&ns, &u, gp, &grid).map_err(e)?;
    let need = 0.5 + 0.2;
    let ok =
        canon_exp >= need && canon_margin > 0.0 && jp.remainder_exponent >= need && jp.margin > 0.0;
    Ok((ok, format!("canonical: exponent {canon_exp:.3}, margin {canon_margin}; Euler at rest: exponent {:.3}, margin {:.3e}", jp.remainder_exponent, jp.margin)))
}

fn c8_heat_decay() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (d, target, tol) in [(1usize, 0.25, 0.02), (2, 0.5, 0.03)] {
        let t = Instant::now();
        let a = vec![RMat::zeros(1, 1); d];
        let b: Vec<Vec<RMat>> = (0..d)
            .map(|j| {
                (0..d)
                    .map(|k| RMat::identity(1, 1) * if j == k { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let fit = const_coeff_decay(
            &a,
            &b,
            &RVec::from_element(1, 1.0),
            &DecayOptions::for_dimension(d),
        )
        .map_err(e)?;
        let secs = t.elapsed().as_secs_f64();
        ok &= (fit.exponent - target).abs() <= tol && secs < 120.0 && fit.advisory.is_none();
        parts.push(format!("d={d}: exponent {:.4} ({secs:.1} s)", fit.exponent));
    }
    Ok((ok, parts.join(", ")))
}

fn c9_energy() -> Outcome {
    let m = shockstab::model::Isentropic::default();
    let u = RVec::from_vec(vec![1.0, 0.0]);
    let (tr, comp) = kawashima_energy_model(&m, &u, &EnergyOptions::default()).map_err(e)?;
    let (fine, _) = kawashima_energy_model(
        &m,
        &u,
        &EnergyOptions {
            dt: 1e-3,
            ..EnergyOptions::default()
        },
    )
    .map_err(e)?;
    let coarse_err = tr.max_violation + tr.identity_defect;
    let fine_err = fine.max_violation + fine.identity_defect;
    let ok = comp.margin > 0.0
        && tr.max_violation <= 1e-10
        && fine.max_violation <= 1e-10
        && fine_err <= 0.5 * coarse_err;
    Ok((
        ok,
        format!("max violation {:.1e} / {:.1e}; violation + identity defect {coarse_err:.2e} -> {fine_err:.2e} under dt halving", tr.max_violation, fine.max_violation),
    ))
}

fn c10_resolvent() -> Outcome {
    let (b, sh) = burgers(1);
    let p = profile(&b, &sh);
    let samples = shell_samples(0, 10.0, 0.05, 9);
    let gs = resolvent_grid_stability(
        &b,
        &sh,
        &p,
        &samples,
        &GridSpec {
            half_width: 20.0,
            points: 200,
        },
    )
    .map_err(e)?;
    let tail: Vec<(Vec<f64>, Complex64)> = (0..7)
        .map(|k| {
            (
                vec![],
                Complex64::new(20.0 * 100f64.powf(k as f64 / 6.0), 0.0),
            )
        })
        .collect();
    let tab = resolvent_scan(
        &b,
        &sh,
        &p,
        &tail,
        &GridSpec {
            half_width: 20.0,
            points: 200,
        },
    )
    .map_err(e)?;
    let (slope, _) = tail_exponent(&tab.rows);
    let finite = gs.coarse.sup.is_finite() && !gs.coarse.near_spectrum && !gs.fine.near_spectrum;
    let ok = finite && gs.relative_change <= 0.05 && (slope + 1.0).abs() <= 0.05;
    Ok((
        ok,
        format!(
            "shell sup {:.5} / {:.5} (change {:.2e}); tail exponent {slope:.4}",
            gs.coarse.sup, gs.fine.sup, gs.relative_change
        ),
    ))
}

fn c11_determinism() -> Outcome {
    let base = std::env::temp_dir().join(format!("shockstab-acceptance-{}", std::process::id()));
    let mut bodies = Vec::new();
    for k in 0..2 {
        let dir = base.join(format!("run{k}"));
        let code = run([
            "shockstab",
            "report",
            "--seed",
            "11",
            "--out",
            dir.to_str().unwrap(),
        ]);
        if code == 1 {
            return Err("report failed".into());
        }
        let mut files: Vec<_> = std::fs::read_dir(&dir)
            .map_err(e)?
            .map(|f| f.unwrap().path())
            .collect();
        files.sort();
        let body: Vec<(String, Vec<u8>)> = files
            .iter()
            .map(|f| {
                (
                    f.file_name().unwrap().to_string_lossy().into_owned(),
                    std::fs::read(f).unwrap(),
                )
            })
            .collect();
        bodies.push(body);
    }
    let _ = std::fs::remove_dir_all(&base);
    let same = bodies[0] == bodies[1];
    Ok((
        same,
        format!("{} output files, identical: {same}", bodies[0].len()),
    ))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("1 Burgers profile", c1_burgers_profile),
        ("2 Evans zero mode", c2_zero_mode),
        ("3 strong spectral stability", c3_spectral),
        ("4 low-frequency limit", c4_low_frequency),
        ("5 Liu-Majda determinant", c5_liu_majda),
        ("6 Kawashima equivalence", c6_kawashima_loop),
        ("7 Jordan bifurcation", c7_jordan),
        ("8 heat-kernel decay", c8_heat_decay),
        ("9 Kawashima energy", c9_energy),
        ("10 resolvent scans", c10_resolvent),
        ("11 determinism", c11_determinism),
    ];
    // Optional arguments select criteria by number.
    let only: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !only.is_empty()
            && !only
                .iter()
                .any(|o| name.split(' ').next() == Some(o.as_str()))
        {
            continue;
        }
        let t = Instant::now();
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(msg) => (false, format!("error: {msg}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {detail} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
