//! Command-line front end: config parsing, the analysis pipeline and the
//! JSON/CSV outputs. Numbers in the reports come from the library modules;
//! this layer only routes them.

use crate::evans::{
    beta_coefficient, jordan_bifurcation_check, low_freq_expand, refined_verdict,
    spectral_verdict_with, BetaEstimate, EvansOptions, EvansSystem, JordanPrediction,
    LowFreqExpansion, LowFreqOptions, RefinedReport, RefinedVerdict, SpectralReport,
    SpectralVerdict, WindingOptions,
};
use crate::inviscid::{
    glancing_at_state, glancing_set, inviscid_verdict, lopatinski_detail, InviscidReport,
    InviscidResolution, InviscidVerdict,
};
use crate::linalg::{sigma_min, RVec};
use crate::model::{builtin, hugoniot_solve, Constraint, ModelSystem, ShockData, Side};
use crate::profile::{classify_shock, endstate_matrix, solve_profile, Profile, ProfileOptions};
use crate::structure::{
    compensating_matrix, constant_multiplicity_check, directional, dissipativity_scan, radii,
    sphere_grid, state_coupling, symmetric_form, Tri,
};
use crate::verify::{
    const_coeff_decay_model, discretize_operator, goodman_transport, goodman_weight,
    kawashima_energy_model, resolvent_grid_stability, shell_samples, spectrum_check, tail_exponent,
    DecayOptions, EnergyOptions, GridSpec, SpectrumCheck, TransportOptions,
};
use crate::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Parser, Debug)]
#[command(
    name = "shockstab",
    version,
    about = "Planar stability analysis of viscous shock profiles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config; built-in defaults are used for missing sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long = "tolerance-profile", global = true, value_enum, default_value_t = TolProfile::Default)]
    pub tolerance_profile: TolProfile,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    StructureCheck,
    ProfileSolve,
    Inviscid,
    EvansSweep,
    Lowfreq,
    Beta,
    Jordan,
    VerifyDecay,
    VerifyEnergy,
    ResolventScan,
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::StructureCheck => "structure-check",
            Command::ProfileSolve => "profile-solve",
            Command::Inviscid => "inviscid",
            Command::EvansSweep => "evans-sweep",
            Command::Lowfreq => "lowfreq",
            Command::Beta => "beta",
            Command::Jordan => "jordan",
            Command::VerifyDecay => "verify-decay",
            Command::VerifyEnergy => "verify-energy",
            Command::ResolventScan => "resolvent-scan",
            Command::Report => "report",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TolProfile {
    Strict,
    Default,
}

// ---------------------------------------------------------------------------
// Config

#[derive(Deserialize, Serialize, Clone, Debug, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub model: ModelCfg,
    pub shock: ShockCfg,
    pub tolerances: TolCfg,
    pub contours: ContourCfg,
    pub verify: VerifyCfg,
    /// Test fixtures; `planted_root` multiplies the Evans function by
    /// `λ − λ*`.
    pub fixture: Option<FixtureCfg>,
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields, default)]
pub struct ModelCfg {
    pub id: String,
    pub params: Value,
}

impl Default for ModelCfg {
    fn default() -> Self {
        ModelCfg {
            id: "burgers".into(),
            params: json!({ "d": 1 }),
        }
    }
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields, default)]
pub struct ShockCfg {
    /// Upstream state in conserved variables.
    pub u_minus: Option<Vec<f64>>,
    /// Upstream state in natural variables `W`.
    pub natural_minus: Option<Vec<f64>>,
    /// Downstream state; with it the speed must be given.
    pub u_plus: Option<Vec<f64>>,
    pub speed: Option<f64>,
    pub mach: Option<f64>,
}

impl Default for ShockCfg {
    fn default() -> Self {
        ShockCfg {
            u_minus: Some(vec![1.0]),
            natural_minus: None,
            u_plus: None,
            speed: Some(0.0),
            mach: None,
        }
    }
}

#[derive(Deserialize, Serialize, Clone, Debug, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TolCfg {
    pub evans_rtol: Option<f64>,
    pub frame_rtol: Option<f64>,
    pub profile_rtol: Option<f64>,
    pub profile_points: Option<usize>,
    pub winding_per_piece: Option<usize>,
    pub refined_tol: Option<f64>,
    pub coupling_tol: Option<f64>,
}

/// Tolerances after applying the profile and explicit overrides.
#[derive(Serialize, Clone, Debug)]
pub struct Tolerances {
    pub profile: TolProfile,
    pub evans_rtol: f64,
    pub frame_rtol: f64,
    pub profile_rtol: f64,
    pub profile_points: usize,
    pub winding_per_piece: usize,
    pub refined_tol: f64,
    pub coupling_tol: f64,
}

impl TolCfg {
    fn resolve(&self, p: TolProfile) -> Tolerances {
        let strict = p == TolProfile::Strict;
        Tolerances {
            profile: p,
            evans_rtol: self
                .evans_rtol
                .unwrap_or(if strict { 1e-12 } else { 1e-10 }),
            frame_rtol: self
                .frame_rtol
                .unwrap_or(if strict { 1e-12 } else { 1e-11 }),
            profile_rtol: self
                .profile_rtol
                .unwrap_or(if strict { 1e-13 } else { 1e-12 }),
            profile_points: self
                .profile_points
                .unwrap_or(if strict { 2001 } else { 1001 }),
            winding_per_piece: self
                .winding_per_piece
                .unwrap_or(if strict { 48 } else { 24 }),
            refined_tol: self.refined_tol.unwrap_or(1e-6),
            coupling_tol: self.coupling_tol.unwrap_or(1e-8),
        }
    }
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields, default)]
pub struct ContourCfg {
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Transverse magnitudes sampled along `±e₁` (d ≥ 2).
    pub xi_values: Vec<f64>,
    pub lowfreq_directions: usize,
    pub lowfreq_rho0: f64,
    pub lowfreq_levels: usize,
    /// Radii for the remainder fit, geometric between these bounds.
    pub lowfreq_rho_range: [f64; 2],
    pub lowfreq_rho_points: usize,
}

impl Default for ContourCfg {
    fn default() -> Self {
        ContourCfg {
            inner_radius: 1e-3,
            outer_radius: 10.0,
            xi_values: vec![0.0, 0.5, -0.5, 1.5, -1.5],
            lowfreq_directions: 3,
            lowfreq_rho0: 1e-2,
            lowfreq_levels: 5,
            lowfreq_rho_range: [1e-4, 1e-2],
            lowfreq_rho_points: 9,
        }
    }
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyCfg {
    /// Cross-check windings against eigenvalues of the discretized operator.
    pub spectrum_check: bool,
    pub grid_half_width: Option<f64>,
    pub grid_points: usize,
    pub shell_radius: f64,
    pub shell_theta: f64,
    pub shell_samples: usize,
    pub tail_lambdas: Vec<f64>,
    pub decay_dimension: usize,
    pub goodman_c_star: f64,
    /// Natural-variable state for the Jordan check; defaults to `U₋`.
    pub jordan_state: Option<Vec<f64>>,
    pub jordan_rhos: Vec<f64>,
}

impl Default for VerifyCfg {
    fn default() -> Self {
        VerifyCfg {
            spectrum_check: true,
            grid_half_width: None,
            grid_points: 200,
            shell_radius: 10.0,
            shell_theta: 0.05,
            shell_samples: 9,
            tail_lambdas: vec![20.0, 50.0, 100.0, 200.0, 500.0, 1000.0, 2000.0],
            decay_dimension: 1,
            goodman_c_star: 1.0,
            jordan_state: None,
            jordan_rhos: (0..6).map(|k| 1e-3 / 4f64.powi(k)).collect(),
        }
    }
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct FixtureCfg {
    pub planted_root: Option<[f64; 2]>,
}

pub fn parse_config(text: &str) -> Result<Config> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("parse error: {e}")))
}

// ---------------------------------------------------------------------------
// Report types

#[derive(Serialize, Clone, Debug)]
pub struct HypothesisCheck {
    pub name: String,
    pub status: Tri,
    pub evidence: String,
    /// Threshold the status was decided against.
    pub tolerance: String,
}

#[derive(Serialize, Clone, Debug)]
pub struct Verdict {
    pub verdict: String,
    pub tolerance: String,
    pub evidence: serde_json::Map<String, Value>,
}

#[derive(Serialize, Clone, Debug, Default)]
pub struct Verdicts {
    pub structural: Option<Verdict>,
    pub inviscid: Option<Verdict>,
    pub spectral: Option<Verdict>,
    pub refined: Option<Verdict>,
}

#[derive(Serialize, Clone, Debug)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub tolerances: Tolerances,
    pub config: Config,
}

#[derive(Serialize, Clone, Debug)]
pub struct StabilityReport {
    pub model: Value,
    pub shock: Option<ShockData>,
    pub hypotheses: Vec<HypothesisCheck>,
    pub verdicts: Verdicts,
    pub evidence: serde_json::Map<String, Value>,
    pub exit_code: i32,
    pub provenance: Provenance,
}

// ---------------------------------------------------------------------------
// Pipeline

struct Ctx {
    cfg: Config,
    tol: Tolerances,
    seed: u64,
    out: PathBuf,
    model: Arc<dyn ModelSystem>,
}

impl Ctx {
    fn evans_opts(&self) -> EvansOptions {
        EvansOptions {
            rtol: self.tol.evans_rtol,
            frame_rtol: self.tol.frame_rtol,
            ..EvansOptions::default()
        }
    }

    fn shock(&self) -> Result<ShockData> {
        let m = self.model.as_ref();
        let sc = &self.cfg.shock;
        let um = match (&sc.u_minus, &sc.natural_minus) {
            (_, Some(w)) => m.from_natural(&RVec::from_vec(w.clone()))?,
            (Some(u), None) => RVec::from_vec(u.clone()),
            (None, None) => {
                return Err(Error::Config("shock needs u_minus or natural_minus".into()))
            }
        };
        if um.len() != m.n() {
            return Err(Error::Config(format!(
                "upstream state has {} entries, model has n = {}",
                um.len(),
                m.n()
            )));
        }
        let mut sh = if let Some(up) = &sc.u_plus {
            let s = sc
                .speed
                .ok_or_else(|| Error::Config("u_plus given without speed".into()))?;
            ShockData::new(um, RVec::from_vec(up.clone()), s)
        } else if let Some(mach) = sc.mach {
            hugoniot_solve(
                m,
                &um,
                &Constraint::Mach {
                    mach,
                    upstream: Side::Minus,
                },
            )?
        } else {
            hugoniot_solve(m, &um, &Constraint::Speed(sc.speed.unwrap_or(0.0)))?
        };
        if sh.certificate.is_none() {
            sh.certificate = Some(classify_shock(m, &sh)?);
        }
        Ok(sh)
    }

    fn profile(&self, sh: &ShockData) -> Result<Profile> {
        let opts = ProfileOptions {
            n_points: self.tol.profile_points,
            rtol: self.tol.profile_rtol,
            ..ProfileOptions::default()
        };
        solve_profile(self.model.as_ref(), sh, &opts)
    }

    fn xi_samples(&self) -> Vec<Vec<f64>> {
        let dt = self.model.d() - 1;
        if dt == 0 {
            return vec![vec![]];
        }
        self.cfg
            .contours
            .xi_values
            .iter()
            .map(|&v| {
                let mut x = vec![0.0; dt];
                x[0] = v;
                x
            })
            .collect()
    }

    fn write(&self, name: &str, body: &str) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        fs::write(self.out.join(name), body)?;
        Ok(())
    }
}

fn pairs(v: Vec<(String, Value)>) -> serde_json::Map<String, Value> {
    v.into_iter().collect()
}

fn tri_str(t: Tri) -> &'static str {
    match t {
        Tri::Pass => "pass",
        Tri::Fail => "fail",
        Tri::Indeterminate => "indeterminate",
    }
}

fn hyp(name: &str, status: Tri, evidence: String, tolerance: String) -> HypothesisCheck {
    HypothesisCheck {
        name: name.into(),
        status,
        evidence,
        tolerance,
    }
}

fn structure_checks(
    model: &dyn ModelSystem,
    sh: &ShockData,
    tol: &Tolerances,
    ev: &mut serde_json::Map<String, Value>,
) -> Result<Vec<HypothesisCheck>> {
    let d = model.d();
    let dirs = sphere_grid(d, 24);
    let mut a1 = Tri::Pass;
    let mut a1_ev = Vec::new();
    let mut a2 = Tri::Pass;
    let mut a2_ev = Vec::new();
    let mut h4 = Tri::Pass;
    let mut h4_ev = Vec::new();
    let mut side_ev = serde_json::Map::new();
    for (label, u) in [("minus", sh.um()), ("plus", sh.up())] {
        match symmetric_form(model, &u)? {
            Ok(sf) => {
                let ok = sf.a0_spd && sf.a0_block_diagonal && sf.b_block_structure;
                if !ok {
                    a1 = a1.and(Tri::Fail);
                }
                a1_ev.push(format!(
                    "{label}: A0 spd {}, block-diagonal {}, B block form {}",
                    sf.a0_spd, sf.a0_block_diagonal, sf.b_block_structure
                ));
                let a0i = sf.a0.clone().try_inverse().expect("A0 invertible");
                let (at, bt) = directional(&sf, &dirs[0]);
                let comp = compensating_matrix(&sf.a0, &(a0i * at), &bt);
                side_ev.insert(
                    format!("compensator_{label}"),
                    match comp {
                        Ok(c) => json!({ "c": c.c, "margin": c.margin }),
                        Err(f) => json!({ "failure": f.reason, "margin": f.margin }),
                    },
                );
            }
            Err(f) => {
                a1 = a1.and(Tri::Fail);
                a1_ev.push(format!("{label}: {}", f.reason));
            }
        }
        let sc = state_coupling(model, &u, &dirs)?;
        a2 = a2.and(sc.a2);
        a2_ev.push(format!(
            "{label}: coupling {} (min σ {:.3e}); {}",
            tri_str(sc.raw),
            sc.min_sigma,
            sc.notes.join("; ")
        ));
        let scan = dissipativity_scan(model, &u, &dirs, &radii(12))?;
        side_ev.insert(format!("dissipativity_theta_{label}"), json!(scan.theta));
        let mc = constant_multiplicity_check(model, &u, &dirs, tol.coupling_tol)?;
        h4 = h4.and(mc.verdict);
        h4_ev.push(format!(
            "{label}: multiplicities {:?}, min relative gap {:.3e}",
            mc.profile, mc.min_rel_gap
        ));
    }
    ev.insert("structure".into(), Value::Object(side_ev));
    let mut out = vec![
        hyp(
            "A1",
            a1,
            a1_ev.join(" | "),
            "relative asymmetry < 1e-8, λ_min(A0) > 0, B off-block entries ≤ 1e-10·|B|".into(),
        ),
        hyp(
            "A2",
            a2,
            a2_ev.join(" | "),
            "σ_min(B V)/|B| > 1e-8 on every eigenspace V of A".into(),
        ),
    ];
    let h0 = model.admissible(&sh.um()) && model.admissible(&sh.up());
    out.push(hyp(
        "H0",
        if h0 { Tri::Pass } else { Tri::Fail },
        "endstates inside the admissible region".into(),
        "model admissibility test".into(),
    ));
    let mut h2 = Tri::Pass;
    let mut h2_ev = Vec::new();
    for side in [Side::Minus, Side::Plus] {
        let el = endstate_matrix(model, sh, side)?;
        if !el.h2_ok {
            h2 = Tri::Fail;
        }
        h2_ev.push(format!("{side:?}: noncharacteristic {}", el.h2_ok));
    }
    if let Some(c) = &sh.certificate {
        h2_ev.push(format!("Lax {}, ℓ̂ = {}", c.lax, c.ell_hat));
        if !c.lax {
            h2 = Tri::Fail;
        }
    }
    out.push(hyp(
        "H2",
        h2,
        h2_ev.join(" | "),
        "endstate eigenvalues of A1 − s bounded away from 0".into(),
    ));
    out.push(hyp(
        "H4",
        h4,
        h4_ev.join(" | "),
        format!(
            "eigenvalue clusters at relative gap {:.0e}, borderline within 10×",
            tol.coupling_tol
        ),
    ));
    Ok(out)
}

fn inviscid_summary(r: &InviscidReport, per_piece: usize) -> Verdict {
    let v = match r.verdict {
        InviscidVerdict::StronglyStable => "strongly stable",
        InviscidVerdict::WeaklyStable => "weakly stable",
        InviscidVerdict::StronglyUnstable => "strongly unstable",
        InviscidVerdict::Indeterminate => "indeterminate",
    };
    Verdict {
        verdict: v.into(),
        tolerance: format!("winding over the half-disk with {per_piece} samples per piece; boundary roots by sign changes on τ-grid"),
        evidence: pairs(vec![
            ("delta".into(), json!(r.delta)),
            ("windings".into(), json!(r.windings)),
            ("boundary_roots".into(), json!(r.boundary_roots)),
            ("notes".into(), json!(r.notes)),
        ]),
    }
}

fn spectral_summary(r: &SpectralReport, checks: &[SpectrumCheck]) -> Verdict {
    let v = match r.verdict {
        SpectralVerdict::StronglyStable => "strongly stable",
        SpectralVerdict::StronglyUnstable => "strongly unstable",
        SpectralVerdict::WeaklyOnly => "weakly stable",
        SpectralVerdict::Indeterminate => "indeterminate",
    };
    Verdict {
        verdict: v.into(),
        tolerance: format!("|D| > {:.0e} on the contour; discrete eigenvalues with Re λ > 1e-4 inside count as unstable", WindingOptions::default().abs_tol),
        evidence: pairs(vec![
            ("windings".into(), json!(r.windings)),
            ("inner_radius".into(), json!(r.inner_radius)),
            ("outer_radius".into(), json!(r.outer_radius)),
            ("notes".into(), json!(r.notes)),
            ("discrete_spectrum".into(), json!(checks)),
        ]),
    }
}

fn spectral_run(ctx: &Ctx, sys: &EvansSystem) -> SpectralReport {
    let c = &ctx.cfg.contours;
    let opts = WindingOptions {
        per_piece: ctx.tol.winding_per_piece,
        ..WindingOptions::default()
    };
    let planted = ctx.cfg.fixture.as_ref().and_then(|f| f.planted_root);
    let eval = |xi: &[f64], z: Complex64| {
        let v = sys.value(xi, z)?;
        Ok(match planted {
            Some([re, im]) => v * (z - Complex64::new(re, im)),
            None => v,
        })
    };
    spectral_verdict_with(
        &eval,
        &ctx.xi_samples(),
        c.inner_radius,
        c.outer_radius,
        &opts,
    )
}

fn traces_csv(r: &SpectralReport) -> String {
    let mut s = String::from("xi,lambda_re,lambda_im,d_re,d_im,cumulative_arg\n");
    for (xi, z, f, a) in &r.traces {
        let x = xi.first().copied().unwrap_or(0.0);
        s.push_str(&format!(
            "{x:.6e},{:.10e},{:.10e},{:.10e},{:.10e},{a:.10e}\n",
            z.re, z.im, f.re, f.im
        ));
    }
    s
}

fn grid_for(ctx: &Ctx, profile: &Profile) -> GridSpec {
    let hw = ctx
        .cfg
        .verify
        .grid_half_width
        .unwrap_or(profile.l.min(60.0));
    GridSpec {
        half_width: hw,
        points: ctx.cfg.verify.grid_points,
    }
}

fn spectrum_checks(ctx: &Ctx, sh: &ShockData, profile: &Profile) -> Result<Vec<SpectrumCheck>> {
    if !ctx.cfg.verify.spectrum_check {
        return Ok(vec![]);
    }
    let g = grid_for(ctx, profile);
    let c = &ctx.cfg.contours;
    ctx.xi_samples()
        .iter()
        .map(|xi| {
            let disc = discretize_operator(ctx.model.as_ref(), sh, profile, xi, &g)?;
            Ok(spectrum_check(&disc, c.inner_radius, c.outer_radius, 1e-4))
        })
        .collect()
}

/// Seeded directions `(ξ̃₀, λ₀)` on the unit hemisphere `Re λ₀ ≥ 0`.
pub fn hemisphere_directions(dt: usize, count: usize, seed: u64) -> Vec<(Vec<f64>, Complex64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..dt + 2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(0.2..=1.0).contains(&nrm) {
                continue;
            }
            let xi: Vec<f64> = v[..dt].iter().map(|x| x / nrm).collect();
            let lam = Complex64::new(v[dt].abs() / nrm, v[dt + 1] / nrm);
            break (xi, lam);
        })
        .collect()
}

fn lowfreq_run(ctx: &Ctx, sys: &EvansSystem) -> Vec<Result<LowFreqExpansion>> {
    let c = &ctx.cfg.contours;
    let [lo, hi] = c.lowfreq_rho_range;
    let np = c.lowfreq_rho_points.max(2);
    let grid: Vec<f64> = (0..np)
        .map(|k| hi * (lo / hi).powf(k as f64 / (np - 1) as f64))
        .collect();
    let opts = LowFreqOptions {
        rho0: c.lowfreq_rho0,
        levels: c.lowfreq_levels,
    };
    hemisphere_directions(ctx.model.d() - 1, c.lowfreq_directions, ctx.seed)
        .iter()
        .map(|(xi, lam)| low_freq_expand(sys, xi, *lam, &grid, &opts))
        .collect()
}

const GAMMA_ERR: f64 = 0.1;

fn structural_summary(lfs: &[Result<LowFreqExpansion>]) -> (Verdict, Tri) {
    let ok: Vec<&LowFreqExpansion> = lfs.iter().filter_map(|r| r.as_ref().ok()).collect();
    let errors: Vec<String> = lfs
        .iter()
        .filter_map(|r| r.as_ref().err().map(|e| e.to_string()))
        .collect();
    let status = if ok.is_empty() {
        Tri::Indeterminate
    } else if ok
        .iter()
        .all(|l| l.gamma().norm() > 0.0 && l.extrapolation_error < GAMMA_ERR)
    {
        Tri::Pass
    } else if ok.iter().any(|l| {
        l.extrapolation_error < GAMMA_ERR && l.gamma().norm() <= l.extrapolation_error * 10.0
    }) {
        Tri::Fail
    } else {
        Tri::Indeterminate
    };
    let v = Verdict {
        tolerance: format!("relative extrapolation error < {GAMMA_ERR}; γ counted as vanishing below 10× its error"),
        verdict: match status {
            Tri::Pass => "gamma nonzero",
            Tri::Fail => "gamma vanishes",
            Tri::Indeterminate => "indeterminate",
        }
        .into(),
        evidence: pairs(vec![
            ("gamma".into(), json!(ok.iter().map(|l| l.gamma).collect::<Vec<_>>())),
            ("ell".into(), json!(ok.iter().map(|l| l.ell).collect::<Vec<_>>())),
            ("extrapolation_error".into(), json!(ok.iter().map(|l| l.extrapolation_error).collect::<Vec<_>>())),
            ("remainder_slope".into(), json!(ok.iter().map(|l| l.remainder_slope).collect::<Vec<_>>())),
            ("errors".into(), json!(errors)),
        ]),
    };
    (v, status)
}

fn refined_run(
    ctx: &Ctx,
    sys: &EvansSystem,
    sh: &ShockData,
    inv: &InviscidReport,
    ell: i64,
) -> RefinedReport {
    let mut betas: Vec<BetaEstimate> = Vec::new();
    let mut sigmas = Vec::new();
    let mut excluded = Vec::new();
    for (xi, tau, _) in &inv.boundary_roots {
        match beta_coefficient(sys, xi, *tau, ell) {
            Ok(b) => {
                let sig = lopatinski_detail(ctx.model.as_ref(), sh, xi, Complex64::new(0.0, *tau))
                    .map(|(_, cols)| sigma_min(&cols) / cols.norm().max(1e-300))
                    .unwrap_or(0.0);
                betas.push(b);
                sigmas.push(sig);
            }
            Err(e) => excluded.push(format!("ξ̃ = {xi:?}, τ = {tau}: {e}")),
        }
    }
    refined_verdict(&betas, &sigmas, &excluded, ctx.tol.refined_tol)
}

fn refined_summary(r: &RefinedReport, tol: f64) -> Verdict {
    Verdict {
        tolerance: format!("Re β compared with ±{tol:.0e}"),
        verdict: match r.verdict {
            RefinedVerdict::StrongRefined => "strong refined",
            RefinedVerdict::WeakRefined => "weak refined",
            RefinedVerdict::FailsRefined => "fails refined",
        }
        .into(),
        evidence: pairs(vec![
            ("betas".into(), json!(r.betas)),
            ("notes".into(), json!(r.notes)),
        ]),
    }
}

fn profile_csv(p: &Profile) -> String {
    let n = p.n;
    let mut s = String::from("x");
    for k in 0..n {
        s.push_str(&format!(",u{k}"));
    }
    for k in 0..n {
        s.push_str(&format!(",du{k}"));
    }
    s.push('\n');
    for i in 0..p.x.len() {
        s.push_str(&format!("{:.12e}", p.x[i]));
        for k in 0..n {
            s.push_str(&format!(",{:.15e}", p.u[i][k]));
        }
        for k in 0..n {
            s.push_str(&format!(",{:.15e}", p.up[i][k]));
        }
        s.push('\n');
    }
    s
}

fn lowfreq_csv(lfs: &[Result<LowFreqExpansion>]) -> String {
    let mut s = String::from("direction,rho,remainder\n");
    for (i, l) in lfs.iter().enumerate() {
        if let Ok(l) = l {
            for (r, v) in &l.remainder {
                s.push_str(&format!("{i},{r:.10e},{v:.10e}\n"));
            }
        }
    }
    s
}

fn spectral_code(v: SpectralVerdict) -> i32 {
    match v {
        SpectralVerdict::StronglyStable => 0,
        SpectralVerdict::StronglyUnstable => 2,
        _ => 3,
    }
}

fn pass_code(ok: bool) -> i32 {
    if ok {
        0
    } else {
        3
    }
}

struct Outcome {
    code: i32,
    report: StabilityReport,
}

fn base_report(ctx: &Ctx, cmd: Command) -> StabilityReport {
    StabilityReport {
        model: json!({ "id": ctx.cfg.model.id, "name": ctx.model.name(), "params": ctx.model.params() }),
        shock: None,
        hypotheses: vec![],
        verdicts: Verdicts::default(),
        evidence: serde_json::Map::new(),
        exit_code: 0,
        provenance: Provenance {
            tool: "shockstab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: cmd.name().into(),
            seed: ctx.seed,
            threads: None,
            tolerances: ctx.tol.clone(),
            config: ctx.cfg.clone(),
        },
    }
}

fn run_command(ctx: &Ctx, cmd: Command) -> Result<Outcome> {
    let m = ctx.model.as_ref();
    let mut rep = base_report(ctx, cmd);
    let code;
    match cmd {
        Command::StructureCheck => {
            let sh = ctx.shock()?;
            rep.hypotheses = structure_checks(m, &sh, &ctx.tol, &mut rep.evidence)?;
            rep.shock = Some(sh);
            let worst = rep
                .hypotheses
                .iter()
                .fold(Tri::Pass, |a, h| a.and(h.status));
            code = pass_code(worst == Tri::Pass);
        }
        Command::ProfileSolve => {
            let sh = ctx.shock()?;
            let p = ctx.profile(&sh)?;
            ctx.write("profile.csv", &profile_csv(&p))?;
            ctx.write("profile.txt", &p.export())?;
            rep.evidence.insert(
                "profile".into(),
                serde_json::to_value(&p).map_err(|e| Error::Io(e.to_string()))?,
            );
            rep.shock = Some(sh);
            code = pass_code(p.decay.as_ref().is_some_and(|d| d.ok));
        }
        Command::Inviscid => {
            let sh = ctx.shock()?;
            let r = inviscid_verdict(
                m,
                &sh,
                &InviscidResolution {
                    per_piece: ctx.tol.winding_per_piece,
                    ..InviscidResolution::default()
                },
            )?;
            code = match r.verdict {
                InviscidVerdict::StronglyStable => 0,
                InviscidVerdict::StronglyUnstable => 2,
                _ => 3,
            };
            rep.verdicts.inviscid = Some(inviscid_summary(&r, ctx.tol.winding_per_piece));
            rep.shock = Some(sh);
        }
        Command::EvansSweep => {
            let sh = ctx.shock()?;
            let p = ctx.profile(&sh)?;
            let sys = EvansSystem::new(m, &sh, &p, ctx.evans_opts())?;
            let r = spectral_run(ctx, &sys);
            let checks = spectrum_checks(ctx, &sh, &p)?;
            ctx.write("evans_traces.csv", &traces_csv(&r))?;
            code = spectral_code(r.verdict);
            rep.verdicts.spectral = Some(spectral_summary(&r, &checks));
            rep.shock = Some(sh);
        }
        Command::Lowfreq => {
            let sh = ctx.shock()?;
            let p = ctx.profile(&sh)?;
            let sys = EvansSystem::new(m, &sh, &p, ctx.evans_opts())?;
            let lfs = lowfreq_run(ctx, &sys);
            ctx.write("lowfreq.csv", &lowfreq_csv(&lfs))?;
            let (v, st) = structural_summary(&lfs);
            code = pass_code(st == Tri::Pass);
            rep.verdicts.structural = Some(v);
            rep.shock = Some(sh);
        }
        Command::Beta => {
            let sh = ctx.shock()?;
            let p = ctx.profile(&sh)?;
            let sys = EvansSystem::new(m, &sh, &p, ctx.evans_opts())?;
            let inv = inviscid_verdict(m, &sh, &InviscidResolution::default())?;
            let ell = sh.certificate.as_ref().map(|c| c.ell_hat).unwrap_or(1);
            let rr = refined_run(ctx, &sys, &sh, &inv, ell);
            code = match rr.verdict {
                RefinedVerdict::StrongRefined => 0,
                RefinedVerdict::FailsRefined => 2,
                RefinedVerdict::WeakRefined => 3,
            };
            rep.verdicts.refined = Some(refined_summary(&rr, ctx.tol.refined_tol));
            rep.shock = Some(sh);
        }
        Command::Jordan => {
            let u = match &ctx.cfg.verify.jordan_state {
                Some(w) => m.from_natural(&RVec::from_vec(w.clone()))?,
                None => ctx.shock()?.um(),
            };
            let dt = m.d() - 1;
            let xi_grid: Vec<Vec<f64>> = if dt == 0 {
                vec![vec![]]
            } else {
                vec![{
                    let mut x = vec![0.0; dt];
                    x[0] = 1.0;
                    x
                }]
            };
            let gps = glancing_at_state(m, &u, &xi_grid)?;
            let grid: Vec<(f64, f64)> = ctx
                .cfg
                .verify
                .jordan_rhos
                .iter()
                .map(|&r| (r, 0.0))
                .collect();
            let mut preds: Vec<JordanPrediction> = Vec::new();
            for gp in gps.iter().filter(|g| g.s >= 2) {
                preds.push(jordan_bifurcation_check(m, &u, gp, &grid)?);
            }
            let ok = !preds.is_empty()
                && preds
                    .iter()
                    .all(|p| p.margin > 0.0 && p.remainder_exponent >= 1.0 / p.s as f64 + 0.2);
            code = pass_code(ok);
            rep.evidence.insert("glancing_points".into(), json!(gps));
            rep.evidence.insert("jordan".into(), json!(preds));
        }
        Command::VerifyDecay => {
            let sh = ctx.shock()?;
            let d = ctx.cfg.verify.decay_dimension;
            let opts = DecayOptions::for_dimension(d.min(m.d()));
            let amp = RVec::from_element(m.n(), 1.0);
            let fit = const_coeff_decay_model(m, &sh.um(), &amp, &opts)?;
            ctx.write("decay.csv", &fit.to_csv())?;
            let target = m.d() as f64 / 4.0;
            code = pass_code(fit.advisory.is_none() && (fit.exponent - target).abs() < 0.05);
            rep.evidence.insert("decay".into(), json!(fit));
            rep.evidence
                .insert("predicted_exponent".into(), json!(target));
            rep.shock = Some(sh);
        }
        Command::VerifyEnergy => {
            let sh = ctx.shock()?;
            let mut ok = true;
            if m.d() == 1 {
                let (tr, comp) = kawashima_energy_model(m, &sh.um(), &EnergyOptions::default())?;
                ctx.write("energy.csv", &tr.to_csv())?;
                ok &= tr.max_violation <= 1e-10;
                rep.evidence.insert("kawashima".into(), json!({ "compensator": comp, "trace": {
                    "c": tr.c, "max_violation": tr.max_violation, "identity_defect": tr.identity_defect,
                    "norm_margin": tr.norm_margin, "dissipation_margin": tr.dissipation_margin,
                    "final_energy": tr.energy.last(), "plain_max_increase": tr.plain_max_increase } }));
            } else {
                rep.evidence
                    .insert("kawashima".into(), json!("one-dimensional models only"));
            }
            if m.n() == 1 {
                let p = ctx.profile(&sh)?;
                let gw = goodman_weight(&p, ctx.cfg.verify.goodman_c_star, 1.0)?;
                let tr = goodman_transport(&p, &gw, &TransportOptions::default());
                ctx.write("goodman.csv", &tr.to_csv())?;
                ok &= tr.weighted_max_increase <= 1e-12;
                rep.evidence.insert("goodman".into(), json!({
                    "ratio": gw.ratio, "ratio_closed_form": gw.ratio_closed_form, "quadrature_error": gw.quadrature_error,
                    "envelope": gw.envelope, "weighted_max_increase": tr.weighted_max_increase,
                    "unweighted_peak_growth": tr.unweighted_peak_growth }));
            }
            code = pass_code(ok);
            rep.shock = Some(sh);
        }
        Command::ResolventScan => {
            let sh = ctx.shock()?;
            let p = ctx.profile(&sh)?;
            let v = &ctx.cfg.verify;
            let g = grid_for(ctx, &p);
            let samples = shell_samples(m.d() - 1, v.shell_radius, v.shell_theta, v.shell_samples);
            let gs = resolvent_grid_stability(m, &sh, &p, &samples, &g)?;
            let zero = vec![0.0; m.d() - 1];
            let tail: Vec<(Vec<f64>, Complex64)> = v
                .tail_lambdas
                .iter()
                .map(|&l| (zero.clone(), Complex64::new(l, 0.0)))
                .collect();
            let tt = crate::verify::resolvent_scan(m, &sh, &p, &tail, &g)?;
            let (slope, r2) = tail_exponent(&tt.rows);
            let mut csv = String::from("grid_points,xi,lambda_re,lambda_im,norm,near_spectrum\n");
            for t in [&gs.coarse, &gs.fine, &tt] {
                for r in &t.rows {
                    let x = r.xi.first().copied().unwrap_or(0.0);
                    csv.push_str(&format!(
                        "{},{x:.6e},{:.10e},{:.10e},{:.10e},{}\n",
                        t.grid.points, r.lambda.0, r.lambda.1, r.norm, r.near_spectrum
                    ));
                }
            }
            ctx.write("resolvent.csv", &csv)?;
            code = pass_code(
                !gs.coarse.near_spectrum && !gs.fine.near_spectrum && gs.relative_change < 0.05,
            );
            rep.evidence.insert(
                "resolvent".into(),
                json!({ "shell_sup": gs.coarse.sup, "shell_sup_doubled": gs.fine.sup, "relative_change": gs.relative_change,
                        "near_spectrum": gs.coarse.near_spectrum || gs.fine.near_spectrum, "tail_exponent": slope, "tail_r2": r2 }),
            );
            rep.shock = Some(sh);
        }
        Command::Report => {
            let sh = ctx.shock()?;
            let mut hyps = structure_checks(m, &sh, &ctx.tol, &mut rep.evidence)?;
            let p = ctx.profile(&sh)?;
            ctx.write("profile.csv", &profile_csv(&p))?;
            hyps.push(hyp(
                "H1",
                Tri::Pass,
                format!(
                    "profile solved, residual {:.3e}, L = {:.3}",
                    p.residual, p.l
                ),
                format!("profile rtol {:.0e}", ctx.tol.profile_rtol),
            ));
            let inv = inviscid_verdict(
                m,
                &sh,
                &InviscidResolution {
                    per_piece: ctx.tol.winding_per_piece,
                    ..InviscidResolution::default()
                },
            )?;
            let h5 = if m.d() == 1 {
                (Tri::Pass, "one-dimensional: no glancing set".to_string())
            } else {
                let grid: Vec<Vec<f64>> = sphere_grid(m.d() - 1, 8);
                let mut st = Tri::Pass;
                let mut evs = Vec::new();
                for side in [Side::Minus, Side::Plus] {
                    match glancing_set(m, &sh, side, &grid) {
                        Ok(g) => evs.push(format!("{side:?}: {} glancing points", g.len())),
                        Err(e) => {
                            st = Tri::Indeterminate;
                            evs.push(format!("{side:?}: {e}"));
                        }
                    }
                }
                (st, evs.join(" | "))
            };
            let sys = EvansSystem::new(m, &sh, &p, ctx.evans_opts())?;
            let sr = spectral_run(ctx, &sys);
            ctx.write("evans_traces.csv", &traces_csv(&sr))?;
            let checks = spectrum_checks(ctx, &sh, &p)?;
            let lfs = lowfreq_run(ctx, &sys);
            ctx.write("lowfreq.csv", &lowfreq_csv(&lfs))?;
            let (sv, sst) = structural_summary(&lfs);
            hyps.push(hyp(
                "H3",
                sst,
                "transversality: γ ≠ 0 from the low-frequency expansion".into(),
                format!("relative extrapolation error < {GAMMA_ERR}"),
            ));
            hyps.push(hyp(
                "H5",
                h5.0,
                h5.1,
                "glancing points located on the transverse sphere grid".into(),
            ));
            hyps.sort_by(|a, b| a.name.cmp(&b.name));
            let ell = lfs
                .iter()
                .filter_map(|l| l.as_ref().ok())
                .map(|l| l.ell)
                .next()
                .unwrap_or(1);
            let rr = refined_run(ctx, &sys, &sh, &inv, ell);
            let disagreement = checks.iter().any(|c| !c.unstable_inside.is_empty())
                && sr.verdict == SpectralVerdict::StronglyStable;
            if disagreement {
                rep.evidence.insert(
                    "cross_check".into(),
                    json!(
                        "discrete eigenvalues inside the contour disagree with the Evans winding"
                    ),
                );
            }
            let hyp_ok = hyps.iter().all(|h| h.status == Tri::Pass);
            code = if sr.verdict == SpectralVerdict::StronglyUnstable
                || inv.verdict == InviscidVerdict::StronglyUnstable
            {
                2
            } else if sr.verdict == SpectralVerdict::StronglyStable
                && inv.verdict == InviscidVerdict::StronglyStable
                && sst == Tri::Pass
                && rr.verdict == RefinedVerdict::StrongRefined
                && hyp_ok
                && !disagreement
            {
                0
            } else {
                3
            };
            rep.hypotheses = hyps;
            rep.verdicts = Verdicts {
                structural: Some(sv),
                inviscid: Some(inviscid_summary(&inv, ctx.tol.winding_per_piece)),
                spectral: Some(spectral_summary(&sr, &checks)),
                refined: Some(refined_summary(&rr, ctx.tol.refined_tol)),
            };
            rep.evidence.insert(
                "profile".into(),
                json!({ "l": p.l, "residual": p.residual, "decay": p.decay }),
            );
            rep.evidence.insert(
                "lowfreq_directions".into(),
                json!(hemisphere_directions(
                    m.d() - 1,
                    ctx.cfg.contours.lowfreq_directions,
                    ctx.seed
                )
                .iter()
                .map(|(x, l)| json!({ "xi": x, "lambda": [l.re, l.im] }))
                .collect::<Vec<_>>()),
            );
            rep.shock = Some(sh);
        }
    }
    rep.exit_code = code;
    Ok(Outcome { code, report: rep })
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            parse_config(&text)
        }
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Some(t) = cli.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let cfg = load_config(cli.config.as_deref())?;
    let model = builtin(&cfg.model.id, &cfg.model.params)?;
    let tol = cfg.tolerances.resolve(cli.tolerance_profile);
    let ctx = Ctx {
        cfg,
        tol,
        seed: cli.seed,
        out: cli.out.clone(),
        model,
    };
    let mut outcome = run_command(&ctx, cli.command)?;
    outcome.report.provenance.threads = cli.threads;
    let body =
        serde_json::to_string_pretty(&outcome.report).map_err(|e| Error::Io(e.to_string()))?;
    ctx.write(&format!("{}.json", cli.command.name()), &body)?;
    println!(
        "{}",
        serde_json::to_string(
            &json!({ "command": cli.command.name(), "exit_code": outcome.code, "out": ctx.out })
        )
        .unwrap_or_default()
    );
    Ok(outcome.code)
}
