//! Run configuration, energy and trapping diagnostics, scenario
//! orchestration, verification suites and parameter sweeps.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    blowup_fit, smooth_step, clm_exact, integrate_physical, reconstruct_physical, step_selfsimilar, velocity_holder,
    vorticity_sup, BlowupFit, PhysState, SimState,
};
use crate::error::{Error, Result};
use crate::fractional::{self, kernel_audit, main_term_identity, HalfFn, HalfGrid};
use crate::grid1d::{hilbert, weighted_norm_sq, Grid, GridFn, Parity, Weight};
use crate::linop::{self, admissible_ensemble, apply_linearized, commutator_residual, quadratic_form, Draw};
use crate::modulation::{decompose, modulation_rates, project_admissible, rescaled_profile, ModPair, RateForm};
use crate::par::parallel_map;
use crate::profiles::{clm_profile, continue_profile, tail_fit, Profile, DEFAULT_STEP, DEFAULT_TAIL_RANGE, MAX_A, PROFILE_SCALE};

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_VERSION: &str = "# ssblow run log v1";
pub const RUN_HEADER: &str = "s,t,lambda,mu,E,norm_q,norm_ydq,Hq0,qy0,proj_size";
pub const OUT_ENV: &str = "SSBLOW_OUT";
/// Minimum logged steps for [`decay_audit`].
pub const MIN_AUDIT_STEPS: usize = 50;
/// The decay audit only looks at steps with `E` at most this.
pub const AUDIT_ENERGY_CAP: f64 = 1e-2;
/// Largest acceptable constant in the decay inequality.
pub const AUDIT_C_MAX: f64 = 50.0;
/// Steps between velocity Hölder evaluations.
const HOLDER_EVERY: usize = 25;

// ---------------------------------------------------------------- config

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub a: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { a: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n: usize,
    #[serde(rename = "L")]
    pub scale: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: 1024, scale: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RescaleConfig {
    pub delta: f64,
    pub ds: f64,
    pub s_max: f64,
    pub rate_form: RateForm,
}

impl Default for RescaleConfig {
    fn default() -> Self {
        RescaleConfig {
            delta: 0.05,
            ds: 0.01,
            s_max: 10.0,
            rate_form: RateForm::Statement,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrapConfig {
    #[serde(rename = "K")]
    pub k: f64,
    pub s0: f64,
}

impl Default for TrapConfig {
    fn default() -> Self {
        TrapConfig { k: 100.0, s0: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Bump,
    Compact,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    pub kind: InitKind,
    pub epsilon: f64,
    /// 0 selects the fixed bump `y e^{-y²/4}`; other seeds draw a random odd
    /// Gaussian mixture.
    pub seed: u64,
    /// Cutoff radius for `compact` data.
    pub radius: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            kind: InitKind::Bump,
            epsilon: 1e-3,
            seed: 0,
            radius: 50.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalConfig {
    pub t_end: f64,
    pub dt: f64,
}

impl Default for PhysicalConfig {
    fn default() -> Self {
        PhysicalConfig { t_end: 0.9, dt: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub name: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            name: "run".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub rescale: RescaleConfig,
    pub trap: TrapConfig,
    pub init: InitConfig,
    pub physical: PhysicalConfig,
    pub outputs: OutputConfig,
}

/// Shortest round-trip text for a CSV cell, in exponent form when tiny or huge.
pub fn fmt_num(x: f64) -> String {
    let m = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&m) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn config_error(path: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        msg: msg.into(),
    }
}

fn parse_value<T: serde::de::DeserializeOwned>(value: toml::Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let msg = e.into_inner().to_string();
        config_error(&path, msg.lines().next().unwrap_or_default())
    })
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| config_error(".", e.to_string()))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = parse_value(toml::Value::Table(parse_table(text)?))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::parse(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, path: &str, msg: &str| if ok { Ok(()) } else { Err(config_error(path, msg)) };
        check(self.model.a.abs() <= MAX_A, "model.a", "|a| must not exceed 0.1")?;
        check(
            self.grid.n >= crate::grid1d::MIN_NODES && self.grid.n % 4 == 0,
            "grid.n",
            "node count must be a multiple of 4 and at least 64",
        )?;
        check(self.grid.scale > 0.0 && self.grid.scale.is_finite(), "grid.L", "map scale must be positive")?;
        check(self.rescale.delta > 0.0, "rescale.delta", "delta must be positive")?;
        check(
            self.rescale.ds > 0.0 && self.rescale.ds <= crate::dynamics::MAX_DS,
            "rescale.ds",
            "ds must lie in (0, 0.01]",
        )?;
        check(self.rescale.s_max > 0.0, "rescale.s_max", "s_max must be positive")?;
        check(self.trap.k > 1.0, "trap.K", "K must exceed 1")?;
        check(self.trap.s0 >= 0.0, "trap.s0", "s0 must be non-negative")?;
        check(
            self.init.epsilon >= 0.0 && self.init.epsilon < 1.0,
            "init.epsilon",
            "epsilon must lie in [0, 1)",
        )?;
        check(self.init.seed <= i64::MAX as u64, "init.seed", "seed must fit a TOML integer")?;
        check(self.init.radius > 0.0, "init.radius", "radius must be positive")?;
        check(self.physical.t_end > 0.0, "physical.t_end", "t_end must be positive")?;
        check(self.physical.dt > 0.0, "physical.dt", "dt must be positive")?;
        check(!self.outputs.name.is_empty(), "outputs.name", "name must not be empty")?;
        Ok(())
    }

    /// Output directory: `$SSBLOW_OUT` when set, else `outputs.dir`.
    pub fn out_dir(&self) -> PathBuf {
        out_root(&self.outputs.dir)
    }

    pub fn grid(&self) -> Result<Grid<f64>> {
        Grid::new(self.grid.n, self.grid.scale).map_err(|e| config_error("grid", e.to_string()))
    }
}

pub fn out_root(default: &Path) -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| default.to_path_buf())
}

/// Values swept by `ssblow sweep`; each combination is a separate run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default)]
    pub a: Vec<f64>,
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub n: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub base: RunConfig,
    pub axes: SweepAxes,
}

impl SweepConfig {
    /// A run config plus a `[sweep]` table.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = parse_table(text)?;
        let sweep = table
            .remove("sweep")
            .ok_or_else(|| config_error("sweep", "missing [sweep] table"))?;
        let axes: SweepAxes = parse_value(sweep).map_err(|e| match e {
            Error::Config { path, msg } => config_error(&format!("sweep.{path}"), msg),
            e => e,
        })?;
        let base: RunConfig = parse_value(toml::Value::Table(table))?;
        base.validate()?;
        Ok(SweepConfig { base, axes })
    }

    pub fn load(path: &Path) -> Result<Self> {
        SweepConfig::parse(&fs::read_to_string(path)?)
    }

    /// Every combination, each with its own output name.
    pub fn runs(&self) -> Result<Vec<RunConfig>> {
        let pick = |v: &[f64], d: f64| if v.is_empty() { vec![d] } else { v.to_vec() };
        let ns = if self.axes.n.is_empty() { vec![self.base.grid.n] } else { self.axes.n.clone() };
        let mut out = Vec::new();
        for &a in &pick(&self.axes.a, self.base.model.a) {
            for &eps in &pick(&self.axes.epsilon, self.base.init.epsilon) {
                for &n in &ns {
                    let mut c = self.base.clone();
                    c.model.a = a;
                    c.init.epsilon = eps;
                    c.grid.n = n;
                    c.outputs.name = format!("{}_a{a}_eps{eps}_n{n}", self.base.outputs.name);
                    c.validate()?;
                    out.push(c);
                }
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------- diagnostics

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub norm_q_sq: f64,
    pub norm_ydq_sq: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    pub delta: f64,
    /// `(Hq(0), q_y(0))`.
    pub constraint_residuals: (f64, f64),
}

/// `E = ‖y q_y‖²_φ + ‖q‖²_φ / δ`.
pub fn energy(q: &GridFn<f64>, delta: f64) -> Result<EnergyReport> {
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!("delta = {delta} must be positive")));
    }
    let norm_q_sq = weighted_norm_sq(q, Weight::Phi)?;
    let norm_ydq_sq = weighted_norm_sq(&q.y_derivative(), Weight::Phi)?;
    Ok(EnergyReport {
        norm_q_sq,
        norm_ydq_sq,
        energy: norm_ydq_sq + norm_q_sq / delta,
        delta,
        constraint_residuals: (q.hilbert_at_zero(), q.derivative_at_zero()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// Smallest `C ≥ 0` with `dE/ds ≤ -E/4 + C E^{3/2}` on every audited step.
    #[serde(rename = "C")]
    pub c_fit: f64,
    /// Audited steps whose own constant exceeds the acceptance limit.
    pub violations: usize,
    pub audited: usize,
    pub steps: usize,
}

impl DecayReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Audits the energy inequality along a trace of `(s, E)`. The derivative
/// on each step is the log-slope times the geometric mean, exact for
/// exponentials.
pub fn decay_audit(trace: &[(f64, f64)]) -> Result<DecayReport> {
    if trace.len() < MIN_AUDIT_STEPS + 1 {
        return Err(Error::Precondition(format!(
            "{} logged steps, need at least {MIN_AUDIT_STEPS}",
            trace.len().saturating_sub(1)
        )));
    }
    let (mut c_fit, mut violations, mut audited) = (0.0f64, 0, 0);
    for w in trace.windows(2) {
        let ((s0, e0), (s1, e1)) = (w[0], w[1]);
        let h = s1 - s0;
        let (e, de) = if e0 > 0.0 && e1 > 0.0 {
            let e = (e0 * e1).sqrt();
            (e, e * (e1 / e0).ln() / h)
        } else {
            (0.5 * (e0 + e1), (e1 - e0) / h)
        };
        if e > AUDIT_ENERGY_CAP || e <= 0.0 {
            continue;
        }
        audited += 1;
        let c = (de + 0.25 * e) / e.powf(1.5);
        c_fit = c_fit.max(c);
        if c > AUDIT_C_MAX {
            violations += 1;
        }
    }
    Ok(DecayReport {
        c_fit,
        violations,
        audited,
        steps: trace.len() - 1,
    })
}

/// The three trapping conditions at one state. The energy envelope uses the
/// definition's `e^{-s/8}`; the `λ` window uses the proof's `λ e^s` law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrapStatus {
    pub energy_ok: bool,
    pub lambda_ok: bool,
    pub mu_ok: bool,
    /// `K e^{-s/8} - E`.
    pub energy_margin: f64,
    /// `min(λe^s - 1/K, K - λe^s)`.
    pub lambda_margin: f64,
    /// `min(μ - 1/K, K - μ)`.
    pub mu_margin: f64,
}

pub const ENERGY_READING: &str = "E <= K exp(-s/8)";
pub const LAMBDA_READING: &str = "lambda exp(s) in [1/K, K]";

impl TrapStatus {
    pub fn from_margins(energy_margin: f64, lambda_margin: f64, mu_margin: f64) -> Self {
        TrapStatus {
            energy_ok: energy_margin >= 0.0,
            lambda_ok: lambda_margin >= 0.0,
            mu_ok: mu_margin >= 0.0,
            energy_margin,
            lambda_margin,
            mu_margin,
        }
    }

    pub fn trapped(&self) -> bool {
        self.energy_ok && self.lambda_ok && self.mu_ok
    }
}

pub fn trapped_check(st: &SimState<f64>, trap: &TrapConfig) -> Result<TrapStatus> {
    if st.s < trap.s0 {
        return Err(Error::Precondition(format!("s = {} precedes s0 = {}", st.s, trap.s0)));
    }
    let k = trap.k;
    let e = energy(&st.q, st.delta)?.energy;
    let window = |v: f64| (v - 1.0 / k).min(k - v);
    Ok(TrapStatus::from_margins(
        k * (-st.s / 8.0).exp() - e,
        window(st.lam * st.s.exp()),
        window(st.mu),
    ))
}

// ---------------------------------------------------------------- scenarios

/// Profile for parameter `a` on `grid`: closed form at 0, continuation otherwise.
pub fn acquire_profile(a: f64, grid: &Grid<f64>) -> Result<Profile<f64>> {
    if a == 0.0 {
        Ok(clm_profile(grid))
    } else {
        continue_profile(a, DEFAULT_STEP, grid)
    }
}

fn bump(grid: &Grid<f64>, seed: u64) -> Result<GridFn<f64>> {
    if seed == 0 {
        GridFn::from_fn(grid, Parity::Odd, |y| y * (-y * y / 4.0).exp())
    } else {
        let d = Draw::sample(seed, 0);
        GridFn::from_fn(grid, Parity::Odd, |y| d.eval(y))
    }
}

/// Initial perturbation `q₀` for the configured data.
pub fn initial_perturbation(cfg: &InitConfig, p: &Profile<f64>) -> Result<GridFn<f64>> {
    let grid = p.grid();
    let unit = || -> Result<GridFn<f64>> {
        let b = project_admissible(&bump(grid, cfg.seed)?)?;
        let m = b.max_abs();
        if m <= 1e-12 {
            return Err(Error::Precondition("initial bump projects to zero".into()));
        }
        Ok(b.scaled(1.0 / m))
    };
    match cfg.kind {
        InitKind::Zero => Ok(GridFn::zeros(grid, Parity::Odd)),
        InitKind::Bump => Ok(unit()?.scaled(cfg.epsilon)),
        InitKind::Compact => {
            // ω₀ = (F + ε b) χ, the mismatch with F folded into q₀
            let w = p.f.axpy(cfg.epsilon, &unit()?);
            let r = cfg.radius;
            let cut: Vec<f64> = grid
                .nodes()
                .iter()
                .zip(w.values())
                .zip(p.f.values())
                .map(|((&y, &w), &f)| {
                    w * (1.0 - smooth_step((y.abs() - r) / r)) - f
                })
                .collect();
            project_admissible(&GridFn::new(grid, cut, Parity::Odd)?)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub exponent: f64,
    pub initial: f64,
    pub sup: f64,
    pub growth: f64,
    pub vorticity_growth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub name: String,
    pub a: f64,
    pub gamma: f64,
    pub delta: f64,
    pub steps: usize,
    pub s_final: f64,
    pub t_final: f64,
    #[serde(rename = "T_fit")]
    pub t_fit: Option<f64>,
    #[serde(rename = "C_fit")]
    pub c_fit: Option<f64>,
    pub fit_residual: Option<f64>,
    pub trapped: bool,
    pub energy_reading: String,
    pub lambda_reading: String,
    pub min_margins: (f64, f64, f64),
    pub energy_initial: f64,
    /// `sup_s E(s) e^{(s-s₀)/4} / E(s₀)`.
    pub energy_envelope: Option<f64>,
    /// Largest post-projection `max(|Hq(0)|, |q_y(0)|)`.
    pub max_constraint: f64,
    /// Largest pre-projection `|Hq(0)| + |q_y(0)|`.
    pub max_drift: f64,
    pub max_projection: f64,
    pub decay: Option<DecayReport>,
    pub holder: Option<HolderReport>,
    pub halted: Option<String>,
    pub elapsed_s: f64,
}

/// In-memory result of a self-similar run.
pub struct RunArtifacts {
    pub summary: RunSummary,
    pub csv: String,
    pub final_state: SimState<f64>,
    pub trace: Vec<(f64, f64)>,
}

/// Runs the modulated self-similar scenario; `profile` may be supplied to
/// skip continuation.
pub fn simulate_rescaled(cfg: &RunConfig, profile: Option<Arc<Profile<f64>>>) -> Result<RunArtifacts> {
    cfg.validate()?;
    let started = Instant::now();
    let grid = cfg.grid()?;
    let p = match profile {
        Some(p) => p,
        None => Arc::new(acquire_profile(cfg.model.a, &grid)?),
    };
    let q0 = initial_perturbation(&cfg.init, &p)?;
    let mut st = SimState::initial(p.clone(), q0, cfg.trap.s0, cfg.rescale.delta);
    let steps = (cfg.rescale.s_max / cfg.rescale.ds).round() as usize;

    let mut csv = format!("{CSV_VERSION}\n{RUN_HEADER}\n");
    let mut row = |st: &SimState<f64>, e: &EnergyReport, proj: f64| {
        let cells = [
            st.s,
            st.t,
            st.lam,
            st.mu,
            e.energy,
            e.norm_q_sq.sqrt(),
            e.norm_ydq_sq.sqrt(),
            e.constraint_residuals.0,
            e.constraint_residuals.1,
            proj,
        ];
        csv.push_str(&cells.map(fmt_num).join(","));
        csv.push('\n');
    };
    let e0 = energy(&st.q, st.delta)?;
    row(&st, &e0, 0.0);
    let mut trace = vec![(st.t, st.lam)];
    let mut etrace = vec![(st.s, e0.energy)];
    let mut status = trapped_check(&st, &cfg.trap)?;
    let mut min_margins = (status.energy_margin, status.lambda_margin, status.mu_margin);
    let mut trapped = status.trapped();
    let (mut max_constraint, mut max_drift, mut max_projection) = (0.0f64, 0.0f64, 0.0f64);
    let mut envelope = 0.0f64;
    let holder_on = p.gamma > 0.0;
    let (h0, w0) = if holder_on {
        (velocity_holder(&st, 1.0)?, vorticity_sup(&st))
    } else {
        (0.0, 0.0)
    };
    let mut holder_sup = h0;
    let mut halted = None;
    let mut taken = 0;
    for k in 0..steps {
        let (next, rep) = match step_selfsimilar(&st, cfg.rescale.ds, cfg.rescale.rate_form) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("run {} halted at s = {}: {e}", cfg.outputs.name, st.s);
                halted = Some(e.to_string());
                break;
            }
        };
        st = next;
        taken += 1;
        let e = energy(&st.q, st.delta)?;
        row(&st, &e, rep.proj_size);
        trace.push((st.t, st.lam));
        etrace.push((st.s, e.energy));
        status = trapped_check(&st, &cfg.trap)?;
        trapped &= status.trapped();
        min_margins.0 = min_margins.0.min(status.energy_margin);
        min_margins.1 = min_margins.1.min(status.lambda_margin);
        min_margins.2 = min_margins.2.min(status.mu_margin);
        let (h, d) = e.constraint_residuals;
        max_constraint = max_constraint.max(h.abs()).max(d.abs());
        max_drift = max_drift.max(rep.drift);
        max_projection = max_projection.max(rep.proj_size);
        if e0.energy > 0.0 {
            envelope = envelope.max(e.energy * ((st.s - cfg.trap.s0) / 4.0).exp() / e0.energy);
        }
        if holder_on && ((k + 1) % HOLDER_EVERY == 0 || k + 1 == steps) {
            holder_sup = holder_sup.max(velocity_holder(&st, 1.0)?);
        }
    }
    if halted.is_some() {
        trapped = false;
    }
    let fit = blowup_fit(&trace).ok();
    let decay = decay_audit(&etrace).ok();
    let holder = holder_on.then(|| HolderReport {
        exponent: crate::dynamics::cusp_exponent(p.gamma),
        initial: h0,
        sup: holder_sup,
        growth: holder_sup / h0,
        vorticity_growth: vorticity_sup(&st) / w0,
    });
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        name: cfg.outputs.name.clone(),
        a: cfg.model.a,
        gamma: p.gamma,
        delta: cfg.rescale.delta,
        steps: taken,
        s_final: st.s,
        t_final: st.t,
        t_fit: fit.map(|f| f.blowup_time),
        c_fit: fit.map(|f| f.rate),
        fit_residual: fit.map(|f| f.residual),
        trapped,
        energy_reading: ENERGY_READING.into(),
        lambda_reading: LAMBDA_READING.into(),
        min_margins,
        energy_initial: e0.energy,
        energy_envelope: (e0.energy > 0.0).then_some(envelope.max(1.0)),
        max_constraint,
        max_drift,
        max_projection,
        decay,
        holder,
        halted,
        elapsed_s: started.elapsed().as_secs_f64(),
    };
    Ok(RunArtifacts {
        summary,
        csv,
        final_state: st,
        trace,
    })
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// `rescale`: runs the self-similar scenario and writes `run.csv`,
/// `summary.json` and `checkpoint.json` under `<out>/<name>/`.
pub fn run_scenario(cfg: &RunConfig) -> Result<RunSummary> {
    let art = simulate_rescaled(cfg, None)?;
    let dir = cfg.out_dir().join(&cfg.outputs.name);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("run.csv"), &art.csv)?;
    write_json(&dir.join("summary.json"), &art.summary)?;
    write_json(&dir.join("checkpoint.json"), &art.final_state.checkpoint())?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(art.summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalSummary {
    pub schema_version: u32,
    pub name: String,
    pub a: f64,
    pub t_final: f64,
    pub steps: usize,
    #[serde(rename = "T_fit")]
    pub t_fit: Option<f64>,
    #[serde(rename = "C_fit")]
    pub c_fit: Option<f64>,
    pub fit_residual: Option<f64>,
    /// Max error against the closed form on `|x| ≤ 10` (only at `a = 0`).
    pub max_exact_error: Option<f64>,
}

pub const PHYSICAL_HEADER: &str = "t,omega_sup,lambda,exact_err";

/// Integrates `ω₀ = F_a + q₀` in physical variables, logging the amplitude
/// scale `λ = ‖ω₀‖_∞/‖ω‖_∞` and, at `a = 0`, the error against the closed form.
pub fn simulate_physical(cfg: &RunConfig) -> Result<(PhysicalSummary, String)> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let p = acquire_profile(cfg.model.a, &grid)?;
    let q0 = initial_perturbation(&cfg.init, &p)?;
    let w0 = p.f.axpy(1.0, &q0);
    let sup0 = w0.max_abs();
    let exact = cfg.model.a == 0.0;
    let mut csv = format!("# ssblow physical log v1\n{PHYSICAL_HEADER}\n");
    let mut trace = vec![(0.0, 1.0)];
    let mut worst = 0.0f64;
    let mut failure = None;
    let st = PhysState { t: 0.0, omega: w0.clone(), a: cfg.model.a };
    csv.push_str(&format!("0,{},1,0\n", fmt_num(sup0)));
    let fin = integrate_physical(&st, cfg.physical.t_end, cfg.physical.dt, |s| {
        let sup = s.omega.max_abs();
        let err = if exact {
            match clm_exact(&w0, s.t) {
                Ok(e) => e.sub(&s.omega).max_abs_within(10.0),
                Err(e) => {
                    failure.get_or_insert(e.to_string());
                    f64::NAN
                }
            }
        } else {
            f64::NAN
        };
        worst = worst.max(err);
        trace.push((s.t, sup0 / sup));
        csv.push_str(&[s.t, sup, sup0 / sup, err].map(fmt_num).join(","));
        csv.push('\n');
    })?;
    let fit = blowup_fit(&trace).ok();
    let summary = PhysicalSummary {
        schema_version: SCHEMA_VERSION,
        name: cfg.outputs.name.clone(),
        a: cfg.model.a,
        t_final: fin.t,
        steps: trace.len() - 1,
        t_fit: fit.map(|f| f.blowup_time),
        c_fit: fit.map(|f| f.rate),
        fit_residual: fit.map(|f| f.residual),
        max_exact_error: (exact && failure.is_none()).then_some(worst),
    };
    Ok((summary, csv))
}

/// `simulate`: physical-variable run writing `physical.csv` and
/// `physical_summary.json` under `<out>/<name>/`.
pub fn run_physical(cfg: &RunConfig) -> Result<PhysicalSummary> {
    let (summary, csv) = simulate_physical(cfg)?;
    let dir = cfg.out_dir().join(&cfg.outputs.name);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("physical.csv"), csv)?;
    write_json(&dir.join("physical_summary.json"), &summary)?;
    Ok(summary)
}

/// Runs every sweep combination concurrently, one output directory each.
pub fn run_sweep(sweep: &SweepConfig) -> Result<Vec<RunSummary>> {
    let runs = sweep.runs()?;
    parallel_map(runs.len(), |i| run_scenario(&runs[i]))
        .into_iter()
        .collect()
}

// ---------------------------------------------------------------- verification

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// The identity the check exercises.
    pub identity: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value ≤ threshold`.
    pub fn at_most(name: &str, identity: &str, value: f64, threshold: f64) -> Check {
        Check {
            name: name.into(),
            identity: identity.into(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }

    pub fn at_least(name: &str, identity: &str, value: f64, threshold: f64) -> Check {
        Check {
            passed: value >= threshold,
            ..Check::at_most(name, identity, value, threshold)
        }
    }

    fn failed(name: &str, identity: &str, err: &Error) -> Check {
        log::error!("{name}: {err}");
        Check {
            name: name.into(),
            identity: format!("{identity} (error: {err})"),
            value: f64::NAN,
            threshold: f64::NAN,
            passed: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub suite: String,
    pub passed: bool,
    pub failures: Vec<Check>,
    pub checks: Vec<Check>,
}

impl Manifest {
    fn new(suite: &str, checks: Vec<Check>) -> Self {
        let failures: Vec<Check> = checks.iter().filter(|c| !c.passed).cloned().collect();
        Manifest {
            schema_version: SCHEMA_VERSION,
            suite: suite.into(),
            passed: failures.is_empty(),
            failures,
            checks,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

pub const SUITES: [&str; 7] = ["pairs", "isometry", "coercivity", "commutator", "modulation", "oracle", "kernel"];

fn guard(name: &str, identity: &str, f: impl FnOnce() -> Result<Vec<Check>>) -> Vec<Check> {
    f().unwrap_or_else(|e| vec![Check::failed(name, identity, &e)])
}

fn f0_grid(n: usize, scale: f64) -> Result<(Grid<f64>, GridFn<f64>)> {
    let g: Grid<f64> = Grid::new(n, scale)?;
    let f = GridFn::from_fn(&g, Parity::Odd, |y| y / (1.0 + y * y))?;
    Ok((g, f))
}

/// Max error of `H(y/(1+y²)) = -1/(1+y²)` on an `n`-node grid. At `L = 1`
/// the pair is a single mode of the map and exact at any resolution.
pub fn analytic_pair_error(n: usize, scale: f64) -> Result<f64> {
    let (g, f) = f0_grid(n, scale)?;
    let h = hilbert(&f)?;
    Ok(h
        .values()
        .iter()
        .zip(g.nodes())
        .map(|(&v, &y)| (v + 1.0 / (1.0 + y * y)).abs())
        .fold(0.0, f64::max))
}

fn suite_pairs() -> Vec<Check> {
    const ID: &str = "H maps y/(1+y^2) to -1/(1+y^2)";
    guard("pairs", ID, || {
        let e1024 = analytic_pair_error(1024, 1.0)?;
        let wide = analytic_pair_error(1024, PROFILE_SCALE)?;
        // the wide map does not carry the pair exactly, so coarse grids show the rate
        let (coarse, fine) = (analytic_pair_error(128, PROFILE_SCALE)?, analytic_pair_error(256, PROFILE_SCALE)?);
        let g: Grid<f64> = Grid::new(1024, 1.0)?;
        let even = GridFn::from_fn(&g, Parity::Even, |y| 1.0 / (1.0 + y * y))?;
        let he = hilbert(&even)?;
        let e_even = he
            .values()
            .iter()
            .zip(g.nodes())
            .map(|(&v, &y)| (v - y / (1.0 + y * y)).abs())
            .fold(0.0, f64::max);
        Ok(vec![
            Check::at_most("hilbert_f0_n1024", ID, e1024, 1e-8),
            Check::at_most("hilbert_f0_wide_map", ID, wide, 1e-8),
            Check::at_most("hilbert_f0_refines", ID, fine / coarse, 0.5),
            Check::at_most("hilbert_even_partner", "H maps 1/(1+y^2) to y/(1+y^2)", e_even, 1e-8),
        ])
    })
}

fn suite_isometry() -> Vec<Check> {
    const ID: &str = "weighted isometry of H on admissible functions";
    guard("isometry", ID, || {
        let g: Grid<f64> = Grid::new(1024, 1.0)?;
        let ens = admissible_ensemble(&g, 20, 11);
        let mut worst = 0.0f64;
        for (_, q) in &ens {
            let n = weighted_norm_sq(q, Weight::Phi)?;
            let nh = weighted_norm_sq(&hilbert(q)?.with_vanishing_order(2)?, Weight::Phi)?;
            worst = worst.max((nh - n).abs() / n);
        }
        Ok(vec![
            Check::at_least("isometry_ensemble_size", ID, ens.len() as f64, 20.0),
            Check::at_most("isometry_relative_defect", ID, worst, 1e-6),
        ])
    })
}

fn profile_grid() -> Result<Grid<f64>> {
    Grid::new(1024, PROFILE_SCALE)
}

fn suite_coercivity() -> Vec<Check> {
    let mut out = guard("coercivity_exact", "quadratic form equals -1/2 norm at a = 0", || {
        let g: Grid<f64> = Grid::new(1024, 1.0)?;
        let p = clm_profile(&g);
        let mut worst = 0.0f64;
        for (_, q) in admissible_ensemble(&g, 50, 3) {
            let r = quadratic_form(&p, &q)? / weighted_norm_sq(&q, Weight::Phi)?;
            worst = worst.max((r + 0.5).abs() / 0.5);
        }
        Ok(vec![Check::at_most(
            "coercivity_exact_a0",
            "quadratic form equals -1/2 norm at a = 0",
            worst,
            1e-6,
        )])
    });
    let g = match profile_grid() {
        Ok(g) => g,
        Err(e) => return vec![Check::failed("coercivity", "profile grid", &e)],
    };
    for &a in &[0.02, -0.02] {
        out.extend(guard("coercivity_margin", "spectral gap for small a", || {
            let p = continue_profile(a, DEFAULT_STEP, &g)?;
            let r = linop::coercivity_probe(&p, 50, 5)?;
            Ok(vec![Check::at_most(
                &format!("coercivity_margin_a{a}"),
                "spectral gap for small a",
                r.worst_ratio,
                -0.4,
            )])
        }));
    }
    const ZM: &str = "y F_a' spans the kernel of the linearization";
    for &a in &[0.0, 0.05, -0.05] {
        out.extend(guard("zero_mode", ZM, || {
            let p = acquire_profile(a, &g)?;
            let r = apply_linearized(&p, &p.f.y_derivative())?.max_abs_within(10.0);
            Ok(vec![Check::at_most(&format!("zero_mode_a{a}"), ZM, r, 1e-5)])
        }));
    }
    const GA: &str = "gamma(a) = a(ln 4 - 2) + O(a^2)";
    for &a in &[0.01, -0.01] {
        out.extend(guard("profile", GA, || {
            let p = continue_profile(a, DEFAULT_STEP, &g)?;
            let slope = 4f64.ln() - 2.0;
            let tail = tail_fit(&p, DEFAULT_TAIL_RANGE)?;
            let want = -1.0 / (1.0 + p.gamma);
            Ok(vec![
                Check::at_most(&format!("gamma_slope_a{a}"), GA, ((p.gamma / a) / slope - 1.0).abs(), 0.05),
                Check::at_most(&format!("profile_residual_a{a}"), "profile equation residual", p.residual, 1e-6),
                Check::at_most(
                    &format!("tail_exponent_a{a}"),
                    "F_a decays like |y|^(-1/(1+gamma))",
                    ((tail.exponent_fit - want) / want).abs(),
                    0.05,
                ),
            ])
        }));
    }
    out
}

fn suite_commutator() -> Vec<Check> {
    const ID: &str = "[Λ⁻¹, y]∂_y q = ∫_0^y Hq - y Hq(0)";
    guard("commutator", ID, || {
        let g: Grid<f64> = Grid::new(1024, 1.0)?;
        let mut worst = 0.0f64;
        for i in 0..10 {
            let d = Draw::sample(21, i);
            let q = GridFn::from_fn(&g, Parity::Odd, |y| d.eval(y))?;
            worst = worst.max(commutator_residual(&q)?);
        }
        Ok(vec![Check::at_most("commutator_residual", ID, worst, 1e-7)])
    })
}

/// Self-similar run config used by the modulation suite and the acceptance
/// criteria: `ε = 10⁻³` bump, profile grid, `K = 100`.
pub fn trapped_run_config(a: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.model.a = a;
    cfg.grid.scale = PROFILE_SCALE;
    cfg.outputs.name = format!("trapped_a{a}");
    cfg
}

fn suite_modulation() -> Vec<Check> {
    let mut out = guard("decompose", "unique modulation pair", || {
        let g = profile_grid()?;
        let p = continue_profile(0.05, DEFAULT_STEP, &g)?;
        let pair = ModPair::new(0.9, 1.1)?;
        let (got, q) = decompose(&rescaled_profile(&p, pair), &p)?;
        let err = (got.lam - pair.lam).abs().max((got.mu - pair.mu).abs());
        let small = project_admissible(&GridFn::from_fn(&g, Parity::Odd, |y| 1e-4 * y * (-y * y / 4.0).exp())?)?;
        let rates = modulation_rates(&p, &small, RateForm::Statement)?;
        let e = energy(&small, 0.05)?.energy;
        Ok(vec![
            Check::at_most("decompose_round_trip", "unique modulation pair", err, 1e-8),
            Check::at_most("decompose_residual", "unique modulation pair", q.max_abs(), 1e-8),
            Check::at_most(
                "rate_bound_constant",
                "|lambda_s/lambda + 1| <= C |a| sqrt(E)",
                rates.lam_rate.abs() / (0.05 * e.sqrt()),
                10.0,
            ),
        ])
    });
    let runs = parallel_map(5, |i| {
        let a = [0.0, 0.02, -0.02, 0.05, -0.05][i];
        (a, simulate_rescaled(&trapped_run_config(a), None))
    });
    for (a, run) in runs {
        let name = |what: &str| format!("{what}_a{a}");
        match run {
            Ok(art) => {
                let s = &art.summary;
                out.push(Check::at_least(&name("trapped"), "trapped regime", s.trapped as u8 as f64, 1.0));
                out.push(Check::at_most(&name("fit_residual"), "lambda(t)/(T-t) -> C", s.fit_residual.unwrap_or(f64::NAN), 0.02));
                out.push(Check::at_most(&name("constraints"), "Hq(0) = q_y(0) = 0", s.max_constraint, 1e-6));
                out.push(Check::at_most(&name("energy_envelope"), "E(s) e^(s/4) bounded", s.energy_envelope.unwrap_or(f64::NAN), 10.0));
                let c = s.decay.map_or(f64::NAN, |d| if d.passed() { d.c_fit } else { f64::INFINITY });
                out.push(Check::at_most(&name("decay_constant"), "dE/ds <= -E/4 + C E^(3/2)", c, AUDIT_C_MAX));
                if let Some(h) = s.holder {
                    out.push(Check::at_most(&name("holder_growth"), "velocity stays C^alpha", h.growth, 10.0));
                    out.push(Check::at_least(&name("vorticity_growth"), "velocity stays C^alpha", h.vorticity_growth, 1e3));
                }
            }
            Err(e) => out.push(Check::failed(&name("run"), "trapped regime", &e)),
        }
    }
    out
}

/// Max errors on `|x| ≤ 10` up to `t_end` from `ω₀ = F₀` at `a = 0`:
/// (physical vs closed form, self-similar vs closed form, physical vs
/// self-similar), and the blowup fit of the physical run.
pub fn oracle_agreement(n: usize, t_end: f64, dt: f64) -> Result<([f64; 3], BlowupFit)> {
    let (g, f0) = f0_grid(n, 1.0)?;
    let p = Arc::new(clm_profile(&g));
    let sup0 = f0.max_abs();
    let mut errs = [0.0f64; 3];
    let mut trace = vec![(0.0, 1.0)];
    let mut fail = None;
    let st = PhysState { t: 0.0, omega: f0.clone(), a: 0.0 };
    integrate_physical(&st, t_end, dt, |s| {
        trace.push((s.t, sup0 / s.omega.max_abs()));
        let exact = match clm_exact(&f0, s.t) {
            Ok(e) => e,
            Err(e) => {
                fail.get_or_insert(e);
                return;
            }
        };
        // the zero-perturbation self-similar state at the same physical time
        let sim = SimState {
            s: -(1.0 - s.t).ln(),
            t: s.t,
            lam: 1.0 - s.t,
            mu: 1.0,
            q: GridFn::zeros(&g, Parity::Odd),
            profile: p.clone(),
            delta: 0.05,
            a: 0.0,
        };
        let (rec, _) = reconstruct_physical(&sim);
        errs[0] = errs[0].max(exact.sub(&s.omega).max_abs_within(10.0));
        errs[1] = errs[1].max(exact.sub(&rec).max_abs_within(10.0));
        errs[2] = errs[2].max(rec.sub(&s.omega).max_abs_within(10.0));
    })?;
    if let Some(e) = fail {
        return Err(e);
    }
    Ok((errs, blowup_fit(&trace)?))
}

fn suite_oracle() -> Vec<Check> {
    const ID: &str = "closed-form solution of the a = 0 flow";
    guard("oracle", ID, || {
        let (errs, fit) = oracle_agreement(1024, 0.9, 1e-3)?;
        // the self-similar leg is the q = 0 run itself
        let g: Grid<f64> = Grid::new(1024, 1.0)?;
        let mut st = SimState::initial(Arc::new(clm_profile(&g)), GridFn::zeros(&g, Parity::Odd), 0.0, 0.05);
        while st.t < 0.9 - 1e-12 {
            let ds = 0.01f64.min(-(1.0 - 0.9f64).ln() - st.s);
            if ds <= 1e-12 {
                break;
            }
            st = step_selfsimilar(&st, ds, RateForm::Statement)?.0;
        }
        let (rec, t) = reconstruct_physical(&st);
        let exact = clm_exact(&GridFn::from_fn(&g, Parity::Odd, |y| y / (1.0 + y * y))?, t)?;
        let run_err = exact.sub(&rec).max_abs_within(10.0);
        Ok(vec![
            Check::at_most("physical_vs_exact", ID, errs[0], 1e-6),
            Check::at_most("selfsimilar_vs_exact", ID, errs[1].max(run_err), 1e-5),
            Check::at_most("physical_vs_selfsimilar", ID, errs[2], 1e-5),
            Check::at_most("blowup_time", "lambda(t)/(T-t) -> C", (fit.blowup_time - 1.0).abs(), 1e-3),
        ])
    })
}

/// The double sum converges at second order; this resolution keeps it
/// inside the relative tolerance with margin.
pub const MAIN_TERM_NODES: usize = 2048;

/// Ten admissible half-line test functions `Y³ e^{-(Y-c)²/w}`, projected.
pub fn half_line_family(grid: &HalfGrid<f64>) -> Result<Vec<HalfFn<f64>>> {
    (0..10)
        .map(|k| {
            let c = 0.5 + 0.35 * k as f64;
            let w = 0.5 + 0.2 * k as f64;
            let q = HalfFn::from_fn(grid, |y| y * y * y * (-(y - c) * (y - c) / w).exp()).with_boundary_order(2)?;
            Ok(fractional::project_admissible(&q))
        })
        .collect()
}

fn suite_kernel() -> Vec<Check> {
    let mut out = Vec::new();
    for &alpha in &[0.1, 0.5, 1.0] {
        out.extend(guard("kernel", "symmetrized kernel bound", || {
            let r = kernel_audit(alpha, 10_000, 17)?;
            Ok(vec![
                Check::at_most(&format!("kernel_symmetry_alpha{alpha}"), "kernel symmetry", r.symmetry_defect, 1e-10),
                Check::at_least(&format!("kernel_bound_alpha{alpha}"), "symmetrized kernel bound", r.bound_margin, 0.0),
            ])
        }));
    }
    out.extend(guard("kernel_limit", "small-alpha limit kernel", || {
        let r = kernel_audit(0.1, 10_000, 17)?;
        let ratios: Vec<f64> = r.limit_defects.windows(2).map(|w| w[0].1 / w[1].1).collect();
        let worst = ratios.iter().map(|&q| (q / 2.0).ln().abs()).fold(0.0, f64::max);
        Ok(vec![Check::at_most(
            "kernel_limit_linear",
            "small-alpha limit kernel",
            worst.exp(),
            2.0,
        )])
    }));
    out.extend(guard("main_term", "main term integration by parts", || {
        let g = HalfGrid::new(MAIN_TERM_NODES, 1.0)?;
        let (mut rel, mut sign) = (0.0f64, f64::NEG_INFINITY);
        for q in half_line_family(&g)? {
            let (lhs, rhs) = main_term_identity(&q)?;
            rel = rel.max((lhs - rhs).abs() / (lhs.abs() + 1e-12));
            sign = sign.max(rhs);
        }
        Ok(vec![
            Check::at_most("main_term_relative", "main term integration by parts", rel, 1e-5),
            Check::at_most("main_term_sign", "main term is non-positive", sign, 0.0),
        ])
    }));
    out
}

fn run_suite(name: &str) -> Vec<Check> {
    match name {
        "pairs" => suite_pairs(),
        "isometry" => suite_isometry(),
        "coercivity" => suite_coercivity(),
        "commutator" => suite_commutator(),
        "modulation" => suite_modulation(),
        "oracle" => suite_oracle(),
        "kernel" => suite_kernel(),
        _ => unreachable!("suite names are validated"),
    }
}

/// Runs a named suite (or `all`, whose members run concurrently).
pub fn verify_suite(name: &str) -> Result<Manifest> {
    let members: Vec<&str> = match name {
        "all" => SUITES.to_vec(),
        s if SUITES.contains(&s) => vec![s],
        other => {
            return Err(Error::Precondition(format!(
                "unknown suite `{other}`; expected one of {}, all",
                SUITES.join(", ")
            )))
        }
    };
    let checks = parallel_map(members.len(), |i| run_suite(members[i]))
        .into_iter()
        .flatten()
        .collect();
    Ok(Manifest::new(name, checks))
}
