//! Unitary time stepping for the physical equation and its lens-frame
//! counterpart.
//!
//! Both equations are split into a linear flow, advanced by a Cayley
//! (Crank–Nicolson) step on the reduced field, and a pointwise nonlinear
//! phase flow that is integrated exactly. How the two sub-flows are composed
//! is a [`SplittingScheme`]; schemes are looked up by name in a
//! [`SchemeRegistry`] so run configurations can select them.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radial_field::{pow_from_sq, ModelParams, RadialField, RadialGrid};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Pre-factored Cayley step `(I + iδA/2)⁻¹(I − iδA/2)` for one grid and one
/// time step, where `A = -d²/dr² + (N-1)(N-3)/(4r²)` acts on the reduced
/// field with Dirichlet ends.
#[derive(Debug, Clone)]
pub struct CayleyPropagator {
    dt: f64,
    grid: RadialGrid,
    diag: Vec<f64>,
    off: f64,
    // Thomas sweep coefficients of I + iδA/2
    upper: Vec<Complex64>,
    inv_pivot: Vec<Complex64>,
}

impl CayleyPropagator {
    pub fn new(grid: &RadialGrid, dt: f64) -> Result<Self> {
        if !dt.is_finite() {
            return Err(Error::param(format!("time step {dt} is not finite")));
        }
        let h = grid.spacing();
        let m = grid.len();
        let diag: Vec<f64> = (0..m).map(|j| 2.0 / (h * h) + grid.centrifugal(j)).collect();
        let off = -1.0 / (h * h);
        let tau = 0.5 * dt;
        let e = I * tau * off;
        let mut upper = Vec::with_capacity(m);
        let mut inv_pivot = Vec::with_capacity(m);
        let mut prev_upper = Complex64::new(0.0, 0.0);
        for &d in &diag {
            let pivot = Complex64::new(1.0, tau * d) - e * prev_upper;
            if pivot.norm() < 1e-300 {
                return Err(Error::Numerical("singular tridiagonal system in Cayley step".into()));
            }
            let inv = pivot.inv();
            prev_upper = e * inv;
            upper.push(prev_upper);
            inv_pivot.push(inv);
        }
        Ok(Self { dt, grid: grid.clone(), diag, off, upper, inv_pivot })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance reduced samples in place.
    pub fn apply_reduced(&self, w: &mut [Complex64]) {
        let m = w.len();
        debug_assert_eq!(m, self.diag.len());
        if m == 0 || self.dt == 0.0 {
            return;
        }
        let tau = 0.5 * self.dt;
        let e = I * tau * self.off;
        // right-hand side (I - iδA/2) w, then the forward sweep, fused
        let mut prev_w = Complex64::new(0.0, 0.0);
        let mut prev_d = Complex64::new(0.0, 0.0);
        for j in 0..m {
            let next_w = if j + 1 < m { w[j + 1] } else { Complex64::new(0.0, 0.0) };
            let rhs = Complex64::new(1.0, -tau * self.diag[j]) * w[j] - e * (prev_w + next_w);
            prev_w = w[j];
            let d = (rhs - e * prev_d) * self.inv_pivot[j];
            w[j] = d;
            prev_d = d;
        }
        for j in (0..m - 1).rev() {
            let next = w[j + 1];
            w[j] -= self.upper[j] * next;
        }
    }

    pub fn apply(&self, f: &RadialField) -> Result<RadialField> {
        if *f.grid() != self.grid {
            return Err(Error::Structural("propagator built for a different grid".into()));
        }
        if self.dt == 0.0 {
            return Ok(f.clone());
        }
        let mut w = f.reduced();
        self.apply_reduced(&mut w);
        RadialField::from_reduced(f.grid_arc().clone(), w)
    }
}

/// One Cayley step of the free flow `J(dt) = e^{i dt Δ}`. Negative `dt`
/// runs the flow backwards.
pub fn free_step(f: &RadialField, dt: f64) -> Result<RadialField> {
    CayleyPropagator::new(f.grid(), dt)?.apply(f)
}

/// `J(t)` approximated by `substeps` Cayley steps of size `t/substeps`.
pub fn free_evolve(f: &RadialField, t: f64, substeps: usize) -> Result<RadialField> {
    let substeps = substeps.max(1);
    let prop = CayleyPropagator::new(f.grid(), t / substeps as f64)?;
    let mut w = f.reduced();
    for _ in 0..substeps {
        prop.apply_reduced(&mut w);
    }
    RadialField::from_reduced(f.grid_arc().clone(), w)
}

/// Exact flow of `i u_t = λ₁|u|^{p₁}u + λ₂|u|^{p₂}u` over `dt`.
pub fn nonlinear_phase_step(f: &RadialField, params: &ModelParams, dt: f64) -> RadialField {
    f.map(|_, u| {
        let rate = params.potential_rate(u.norm_sqr());
        u * Complex64::from_polar(1.0, -dt * rate)
    })
}

/// `h(s) = (1-s)^{(Np-4)/2}`, the lens-frame coefficient of `|v|^p v`.
pub fn lens_coefficient(s: f64, p: f64, dim: usize) -> f64 {
    (1.0 - s).powf(0.5 * (dim as f64 * p - 4.0))
}

/// `∫_0^d (1-u)^γ du` for `0 ≤ d < 1`, without cancellation for small `d`.
pub(crate) fn unit_power_integral(gamma: f64, d: f64) -> f64 {
    let log1m = (-d).ln_1p();
    if (gamma + 1.0).abs() < 1e-12 {
        -log1m
    } else {
        -((gamma + 1.0) * log1m).exp_m1() / (gamma + 1.0)
    }
}

/// `∫_s^{s+ds} (1-τ)^γ dτ`, `γ = (Np-4)/2`, in closed form (logarithmic at
/// the borderline `p = 2/N`).
pub fn lens_phase_integral(s: f64, ds: f64, p: f64, dim: usize) -> Result<f64> {
    if !(s >= 0.0 && ds >= 0.0) {
        return Err(Error::domain(format!("need 0 <= s and ds >= 0, got s = {s}, ds = {ds}")));
    }
    if s + ds >= 1.0 {
        return Err(Error::domain(format!("lens interval [{s}, {}] reaches s = 1", s + ds)));
    }
    let gamma = 0.5 * (dim as f64 * p - 4.0);
    let x0 = 1.0 - s;
    Ok(x0.powf(gamma + 1.0) * unit_power_integral(gamma, ds / x0))
}

/// Exact lens-frame phase over `[from, to]`.
pub fn lens_phase_step(
    f: &RadialField,
    params: &ModelParams,
    from: f64,
    to: f64,
) -> Result<RadialField> {
    let ds = to - from;
    let h1 = params.lambda1 * lens_phase_integral(from, ds, params.p1, params.dim)?;
    let h2 = if params.has_second_power() {
        params.lambda2 * lens_phase_integral(from, ds, params.p2, params.dim)?
    } else {
        0.0
    };
    let (p1, p2) = (params.p1, params.p2);
    Ok(f.map(|_, v| {
        let sq = v.norm_sqr();
        let mut phase = h1 * pow_from_sq(sq, p1);
        if h2 != 0.0 {
            phase += h2 * pow_from_sq(sq, p2);
        }
        v * Complex64::from_polar(1.0, -phase)
    }))
}

/// Stepper settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    /// Cayley sub-steps per linear sub-flow.
    pub substeps_linear: usize,
    /// Name of a registered [`SplittingScheme`].
    pub scheme: String,
    /// Lens steps are capped at `near_one_ratio · (1 - s)`.
    pub near_one_ratio: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self { dt: 1e-3, substeps_linear: 1, scheme: "strang".into(), near_one_ratio: 0.05 }
    }
}

impl StepperConfig {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param(format!("dt = {} must be positive", self.dt)));
        }
        if self.substeps_linear == 0 {
            return Err(Error::param("substeps_linear must be at least 1"));
        }
        if !(self.near_one_ratio > 0.0 && self.near_one_ratio < 1.0) {
            return Err(Error::param(format!(
                "near_one_ratio = {} must lie in (0, 1)",
                self.near_one_ratio
            )));
        }
        Ok(())
    }
}

/// The two exactly solvable pieces of a split equation.
pub trait SubFlows {
    /// Linear (dispersive) flow over a duration `dt`.
    fn linear(&mut self, f: &RadialField, dt: f64) -> Result<RadialField>;
    /// Nonlinear phase flow over the time interval `[from, to]`.
    fn nonlinear(&self, f: &RadialField, from: f64, to: f64) -> Result<RadialField>;
}

/// A way of composing [`SubFlows`] into one time step.
pub trait SplittingScheme: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    /// Classical order of accuracy in `dt`.
    fn order(&self) -> u32;
    fn step(&self, flows: &mut dyn SubFlows, f: &RadialField, t: f64, dt: f64)
        -> Result<RadialField>;
}

/// Symmetric composition: half nonlinear, full linear, half nonlinear.
#[derive(Debug, Default, Clone, Copy)]
pub struct Strang;

impl SplittingScheme for Strang {
    fn name(&self) -> &'static str {
        "strang"
    }

    fn order(&self) -> u32 {
        2
    }

    fn step(
        &self,
        flows: &mut dyn SubFlows,
        f: &RadialField,
        t: f64,
        dt: f64,
    ) -> Result<RadialField> {
        let mid = t + 0.5 * dt;
        let g = flows.nonlinear(f, t, mid)?;
        let g = flows.linear(&g, dt)?;
        flows.nonlinear(&g, mid, t + dt)
    }
}

/// First-order composition: linear then nonlinear.
#[derive(Debug, Default, Clone, Copy)]
pub struct LieTrotter;

impl SplittingScheme for LieTrotter {
    fn name(&self) -> &'static str {
        "lie"
    }

    fn order(&self) -> u32 {
        1
    }

    fn step(
        &self,
        flows: &mut dyn SubFlows,
        f: &RadialField,
        t: f64,
        dt: f64,
    ) -> Result<RadialField> {
        let g = flows.linear(f, dt)?;
        flows.nonlinear(&g, t, t + dt)
    }
}

/// Splitting schemes by name.
#[derive(Debug, Clone)]
pub struct SchemeRegistry {
    schemes: BTreeMap<&'static str, Arc<dyn SplittingScheme>>,
}

impl SchemeRegistry {
    pub fn empty() -> Self {
        Self { schemes: BTreeMap::new() }
    }

    pub fn register(&mut self, scheme: Arc<dyn SplittingScheme>) -> Option<Arc<dyn SplittingScheme>> {
        self.schemes.insert(scheme.name(), scheme)
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn SplittingScheme>> {
        self.schemes.get(name).cloned().ok_or_else(|| {
            Error::param(format!(
                "unknown splitting scheme {name:?}; available: {}",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.schemes.keys().copied().collect()
    }
}

impl Default for SchemeRegistry {
    fn default() -> Self {
        let mut registry = Self::empty();
        registry.register(Arc::new(Strang));
        registry.register(Arc::new(LieTrotter));
        registry
    }
}

/// Cayley propagators cached by step size.
#[derive(Debug, Default)]
struct LinearCache {
    substeps: usize,
    cached: Option<CayleyPropagator>,
}

impl LinearCache {
    fn new(substeps: usize) -> Self {
        Self { substeps: substeps.max(1), cached: None }
    }

    fn advance(&mut self, f: &RadialField, dt: f64) -> Result<RadialField> {
        let sub = dt / self.substeps as f64;
        let stale = match &self.cached {
            Some(p) => p.dt() != sub || p.grid != *f.grid(),
            None => true,
        };
        if stale {
            self.cached = Some(CayleyPropagator::new(f.grid(), sub)?);
        }
        let prop = self.cached.as_ref().expect("propagator cached above");
        let mut w = f.reduced();
        for _ in 0..self.substeps {
            prop.apply_reduced(&mut w);
        }
        RadialField::from_reduced(f.grid_arc().clone(), w)
    }
}

/// Sub-flows of `i u_t + Δu = λ₁|u|^{p₁}u + λ₂|u|^{p₂}u`.
#[derive(Debug)]
pub struct PhysicalFlows {
    params: ModelParams,
    linear: LinearCache,
}

impl PhysicalFlows {
    pub fn new(params: ModelParams, substeps_linear: usize) -> Self {
        Self { params, linear: LinearCache::new(substeps_linear) }
    }
}

impl SubFlows for PhysicalFlows {
    fn linear(&mut self, f: &RadialField, dt: f64) -> Result<RadialField> {
        self.linear.advance(f, dt)
    }

    fn nonlinear(&self, f: &RadialField, from: f64, to: f64) -> Result<RadialField> {
        Ok(nonlinear_phase_step(f, &self.params, to - from))
    }
}

/// Sub-flows of `i v_s + Δv = λ₁h₁(s)|v|^{p₁}v + λ₂h₂(s)|v|^{p₂}v`.
#[derive(Debug)]
pub struct LensFlows {
    params: ModelParams,
    linear: LinearCache,
}

impl LensFlows {
    pub fn new(params: ModelParams, substeps_linear: usize) -> Self {
        Self { params, linear: LinearCache::new(substeps_linear) }
    }
}

impl SubFlows for LensFlows {
    fn linear(&mut self, f: &RadialField, dt: f64) -> Result<RadialField> {
        self.linear.advance(f, dt)
    }

    fn nonlinear(&self, f: &RadialField, from: f64, to: f64) -> Result<RadialField> {
        lens_phase_step(f, &self.params, from, to)
    }
}

/// One Strang step of the physical equation.
pub fn strang_step_physical(
    f: &RadialField,
    params: &ModelParams,
    cfg: &StepperConfig,
) -> Result<RadialField> {
    cfg.validate()?;
    let mut flows = PhysicalFlows::new(*params, cfg.substeps_linear);
    Strang.step(&mut flows, f, 0.0, cfg.dt)
}

/// A field in the pseudoconformal frame at lens time `s ∈ [0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LensState {
    s: f64,
    v: RadialField,
}

impl LensState {
    pub fn new(s: f64, v: RadialField) -> Result<Self> {
        if !(0.0..1.0).contains(&s) {
            return Err(Error::domain(format!("lens time s = {s} must lie in [0, 1)")));
        }
        Ok(Self { s, v })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn field(&self) -> &RadialField {
        &self.v
    }

    pub fn into_field(self) -> RadialField {
        self.v
    }

    /// Physical time `t = s/(1-s)`.
    pub fn physical_time(&self) -> f64 {
        self.s / (1.0 - self.s)
    }
}

/// One Strang step of the lens-frame equation advancing `s` by `cfg.dt`.
pub fn strang_step_lens(
    state: &LensState,
    params: &ModelParams,
    cfg: &StepperConfig,
) -> Result<LensState> {
    cfg.validate()?;
    if state.s + cfg.dt >= 1.0 {
        return Err(Error::domain(format!(
            "lens step from s = {} by {} passes s = 1",
            state.s, cfg.dt
        )));
    }
    let mut flows = LensFlows::new(*params, cfg.substeps_linear);
    let v = Strang.step(&mut flows, &state.v, state.s, cfg.dt)?;
    LensState::new(state.s + cfg.dt, v)
}

/// Physical-frame stepper owning its propagator workspace.
#[derive(Debug)]
pub struct PhysicalStepper {
    scheme: Arc<dyn SplittingScheme>,
    flows: PhysicalFlows,
    cfg: StepperConfig,
}

impl PhysicalStepper {
    pub fn new(params: ModelParams, cfg: StepperConfig) -> Result<Self> {
        Self::with_registry(params, cfg, &SchemeRegistry::default())
    }

    pub fn with_registry(
        params: ModelParams,
        cfg: StepperConfig,
        registry: &SchemeRegistry,
    ) -> Result<Self> {
        cfg.validate()?;
        params.validate()?;
        let scheme = registry.get(&cfg.scheme)?;
        let flows = PhysicalFlows::new(params, cfg.substeps_linear);
        Ok(Self { scheme, flows, cfg })
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    pub fn step(&mut self, f: &RadialField, t: f64, dt: f64) -> Result<RadialField> {
        self.scheme.step(&mut self.flows, f, t, dt)
    }

    /// Evolve from `t = 0` to `t_end` with steps of at most `cfg.dt`,
    /// reporting every state (including the initial one) to `observe`.
    pub fn evolve(
        &mut self,
        f: &RadialField,
        t_end: f64,
        mut observe: impl FnMut(f64, &RadialField) -> Result<()>,
    ) -> Result<RadialField> {
        if !(t_end >= 0.0) {
            return Err(Error::param(format!("t_end = {t_end} must be nonnegative")));
        }
        let steps = (t_end / self.cfg.dt).ceil().max(0.0) as usize;
        let dt = if steps == 0 { 0.0 } else { t_end / steps as f64 };
        let mut u = f.clone();
        observe(0.0, &u)?;
        for k in 0..steps {
            let t = k as f64 * dt;
            u = self.step(&u, t, dt)?;
            observe(t + dt, &u)?;
        }
        Ok(u)
    }
}

/// Lens-frame stepper. Steps are capped at `near_one_ratio · (1 - s)` so the
/// coefficients `h_i(s)` stay resolved as `s → 1`.
#[derive(Debug)]
pub struct LensStepper {
    scheme: Arc<dyn SplittingScheme>,
    flows: LensFlows,
    cfg: StepperConfig,
}

impl LensStepper {
    pub fn new(params: ModelParams, cfg: StepperConfig) -> Result<Self> {
        Self::with_registry(params, cfg, &SchemeRegistry::default())
    }

    pub fn with_registry(
        params: ModelParams,
        cfg: StepperConfig,
        registry: &SchemeRegistry,
    ) -> Result<Self> {
        cfg.validate()?;
        params.validate()?;
        let scheme = registry.get(&cfg.scheme)?;
        let flows = LensFlows::new(params, cfg.substeps_linear);
        Ok(Self { scheme, flows, cfg })
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    /// Step size used at lens time `s`.
    pub fn scheduled_step(&self, s: f64) -> f64 {
        self.cfg.dt.min(self.cfg.near_one_ratio * (1.0 - s))
    }

    pub fn step(&mut self, state: &LensState, ds: f64) -> Result<LensState> {
        if state.s + ds >= 1.0 {
            return Err(Error::domain(format!(
                "lens step from s = {} by {ds} passes s = 1",
                state.s
            )));
        }
        let v = self.scheme.step(&mut self.flows, &state.v, state.s, ds)?;
        LensState::new(state.s + ds, v)
    }

    /// Advance to `s_end` on the geometric schedule, landing exactly on every
    /// lens time in `stops` (sorted, within `(state.s, s_end]`). `observe`
    /// sees the initial state and every step.
    pub fn advance(
        &mut self,
        state: &LensState,
        s_end: f64,
        stops: &[f64],
        mut observe: impl FnMut(&LensState) -> Result<()>,
    ) -> Result<LensState> {
        if !(s_end < 1.0) {
            return Err(Error::domain(format!("s_end = {s_end} must be below 1")));
        }
        if s_end < state.s {
            return Err(Error::Ordering(format!(
                "s_end = {s_end} precedes the current lens time {}",
                state.s
            )));
        }
        let mut targets: Vec<f64> =
            stops.iter().copied().filter(|&x| x > state.s && x < s_end).collect();
        targets.push(s_end);
        let mut current = state.clone();
        observe(&current)?;
        for target in targets {
            while current.s < target {
                let remaining = target - current.s;
                let mut ds = self.scheduled_step(current.s);
                // avoid a sliver step right before a target
                if ds >= remaining || remaining - ds < 1e-3 * ds {
                    ds = remaining;
                }
                let next = self.step(&current, ds)?;
                current = if ds == remaining {
                    // pin the lens time to the target exactly
                    LensState::new(target, next.v)?
                } else {
                    next
                };
                observe(&current)?;
            }
        }
        Ok(current)
    }
}

/// Outcome of [`picard_iterates`].
#[derive(Debug, Clone)]
pub struct PicardRun {
    /// `u_k(T)` for `k = 0..=iters`, where `u_0(t) = J(t)φ`.
    pub iterates: Vec<RadialField>,
    /// `‖u_{k+1}(T) − u_k(T)‖₂` for consecutive iterates.
    pub increments: Vec<f64>,
}

/// Fixed-point iteration of the Duhamel map
/// `u(t) = J(t)φ − i∫₀ᵗ J(t−τ)(λ₁|u|^{p₁}u + λ₂|u|^{p₂}u)(τ) dτ`
/// on the step grid of `cfg.dt`, with trapezoid quadrature in `τ` and
/// Cayley steps for `J`.
pub fn picard_iterates(
    phi: &RadialField,
    params: &ModelParams,
    t_end: f64,
    iters: usize,
    cfg: &StepperConfig,
) -> Result<PicardRun> {
    cfg.validate()?;
    if !(t_end > 0.0) {
        return Err(Error::param(format!("Picard horizon T = {t_end} must be positive")));
    }
    let steps = (t_end / cfg.dt).round().max(1.0) as usize;
    let dt = t_end / steps as f64;
    let grid = phi.grid_arc().clone();
    let mut lin = LinearCache::new(cfg.substeps_linear);
    let limit = 1e3 * phi.norm_l2();

    // u_0(t_n) = J(t_n) φ
    let mut trajectory: Vec<Vec<Complex64>> = Vec::with_capacity(steps + 1);
    let mut u = phi.clone();
    trajectory.push(u.values().to_vec());
    for _ in 0..steps {
        u = lin.advance(&u, dt)?;
        trajectory.push(u.values().to_vec());
    }
    let free = trajectory.clone();
    let to_field = |v: Vec<Complex64>| RadialField::new(grid.clone(), v);

    let mut iterates = vec![to_field(trajectory[steps].clone())?];
    let mut increments = Vec::with_capacity(iters);
    let nonlinear = |v: &[Complex64]| -> Vec<Complex64> {
        v.iter().map(|&z| z * params.potential_rate(z.norm_sqr())).collect()
    };

    for _ in 0..iters {
        // B_n = Σ_{m≤n} J(t_n − t_m) F_m dt and C_n = J(t_n) F_0
        let f0 = to_field(nonlinear(&trajectory[0]))?;
        let mut acc = f0.scale(Complex64::new(dt, 0.0));
        let mut first = f0.clone();
        let mut next = Vec::with_capacity(steps + 1);
        next.push(trajectory[0].clone());
        for n in 1..=steps {
            acc = lin.advance(&acc, dt)?;
            first = lin.advance(&first, dt)?;
            let fn_field = to_field(nonlinear(&trajectory[n]))?;
            acc = acc.add(&fn_field.scale(Complex64::new(dt, 0.0)))?;
            let values: Vec<Complex64> = free[n]
                .iter()
                .zip(acc.values())
                .zip(first.values().iter().zip(fn_field.values()))
                .map(|((&lin_part, &b), (&c, &fnv))| {
                    let duhamel = b - 0.5 * dt * (c + fnv);
                    lin_part - I * duhamel
                })
                .collect();
            next.push(values);
        }
        trajectory = next;
        let at_end = to_field(trajectory[steps].clone())?;
        let norm = at_end.norm_l2();
        if !(norm <= limit) {
            return Err(Error::NonContraction { norm, limit });
        }
        let prev = iterates.last().expect("at least the free iterate");
        increments.push(at_end.sub(prev)?.norm_l2());
        iterates.push(at_end);
    }
    Ok(PicardRun { iterates, increments })
}

/// The `iters`-th Duhamel iterate at time `t_end`.
pub fn picard_iterate(
    phi: &RadialField,
    params: &ModelParams,
    t_end: f64,
    iters: usize,
    cfg: &StepperConfig,
) -> Result<RadialField> {
    let mut run = picard_iterates(phi, params, t_end, iters, cfg)?;
    Ok(run.iterates.pop().expect("iterates is never empty"))
}
