//! Trajectory instrumentation: conserved quantities, the lens-frame
//! `M/N/K` ledger with its identity residual, decay and growth fits, and the
//! pairing witness for the no-scattering regime.
//!
//! In the lens frame, with `γᵢ = (Npᵢ − 4)/2` and `gᵢ(s) = ‖v(s)‖_{pᵢ+2}^{pᵢ+2}`,
//!
//! ```text
//! M(s) = λ₁/(p₁+2) ∫₀ˢ (1−τ)^{γ₁−1} g₁(τ) dτ,   N(s) likewise with index 2,
//! K(s) = ½‖∇v‖₂² + (1−s)(M′(s) + N′(s)),
//! K(s) = a M(s) + b N(s) + C₀,   a = (4−Np₁)/2, b = (4−Np₂)/2, C₀ = K(0).
//! ```
//!
//! `M` and `N` are accumulated with a product trapezoid rule: `gᵢ` is taken
//! linear between visited lens times and the power weight is integrated
//! exactly, which stays accurate as the weight blows up near `s = 1`.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagators::{lens_coefficient, unit_power_integral, LensState};
use crate::radial_field::{ModelParams, RadialField, RadialGrid};
use std::sync::Arc;

/// `E(u) = ½‖∇u‖₂² + Σ λᵢ/(pᵢ+2) ‖u‖_{pᵢ+2}^{pᵢ+2}`, kinetic term in the
/// propagator's own quadratic form.
pub fn physical_energy(u: &RadialField, params: &ModelParams) -> f64 {
    let mut e = 0.5 * u.dirichlet_energy()
        + params.lambda1 / (params.p1 + 2.0) * u.power_integral(params.p1 + 2.0);
    if params.has_second_power() {
        e += params.lambda2 / (params.p2 + 2.0) * u.power_integral(params.p2 + 2.0);
    }
    e
}

/// Physical energy of `u(t)` read off the lens state, through
/// `‖∇u‖₂² = ¼‖(y − 2i(1−s)∇)v‖₂²` and
/// `‖u‖_{β+2}^{β+2} = (1+t)^{−Nβ/2}‖v‖_{β+2}^{β+2}`.
pub fn lens_physical_energy(state: &LensState, params: &ModelParams) -> f64 {
    let v = state.field();
    let s = state.s();
    let c = 1.0 - s;
    let grid = v.grid();
    let d = v.radial_derivative();
    let (moment, cross) = v.values().iter().zip(&d).enumerate().fold(
        (0.0, 0.0),
        |(m, x), (j, (vj, dj))| {
            let y = grid.node(j);
            let w = grid.weight(j);
            (m + y * y * vj.norm_sqr() * w, x + y * (vj * dj.conj()).im * w)
        },
    );
    let kinetic = 0.25 * moment + c * c * v.dirichlet_energy() - c * cross;
    let n = params.n();
    let t = state.physical_time();
    let mut e = 0.5 * kinetic;
    let mut add = |lambda: f64, p: f64| {
        e += lambda / (p + 2.0) * (1.0 + t).powf(-0.5 * n * p) * v.power_integral(p + 2.0);
    };
    add(params.lambda1, params.p1);
    if params.has_second_power() {
        add(params.lambda2, params.p2);
    }
    e
}

/// `a = (4 − Np₁)/2`, `b = (4 − Np₂)/2`.
pub fn identity_coefficients(params: &ModelParams) -> (f64, f64) {
    let n = params.n();
    (0.5 * (4.0 - n * params.p1), 0.5 * (4.0 - n * params.p2))
}

/// One row of the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    /// Lens time `s` or, for physical-frame ledgers, `t`.
    pub time: f64,
    pub mass: f64,
    /// Energy of the physical solution.
    pub energy: f64,
    pub grad_l2: f64,
    pub lp1: f64,
    pub lp2: f64,
    pub m_s: f64,
    pub n_s: f64,
    pub k_s: f64,
    /// `K(0)`, carried so each record is self-contained.
    pub c0: f64,
    pub identity_residual: f64,
}

fn relative_residual(lhs: f64, rhs: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        (lhs - rhs).abs()
    } else {
        (lhs - rhs).abs() / scale
    }
}

fn lens_integrands(v: &RadialField, params: &ModelParams) -> (f64, f64) {
    let lp1 = v.power_integral(params.p1 + 2.0);
    let lp2 = if params.has_second_power() { v.power_integral(params.p2 + 2.0) } else { 0.0 };
    (lp1, lp2)
}

fn lens_k(s: f64, grad: f64, lp1: f64, lp2: f64, params: &ModelParams) -> f64 {
    let mut k = 0.5 * grad
        + params.lambda1 / (params.p1 + 2.0) * lens_coefficient(s, params.p1, params.dim) * lp1;
    if params.has_second_power() {
        k += params.lambda2 / (params.p2 + 2.0) * lens_coefficient(s, params.p2, params.dim) * lp2;
    }
    k
}

/// `∫_{s0}^{s0+ds} (1−τ)^β g(τ) dτ` with `g` linear between `g0` and `g1`.
pub(crate) fn product_trapezoid(beta: f64, s0: f64, ds: f64, g0: f64, g1: f64) -> f64 {
    if ds == 0.0 {
        return 0.0;
    }
    let x0 = 1.0 - s0;
    let d = ds / x0;
    let a0 = unit_power_integral(beta, d);
    let a1 = unit_power_integral(beta + 1.0, d);
    let i0 = x0.powf(beta + 1.0) * a0;
    let i1 = x0.powf(beta + 2.0) * (a0 - a1);
    g0 * i0 + (g1 - g0) / ds * i1
}

impl LedgerRecord {
    /// Record at the start of a lens trajectory: `M = N = 0`, `C₀ = K`.
    pub fn initial(state: &LensState, params: &ModelParams) -> Self {
        let v = state.field();
        let s = state.s();
        let grad = v.dirichlet_energy();
        let (lp1, lp2) = lens_integrands(v, params);
        let k = lens_k(s, grad, lp1, lp2, params);
        Self {
            time: s,
            mass: v.mass(),
            energy: lens_physical_energy(state, params),
            grad_l2: grad,
            lp1,
            lp2,
            m_s: 0.0,
            n_s: 0.0,
            k_s: k,
            c0: k,
            identity_residual: 0.0,
        }
    }

    /// Physical-frame record. `M = N = 0`, `K` is the energy and the
    /// residual measures its drift from `c0`.
    pub fn physical(t: f64, u: &RadialField, params: &ModelParams, c0: f64) -> Self {
        let (lp1, lp2) = lens_integrands(u, params);
        let energy = physical_energy(u, params);
        Self {
            time: t,
            mass: u.mass(),
            energy,
            grad_l2: u.dirichlet_energy(),
            lp1,
            lp2,
            m_s: 0.0,
            n_s: 0.0,
            k_s: energy,
            c0,
            identity_residual: relative_residual(energy, c0, energy.abs() + c0.abs()),
        }
    }
}

/// Advance a lens ledger record to `state`.
pub fn ledger_update(
    record: &LedgerRecord,
    state: &LensState,
    params: &ModelParams,
) -> Result<LedgerRecord> {
    let s = state.s();
    if s < record.time {
        return Err(Error::Ordering(format!(
            "ledger at s = {} cannot move back to s = {s}",
            record.time
        )));
    }
    let v = state.field();
    let ds = s - record.time;
    let (lp1, lp2) = lens_integrands(v, params);
    let n = params.n();
    let beta1 = 0.5 * (n * params.p1 - 4.0) - 1.0;
    let m_s = record.m_s
        + params.lambda1 / (params.p1 + 2.0)
            * product_trapezoid(beta1, record.time, ds, record.lp1, lp1);
    let n_s = if params.has_second_power() {
        let beta2 = 0.5 * (n * params.p2 - 4.0) - 1.0;
        record.n_s
            + params.lambda2 / (params.p2 + 2.0)
                * product_trapezoid(beta2, record.time, ds, record.lp2, lp2)
    } else {
        0.0
    };
    let grad = v.dirichlet_energy();
    let k = lens_k(s, grad, lp1, lp2, params);
    let (a, b) = identity_coefficients(params);
    let rhs = a * m_s + b * n_s + record.c0;
    Ok(LedgerRecord {
        time: s,
        mass: v.mass(),
        energy: lens_physical_energy(state, params),
        grad_l2: grad,
        lp1,
        lp2,
        m_s,
        n_s,
        k_s: k,
        c0: record.c0,
        identity_residual: relative_residual(k, rhs, k.abs() + record.c0.abs()),
    })
}

/// Append-only sequence of ledger records.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Ledger {
    pub records: Vec<LedgerRecord>,
}

pub const LEDGER_HEADER: &str = "s_or_t,mass,energy,grad_l2,lp1,lp2,M,N,K,residual";

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a lens state, starting the ledger if it is empty.
    pub fn push_lens(&mut self, state: &LensState, params: &ModelParams) -> Result<&LedgerRecord> {
        let rec = match self.records.last() {
            None => LedgerRecord::initial(state, params),
            Some(last) => {
                if state.s() <= last.time {
                    return Err(Error::Ordering(format!(
                        "ledger times must increase: {} after {}",
                        state.s(),
                        last.time
                    )));
                }
                ledger_update(last, state, params)?
            }
        };
        self.records.push(rec);
        Ok(self.records.last().expect("just pushed"))
    }

    /// Add a physical-frame state.
    pub fn push_physical(
        &mut self,
        t: f64,
        u: &RadialField,
        params: &ModelParams,
    ) -> Result<&LedgerRecord> {
        let c0 = match self.records.last() {
            None => physical_energy(u, params),
            Some(last) => {
                if t <= last.time {
                    return Err(Error::Ordering(format!(
                        "ledger times must increase: {t} after {}",
                        last.time
                    )));
                }
                last.c0
            }
        };
        self.records.push(LedgerRecord::physical(t, u, params, c0));
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn max_residual(&self) -> f64 {
        self.records.iter().map(|r| r.identity_residual).fold(0.0, f64::max)
    }

    /// Largest relative deviation of the mass column from its first entry.
    pub fn mass_drift(&self) -> f64 {
        self.relative_drift(|r| r.mass)
    }

    pub fn energy_drift(&self) -> f64 {
        self.relative_drift(|r| r.energy)
    }

    fn relative_drift(&self, f: impl Fn(&LedgerRecord) -> f64) -> f64 {
        let Some(first) = self.records.first() else { return 0.0 };
        let base = f(first);
        let scale = if base == 0.0 { 1.0 } else { base.abs() };
        self.records.iter().map(|r| (f(r) - base).abs() / scale).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{LEDGER_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
                r.time,
                r.mass,
                r.energy,
                r.grad_l2,
                r.lp1,
                r.lp2,
                r.m_s,
                r.n_s,
                r.k_s,
                r.identity_residual
            )?;
        }
        Ok(())
    }
}

/// Ordinary least-squares slope and intercept.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallFit {
    /// Fitted slope of `log(aM + bN)` against `−log(1−s)`; `None` if skipped.
    pub slope: Option<f64>,
    /// `(4 − Np₁)/2`, an upper bound for the slope.
    pub bound: f64,
    pub window: (f64, f64),
    pub points: usize,
    pub skipped: Option<String>,
}

/// Fit the growth of `aM + bN` near `s = 1` over `s ∈ [window_start, s_max]`.
pub fn gronwall_exponent_check(
    ledger: &[LedgerRecord],
    params: &ModelParams,
    window_start: f64,
) -> Result<GronwallFit> {
    let n = params.n();
    if !(params.p1 < 4.0 / n) {
        return Err(Error::domain(format!(
            "p1 = {} is not below 4/N; the growth bound is trivial",
            params.p1
        )));
    }
    let s_max = ledger.last().map_or(0.0, |r| r.time);
    if s_max < 0.95 {
        return Err(Error::param(format!("ledger must reach s >= 0.95, ends at {s_max}")));
    }
    let (a, b) = identity_coefficients(params);
    let bound = 0.5 * (4.0 - n * params.p1);
    let window = (window_start, s_max);
    let pts: Vec<(f64, f64)> = ledger
        .iter()
        .filter(|r| r.time >= window_start && r.time < 1.0)
        .map(|r| (-(1.0 - r.time).ln(), a * r.m_s + b * r.n_s))
        .collect();
    if let Some(bad) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Ok(GronwallFit {
            slope: None,
            bound,
            window,
            points: pts.len(),
            skipped: Some(format!("aM + bN = {} is not positive", bad.1)),
        });
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let fit = least_squares(&xs, &ys);
    Ok(GronwallFit {
        slope: fit.map(|f| f.0),
        bound,
        window,
        points: pts.len(),
        skipped: fit.is_none().then(|| "fewer than two distinct points".to_string()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub r: f64,
    pub slope: f64,
    /// `−N(r−2)/(2r)`, or 0 when `r ≤ 2`.
    pub theoretical: f64,
    pub window: (f64, f64),
    pub points: usize,
    /// Set when no decay is predicted.
    pub note: Option<String>,
}

impl DecayFit {
    /// `|slope − theoretical| ≤ tol·|theoretical|`.
    pub fn within(&self, tol: f64) -> bool {
        (self.slope - self.theoretical).abs() <= tol * self.theoretical.abs()
    }
}

pub fn theoretical_decay(r: f64, dim: usize) -> f64 {
    if r <= 2.0 {
        0.0
    } else {
        -(dim as f64) * (r - 2.0) / (2.0 * r)
    }
}

/// Slope of `log‖u(t)‖_r` against `log(1+t)` over the last decade
/// `t ∈ [t_max/10, t_max]` of `(t, ‖u(t)‖_r)` samples.
pub fn decay_fit(traj: &[(f64, f64)], r: f64, dim: usize) -> Result<DecayFit> {
    let t_max = traj.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if !(t_max >= 20.0) {
        return Err(Error::param(format!("decay fit needs t up to 20 at least, got {t_max}")));
    }
    let n = dim as f64;
    let top = 2.0 * n / (n - 2.0);
    if r > top * (1.0 + 1e-12) {
        return Err(Error::param(format!("Lebesgue exponent r = {r} exceeds 2N/(N-2) = {top}")));
    }
    let lo = t_max / 10.0;
    let (xs, ys): (Vec<f64>, Vec<f64>) = traj
        .iter()
        .filter(|(t, v)| *t >= lo && *v > 0.0)
        .map(|(t, v)| ((1.0 + t).ln(), v.ln()))
        .unzip();
    let (slope, _) = least_squares(&xs, &ys)
        .ok_or_else(|| Error::param("decay fit needs at least two samples in the last decade"))?;
    Ok(DecayFit {
        r,
        slope,
        theoretical: theoretical_decay(r, dim),
        window: (lo, t_max),
        points: xs.len(),
        note: (r <= 2.0).then(|| "no decay predicted for r <= 2".to_string()),
    })
}

/// Default witness: `θ(r) = exp(−1/(1 − (r/2)²))` for `r < 2`, zero beyond.
pub fn default_theta(grid: Arc<RadialGrid>) -> RadialField {
    bump(grid, 2.0)
}

pub fn bump(grid: Arc<RadialGrid>, radius: f64) -> RadialField {
    RadialField::from_real_fn(grid, |r| {
        let x = r / radius;
        if x < 1.0 {
            (-1.0 / (1.0 - x * x)).exp()
        } else {
            0.0
        }
    })
}

/// `(s, ⟨v(s), θ⟩)` along a lens trajectory.
pub fn pairing_series(
    lens_traj: &[LensState],
    theta: &RadialField,
) -> Result<Vec<(f64, Complex64)>> {
    lens_traj.iter().map(|st| Ok((st.s(), st.field().pairing(theta)?))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub s: Vec<f64>,
    pub pairing: Vec<Complex64>,
    pub window: (f64, f64),
    /// `|⟨v, θ⟩|` at the window end over its value at the window start.
    pub growth_ratio: f64,
    pub strictly_increasing: bool,
    /// Slope of `log|⟨v, θ⟩|` against `log(1−s)` over the window.
    pub fitted_exponent: Option<f64>,
    /// `(Np₁ − 2)/2`; zero at `Np₁ = 2`, where growth is logarithmic.
    pub expected_exponent: f64,
    /// `∫|d⟨v, θ⟩/ds| ds` over the window.
    pub path_length: f64,
}

/// Summary of `⟨v(s), θ⟩` over `s ∈ window` for the regime `p₁ ≤ 2/N`.
pub fn nonscatter_witness(
    lens_traj: &[LensState],
    theta: &RadialField,
    params: &ModelParams,
    window: (f64, f64),
) -> Result<WitnessReport> {
    let n = params.n();
    if params.p1 > 2.0 / n * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "witness applies for p1 <= 2/N = {}, got p1 = {}",
            2.0 / n,
            params.p1
        )));
    }
    witness_report(&pairing_series(lens_traj, theta)?, window, 0.5 * (n * params.p1 - 2.0))
}

/// Witness statistics for an arbitrary pairing series.
pub fn witness_report(
    series: &[(f64, Complex64)],
    window: (f64, f64),
    expected_exponent: f64,
) -> Result<WitnessReport> {
    let tol = 1e-9;
    let inside: Vec<&(f64, Complex64)> = series
        .iter()
        .filter(|(s, _)| *s >= window.0 - tol && *s <= window.1 + tol)
        .collect();
    if inside.len() < 2 {
        return Err(Error::param(format!(
            "witness window [{}, {}] holds fewer than two lens states",
            window.0, window.1
        )));
    }
    let first = inside[0].1.norm();
    let last = inside[inside.len() - 1].1.norm();
    let strictly_increasing = inside.windows(2).all(|w| w[1].1.norm() > w[0].1.norm());
    let path_length = inside.windows(2).map(|w| (w[1].1 - w[0].1).norm()).sum();
    let (xs, ys): (Vec<f64>, Vec<f64>) = inside
        .iter()
        .filter(|(s, z)| *s < 1.0 && z.norm() > 0.0)
        .map(|(s, z)| ((1.0 - s).ln(), z.norm().ln()))
        .unzip();
    Ok(WitnessReport {
        s: series.iter().map(|p| p.0).collect(),
        pairing: series.iter().map(|p| p.1).collect(),
        window,
        growth_ratio: if first > 0.0 { last / first } else { f64::INFINITY },
        strictly_increasing,
        fitted_exponent: least_squares(&xs, &ys).map(|f| f.0),
        expected_exponent,
        path_length,
    })
}
