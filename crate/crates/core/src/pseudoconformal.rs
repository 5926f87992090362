//! Frame maps between the physical solution `u(t, x)` and the lens-frame
//! field `v(s, y)`:
//!
//! ```text
//! s = t/(1+t),  y = x/(1+t),
//! v(s, y) = (1+t)^{N/2} u(t, x) e^{-i|x|²/(4(1+t))},
//! ```
//!
//! the norm identities relating the two frames, and recovery of the
//! scattering state `u₊ = e^{i|y|²/4} J(-1) v(1)` from lens states near
//! `s = 1`.
//!
//! The coordinate dilation resamples the field. Modulus and unwrapped phase
//! are interpolated separately with monotone cubics; the quadratic chirp is
//! always applied analytically.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::propagators::{free_evolve, LensState};
use crate::radial_field::{ModelParams, RadialField, RadialGrid};

/// Interpolates a radial field at arbitrary radii in `[0, R]`.
///
/// The knot set is the grid nodes plus a mirrored node at `-h` (radial
/// fields are even in `r`) and the Dirichlet node at `R`.
#[derive(Debug, Clone)]
pub struct FieldResampler {
    modulus: MonotoneCubic,
    phase: MonotoneCubic,
    radius: f64,
}

impl FieldResampler {
    pub fn new(f: &RadialField) -> Result<Self> {
        let grid = f.grid();
        let m = f.len();
        let mut knots = Vec::with_capacity(m + 2);
        let mut modulus = Vec::with_capacity(m + 2);
        let mut phase = Vec::with_capacity(m + 2);
        let unwrapped = unwrap_phase(f.values());
        knots.push(-grid.node(0));
        modulus.push(f.values()[0].norm());
        phase.push(unwrapped[0]);
        for (j, (u, ph)) in f.values().iter().zip(&unwrapped).enumerate() {
            knots.push(grid.node(j));
            modulus.push(u.norm());
            phase.push(*ph);
        }
        knots.push(grid.radius());
        modulus.push(0.0);
        phase.push(*unwrapped.last().unwrap_or(&0.0));
        Ok(Self {
            modulus: MonotoneCubic::new(knots.clone(), modulus)?,
            phase: MonotoneCubic::new(knots, phase)?,
            radius: grid.radius(),
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `(|u|(r), arg u(r))`; zero beyond the truncation radius.
    pub fn polar(&self, r: f64) -> (f64, f64) {
        if r > self.radius {
            return (0.0, 0.0);
        }
        (self.modulus.eval(r).max(0.0), self.phase.eval(r))
    }

    pub fn eval(&self, r: f64) -> Complex64 {
        let (m, ph) = self.polar(r);
        Complex64::from_polar(m, ph)
    }
}

/// Continuous phase along increasing `r`; zero samples inherit the previous
/// phase.
fn unwrap_phase(values: &[Complex64]) -> Vec<f64> {
    use std::f64::consts::{PI, TAU};
    let mut out = Vec::with_capacity(values.len());
    let mut prev: Option<f64> = None;
    for u in values {
        let raw = if u.norm_sqr() == 0.0 { prev.unwrap_or(0.0) } else { u.arg() };
        let ph = match prev {
            None => raw,
            Some(p) => {
                let mut d = (raw - p) % TAU;
                if d > PI {
                    d -= TAU;
                } else if d <= -PI {
                    d += TAU;
                }
                p + d
            }
        };
        out.push(ph);
        prev = Some(ph);
    }
    out
}

/// Map `u(t)` into the lens frame.
///
/// `lens_grid` defaults to the physical grid shrunk to radius
/// `R_u/(1+t)`; a supplied grid must not reach past that radius.
pub fn to_lens(
    u: &RadialField,
    t: f64,
    lens_grid: Option<Arc<RadialGrid>>,
) -> Result<LensState> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("physical time t = {t} must be nonnegative")));
    }
    let dilation = 1.0 + t;
    let coverage = u.grid().radius() / dilation;
    let grid = match lens_grid {
        Some(g) => {
            if g.dim() != u.dim() {
                return Err(Error::Structural("lens grid has a different dimension".into()));
            }
            if g.radius() > coverage * (1.0 + 1e-12) {
                return Err(Error::domain(format!(
                    "lens radius {} exceeds the physical coverage R_u/(1+t) = {coverage}",
                    g.radius()
                )));
            }
            g
        }
        None => u.grid().with_radius(coverage)?.shared(),
    };
    let n = u.dim() as f64;
    let amplitude = dilation.powf(0.5 * n);
    let samples = resample(u, &grid, dilation)?;
    let values = samples
        .into_iter()
        .zip(grid.nodes())
        .map(|((m, ph), y)| {
            let x = dilation * y;
            Complex64::from_polar(amplitude * m, ph - x * x / (4.0 * dilation))
        })
        .collect();
    LensState::new(t / dilation, RadialField::new(grid, values)?)
}

/// Map a lens state back to the physical frame, returning `(u(t), t)`.
///
/// `physical_grid` defaults to radius `R_v/(1-s)`.
pub fn from_lens(
    state: &LensState,
    physical_grid: Option<Arc<RadialGrid>>,
) -> Result<(RadialField, f64)> {
    let s = state.s();
    if !(s < 1.0) {
        return Err(Error::domain(format!("lens time s = {s} must be below 1")));
    }
    let v = state.field();
    let contraction = 1.0 - s;
    let coverage = v.grid().radius() / contraction;
    let grid = match physical_grid {
        Some(g) => {
            if g.dim() != v.dim() {
                return Err(Error::Structural("physical grid has a different dimension".into()));
            }
            if g.radius() > coverage * (1.0 + 1e-12) {
                return Err(Error::domain(format!(
                    "physical radius {} exceeds the lens coverage R_v/(1-s) = {coverage}",
                    g.radius()
                )));
            }
            g
        }
        None => v.grid().with_radius(coverage)?.shared(),
    };
    let n = v.dim() as f64;
    let amplitude = contraction.powf(0.5 * n);
    let samples = resample(v, &grid, contraction)?;
    let values = samples
        .into_iter()
        .zip(grid.nodes())
        .map(|((m, ph), x)| {
            let y = contraction * x;
            Complex64::from_polar(amplitude * m, ph + y * y / (4.0 * contraction))
        })
        .collect();
    Ok((RadialField::new(grid, values)?, s / contraction))
}

/// Polar samples of `f` at `factor · r_j` for the nodes `r_j` of `target`.
fn resample(f: &RadialField, target: &RadialGrid, factor: f64) -> Result<Vec<(f64, f64)>> {
    let same_nodes = factor == 1.0 && target == f.grid();
    if same_nodes {
        return Ok(f.values().iter().map(|u| (u.norm(), u.arg())).collect());
    }
    let sampler = FieldResampler::new(f)?;
    Ok(target.nodes().map(|r| sampler.polar(factor * r)).collect())
}

/// Relative residuals of the frame identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityResiduals {
    /// `‖∇v‖₂² = ¼‖(x + 2i(1+t)∇)u‖₂²`.
    pub gradient: f64,
    /// `‖∇u‖₂² = ¼‖(y − 2i(1−s)∇)v‖₂²`.
    pub dual_gradient: f64,
    /// `(β, residual)` for `‖v‖_{β+2}^{β+2} = (1+t)^{Nβ/2}‖u‖_{β+2}^{β+2}`.
    pub lebesgue: Vec<(f64, f64)>,
    /// The `β = 0` case, i.e. mass equality.
    pub mass: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        self.lebesgue
            .iter()
            .map(|&(_, r)| r)
            .chain([self.gradient, self.dual_gradient, self.mass])
            .fold(0.0, f64::max)
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// `¼ ∫ |a·r·f + b·∂_r f|² dx` for real `a` and imaginary coefficient `b`.
fn quarter_vector_norm(f: &RadialField, radial_coef: f64, derivative_coef: Complex64) -> f64 {
    let d = f.radial_derivative();
    let grid = f.grid();
    0.25 * f
        .values()
        .iter()
        .zip(&d)
        .enumerate()
        .map(|(j, (u, du))| {
            let r = grid.node(j);
            (radial_coef * r * u + derivative_coef * du).norm_sqr() * grid.weight(j)
        })
        .sum::<f64>()
}

/// Evaluate the frame identities for `u(t)` and its lens image.
pub fn check_identities(
    u: &RadialField,
    t: f64,
    v_state: &LensState,
    params: &ModelParams,
) -> IdentityResiduals {
    let v = v_state.field();
    let s = v_state.s();
    let n = u.dim() as f64;
    let dilation = 1.0 + t;

    let gradient = relative_gap(
        v.gradient_sq(),
        quarter_vector_norm(u, 1.0, Complex64::new(0.0, 2.0 * dilation)),
    );
    let dual_gradient = relative_gap(
        u.gradient_sq(),
        quarter_vector_norm(v, 1.0, Complex64::new(0.0, -2.0 * (1.0 - s))),
    );
    let mut betas = vec![params.p1];
    if params.has_second_power() {
        betas.push(params.p2);
    }
    let lebesgue = betas
        .into_iter()
        .map(|beta| {
            let lhs = v.power_integral(beta + 2.0);
            let rhs = dilation.powf(0.5 * n * beta) * u.power_integral(beta + 2.0);
            (beta, relative_gap(lhs, rhs))
        })
        .collect();
    IdentityResiduals {
        gradient,
        dual_gradient,
        lebesgue,
        mass: relative_gap(v.mass(), u.mass()),
    }
}

/// Settings for [`extract_scattering_state`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    /// Cayley sub-steps used for `J(-1)`.
    pub substeps: usize,
    /// Largest admissible `ε = 1 - s`.
    pub max_epsilon: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self { substeps: 1000, max_epsilon: 0.1 }
    }
}

/// Distance between consecutive scattering-state candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceEntry {
    /// `ε = 1 - s` of the later candidate.
    pub epsilon: f64,
    pub sigma_diff: f64,
    pub l2_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringReport {
    pub entries: Vec<ConvergenceEntry>,
}

impl ScatteringReport {
    /// Whether the Σ distances shrink strictly from entry to entry.
    pub fn sigma_decreasing(&self) -> bool {
        self.entries.windows(2).all(|w| w[1].sigma_diff < w[0].sigma_diff)
    }
}

/// Candidate `u₊ = e^{i|y|²/4} J(-1) v(s)` for a single lens state.
pub fn scattering_candidate(state: &LensState, substeps: usize) -> Result<RadialField> {
    Ok(free_evolve(state.field(), -1.0, substeps)?.chirp(0.25))
}

/// Scattering-state candidates from lens states at `s_k = 1 - ε_k` with
/// decreasing `ε_k`, and the Σ/L² distances between consecutive ones. The
/// last candidate is returned as `u₊`.
pub fn extract_scattering_state(
    states: &[LensState],
    opts: &ExtractOptions,
) -> Result<(RadialField, ScatteringReport)> {
    if states.len() < 2 {
        return Err(Error::param(format!(
            "scattering extraction needs at least 2 lens states, got {}",
            states.len()
        )));
    }
    for st in states {
        let eps = 1.0 - st.s();
        if eps > opts.max_epsilon * (1.0 + 1e-9) {
            return Err(Error::param(format!(
                "lens state at s = {} is too far from s = 1 (ε = {eps} > {})",
                st.s(),
                opts.max_epsilon
            )));
        }
    }
    if states.windows(2).any(|w| !(w[1].s() > w[0].s())) {
        return Err(Error::Ordering("lens states must approach s = 1 monotonically".into()));
    }
    let candidates = states
        .iter()
        .map(|st| scattering_candidate(st, opts.substeps))
        .collect::<Result<Vec<_>>>()?;
    let entries = candidates
        .windows(2)
        .zip(&states[1..])
        .map(|(pair, st)| {
            let diff = pair[1].sub(&pair[0])?;
            Ok(ConvergenceEntry {
                epsilon: 1.0 - st.s(),
                sigma_diff: diff.norm_sigma(),
                l2_diff: diff.norm_l2(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let u_plus = candidates.into_iter().last().expect("at least two candidates");
    Ok((u_plus, ScatteringReport { entries }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagators::{LensStepper, StepperConfig};
    use rand::{Rng, SeedableRng};

    fn grid(r: f64, m: usize, n: usize) -> Arc<RadialGrid> {
        RadialGrid::new(r, m, n).unwrap().shared()
    }

    fn smooth_random(g: &Arc<RadialGrid>, seed: u64) -> RadialField {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        // complex Gaussian packets with a common envelope keep |u| away from 0
        let amp = Complex64::new(rng.random_range(0.5..1.5), rng.random_range(-0.5..0.5));
        let chirp = rng.random_range(-0.3..0.3);
        let width = rng.random_range(0.8..1.5);
        let wobble = rng.random_range(-0.3..0.3);
        RadialField::from_fn(g.clone(), |r| {
            amp * (1.0 + wobble * (r).sin()) * Complex64::from_polar((-(r / width).powi(2)).exp(), chirp * r * r)
        })
    }

    fn rel_l2(a: &RadialField, b: &RadialField) -> f64 {
        a.sub(b).unwrap().norm_l2() / b.norm_l2()
    }

    #[test]
    fn t_zero_is_the_initial_chirp() {
        let g = grid(10.0, 400, 3);
        let phi = smooth_random(&g, 1);
        let st = to_lens(&phi, 0.0, None).unwrap();
        assert_eq!(st.s(), 0.0);
        let expected = phi.chirp(-0.25);
        for (a, b) in st.field().values().iter().zip(expected.values()) {
            assert!((a - b).norm() < 1e-13 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn modulus_law_holds_at_interpolated_points() {
        let g = grid(20.0, 1000, 3);
        let u = smooth_random(&g, 2);
        let t = 1.0;
        let st = to_lens(&u, t, None).unwrap();
        let sampler = FieldResampler::new(&u).unwrap();
        for (j, v) in st.field().values().iter().enumerate() {
            let y = st.field().grid().node(j);
            let expected = 2f64.powf(1.5) * sampler.polar(2.0 * y).0;
            assert!((v.norm() - expected).abs() <= 1e-14 * expected.max(1e-300));
        }
    }

    #[test]
    fn lebesgue_identity_after_dilation() {
        let g = grid(20.0, 4096, 3);
        let u = smooth_random(&g, 3);
        let st = to_lens(&u, 1.0, None).unwrap();
        let params = ModelParams::new(3, 1.0, 1.0, 2.0, 3.0).unwrap();
        let res = check_identities(&u, 1.0, &st, &params);
        assert!(res.lebesgue[0].1 < 1e-6, "{res:?}");
        assert!(res.mass < 1e-6, "{res:?}");
    }

    #[test]
    fn round_trips() {
        let g = grid(20.0, 4096, 3);
        let u = smooth_random(&g, 4);
        let st = to_lens(&u, 0.0, None).unwrap();
        let (back, t) = from_lens(&st, None).unwrap();
        assert_eq!(t, 0.0);
        assert!(rel_l2(&back, &u) < 1e-12);

        // t = 3, s = 0.75: lens grid of radius R/4, back onto a radius-R grid
        let st = to_lens(&u, 3.0, None).unwrap();
        assert!((st.s() - 0.75).abs() < 1e-15);
        let (back, t) = from_lens(&st, Some(g.clone())).unwrap();
        assert!((t - 3.0).abs() < 1e-12);
        assert!(rel_l2(&back, &u) < 1e-6, "{}", rel_l2(&back, &u));
    }

    #[test]
    fn lens_time_from_physical_time() {
        let g = grid(10.0, 64, 3);
        let u = RadialField::gaussian(g, 1.0, 1.0);
        let st = to_lens(&u, 1.0, None).unwrap();
        assert_eq!(st.s(), 0.5);
    }

    #[test]
    fn coverage_is_enforced() {
        let g = grid(10.0, 64, 3);
        let u = RadialField::gaussian(g, 1.0, 1.0);
        let too_big = grid(6.0, 64, 3);
        assert!(matches!(to_lens(&u, 1.0, Some(too_big)), Err(Error::Domain(_))));
        let st = LensState::new(0.5, u.clone()).unwrap();
        assert!(matches!(from_lens(&st, Some(grid(25.0, 64, 3))), Err(Error::Domain(_))));
    }

    #[test]
    fn identities_at_t_zero_for_a_gaussian() {
        let g = grid(12.0, 8192, 3);
        let u = RadialField::gaussian(g, 1.0, 1.0);
        let st = to_lens(&u, 0.0, None).unwrap();
        let params = ModelParams::new(3, 1.0, 1.0, 1.0, 2.0).unwrap();
        let res = check_identities(&u, 0.0, &st, &params);
        assert!(res.max() < 1e-6, "{res:?}");
    }

    #[test]
    fn identities_of_zero_field_are_zero() {
        let g = grid(10.0, 64, 3);
        let u = RadialField::zeros(g);
        let st = to_lens(&u, 0.5, None).unwrap();
        let params = ModelParams::new(3, 1.0, 1.0, 1.0, 2.0).unwrap();
        let res = check_identities(&u, 0.5, &st, &params);
        assert_eq!(res.max(), 0.0);
    }

    #[test]
    fn identity_residuals_converge_under_refinement() {
        let params = ModelParams::new(3, 1.0, 1.0, 1.0, 2.0).unwrap();
        let residual = |m: usize| {
            let g = grid(12.0, m, 3);
            let u = RadialField::gaussian(g, 1.0, 1.0);
            let st = to_lens(&u, 0.0, None).unwrap();
            check_identities(&u, 0.0, &st, &params).gradient
        };
        let ratio = residual(511) / residual(1023);
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn extraction_needs_two_states() {
        let g = grid(10.0, 64, 3);
        let st = LensState::new(0.95, RadialField::gaussian(g, 1.0, 1.0)).unwrap();
        assert!(matches!(
            extract_scattering_state(&[st], &ExtractOptions::default()),
            Err(Error::Parameter(_))
        ));
    }

    fn lens_states(params: ModelParams, eps: &[f64], g: &Arc<RadialGrid>) -> Vec<LensState> {
        let psi = RadialField::gaussian(g.clone(), 1.0, 1.0).chirp(-0.25);
        let mut stepper = LensStepper::new(params, StepperConfig::with_dt(2e-3)).unwrap();
        let stops: Vec<f64> = eps.iter().map(|e| 1.0 - e).collect();
        let mut out = Vec::new();
        stepper
            .advance(&LensState::new(0.0, psi).unwrap(), *stops.last().unwrap(), &stops, |st| {
                if stops.contains(&st.s()) {
                    out.push(st.clone());
                }
                Ok(())
            })
            .unwrap();
        out
    }

    #[test]
    fn free_flow_candidates_converge_linearly() {
        // with no coupling J(-1)v(1-ε) = J(-ε)v(0), so consecutive
        // candidates differ by O(ε)
        let g = grid(15.0, 1024, 3);
        let params = ModelParams { dim: 3, lambda1: 1e-300, lambda2: 0.0, p1: 1.0, p2: 2.0 };
        let states = lens_states(params, &[0.1, 0.05, 0.025], &g);
        let (u_plus, report) = extract_scattering_state(&states, &ExtractOptions::default()).unwrap();
        assert!(report.sigma_decreasing(), "{report:?}");
        let ratio = report.entries[0].l2_diff / report.entries[1].l2_diff;
        assert!((1.7..2.3).contains(&ratio), "ratio {ratio}");
        let phi = RadialField::gaussian(g.clone(), 1.0, 1.0);
        assert!(u_plus.sub(&phi).unwrap().norm_l2() < 1.5 * report.entries[1].l2_diff);
    }

    #[test]
    fn extraction_is_phase_covariant() {
        let g = grid(15.0, 512, 3);
        let params = ModelParams::single_power(3, 1.0, 2.0).unwrap();
        let states = lens_states(params, &[0.1, 0.05], &g);
        let rot = Complex64::from_polar(1.0, 0.7);
        let rotated: Vec<LensState> = states
            .iter()
            .map(|s| LensState::new(s.s(), s.field().scale(rot)).unwrap())
            .collect();
        let opts = ExtractOptions { substeps: 100, ..Default::default() };
        let (a, _) = extract_scattering_state(&states, &opts).unwrap();
        let (b, _) = extract_scattering_state(&rotated, &opts).unwrap();
        assert!(rel_l2(&b, &a.scale(rot)) < 1e-12);
    }
}
