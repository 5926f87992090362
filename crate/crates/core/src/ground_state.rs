//! Positive radial ground state of `ΔW − (2/N)W + W^{1+4/N} = 0`, the sharp
//! Gagliardo–Nirenberg constant `C_N = (N+2)/(N‖W‖₂^{4/N})` it fixes, and the
//! mass bound built from it.
//!
//! `W(0)` is found by bisection between undershoot (`W'` turns positive
//! while `W > 0`) and overshoot (`W` crosses zero). Each trajectory is
//! integrated by an adaptive Dormand–Prince 5(4) pair that also carries the
//! three radial integrals as quadrature states.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::radial_field::{unit_sphere_area, ModelParams, RadialField, RadialGrid};

/// Default bisection tolerance on `W(0)`.
pub const DEFAULT_TOL: f64 = 1e-12;

const BRACKET: (f64, f64) = (1e-3, 1e3);
/// Splice the analytic tail once `W` has dropped by this factor.
const TAIL_FRACTION: f64 = 1e-8;
/// Beyond this relative gap the bracketing trajectories are no longer
/// trusted.
const RELIABLE_GAP: f64 = 1e-3;
const START_RADIUS: f64 = 1e-3;
const RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct GroundStateResult {
    pub dim: usize,
    /// Profile sampled on the profile grid.
    #[serde(skip)]
    pub profile: RadialField,
    /// Shooting value `W(0)`.
    pub w0: f64,
    /// `‖W‖₂`.
    pub mass: f64,
    /// `‖∇W‖₂²`.
    pub gradient_sq: f64,
    /// `‖W‖_{p+2}^{p+2}`, `p = 4/N`.
    pub potential: f64,
    pub cn: f64,
    /// The two Pohozaev residuals (multiplier `W`, then dilation).
    pub pohozaev: [f64; 2],
    /// Radius where the analytic tail takes over.
    pub splice_radius: f64,
    /// Final width of the bisection bracket on `W(0)`.
    pub bracket_width: f64,
}

/// `C_N` from `‖W‖₂`.
pub fn sharp_constant(dim: usize, mass: f64) -> f64 {
    let n = dim as f64;
    (n + 2.0) / (n * mass.powf(4.0 / n))
}

fn decay_rate(dim: usize) -> f64 {
    (2.0 / dim as f64).sqrt()
}

/// Grid the profile is sampled on when none is given.
pub fn default_profile_grid(dim: usize) -> Result<Arc<RadialGrid>> {
    Ok(RadialGrid::new(25.0 / decay_rate(dim), 4096, dim)?.shared())
}

/// Ground state on the default profile grid, cached per dimension.
pub fn ground_state(dim: usize) -> Result<Arc<GroundStateResult>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GroundStateResult>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().expect("ground-state cache poisoned").get(&dim) {
        return Ok(hit.clone());
    }
    let computed = Arc::new(shoot_ground_state(dim, DEFAULT_TOL)?);
    let mut guard = cache.lock().expect("ground-state cache poisoned");
    Ok(guard.entry(dim).or_insert(computed).clone())
}

pub fn shoot_ground_state(dim: usize, tol: f64) -> Result<GroundStateResult> {
    shoot_ground_state_on(dim, tol, default_profile_grid(dim.max(3))?)
}

pub fn shoot_ground_state_on(
    dim: usize,
    tol: f64,
    grid: Arc<RadialGrid>,
) -> Result<GroundStateResult> {
    if dim < 3 {
        return Err(Error::param(format!("dimension N = {dim} must be at least 3")));
    }
    if !(tol > 0.0 && tol <= 1e-6) {
        return Err(Error::param(format!("tolerance {tol} must lie in (0, 1e-6]")));
    }
    if grid.dim() != dim {
        return Err(Error::Structural("profile grid has a different dimension".into()));
    }
    let ode = Profile::new(dim);

    let (mut lo, mut hi) = BRACKET;
    let mut lo_run = ode.shoot(lo);
    let mut hi_run = ode.shoot(hi);
    if lo_run.outcome != Outcome::Undershoot || hi_run.outcome != Outcome::Overshoot {
        return Err(Error::Solver {
            module: "ground_state",
            message: format!("no shooting bracket in [{lo}, {hi}]"),
        });
    }
    while hi - lo >= tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let run = ode.shoot(mid);
        match run.outcome {
            Outcome::Overshoot => {
                hi = mid;
                hi_run = run;
            }
            Outcome::Undershoot => {
                lo = mid;
                lo_run = run;
            }
        }
    }
    let w0 = 0.5 * (lo + hi);
    let splice = splice_index(&lo_run.samples, &hi_run.samples, w0);
    let samples = &lo_run.samples[..=splice];
    let last = samples[splice];
    let tail = Tail::fit(dim, last.r, last.y[0]);

    let sigma = unit_sphere_area(dim);
    let p = 4.0 / dim as f64;
    let mass_sq = sigma * (last.y[2] + tail.mass_sq());
    let gradient_sq = sigma * (last.y[3] + tail.gradient_sq());
    let potential = sigma * (last.y[4] + tail.power(p + 2.0));
    let mass = mass_sq.sqrt();
    let n = dim as f64;
    let pohozaev = [
        (gradient_sq + (2.0 / n) * mass_sq - potential).abs() / potential,
        (0.5 * (n - 2.0) * gradient_sq + mass_sq - n / (p + 2.0) * potential).abs() / potential,
    ];
    let profile = RadialField::from_real_fn(grid, |r| {
        if r >= last.r {
            tail.eval(r)
        } else {
            hermite_lookup(samples, r)
        }
    });
    Ok(GroundStateResult {
        dim,
        profile,
        w0,
        mass,
        gradient_sq,
        potential,
        cn: sharp_constant(dim, mass),
        pohozaev,
        splice_radius: last.r,
        bracket_width: hi - lo,
    })
}

/// Last sample index usable before splicing: the first drop below
/// `TAIL_FRACTION·w0`, or the last point where the two bracketing
/// trajectories still agree.
fn splice_index(lo: &[Sample], hi: &[Sample], w0: f64) -> usize {
    let hi_end = hi.last().map_or(0.0, |s| s.r);
    let mut last_good = 0;
    for (j, s) in lo.iter().enumerate() {
        if s.y[0] <= 0.0 || s.y[1] > 0.0 || s.r > hi_end {
            break;
        }
        if (hermite_lookup(hi, s.r) - s.y[0]).abs() > RELIABLE_GAP * s.y[0] {
            break;
        }
        last_good = j;
        if s.y[0] < TAIL_FRACTION * w0 {
            break;
        }
    }
    last_good
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Undershoot,
    Overshoot,
}

/// State `[W, W', ∫r^{N−1}W², ∫r^{N−1}W'², ∫r^{N−1}W^{p+2}]` at radius `r`.
#[derive(Debug, Clone, Copy)]
struct Sample {
    r: f64,
    y: [f64; 5],
}

struct Run {
    outcome: Outcome,
    samples: Vec<Sample>,
}

struct Profile {
    dim: usize,
    p: f64,
    r_max: f64,
    h_max: f64,
}

impl Profile {
    fn new(dim: usize) -> Self {
        let kappa = decay_rate(dim);
        Self { dim, p: 4.0 / dim as f64, r_max: 80.0 / kappa, h_max: 0.02 / kappa }
    }

    fn rhs(&self, r: f64, y: &[f64; 5]) -> [f64; 5] {
        let n = self.dim as f64;
        let w = y[0];
        let dw = y[1];
        let wp = w.abs().powf(self.p) * w;
        let rn = r.powi(self.dim as i32 - 1);
        [
            dw,
            -(n - 1.0) / r * dw + (2.0 / n) * w - wp,
            rn * w * w,
            rn * dw * dw,
            rn * (wp * w).abs(),
        ]
    }

    /// Series start `W ≈ w0 + c r²`, `c = w0(2/N − w0^{4/N})/(2N)`.
    fn start(&self, w0: f64) -> Sample {
        let n = self.dim as f64;
        let r = START_RADIUS;
        let c = w0 * (2.0 / n - w0.powf(self.p)) / (2.0 * n);
        let rn = r.powf(n);
        Sample {
            r,
            y: [
                w0 + c * r * r,
                2.0 * c * r,
                w0 * w0 * rn / n,
                4.0 * c * c * rn * r * r / (n + 2.0),
                w0.powf(self.p + 2.0) * rn / n,
            ],
        }
    }

    fn shoot(&self, w0: f64) -> Run {
        let mut cur = self.start(w0);
        let mut samples = vec![cur];
        let mut h: f64 = 1e-3;
        let atol = 1e-16 * w0.max(1.0);
        while cur.r < self.r_max {
            h = h.min(self.h_max).min(self.r_max - cur.r);
            let (next, err) = dopri_step(self, &cur, h, atol);
            if err <= 1.0 {
                cur = next;
                samples.push(cur);
                if cur.y[0] < 0.0 {
                    return Run { outcome: Outcome::Overshoot, samples };
                }
                if cur.y[1] > 0.0 {
                    return Run { outcome: Outcome::Undershoot, samples };
                }
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= factor;
            if h < 1e-14 {
                break;
            }
        }
        // decayed to roundoff without deciding; treat as barely undershooting
        Run { outcome: Outcome::Undershoot, samples }
    }
}

/// One Dormand–Prince 5(4) step, returning the 5th-order state and the
/// scaled error norm of the `W`, `W'` components.
fn dopri_step(ode: &Profile, s: &Sample, h: f64, atol: f64) -> (Sample, f64) {
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] =
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let mut k = [[0.0; 5]; 7];
    for i in 0..7 {
        let mut y = s.y;
        for (j, kj) in k.iter().enumerate().take(i) {
            for (yc, kc) in y.iter_mut().zip(kj) {
                *yc += h * A[i][j] * kc;
            }
        }
        k[i] = ode.rhs(s.r + C[i] * h, &y);
    }
    let mut y5 = s.y;
    let mut err = 0.0f64;
    for c in 0..5 {
        let mut d5 = 0.0;
        let mut d4 = 0.0;
        for i in 0..7 {
            d5 += B5[i] * k[i][c];
            d4 += B4[i] * k[i][c];
        }
        y5[c] += h * d5;
        if c < 2 {
            let scale = atol + RTOL * s.y[c].abs().max(y5[c].abs());
            err = err.max((h * (d5 - d4)).abs() / scale);
        }
    }
    (Sample { r: s.r + h, y: y5 }, err)
}

/// Cubic Hermite interpolation of `W` through the stored `(W, W')` pairs.
fn hermite_lookup(samples: &[Sample], r: f64) -> f64 {
    if r <= samples[0].r {
        // inside the series start region
        let s = samples[0];
        let c = s.y[1] / (2.0 * s.r);
        return s.y[0] + c * (r * r - s.r * s.r);
    }
    let k = samples.partition_point(|s| s.r <= r).clamp(1, samples.len() - 1) - 1;
    let (a, b) = (samples[k], samples[k + 1]);
    let h = b.r - a.r;
    let t = (r - a.r) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * a.y[0]
        + (t3 - 2.0 * t2 + t) * h * a.y[1]
        + (-2.0 * t3 + 3.0 * t2) * b.y[0]
        + (t3 - t2) * h * b.y[1]
}

/// `W(r) ≈ c r^{−(N−1)/2} e^{−κr}` beyond the splice radius.
struct Tail {
    dim: usize,
    start: f64,
    coef: f64,
    kappa: f64,
}

impl Tail {
    fn fit(dim: usize, start: f64, value: f64) -> Self {
        let kappa = decay_rate(dim);
        let half = 0.5 * (dim as f64 - 1.0);
        Self { dim, start, coef: value * start.powf(half) * (kappa * start).exp(), kappa }
    }

    fn eval(&self, r: f64) -> f64 {
        let half = 0.5 * (self.dim as f64 - 1.0);
        self.coef * r.powf(-half) * (-self.kappa * r).exp()
    }

    /// `∫_start^∞ r^{N−1} W² dr`.
    fn mass_sq(&self) -> f64 {
        self.coef * self.coef * (-2.0 * self.kappa * self.start).exp() / (2.0 * self.kappa)
    }

    fn gradient_sq(&self) -> f64 {
        let rate = self.kappa + 0.5 * (self.dim as f64 - 1.0) / self.start;
        rate * rate * self.mass_sq()
    }

    fn power(&self, q: f64) -> f64 {
        let n = self.dim as f64;
        self.start.powf(n - 1.0) * self.eval(self.start).powf(q) / (q * self.kappa)
    }
}

/// `‖f‖_{4/N+2}^{4/N+2} / (‖∇f‖₂² ‖f‖₂^{4/N})`.
pub fn gn_ratio(f: &RadialField) -> Result<f64> {
    let n = f.dim() as f64;
    let mass_sq = f.mass();
    let grad = f.gradient_sq();
    if mass_sq == 0.0 || grad == 0.0 {
        return Err(Error::UndefinedRatio(
            "Gagliardo-Nirenberg ratio of a zero field".into(),
        ));
    }
    Ok(f.power_integral(4.0 / n + 2.0) / (grad * mass_sq.powf(2.0 / n)))
}

/// Upper bound on `‖φ‖₂^{4/N}` in the focusing-second-power regime
/// `λ₁ > 0 > λ₂`, `2/N < p₁ < p₂ < 4/N`.
pub fn threshold_mass_bound(params: &ModelParams, cn: f64) -> Result<f64> {
    let n = params.n();
    let (p1, p2) = (params.p1, params.p2);
    let in_regime = params.lambda1 > 0.0
        && params.lambda2 < 0.0
        && 2.0 / n < p1
        && p1 < p2
        && p2 < 4.0 / n;
    if !in_regime {
        return Err(Error::domain(
            "mass bound only applies for λ₁ > 0 > λ₂ and 2/N < p₁ < p₂ < 4/N",
        ));
    }
    if !(cn > 0.0) {
        return Err(Error::param(format!("sharp constant {cn} must be positive")));
    }
    let gap = p2 - p1;
    let a = 4.0 - n * p1;
    let b = 4.0 - n * p2;
    let prefactor = a / (2.0 * n * gap * cn);
    let second = ((p2 + 2.0) / params.lambda2.abs()).powf(a / (n * gap));
    let first = (params.lambda1 * a * (n * p1 - 2.0) / (2.0 * b * (p1 + 2.0))).powf(b / (n * gap));
    Ok(prefactor * second * first)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};

    #[test]
    fn pohozaev_identities_hold() {
        for dim in [3, 4, 5] {
            let gs = ground_state(dim).unwrap();
            assert!(gs.pohozaev[0] < 1e-6 && gs.pohozaev[1] < 1e-6, "N={dim}: {:?}", gs.pohozaev);
            assert_eq!(gs.cn, sharp_constant(dim, gs.mass));
            assert!((gs.gradient_sq / gs.mass.powi(2) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn bisection_converges() {
        let gs = ground_state(3).unwrap();
        assert!(gs.w0 > 0.5 && gs.w0 < 5.0, "w0 = {}", gs.w0);
        assert!(gs.bracket_width < DEFAULT_TOL);
    }

    #[test]
    fn profile_is_positive_and_decreasing() {
        let gs = ground_state(3).unwrap();
        let w = gs.profile.values();
        assert!(w.iter().all(|v| v.re > 0.0 && v.im == 0.0));
        assert!(w.windows(2).all(|p| p[1].re <= p[0].re));
        assert!((w[0].re - gs.w0).abs() < 1e-3 * gs.w0);
    }

    #[test]
    fn gn_ratio_is_sharp_at_the_ground_state() {
        for dim in [3, 4] {
            let gs = ground_state(dim).unwrap();
            let ratio = gn_ratio(&gs.profile).unwrap();
            assert!((ratio / gs.cn - 1.0).abs() < 1e-3, "N={dim}: {ratio} vs {}", gs.cn);
        }
    }

    fn random_field(grid: &Arc<RadialGrid>, rng: &mut impl Rng) -> RadialField {
        let terms: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.5..3.0), rng.random_range(0.0..3.0)))
            .collect();
        let chirp = rng.random_range(-0.5..0.5);
        RadialField::from_fn(grid.clone(), |r| {
            let amp: f64 = terms
                .iter()
                .map(|&(c, w, shift)| c * (-((r - shift) / w).powi(2)).exp())
                .sum();
            Complex64::from_polar(1.0, chirp * r * r) * amp
        })
    }

    #[test]
    fn gn_inequality_on_random_fields() {
        let gs = ground_state(3).unwrap();
        let grid = RadialGrid::new(20.0, 2048, 3).unwrap().shared();
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let f = random_field(&grid, &mut rng);
            assert!(gn_ratio(&f).unwrap() <= gs.cn * (1.0 + 1e-3));
        }
    }

    #[test]
    fn gn_ratio_is_dilation_invariant() {
        let f = |r: f64| (1.0 + 0.3 * r) * (-r * r / 2.0).exp();
        let wide = RadialGrid::new(20.0, 4096, 3).unwrap().shared();
        let narrow = RadialGrid::new(10.0, 4096, 3).unwrap().shared();
        let a = gn_ratio(&RadialField::from_real_fn(wide.clone(), f)).unwrap();
        // same samples on a grid half as wide
        let b = gn_ratio(&RadialField::from_real_fn(narrow, |r| f(2.0 * r))).unwrap();
        assert!((a / b - 1.0).abs() < 1e-6, "{a} vs {b}");
        // and on a common grid up to discretisation error
        let c = gn_ratio(&RadialField::from_real_fn(wide, |r| f(2.0 * r))).unwrap();
        assert!((a / c - 1.0).abs() < 1e-4, "{a} vs {c}");
    }

    #[test]
    fn gn_ratio_rejects_zero() {
        let grid = RadialGrid::new(10.0, 64, 3).unwrap().shared();
        assert!(matches!(gn_ratio(&RadialField::zeros(grid)), Err(Error::UndefinedRatio(_))));
    }

    #[test]
    fn ground_state_is_a_local_maximum() {
        let gs = ground_state(3).unwrap();
        let base = gn_ratio(&gs.profile).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let bumps: Vec<(f64, f64)> =
                (0..4).map(|_| (rng.random_range(-0.01..0.01), rng.random_range(0.0..6.0))).collect();
            let perturbed = gs.profile.map(|r, w| {
                let d: f64 = bumps.iter().map(|&(c, r0)| c * (-(r - r0) * (r - r0)).exp()).sum();
                w * (1.0 + d)
            });
            assert!(gn_ratio(&perturbed).unwrap() <= base * (1.0 + 1e-4));
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let a = shoot_ground_state(3, 1e-8).unwrap();
        let b = shoot_ground_state(3, 1e-8).unwrap();
        assert_eq!(a.w0, b.w0);
        assert!(matches!(shoot_ground_state(2, 1e-8), Err(Error::Parameter(_))));
        assert!(matches!(shoot_ground_state(3, 1e-3), Err(Error::Parameter(_))));
    }

    #[test]
    fn threshold_bound_arithmetic() {
        let params = ModelParams::new(3, 1.0, -1.0, 0.8, 1.2).unwrap();
        let cn = 0.5;
        let expected = 1.6 / (2.4 * cn) * 3.2f64.powf(4.0 / 3.0) * (0.64f64 / 2.24).powf(1.0 / 3.0);
        let got = threshold_mass_bound(&params, cn).unwrap();
        assert!((got / expected - 1.0).abs() < 1e-14);
    }

    #[test]
    fn threshold_bound_decreases_with_defocusing_strength() {
        let mut prev = f64::INFINITY;
        for l2 in [0.5, 1.0, 2.0, 4.0] {
            let params = ModelParams::new(3, 1.0, -l2, 0.8, 1.2).unwrap();
            let bound = threshold_mass_bound(&params, 0.3).unwrap();
            assert!(bound < prev);
            prev = bound;
        }
    }

    #[test]
    fn threshold_bound_outside_regime() {
        let params = ModelParams::new(3, 1.0, 1.0, 0.8, 1.2).unwrap();
        assert!(matches!(threshold_mass_bound(&params, 0.3), Err(Error::Domain(_))));
    }
}
