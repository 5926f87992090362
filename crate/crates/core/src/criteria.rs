//! Regime classifier: maps `(N, λ₁, λ₂, p₁, p₂)` and a few statistics of the
//! datum to the predicted long-time behaviour and the result it rests on.
//!
//! Rules are tried in a fixed order and the first match wins. Exponent
//! borders are compared with a relative slack of `1e-12`, so `p₁ = 2/N`
//! typed as a decimal still counts as the border.
//!
//! When `λ₂ = 0` the second power is absent; conditions on `p₂` then only
//! ask that some `p₂ > p₁` satisfying them exists.

use serde::{Deserialize, Serialize};

use crate::diagnostics::physical_energy;
use crate::error::{Error, Result};
use crate::ground_state::threshold_mass_bound;
use crate::radial_field::{ModelParams, RadialField};

const BORDER_SLACK: f64 = 1e-12;

/// Statistics of the initial datum used by data-dependent rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataStats {
    /// `‖φ‖₂`.
    pub mass: f64,
    pub energy: f64,
    pub sigma_norm: f64,
}

impl DataStats {
    pub fn from_field(phi: &RadialField, params: &ModelParams) -> Self {
        Self {
            mass: phi.norm_l2(),
            energy: physical_energy(phi, params),
            sigma_norm: phi.norm_sigma(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictTag {
    #[serde(rename = "NoScattering_L2")]
    NoScatteringL2,
    #[serde(rename = "Scattering_Sigma")]
    ScatteringSigma,
    #[serde(rename = "GWP_ScatteringOpen")]
    GwpScatteringOpen,
    #[serde(rename = "BlowupPossible_ConditionNotEvaluated")]
    BlowupPossibleConditionNotEvaluated,
    OutsideCoveredRegimes,
}

impl VerdictTag {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictTag::NoScatteringL2 => "NoScattering_L2",
            VerdictTag::ScatteringSigma => "Scattering_Sigma",
            VerdictTag::GwpScatteringOpen => "GWP_ScatteringOpen",
            VerdictTag::BlowupPossibleConditionNotEvaluated => {
                "BlowupPossible_ConditionNotEvaluated"
            }
            VerdictTag::OutsideCoveredRegimes => "OutsideCoveredRegimes",
        }
    }
}

impl std::fmt::Display for VerdictTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub tag: VerdictTag,
    pub source: String,
    /// `bound − ‖φ‖₂^{4/N}` whenever the mass-threshold regime was tested.
    pub threshold_margin: Option<f64>,
}

/// `α₀ = (2 − N + √(N² + 12N + 4)) / (2N)`.
pub fn alpha0(dim: usize) -> f64 {
    let n = dim as f64;
    (2.0 - n + (n * n + 12.0 * n + 4.0).sqrt()) / (2.0 * n)
}

fn lt(a: f64, b: f64) -> bool {
    a < b - BORDER_SLACK * b.abs().max(1.0)
}

fn le(a: f64, b: f64) -> bool {
    a <= b + BORDER_SLACK * b.abs().max(1.0)
}

/// Allowed window for `p₂`.
#[derive(Debug, Clone, Copy)]
struct Window {
    lo: f64,
    lo_closed: bool,
    hi: f64,
    hi_closed: bool,
}

impl Window {
    const fn open_closed(lo: f64, hi: f64) -> Self {
        Self { lo, lo_closed: false, hi, hi_closed: true }
    }

    const fn open(lo: f64, hi: f64) -> Self {
        Self { lo, lo_closed: false, hi, hi_closed: false }
    }

    const fn closed(lo: f64, hi: f64) -> Self {
        Self { lo, lo_closed: true, hi, hi_closed: true }
    }

    fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { le(self.lo, x) } else { lt(self.lo, x) };
        let below = if self.hi_closed { le(x, self.hi) } else { lt(x, self.hi) };
        above && below
    }

    /// Some `x > floor` lies in the window.
    fn admits_above(&self, floor: f64) -> bool {
        let start = self.lo.max(floor);
        if lt(start, self.hi) {
            return true;
        }
        // degenerate window {hi}
        le(self.hi, start) && le(start, self.hi) && self.hi_closed && self.lo_closed && lt(floor, self.hi)
    }
}

fn second_power_in(params: &ModelParams, w: Window) -> bool {
    if params.has_second_power() {
        w.contains(params.p2)
    } else {
        w.admits_above(params.p1)
    }
}

struct Borders {
    mass_sub: f64,
    mass_crit: f64,
    energy_crit: f64,
    lower_sigma: f64,
}

impl Borders {
    fn of(dim: usize) -> Self {
        let n = dim as f64;
        Self {
            mass_sub: 2.0 / n,
            mass_crit: 4.0 / n,
            energy_crit: 4.0 / (n - 2.0),
            lower_sigma: 4.0 / (n + 2.0),
        }
    }
}

/// A data-independent rule.
pub(crate) struct Rule {
    pub(crate) tag: VerdictTag,
    pub(crate) source: &'static str,
    pub(crate) matches: fn(&ModelParams) -> bool,
}

fn theorem1_i(p: &ModelParams) -> bool {
    let b = Borders::of(p.dim);
    le(p.p1, b.mass_sub) && second_power_in(p, Window::open(0.0, b.mass_crit))
}

fn theorem1_ii(p: &ModelParams) -> bool {
    let b = Borders::of(p.dim);
    p.dim >= 6
        && p.lambda2 >= 0.0
        && le(p.p1, b.mass_sub)
        && second_power_in(p, Window::closed(b.mass_crit, b.energy_crit))
}

fn theorem2_case3(p: &ModelParams) -> bool {
    let b = Borders::of(p.dim);
    p.lambda1 > 0.0
        && p.lambda2 >= 0.0
        && lt(b.mass_sub, p.p1)
        && second_power_in(p, Window::open_closed(0.0, b.energy_crit))
}

/// Regime of the mass-threshold rule; the threshold itself is data-dependent.
fn theorem2_case4_regime(p: &ModelParams) -> bool {
    let b = Borders::of(p.dim);
    p.lambda1 > 0.0
        && p.lambda2 < 0.0
        && lt(b.mass_sub, p.p1)
        && lt(p.p1, p.p2)
        && lt(p.p2, b.mass_crit)
}

fn theorem2_case1(p: &ModelParams) -> bool {
    let b = Borders::of(p.dim);
    p.lambda1 < 0.0
        && p.lambda2 > 0.0
        && lt(b.lower_sigma, p.p1)
        && lt(p.p1, p.p2)
        && lt(p.p2, b.energy_crit)
}

fn theorem2_case2(p: &ModelParams) -> bool {
    let b = Borders::of(p.dim);
    p.lambda1 < 0.0
        && p.lambda2 < 0.0
        && lt(b.lower_sigma, p.p1)
        && lt(p.p1, p.p2)
        && lt(p.p2, b.mass_crit)
}

fn table_row1(p: &ModelParams) -> bool {
    let b = Borders::of(p.dim);
    p.lambda2 > 0.0 && p.p1 > 0.0 && lt(p.p1, p.p2) && le(p.p2, b.energy_crit)
}

fn table_row6(p: &ModelParams) -> bool {
    let b = Borders::of(p.dim);
    p.lambda2 < 0.0
        && p.lambda1 > 0.0
        && lt(p.p1, p.p2)
        && lt(b.mass_crit, p.p2)
        && le(p.p2, b.energy_crit)
}

fn table_row7(p: &ModelParams) -> bool {
    let b = Borders::of(p.dim);
    p.lambda2 < 0.0
        && p.lambda1 < 0.0
        && lt(b.mass_crit, p.p1)
        && lt(p.p1, p.p2)
        && le(p.p2, b.energy_crit)
}

fn table_row8(p: &ModelParams) -> bool {
    let b = Borders::of(p.dim);
    p.lambda2 < 0.0
        && p.lambda1 < 0.0
        && le(p.p1, b.mass_crit)
        && lt(b.mass_crit, p.p2)
        && le(p.p2, b.energy_crit)
}

pub(crate) const LEADING_RULES: [Rule; 3] = [
    Rule { tag: VerdictTag::NoScatteringL2, source: "Theorem 1(i)", matches: theorem1_i },
    Rule { tag: VerdictTag::NoScatteringL2, source: "Theorem 1(ii)", matches: theorem1_ii },
    Rule { tag: VerdictTag::ScatteringSigma, source: "Theorem 2 case (3)", matches: theorem2_case3 },
];

pub(crate) const TRAILING_RULES: [Rule; 6] = [
    Rule { tag: VerdictTag::ScatteringSigma, source: "Theorem 2 case (1)", matches: theorem2_case1 },
    Rule { tag: VerdictTag::ScatteringSigma, source: "Theorem 2 case (2)", matches: theorem2_case2 },
    Rule { tag: VerdictTag::GwpScatteringOpen, source: "Table 1 row 1", matches: table_row1 },
    Rule {
        tag: VerdictTag::BlowupPossibleConditionNotEvaluated,
        source: "Table 1 row 6",
        matches: table_row6,
    },
    Rule {
        tag: VerdictTag::BlowupPossibleConditionNotEvaluated,
        source: "Table 1 row 7",
        matches: table_row7,
    },
    Rule {
        tag: VerdictTag::BlowupPossibleConditionNotEvaluated,
        source: "Table 1 row 8",
        matches: table_row8,
    },
];

const CASE4_SOURCE: &str = "Theorem 2 case (4)";
const OUTSIDE_SOURCE: &str = "no covered regime";

fn verdict(rule: &Rule, margin: Option<f64>) -> Verdict {
    Verdict { tag: rule.tag, source: rule.source.to_string(), threshold_margin: margin }
}

/// Classify a parameter tuple. `cn` is the sharp Gagliardo–Nirenberg
/// constant; it is only needed in the mass-threshold regime.
pub fn classify(params: &ModelParams, stats: &DataStats, cn: Option<f64>) -> Result<Verdict> {
    params.validate()?;
    if let Some(rule) = LEADING_RULES.iter().find(|r| (r.matches)(params)) {
        return Ok(verdict(rule, None));
    }
    let mut margin = None;
    if theorem2_case4_regime(params) {
        let cn = cn.ok_or_else(|| {
            Error::MissingOracle("sharp constant C_N is required for the mass-threshold rule".into())
        })?;
        let bound = threshold_mass_bound(params, cn)?;
        let m = bound - stats.mass.powf(4.0 / params.n());
        if m > 0.0 {
            return Ok(Verdict {
                tag: VerdictTag::ScatteringSigma,
                source: CASE4_SOURCE.to_string(),
                threshold_margin: Some(m),
            });
        }
        margin = Some(m);
    }
    if let Some(rule) = TRAILING_RULES.iter().find(|r| (r.matches)(params)) {
        return Ok(verdict(rule, margin));
    }
    Ok(Verdict {
        tag: VerdictTag::OutsideCoveredRegimes,
        source: OUTSIDE_SOURCE.to_string(),
        threshold_margin: margin,
    })
}
