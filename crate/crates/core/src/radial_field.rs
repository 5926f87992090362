//! Radial grids, complex radial fields and the norms used throughout the lab.
//!
//! A radially symmetric function on ℝᴺ is stored by its samples `u(r_j)` on
//! the uniform interior nodes `r_j = j·h`, `j = 1..M`, of `[0, R]`. The
//! field is taken to vanish at `r = R`; at the origin the reduced field
//! `w = r^{(N-1)/2} u` vanishes. Integrals over ℝᴺ use
//! `∫ f dx ≈ σ_{N-1} Σ_j f(r_j) r_j^{N-1} h`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// The tuple `(N, λ₁, λ₂, p₁, p₂)` of the combined-power equation
/// `i u_t + Δu = λ₁|u|^{p₁}u + λ₂|u|^{p₂}u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    #[serde(rename = "N")]
    pub dim: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub p1: f64,
    pub p2: f64,
}

impl ModelParams {
    pub fn new(dim: usize, lambda1: f64, lambda2: f64, p1: f64, p2: f64) -> Result<Self> {
        let params = Self { dim, lambda1, lambda2, p1, p2 };
        params.validate()?;
        Ok(params)
    }

    /// Single-power problem `λ|u|^p u`; the second power is switched off.
    pub fn single_power(dim: usize, lambda: f64, p: f64) -> Result<Self> {
        let p2 = if dim > 2 { energy_critical(dim) } else { p + 1.0 };
        Self::new(dim, lambda, 0.0, p, p2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 3 {
            return Err(Error::param(format!("dimension N = {} must be at least 3", self.dim)));
        }
        if !(self.lambda1.is_finite() && self.lambda2.is_finite()) {
            return Err(Error::param("couplings must be finite"));
        }
        if self.lambda1 == 0.0 {
            return Err(Error::param("lambda1 must be nonzero"));
        }
        let crit = energy_critical(self.dim);
        if !(self.p1 > 0.0 && self.p1.is_finite()) {
            return Err(Error::param(format!("p1 = {} must be positive", self.p1)));
        }
        if self.lambda2 == 0.0 {
            if self.p1 > crit {
                return Err(Error::param(format!("p1 = {} exceeds 4/(N-2) = {crit}", self.p1)));
            }
        } else if !(self.p1 < self.p2 && self.p2 <= crit) {
            return Err(Error::param(format!(
                "need 0 < p1 < p2 <= 4/(N-2) = {crit}, got p1 = {}, p2 = {}",
                self.p1, self.p2
            )));
        }
        Ok(())
    }

    /// Whether the second power term is present.
    pub fn has_second_power(&self) -> bool {
        self.lambda2 != 0.0
    }

    pub fn n(&self) -> f64 {
        self.dim as f64
    }

    /// `λ₁|u|^{p₁} + λ₂|u|^{p₂}` evaluated from `|u|²`.
    #[inline]
    pub fn potential_rate(&self, modulus_sq: f64) -> f64 {
        let mut rate = self.lambda1 * pow_from_sq(modulus_sq, self.p1);
        if self.has_second_power() {
            rate += self.lambda2 * pow_from_sq(modulus_sq, self.p2);
        }
        rate
    }
}

/// `4/(N-2)`.
pub fn energy_critical(dim: usize) -> f64 {
    4.0 / (dim as f64 - 2.0)
}

/// `4/N`.
pub fn mass_critical(dim: usize) -> f64 {
    4.0 / dim as f64
}

/// `2/N`, the border below which no scattering state exists.
pub fn scattering_border(dim: usize) -> f64 {
    2.0 / dim as f64
}

/// `|u|^p` given `|u|²`.
#[inline]
pub(crate) fn pow_from_sq(modulus_sq: f64, p: f64) -> f64 {
    if modulus_sq == 0.0 {
        0.0
    } else if p == 2.0 {
        modulus_sq
    } else {
        modulus_sq.powf(0.5 * p)
    }
}

/// Surface area of the unit sphere in ℝᴺ, `2π^{N/2}/Γ(N/2)`.
pub fn unit_sphere_area(dim: usize) -> f64 {
    let half = 0.5 * dim as f64;
    2.0 * PI.powf(half) / gamma(half)
}

/// Uniform radial grid with Dirichlet truncation at `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    radius: f64,
    nodes: usize,
    spacing: f64,
    dim: usize,
    sphere_area: f64,
}

impl RadialGrid {
    pub const MIN_NODES: usize = 16;

    pub fn new(radius: f64, nodes: usize, dim: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param(format!("grid radius R = {radius} must be positive")));
        }
        if nodes < Self::MIN_NODES {
            return Err(Error::param(format!(
                "grid needs at least {} interior nodes, got {nodes}",
                Self::MIN_NODES
            )));
        }
        if dim < 3 {
            return Err(Error::param(format!("dimension N = {dim} must be at least 3")));
        }
        Ok(Self {
            radius,
            nodes,
            spacing: radius / (nodes as f64 + 1.0),
            dim,
            sphere_area: unit_sphere_area(dim),
        })
    }

    /// Grid construction without the minimum node count; only used for
    /// hand-checkable arithmetic on tiny grids.
    pub fn new_unchecked_size(radius: f64, nodes: usize, dim: usize) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::param("grid needs at least one node"));
        }
        let mut grid = Self::new(radius, Self::MIN_NODES, dim)?;
        grid.nodes = nodes;
        grid.spacing = radius / (nodes as f64 + 1.0);
        Ok(grid)
    }

    pub fn shared(self) -> Arc<Self> {
        Arc::new(self)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Number of interior nodes `M`.
    pub fn len(&self) -> usize {
        self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.nodes == 0
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sphere_area(&self) -> f64 {
        self.sphere_area
    }

    /// `r_j` for zero-based index `j` (so `node(0) = h`).
    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        (j as f64 + 1.0) * self.spacing
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nodes).map(move |j| self.node(j))
    }

    /// Quadrature weight `σ_{N-1} r_j^{N-1} h`.
    #[inline]
    pub fn weight(&self, j: usize) -> f64 {
        self.sphere_area * self.node(j).powi(self.dim as i32 - 1) * self.spacing
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.nodes).map(|j| self.weight(j)).collect()
    }

    /// Exponent `(N-1)/2` of the reduced representation.
    pub fn reduction_exponent(&self) -> f64 {
        0.5 * (self.dim as f64 - 1.0)
    }

    /// Centrifugal term `(N-1)(N-3)/(4r²)` of the reduced Laplacian.
    pub fn centrifugal(&self, j: usize) -> f64 {
        let n = self.dim as f64;
        let r = self.node(j);
        (n - 1.0) * (n - 3.0) / (4.0 * r * r)
    }

    /// `∫_{ℝᴺ} f(|x|) dx` by the grid quadrature.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        (0..self.nodes).map(|j| f(self.node(j)) * self.weight(j)).sum()
    }

    /// Same grid with a different radius, keeping `M` and `N`.
    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::new(radius, self.nodes, self.dim)
    }
}

/// Complex samples of a radial function on a [`RadialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<Complex64>,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Structural(format!(
                "field has {} samples but grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Numerical("field contains non-finite samples".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self { grid, values }
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid.nodes().map(f).collect();
        Self { grid, values }
    }

    pub fn from_real_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |r| Complex64::new(f(r), 0.0))
    }

    /// `amplitude · exp(-r²/width²)`.
    pub fn gaussian(grid: Arc<RadialGrid>, amplitude: f64, width: f64) -> Self {
        Self::from_real_fn(grid, |r| amplitude * (-(r * r) / (width * width)).exp())
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn same_grid(&self, other: &RadialField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    fn check_grid(&self, other: &RadialField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::Structural("fields live on different grids".into()))
        }
    }

    pub fn map(&self, f: impl Fn(f64, Complex64) -> Complex64) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(j, &u)| f(self.grid.node(j), u))
            .collect();
        Self { grid: self.grid.clone(), values }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|_, u| c * u)
    }

    pub fn add(&self, other: &RadialField) -> Result<Self> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    pub fn sub(&self, other: &RadialField) -> Result<Self> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    /// Multiply by the quadratic phase `exp(i·coef·r²)`.
    pub fn chirp(&self, coef: f64) -> Self {
        self.map(|r, u| u * Complex64::from_polar(1.0, coef * r * r))
    }

    pub fn max_modulus(&self) -> f64 {
        self.values.iter().map(|u| u.norm()).fold(0.0, f64::max)
    }

    /// Reduced samples `w_j = r_j^{(N-1)/2} u_j`.
    pub fn reduced(&self) -> Vec<Complex64> {
        let k = self.grid.reduction_exponent();
        self.values
            .iter()
            .enumerate()
            .map(|(j, &u)| u * self.grid.node(j).powf(k))
            .collect()
    }

    /// Inverse of [`RadialField::reduced`].
    pub fn from_reduced(grid: Arc<RadialGrid>, reduced: Vec<Complex64>) -> Result<Self> {
        let k = grid.reduction_exponent();
        let values = reduced
            .into_iter()
            .enumerate()
            .map(|(j, w)| w / grid.node(j).powf(k))
            .collect();
        Self::new(grid, values)
    }

    /// `∫|u|^q dx`, i.e. `‖u‖_q^q`.
    pub fn power_integral(&self, q: f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(j, u)| pow_from_sq(u.norm_sqr(), q) * self.grid.weight(j))
            .sum()
    }

    pub fn mass(&self) -> f64 {
        self.power_integral(2.0)
    }

    pub fn norm_l2(&self) -> f64 {
        self.mass().sqrt()
    }

    /// `‖u‖_{L^r}` for `r ≥ 1`.
    pub fn norm_lr(&self, r: f64) -> Result<f64> {
        if !(r >= 1.0) {
            return Err(Error::param(format!("Lebesgue exponent r = {r} must be at least 1")));
        }
        Ok(self.power_integral(r).powf(1.0 / r))
    }

    /// `∂_r u` at the nodes: centered differences inside, second-order
    /// one-sided differences at the first and last node.
    pub fn radial_derivative(&self) -> Vec<Complex64> {
        let u = &self.values;
        let m = u.len();
        let h = self.grid.spacing;
        let mut d = vec![Complex64::new(0.0, 0.0); m];
        if m < 3 {
            return d;
        }
        for j in 1..m - 1 {
            d[j] = (u[j + 1] - u[j - 1]) / (2.0 * h);
        }
        d[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
        d[m - 1] = (3.0 * u[m - 1] - 4.0 * u[m - 2] + u[m - 3]) / (2.0 * h);
        d
    }

    /// `‖∇u‖₂²` from centered differences.
    pub fn gradient_sq(&self) -> f64 {
        self.radial_derivative()
            .iter()
            .enumerate()
            .map(|(j, d)| d.norm_sqr() * self.grid.weight(j))
            .sum()
    }

    /// `‖∇u‖₂²` as the quadratic form of the discrete reduced operator
    /// `-d²/dr² + (N-1)(N-3)/(4r²)` with Dirichlet ends. This is the
    /// kinetic term the Cayley propagator conserves exactly.
    pub fn dirichlet_energy(&self) -> f64 {
        let w = self.reduced();
        let h = self.grid.spacing;
        let zero = Complex64::new(0.0, 0.0);
        let mut sum = 0.0;
        let mut prev = zero;
        for (j, &wj) in w.iter().enumerate() {
            sum += (wj - prev).norm_sqr() / (h * h) + self.grid.centrifugal(j) * wj.norm_sqr();
            prev = wj;
        }
        sum += prev.norm_sqr() / (h * h);
        self.grid.sphere_area * h * sum
    }

    pub fn norm_h1(&self) -> f64 {
        (self.mass() + self.gradient_sq()).sqrt()
    }

    /// `‖ |x| u ‖₂`.
    pub fn norm_weighted(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(j, u)| {
                let r = self.grid.node(j);
                r * r * u.norm_sqr() * self.grid.weight(j)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `‖u‖_Σ = ‖u‖_{H¹} + ‖x u‖₂`.
    pub fn norm_sigma(&self) -> f64 {
        self.norm_h1() + self.norm_weighted()
    }

    /// Complex pairing `∫ f θ̄ dx`.
    pub fn pairing(&self, theta: &RadialField) -> Result<Complex64> {
        self.check_grid(theta)?;
        Ok(self
            .values
            .iter()
            .zip(&theta.values)
            .enumerate()
            .map(|(j, (f, t))| f * t.conj() * self.grid.weight(j))
            .sum())
    }

    /// Real duality pairing `Re ∫ f θ̄ dx`.
    pub fn pairing_real(&self, theta: &RadialField) -> Result<f64> {
        self.pairing(theta).map(|z| z.re)
    }

    /// Write `(r, Re u, Im u)` rows after a header carrying `R`, `M`, `N`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# R={:.17e} M={} N={}",
            self.grid.radius, self.grid.nodes, self.grid.dim
        )?;
        writeln!(out, "r,re,im")?;
        let mut line = String::with_capacity(80);
        for (j, u) in self.values.iter().enumerate() {
            line.clear();
            let _ = write!(line, "{:.17e},{:.17e},{:.17e}", self.grid.node(j), u.re, u.im);
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::param("empty field file"))??;
        let (radius, nodes, dim) = parse_header(&header)?;
        let grid = RadialGrid::new(radius, nodes, dim)?.shared();
        let mut values = Vec::with_capacity(nodes);
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('r') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::param(format!("malformed field row: {line}")));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::param(format!("bad number {s:?}: {e}")))
            };
            values.push(Complex64::new(parse(cols[1])?, parse(cols[2])?));
        }
        Self::new(grid, values)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

fn parse_header(header: &str) -> Result<(f64, usize, usize)> {
    let bad = || Error::param(format!("field file header must carry R, M, N: {header:?}"));
    let body = header.trim().strip_prefix('#').ok_or_else(bad)?;
    let (mut radius, mut nodes, mut dim) = (None, None, None);
    for item in body.split_whitespace() {
        match item.split_once('=') {
            Some(("R", v)) => radius = v.parse::<f64>().ok(),
            Some(("M", v)) => nodes = v.parse::<usize>().ok(),
            Some(("N", v)) => dim = v.parse::<usize>().ok(),
            _ => {}
        }
    }
    Ok((radius.ok_or_else(bad)?, nodes.ok_or_else(bad)?, dim.ok_or_else(bad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn grid(r: f64, m: usize, n: usize) -> Arc<RadialGrid> {
        RadialGrid::new(r, m, n).unwrap().shared()
    }

    fn random_field(g: &Arc<RadialGrid>, rng: &mut impl Rng) -> RadialField {
        let bumps: Vec<(f64, f64, Complex64)> = (0..4)
            .map(|_| {
                (
                    rng.random_range(0.0..3.0),
                    rng.random_range(0.5..1.5),
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                )
            })
            .collect();
        RadialField::from_fn(g.clone(), |r| {
            bumps
                .iter()
                .map(|&(c, w, a)| a * (-((r - c) / w).powi(2)).exp())
                .sum()
        })
    }

    #[test]
    fn grid_spacing_arithmetic() {
        let g = RadialGrid::new_unchecked_size(10.0, 9, 3).unwrap();
        assert_eq!(g.spacing(), 1.0);
        let nodes: Vec<f64> = g.nodes().collect();
        assert_eq!(nodes, (1..=9).map(|j| j as f64).collect::<Vec<_>>());

        let g = RadialGrid::new(20.0, 4095, 3).unwrap();
        assert_eq!(g.spacing(), 20.0 / 4096.0);
        assert!(g.node(4094) < 20.0);
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(matches!(RadialGrid::new_unchecked_size(10.0, 9, 2), Err(Error::Parameter(_))));
        assert!(matches!(RadialGrid::new(0.0, 64, 3), Err(Error::Parameter(_))));
        assert!(matches!(RadialGrid::new(5.0, 15, 3), Err(Error::Parameter(_))));
    }

    #[test]
    fn sphere_area_matches_closed_forms() {
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-12 * 4.0 * PI);
        assert!((unit_sphere_area(4) - 2.0 * PI * PI).abs() < 1e-12 * 2.0 * PI * PI);
        let s5 = 8.0 * PI * PI / 3.0;
        assert!((unit_sphere_area(5) - s5).abs() < 1e-12 * s5);
    }

    #[test]
    fn model_params_invariants() {
        assert!(ModelParams::new(3, 1.0, 1.0, 1.0, 2.0).is_ok());
        assert!(ModelParams::new(3, 0.0, 1.0, 1.0, 2.0).is_err());
        assert!(ModelParams::new(3, 1.0, 1.0, 2.0, 1.0).is_err());
        assert!(ModelParams::new(3, 1.0, 1.0, 1.0, 4.5).is_err());
        assert!(ModelParams::new(2, 1.0, 1.0, 0.5, 1.0).is_err());
        // second exponent ignored without a second coupling
        assert!(ModelParams::new(3, 1.0, 0.0, 2.0, 0.0).is_ok());
    }

    #[test]
    fn zero_field_norms_vanish() {
        let f = RadialField::zeros(grid(10.0, 64, 3));
        for r in [1.0, 2.0, 3.5, 6.0] {
            assert_eq!(f.norm_lr(r).unwrap(), 0.0);
        }
        assert_eq!((f.norm_h1(), f.norm_weighted(), f.norm_sigma()), (0.0, 0.0, 0.0));
        assert!(f.norm_lr(0.5).is_err());
    }

    #[test]
    fn gaussian_l2_and_weighted_norms() {
        let f = RadialField::gaussian(grid(10.0, 4096, 3), 1.0, 1.0);
        let l2 = (PI / 2.0).powf(0.75);
        assert!((f.norm_lr(2.0).unwrap() - l2).abs() < 1e-4);
        let weighted = (0.75 * (PI / 2.0).powf(1.5)).sqrt();
        assert!((f.norm_weighted() - weighted).abs() < 1e-4);
        assert!((weighted - 1.2151).abs() < 1e-4);
    }

    #[test]
    fn homogeneity_and_pairing_identities() {
        let g = grid(8.0, 256, 4);
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let f = random_field(&g, &mut rng);
        let c = Complex64::new(2.0, 1.0);
        let cf = f.scale(c);
        for r in [1.0, 2.0, 4.0] {
            let lhs = cf.norm_lr(r).unwrap();
            let rhs = c.norm() * f.norm_lr(r).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        }
        let re = f.map(|_, u| Complex64::new(u.re, 0.0));
        let pf = re.pairing(&re).unwrap();
        assert!((pf.re - re.mass()).abs() < 1e-12 * re.mass());
        assert_eq!(RadialField::zeros(g.clone()).pairing(&f).unwrap(), Complex64::new(0.0, 0.0));

        let gf = random_field(&g, &mut rng);
        let theta = random_field(&g, &mut rng);
        let a = Complex64::new(3.0, 0.0);
        let lhs = f.scale(a).add(&gf).unwrap().pairing(&theta).unwrap();
        let rhs = a * f.pairing(&theta).unwrap() + gf.pairing(&theta).unwrap();
        assert!((lhs - rhs).norm() < 1e-12 * rhs.norm().max(1.0));
        assert!((f.norm_lr(2.0).unwrap() - f.pairing(&f).unwrap().re.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pairing_rejects_grid_mismatch() {
        let f = RadialField::zeros(grid(8.0, 64, 3));
        let g = RadialField::zeros(grid(9.0, 64, 3));
        assert!(matches!(f.pairing(&g), Err(Error::Structural(_))));
    }

    #[test]
    fn sigma_dominates_h1_for_random_fields() {
        let g = grid(8.0, 200, 3);
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let f = random_field(&g, &mut rng);
            assert!(f.norm_sigma() >= f.norm_h1());
        }
    }

    #[test]
    fn quadrature_is_at_least_second_order() {
        // ∫ e^{-2|x|^2} dx = (π/2)^{N/2}; N = 4 keeps an odd integrand so the
        // error is visible at coarse spacing
        let exact = (PI / 2.0).powi(2);
        let err = |m: usize| {
            let g = RadialGrid::new_unchecked_size(6.0, m, 4).unwrap().shared();
            (RadialField::gaussian(g, 1.0, 1.0).mass() - exact).abs()
        };
        let (coarse, fine) = (err(11), err(23));
        assert!(fine > 0.0 && coarse / fine >= 3.5, "ratio {}", coarse / fine);
    }

    #[test]
    fn reduced_round_trip_is_exact() {
        let g = grid(8.0, 128, 5);
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let f = random_field(&g, &mut rng);
        let back = RadialField::from_reduced(g, f.reduced()).unwrap();
        for (a, b) in f.values().iter().zip(back.values()) {
            assert!((a - b).norm() <= 4.0 * f64::EPSILON * a.norm());
        }
    }

    #[test]
    fn dirichlet_energy_matches_gaussian_gradient() {
        // ∫|∇e^{-r²}|² dx = 4∫ r² e^{-2r²} dx = 3 (π/2)^{3/2}
        let f = RadialField::gaussian(grid(10.0, 4096, 3), 1.0, 1.0);
        let exact = 3.0 * (PI / 2.0).powf(1.5);
        assert!((f.dirichlet_energy() - exact).abs() < 1e-5 * exact);
        assert!((f.gradient_sq() - exact).abs() < 1e-5 * exact);

        let f5 = RadialField::gaussian(grid(10.0, 4096, 5), 1.0, 1.0);
        // N = 5: 4 ∫ r² e^{-2r²} dx = 4 · (5/4)(π/2)^{5/2}
        let exact5 = 5.0 * (PI / 2.0).powf(2.5);
        assert!((f5.dirichlet_energy() - exact5).abs() < 1e-4 * exact5);
    }

    #[test]
    fn csv_round_trip_keeps_full_precision() {
        let g = grid(7.5, 64, 4);
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let f = random_field(&g, &mut rng);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = RadialField::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.grid(), f.grid());
        assert_eq!(back.values(), f.values());
    }
}
