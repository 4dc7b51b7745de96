//! Measurements on discrete fields: shell averages, weak-Lebesgue norms and
//! the embedding sandwich, power-law and logarithmic fits, and the interior
//! estimates (gradient ratio, local sup bound, uniformity across boxes).

use serde::{Deserialize, Serialize};

use crate::coeff::PeriodicField;
use crate::error::{Error, Result};
use crate::green::{nested_grids, tensor_magnitudes, GreenSolver};
use crate::mesh::{magnitudes, BoxGrid};
use crate::sparse::CsrMatrix;

/// Minimum node count per shell.
pub const MIN_SHELL_NODES: usize = 8;
/// Minimum number of radii inside a fit window.
pub const MIN_FIT_RADII: usize = 5;
/// Default relative shell half-thickness.
pub const DEFAULT_THICKNESS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    G,
    GradX,
    GradY,
    Mixed,
}

/// Shells `[r(1 - eta), r(1 + eta)]` around `center`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnulusSpec {
    pub center: [f64; 3],
    pub thickness: f64,
    pub radii: Vec<f64>,
}

impl AnnulusSpec {
    pub fn new(center: [f64; 3], thickness: f64, radii: Vec<f64>) -> Result<Self> {
        if !(thickness > 0.0 && thickness < 0.5) {
            return Err(Error::Config(format!("shell thickness must lie in (0, 0.5), got {thickness}")));
        }
        if radii.iter().any(|&r| r <= 0.0) || radii.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("shell radii must be positive and increasing".into()));
        }
        Ok(Self {
            center,
            thickness,
            radii,
        })
    }

    fn shell_counts(&self, grid: &BoxGrid) -> Vec<usize> {
        let mut counts = vec![0; self.radii.len()];
        for node in 0..grid.num_nodes() {
            let s = grid.distance(&grid.coordinate(node), &self.center);
            for (c, &r) in counts.iter_mut().zip(&self.radii) {
                if s >= r * (1.0 - self.thickness) && s <= r * (1.0 + self.thickness) {
                    *c += 1;
                }
            }
        }
        counts
    }
}

/// `n` radii spaced geometrically over `[r_min, r_max]`.
pub fn log_spaced_radii(r_min: f64, r_max: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![r_min];
    }
    let ratio = (r_max / r_min).ln() / (n - 1) as f64;
    (0..n).map(|k| r_min * (ratio * k as f64).exp()).collect()
}

/// `r_min 2^j` for every `j` with `r_min 2^j <= r_max`.
pub fn dyadic_radii(r_min: f64, r_max: f64) -> Vec<f64> {
    std::iter::successors(Some(r_min), |r| Some(2.0 * r))
        .take_while(|&r| r <= r_max * (1.0 + 1e-12))
        .collect()
}

/// Default fit window `[4h, R/4]`, with `R` the distance from `center` to
/// the boundary.
pub fn default_window(grid: &BoxGrid, center: &[f64; 3]) -> (f64, f64) {
    (4.0 * grid.spacing(), grid.clearance(center) / 4.0)
}

fn shell_sums(values: &[f64], grid: &BoxGrid, spec: &AnnulusSpec, map: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    let counts = spec.shell_counts(grid);
    for (&c, &r) in counts.iter().zip(&spec.radii) {
        if c < MIN_SHELL_NODES {
            return Err(Error::SparseShell {
                radius: r,
                count: c,
                min: MIN_SHELL_NODES,
            });
        }
    }
    let mut sums = vec![0.0; spec.radii.len()];
    for (node, &v) in values.iter().enumerate() {
        let s = grid.distance(&grid.coordinate(node), &spec.center);
        for (acc, &r) in sums.iter_mut().zip(&spec.radii) {
            if s >= r * (1.0 - spec.thickness) && s <= r * (1.0 + spec.thickness) {
                *acc += map(v);
            }
        }
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| s / c as f64)
        .collect())
}

/// Mean of `|values|` over each shell.
pub fn annulus_average(values: &[f64], grid: &BoxGrid, spec: &AnnulusSpec) -> Result<Vec<f64>> {
    shell_sums(values, grid, spec, f64::abs)
}

/// Signed mean of `values` over each shell.
pub fn annulus_signed_mean(values: &[f64], grid: &BoxGrid, spec: &AnnulusSpec) -> Result<Vec<f64>> {
    shell_sums(values, grid, spec, |v| v)
}

/// Window for the logarithmic fit of a normalised planar column: the
/// default `[4h, R/4]`, cut at `0.8 r0` when the signed shell mean first
/// changes sign at `r0` inside it. Near `r0` the modulus has a kink that no
/// `a + b |ln r|` law follows.
pub fn log_fit_window(values: &[f64], grid: &BoxGrid, center: &[f64; 3]) -> Result<(f64, f64)> {
    let (lo, hi) = default_window(grid, center);
    if hi <= lo {
        return Ok((lo, hi));
    }
    let radii = log_spaced_radii(lo, hi, 32);
    let spec = AnnulusSpec::new(*center, DEFAULT_THICKNESS, radii.clone())?;
    let means = annulus_signed_mean(values, grid, &spec)?;
    let sign = means[0].signum();
    match radii.iter().zip(&means).find(|(_, m)| m.signum() != sign) {
        Some((&r0, _)) => Ok((lo, (0.8 * r0).max(lo))),
        None => Ok((lo, hi)),
    }
}

/// `sup_t t mu(|f| >= t)^(1/p)` with `mu` the node count times `cell_volume`.
/// The supremum is attained at one of the sorted magnitudes.
pub fn weak_lorentz_norm(values: &[f64], cell_volume: f64, p: f64) -> f64 {
    assert!(p >= 1.0, "weak norm needs p >= 1");
    let mut mags: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    mags.iter()
        .enumerate()
        .map(|(k, &v)| v * ((k + 1) as f64 * cell_volume).powf(1.0 / p))
        .fold(0.0, f64::max)
}

/// Discrete `L^q` norm with uniform cell weights.
pub fn lp_norm(values: &[f64], cell_volume: f64, q: f64) -> f64 {
    (values.iter().map(|v| v.abs().powf(q)).sum::<f64>() * cell_volume).powf(1.0 / q)
}

/// Lower embedding constant obtained by optimising the layer-cake split:
/// `(beta/p)^(1/(p-beta)) mu^(-beta/(p(p-beta)))`.
pub fn corrected_embedding_constant(p: f64, beta: f64, measure: f64) -> f64 {
    (beta / p).powf(1.0 / (p - beta)) * measure.powf(-beta / (p * (p - beta)))
}

/// The constant with the reciprocal first factor, `(p/beta)^(1/(p-beta)) ...`,
/// kept to demonstrate that it is not a valid lower bound.
pub fn inverted_embedding_constant(p: f64, beta: f64, measure: f64) -> f64 {
    (p / beta).powf(1.0 / (p - beta)) * measure.powf(-beta / (p * (p - beta)))
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub p: f64,
    pub beta: f64,
    pub measure: f64,
    pub lower_norm: f64,
    pub weak_norm: f64,
    pub upper_norm: f64,
    pub corrected_constant: f64,
    pub inverted_constant: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub inverted_lower_ok: bool,
}

/// Evaluates `C ||f||_{p-beta} <= ||f||_{p,inf} <= ||f||_p` on the domain
/// made of the given nodes (measure `len * cell_volume`).
pub fn lorentz_sandwich_check(values: &[f64], cell_volume: f64, p: f64, beta: f64) -> Result<SandwichReport> {
    if !(p >= 1.0 && beta > 0.0 && beta <= p - 1.0) {
        return Err(Error::Config(format!(
            "need p >= 1 and 0 < beta <= p - 1, got p = {p}, beta = {beta}"
        )));
    }
    let measure = values.len() as f64 * cell_volume;
    let lower_norm = lp_norm(values, cell_volume, p - beta);
    let weak_norm = weak_lorentz_norm(values, cell_volume, p);
    let upper_norm = lp_norm(values, cell_volume, p);
    let corrected_constant = corrected_embedding_constant(p, beta, measure);
    let inverted_constant = inverted_embedding_constant(p, beta, measure);
    let slack = 1.0 + 1e-12;
    Ok(SandwichReport {
        p,
        beta,
        measure,
        lower_norm,
        weak_norm,
        upper_norm,
        corrected_constant,
        inverted_constant,
        lower_ok: corrected_constant * lower_norm <= weak_norm * slack,
        upper_ok: weak_norm <= upper_norm * slack,
        inverted_lower_ok: inverted_constant * lower_norm <= weak_norm * slack,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub quantity: Quantity,
    pub radii: Vec<f64>,
    pub annulus_stats: Vec<f64>,
    pub fitted_exponent: f64,
    pub fitted_constant: f64,
    pub fit_window: (f64, f64),
    pub rms_log_residual: f64,
}

fn within(window: (f64, f64), r: f64) -> bool {
    r >= window.0 * (1.0 - 1e-12) && r <= window.1 * (1.0 + 1e-12)
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, rms residual)`.
fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (intercept, slope, rms)
}

fn select_window(radii: &[f64], stats: &[f64], window: (f64, f64)) -> Result<(Vec<f64>, Vec<f64>)> {
    let (r, f): (Vec<f64>, Vec<f64>) = radii
        .iter()
        .zip(stats)
        .filter(|(&r, _)| within(window, r))
        .map(|(&r, &f)| (r, f))
        .unzip();
    if r.len() < MIN_FIT_RADII {
        return Err(Error::WindowTooSmall {
            r_min: window.0,
            r_max: window.1,
            count: r.len(),
            min: MIN_FIT_RADII,
        });
    }
    Ok((r, f))
}

/// Least squares of `ln f` against `ln r` over the window.
pub fn fit_power_decay(
    quantity: Quantity,
    radii: &[f64],
    stats: &[f64],
    window: (f64, f64),
) -> Result<DecayReport> {
    let (r, f) = select_window(radii, stats, window)?;
    if let Some((&radius, &value)) = r.iter().zip(&f).find(|(_, &v)| v <= 0.0) {
        return Err(Error::NonPositive { radius, value });
    }
    let lx: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = f.iter().map(|v| v.ln()).collect();
    let (intercept, slope, rms) = least_squares(&lx, &ly);
    Ok(DecayReport {
        quantity,
        radii: r,
        annulus_stats: f,
        fitted_exponent: slope,
        fitted_constant: intercept.exp(),
        fit_window: window,
        rms_log_residual: rms,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LogGrowthFit {
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    pub mean_value: f64,
}

/// Least squares of `f` against `1 + |ln r|` over the window.
pub fn fit_log_growth(radii: &[f64], stats: &[f64], window: (f64, f64)) -> Result<LogGrowthFit> {
    let (r, f) = select_window(radii, stats, window)?;
    if let Some((&radius, &value)) = r.iter().zip(&f).find(|(_, &v)| v <= 0.0) {
        return Err(Error::NonPositive { radius, value });
    }
    let x: Vec<f64> = r.iter().map(|v| 1.0 + v.ln().abs()).collect();
    let (intercept, slope, rms) = least_squares(&x, &f);
    Ok(LogGrowthFit {
        slope,
        intercept,
        rms_residual: rms,
        mean_value: f.iter().sum::<f64>() / f.len() as f64,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioSample {
    pub x: [f64; 3],
    pub r: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioReport {
    pub samples: Vec<RatioSample>,
    /// Maximum ratio over the test points, per radius.
    pub max_by_radius: Vec<(f64, f64)>,
    pub max_ratio: f64,
    pub variation: f64,
    pub passed: bool,
}

/// `r sup_{B_{r/2}(x)} |grad G| / sup_{B_r(x)} |G|` at each node `x` and
/// radius `r`, the interior gradient bound measured on a discrete column.
pub fn lipschitz_ratio_check(
    values: &[f64],
    grid: &BoxGrid,
    source: &[f64; 3],
    x_list: &[usize],
    radii: &[f64],
) -> Result<RatioReport> {
    let h = grid.spacing();
    let grad = magnitudes(&crate::mesh::gradient_field(values, grid));
    let mut samples = Vec::new();
    let mut max_by_radius = Vec::new();
    for &r in radii {
        if r < 8.0 * h * (1.0 - 1e-12) {
            return Err(Error::Geometry(format!("ball radius {r} below 8h")));
        }
        let mut best: f64 = 0.0;
        for &x in x_list {
            let xc = grid.coordinate(x);
            if grid.distance(&xc, source) <= r {
                return Err(Error::Geometry(format!(
                    "ball of radius {r} around node {x} reaches the source"
                )));
            }
            if grid.clearance(&xc) < r {
                return Err(Error::Geometry(format!(
                    "ball of radius {r} around node {x} leaves the domain"
                )));
            }
            let (mut sup_g, mut sup_grad): (f64, f64) = (0.0, 0.0);
            for node in 0..grid.num_nodes() {
                let s = grid.distance(&grid.coordinate(node), &xc);
                if s <= r {
                    sup_g = sup_g.max(values[node].abs());
                    if s <= 0.5 * r {
                        sup_grad = sup_grad.max(grad[node]);
                    }
                }
            }
            let ratio = r * sup_grad / sup_g;
            best = best.max(ratio);
            samples.push(RatioSample { x: xc, r, ratio });
        }
        max_by_radius.push((r, best));
    }
    let hi = max_by_radius.iter().map(|p| p.1).fold(0.0, f64::max);
    let lo = max_by_radius.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(RatioReport {
        samples,
        max_by_radius,
        max_ratio: hi,
        variation: hi / lo,
        passed: hi.is_finite() && hi / lo < 4.0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalSupSample {
    pub radius: f64,
    pub sup: f64,
    pub l2: f64,
    /// `sup / (R^(-d/2) ||v||_{L^2})` over the annulus `B_2R \ B_R`.
    pub constant: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalSupReport {
    pub samples: Vec<LocalSupSample>,
    pub harmonic_residual: f64,
    pub variation: f64,
    pub passed: bool,
}

/// Relative residual of `K v = 0` above which `local_sup_check` refuses a field.
pub const HARMONIC_TOL: f64 = 1e-8;

/// Local sup-versus-`L^2` bound on annuli `B_2R(y) \ B_R(y)` for a field that
/// is discretely harmonic on `B_4R \ B_{R/2}`. The constant uses the scaling
/// `R^(-d/2)`, which is `1/R` in two dimensions.
pub fn local_sup_check(
    values: &[f64],
    system: &CsrMatrix,
    grid: &BoxGrid,
    y: &[f64; 3],
    radii: &[f64],
) -> Result<LocalSupReport> {
    if system.n_rows() != grid.num_interior() {
        return Err(Error::LengthMismatch {
            expected: grid.num_interior(),
            got: system.n_rows(),
        });
    }
    let d = grid.dim() as i32;
    let interior: Vec<f64> = (0..grid.num_interior())
        .map(|dof| values[grid.node_of_dof(dof)])
        .collect();
    let kv = system.matvec(&interior)?;
    let row_scale = (0..system.n_rows())
        .map(|r| system.row(r).1.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let v_scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut residual: f64 = 0.0;
    let mut samples = Vec::new();
    for &r in radii {
        if grid.clearance(y) < 2.0 * r {
            return Err(Error::Geometry(format!("annulus of radius {r} leaves the domain")));
        }
        for (dof, &res) in kv.iter().enumerate() {
            let s = grid.distance(&grid.coordinate(grid.node_of_dof(dof)), y);
            if s > 0.5 * r && s < 4.0 * r {
                residual = residual.max(res.abs() / (row_scale * v_scale));
            }
        }
        let (mut sup, mut l2): (f64, f64) = (0.0, 0.0);
        for (node, &v) in values.iter().enumerate() {
            let s = grid.distance(&grid.coordinate(node), y);
            if s >= r && s <= 2.0 * r {
                sup = sup.max(v.abs());
                l2 += v * v;
            }
        }
        let l2 = (l2 * grid.cell_volume()).sqrt();
        samples.push(LocalSupSample {
            radius: r,
            sup,
            l2,
            constant: sup / (r.powf(-0.5 * d as f64) * l2),
        });
    }
    if residual > HARMONIC_TOL {
        return Err(Error::NotHarmonic {
            residual,
            tolerance: HARMONIC_TOL,
        });
    }
    let hi = samples.iter().map(|s| s.constant).fold(0.0, f64::max);
    let lo = samples.iter().map(|s| s.constant).fold(f64::INFINITY, f64::min);
    Ok(LocalSupReport {
        samples,
        harmonic_residual: residual,
        variation: hi / lo,
        passed: hi.is_finite() && hi / lo < 4.0,
    })
}

/// Measurements on one box for one source.
#[derive(Debug, Clone, Serialize)]
pub struct BoxMeasurement {
    pub half_width: f64,
    pub source: [f64; 3],
    /// Fitted constant of `|G|` (power law for `d >= 3`) or the slope of
    /// the logarithmic growth (`d = 2`). The fitted constants are absent when
    /// the window `[4h, R/4]` spans less than one octave.
    pub g_constant: Option<f64>,
    pub grad_constant: Option<f64>,
    pub mixed_constant: Option<f64>,
    /// `||grad_x G_R(., y)||_{L^{d/(d-1), inf}}` over the whole box.
    pub weak_grad_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UniformReport {
    pub measurements: Vec<BoxMeasurement>,
    /// `max / min - 1` of each quantity across all boxes and sources.
    pub spread_g: f64,
    pub spread_grad: f64,
    pub spread_mixed: f64,
    pub spread_weak: f64,
    /// Largest spread of any quantity across `R` with the source held fixed.
    pub spread_over_radii: f64,
    pub passed: bool,
}

/// Maximum tolerated relative spread in `uniform_bound_check`.
pub const UNIFORM_SPREAD: f64 = 0.25;

fn spread(v: impl Iterator<Item = Option<f64>> + Clone) -> f64 {
    let hi = v.clone().flatten().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.flatten().fold(f64::INFINITY, f64::min);
    if hi < lo {
        0.0
    } else {
        hi / lo - 1.0
    }
}

/// Fitted constant of a power law with the exponent pinned to `exponent`:
/// the geometric mean of `f(r) r^(-exponent)` over the radii.
pub fn pinned_constant(radii: &[f64], stats: &[f64], exponent: f64) -> f64 {
    let n = radii.len() as f64;
    (radii
        .iter()
        .zip(stats)
        .map(|(r, f)| f.ln() - exponent * r.ln())
        .sum::<f64>()
        / n)
        .exp()
}

/// Radii used for the fits on the window.
pub const FIT_RADII: usize = 8;

/// Measures decay constants and the weak gradient norm on boxes
/// `y + [-R, R]^d` for every `R` and source `y`, with a common spacing `h`.
pub fn uniform_bound_check(
    field: &PeriodicField,
    sources: &[[f64; 3]],
    radii: &[f64],
    h: f64,
) -> Result<UniformReport> {
    let d = field.dim;
    let mut measurements = Vec::new();
    for y in sources {
        let grids = nested_grids(d, *y, radii, h)?;
        for grid in &grids {
            measurements.push(measure_box(field, grid)?);
        }
    }
    let spread_g = spread(measurements.iter().map(|m| m.g_constant));
    let spread_grad = spread(measurements.iter().map(|m| m.grad_constant));
    let spread_mixed = spread(measurements.iter().map(|m| m.mixed_constant));
    let spread_weak = spread(measurements.iter().map(|m| Some(m.weak_grad_norm)));
    let passed = [spread_g, spread_grad, spread_mixed, spread_weak]
        .iter()
        .all(|&s| s < UNIFORM_SPREAD);
    let spread_over_radii = measurements
        .chunks(radii.len())
        .flat_map(|box_set| {
            [
                spread(box_set.iter().map(|m| m.g_constant)),
                spread(box_set.iter().map(|m| m.grad_constant)),
                spread(box_set.iter().map(|m| m.mixed_constant)),
                spread(box_set.iter().map(|m| Some(m.weak_grad_norm))),
            ]
        })
        .fold(0.0, f64::max);
    Ok(UniformReport {
        measurements,
        spread_g,
        spread_grad,
        spread_mixed,
        spread_weak,
        spread_over_radii,
        passed,
    })
}

fn measure_box(field: &PeriodicField, grid: &BoxGrid) -> Result<BoxMeasurement> {
    let d = grid.dim();
    let solver = GreenSolver::new(field, grid)?;
    let y = grid.center_node();
    let yc = grid.coordinate(y);
    let col = solver.column(y)?;
    let grad = magnitudes(&col.gradient());
    let p = d as f64 / (d as f64 - 1.0);
    let weak_grad_norm = weak_lorentz_norm(&grad, grid.cell_volume(), p);
    let mut m = BoxMeasurement {
        half_width: grid.half_width(0),
        source: yc,
        g_constant: None,
        grad_constant: None,
        mixed_constant: None,
        weak_grad_norm,
    };
    let window = default_window(grid, &yc);
    if window.1 < 2.0 * window.0 {
        return Ok(m);
    }
    let radii = log_spaced_radii(window.0, window.1, FIT_RADII);
    let spec = AnnulusSpec::new(yc, DEFAULT_THICKNESS, radii.clone())?;

    let g_stats = annulus_average(&col.values, grid, &spec)?;
    m.g_constant = Some(if d == 2 {
        fit_log_growth(&radii, &g_stats, window)?.slope
    } else {
        pinned_constant(&radii, &g_stats, 2.0 - d as f64)
    });
    let grad_stats = annulus_average(&grad, grid, &spec)?;
    m.grad_constant = Some(pinned_constant(&radii, &grad_stats, 1.0 - d as f64));
    let mixed = tensor_magnitudes(&solver.mixed_derivative(y)?);
    let mixed_stats = annulus_average(&mixed, grid, &spec)?;
    m.mixed_constant = Some(pinned_constant(&radii, &mixed_stats, -(d as f64)));
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_grid;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn radial(grid: &BoxGrid, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..grid.num_nodes())
            .map(|i| f(grid.distance(&grid.coordinate(i), &[0.0; 3])))
            .collect()
    }

    #[test]
    fn annulus_of_constant() {
        let g = build_grid(2, 1.0, 33).unwrap();
        let spec = AnnulusSpec::new([0.0; 3], 0.1, vec![0.3, 0.5]).unwrap();
        let f = annulus_average(&vec![-2.5; g.num_nodes()], &g, &spec).unwrap();
        assert_eq!(f, vec![2.5, 2.5]);
    }

    #[test]
    fn annulus_of_log_and_inverse_distance() {
        let g = build_grid(2, 2.0, 129).unwrap();
        let vals = radial(&g, |r| -(r.ln()) / (2.0 * PI));
        let radii = vec![0.2, 0.35, 1.5];
        let spec = AnnulusSpec::new([0.0; 3], 0.1, radii.clone()).unwrap();
        let f = annulus_average(&vals, &g, &spec).unwrap();
        for (fr, r) in f.iter().zip(&radii) {
            let exact = r.ln().abs() / (2.0 * PI);
            assert!((fr - exact).abs() <= 0.03 * exact, "{fr} vs {exact}");
        }

        let g3 = build_grid(3, 1.0, 41).unwrap();
        let vals = radial(&g3, |r| 1.0 / r);
        let radii = vec![0.3, 0.5, 0.7];
        let spec = AnnulusSpec::new([0.0; 3], 0.1, radii.clone()).unwrap();
        let f = annulus_average(&vals, &g3, &spec).unwrap();
        for (fr, r) in f.iter().zip(&radii) {
            assert!((fr * r - 1.0).abs() <= 0.03);
        }
    }

    #[test]
    fn sparse_shell_rejected() {
        let g = build_grid(2, 1.0, 9).unwrap();
        let spec = AnnulusSpec::new([0.0; 3], 0.05, vec![0.01]).unwrap();
        assert!(matches!(
            annulus_average(&vec![1.0; g.num_nodes()], &g, &spec),
            Err(Error::SparseShell { .. })
        ));
        assert!(AnnulusSpec::new([0.0; 3], 0.6, vec![1.0]).is_err());
    }

    #[test]
    fn weak_norm_examples() {
        assert_abs_diff_eq!(weak_lorentz_norm(&[3.0; 4], 0.25, 2.0), 3.0, epsilon = 1e-15);
        let single = [0.0, 0.0, -5.0, 0.0];
        assert_abs_diff_eq!(weak_lorentz_norm(&single, 0.01, 3.0), 5.0 * 0.01f64.powf(1.0 / 3.0), epsilon = 1e-14);
    }

    #[test]
    fn sandwich_for_unit_constant() {
        let r = lorentz_sandwich_check(&[1.0; 100], 0.01, 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(r.lower_norm, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.weak_norm, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.upper_norm, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.corrected_constant, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.inverted_constant, 2.0, epsilon = 1e-15);
        assert!(r.lower_ok && r.upper_ok);
        assert!(!r.inverted_lower_ok);
    }

    #[test]
    fn sandwich_parameter_range() {
        assert!(lorentz_sandwich_check(&[1.0], 1.0, 2.0, 1.0).is_ok());
        assert!(lorentz_sandwich_check(&[1.0], 1.0, 2.0, 1.5).is_err());
        assert!(lorentz_sandwich_check(&[1.0], 1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn power_fit_recovers_exact_law() {
        let radii = log_spaced_radii(0.1, 2.0, 9);
        let stats: Vec<f64> = radii.iter().map(|r| 0.3 / r).collect();
        let rep = fit_power_decay(Quantity::G, &radii, &stats, (0.1, 2.0)).unwrap();
        assert!((rep.fitted_exponent + 1.0).abs() < 1e-12);
        assert!((rep.fitted_constant - 0.3).abs() < 1e-12);
        assert!(rep.rms_log_residual < 1e-12);
    }

    #[test]
    fn power_fit_errors() {
        let radii = log_spaced_radii(0.1, 2.0, 9);
        let mut stats: Vec<f64> = radii.iter().map(|r| 1.0 / r).collect();
        assert!(matches!(
            fit_power_decay(Quantity::G, &radii, &stats, (0.1, 0.2)),
            Err(Error::WindowTooSmall { .. })
        ));
        stats[3] = 0.0;
        assert!(matches!(
            fit_power_decay(Quantity::G, &radii, &stats, (0.1, 2.0)),
            Err(Error::NonPositive { .. })
        ));
    }

    #[test]
    fn log_fit_recovers_slope() {
        let radii = log_spaced_radii(0.05, 20.0, 11);
        let stats: Vec<f64> = radii.iter().map(|r| 1.0 + r.ln().abs()).collect();
        let fit = fit_log_growth(&radii, &stats, (0.05, 20.0)).unwrap();
        assert_abs_diff_eq!(fit.slope, 1.0, epsilon = 1e-12);
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn dyadic_and_log_radii() {
        assert_eq!(dyadic_radii(0.25, 2.0), vec![0.25, 0.5, 1.0, 2.0]);
        let r = log_spaced_radii(1.0, 8.0, 4);
        assert_abs_diff_eq!(r[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[3], 8.0, epsilon = 1e-12);
    }

    #[test]
    fn lipschitz_ratio_is_scale_invariant() {
        let g = build_grid(2, 2.0, 65).unwrap();
        let vals = radial(&g, |r| -(r.max(1e-3)).ln());
        let x = g.node_at(&[1.0, 0.0]).unwrap();
        let a = lipschitz_ratio_check(&vals, &g, &[0.0; 3], &[x], &[0.5]).unwrap();
        let scaled: Vec<f64> = vals.iter().map(|v| 10.0 * v).collect();
        let b = lipschitz_ratio_check(&scaled, &g, &[0.0; 3], &[x], &[0.5]).unwrap();
        assert_abs_diff_eq!(a.max_ratio, b.max_ratio, epsilon = 1e-12 * a.max_ratio);
        assert!(lipschitz_ratio_check(&vals, &g, &[0.0; 3], &[x], &[1.2]).is_err());
        assert!(lipschitz_ratio_check(&vals, &g, &[0.0; 3], &[x], &[0.1]).is_err());
    }

    #[test]
    fn local_sup_of_constant_and_non_harmonic_fields() {
        let g = build_grid(2, 2.0, 33).unwrap();
        let f = PeriodicField::identity(2).unwrap();
        let k = crate::mesh::assemble(&f, &g).unwrap();
        // A constant is discretely harmonic away from the boundary rows.
        let c = vec![1.5; g.num_nodes()];
        let rep = local_sup_check(&c, &k, &g, &[0.0; 3], &[0.25]).unwrap();
        let s = &rep.samples[0];
        assert_abs_diff_eq!(s.sup, 1.5);
        assert!(s.constant.is_finite() && s.constant > 0.0);

        let bumpy: Vec<f64> = (0..g.num_nodes()).map(|i| (i % 7) as f64).collect();
        assert!(matches!(
            local_sup_check(&bumpy, &k, &g, &[0.0; 3], &[0.25]),
            Err(Error::NotHarmonic { .. })
        ));
    }

    #[test]
    fn pinned_constant_of_exact_law() {
        let radii = [0.5f64, 1.0, 2.0];
        let stats: Vec<f64> = radii.iter().map(|r| 3.0 * r.powi(-2)).collect();
        assert_abs_diff_eq!(pinned_constant(&radii, &stats, -2.0), 3.0, epsilon = 1e-12);
    }
}
