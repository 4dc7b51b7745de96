//! Dimension lifting for planar problems: the operator
//! `-div_x(A grad_x) - d^2/dt^2` on a slab over a 2D box, and the integral
//! of its Green function over `t in [-kappa, kappa]`, which recovers the
//! planar Green function as `kappa` grows.

use serde::Serialize;

use crate::analysis::{fit_power_decay, log_spaced_radii, AnnulusSpec, Quantity, DEFAULT_THICKNESS};
use crate::coeff::{Mat3, PeriodicField};
use crate::error::{Error, Result};
use crate::green::green_column;
use crate::mesh::{assemble_with, gradient_field, load_delta, magnitudes, BoxGrid};
use crate::sparse::{solve, CsrMatrix, SolverOptions};

/// A 2D base box extruded over `t in [-kappa_max, kappa_max]` with the base
/// spacing. Layer `k` sits at `t = (k - m/2) h`, so `t = 0` is a layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlabGrid {
    base: BoxGrid,
    kappa_max: f64,
    volume: BoxGrid,
}

impl SlabGrid {
    pub fn new(base: &BoxGrid, kappa_max: f64) -> Result<Self> {
        if base.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: base.dim(),
            });
        }
        let h = base.spacing();
        let half = (kappa_max / h).round();
        if half < 2.0 || (half * h - kappa_max).abs() > 1e-9 * h {
            return Err(Error::Config(format!(
                "kappa_max = {kappa_max} must be a multiple of the spacing {h} and at least 2h"
            )));
        }
        let layers = 2 * half as usize + 1;
        let c = base.center();
        let volume = BoxGrid::with_counts(&[base.count(0), base.count(1), layers], h, [c[0], c[1], 0.0])?;
        Ok(Self {
            base: base.clone(),
            kappa_max,
            volume,
        })
    }

    pub fn base(&self) -> &BoxGrid {
        &self.base
    }

    /// The slab as a 3D grid with `t` as the last axis.
    pub fn volume(&self) -> &BoxGrid {
        &self.volume
    }

    pub fn kappa_max(&self) -> f64 {
        self.kappa_max
    }

    pub fn layers(&self) -> usize {
        self.volume.count(2)
    }

    pub fn layer_t(&self, k: usize) -> f64 {
        (k as f64 - (self.layers() / 2) as f64) * self.volume.spacing()
    }

    /// Slab node above base node `i` on layer `k`.
    pub fn node(&self, i: usize, k: usize) -> usize {
        let m = self.base.multi_index(i);
        self.volume.node_index(&[m[0], m[1], k])
    }
}

fn lifted_coefficient(a: Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][j];
        }
    }
    out[2][2] = 1.0;
    out
}

/// Q1 stiffness of `diag(A(x), 1)` on the slab, Dirichlet on every face.
pub fn assemble_lifted(field: &PeriodicField, slab: &SlabGrid) -> Result<CsrMatrix> {
    if field.dim != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: field.dim,
        });
    }
    Ok(assemble_with(slab.volume(), field.is_symmetric(), |x| {
        lifted_coefficient(field.evaluate(&x[..2]))
    }))
}

/// Lifted Green column with the source at `(y, 0)`, on every slab node.
pub fn lifted_column(field: &PeriodicField, slab: &SlabGrid, y: usize) -> Result<Vec<f64>> {
    let k = assemble_lifted(field, slab)?;
    let source = slab.node(y, slab.layers() / 2);
    let rhs = load_delta(slab.volume(), source)?;
    let sol = solve(&k, &rhs, &SolverOptions::default())?;
    Ok(slab.volume().extend_by_zero(&sol.x))
}

/// Trapezoid rule over the layers with `|t| <= kappa` of a lifted column.
pub fn integrate_layers(slab: &SlabGrid, lifted: &[f64], kappa: f64) -> Result<Vec<f64>> {
    let h = slab.volume().spacing();
    let half = (kappa / h).round();
    if kappa > slab.kappa_max() * (1.0 + 1e-12) || half < 1.0 || (half * h - kappa).abs() > 1e-9 * h {
        return Err(Error::Config(format!(
            "kappa = {kappa} must be a positive multiple of {h} not exceeding {}",
            slab.kappa_max()
        )));
    }
    let mid = slab.layers() / 2;
    let half = half as usize;
    let base = slab.base();
    let mut out = vec![0.0; base.num_nodes()];
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for k in (mid - half)..=(mid + half) {
            let w = if k == mid - half || k == mid + half { 0.5 * h } else { h };
            s += w * lifted[slab.node(i, k)];
        }
        *o = s;
    }
    Ok(out)
}

/// `G_kappa(., y) = int_{-kappa}^{kappa} G~(., t; y, 0) dt` on the base grid.
pub fn kappa_integral(field: &PeriodicField, slab: &SlabGrid, y: usize, kappa: f64) -> Result<Vec<f64>> {
    if kappa > slab.kappa_max() * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "kappa = {kappa} exceeds the slab half-height {}",
            slab.kappa_max()
        )));
    }
    let lifted = lifted_column(field, slab, y)?;
    integrate_layers(slab, &lifted, kappa)
}

/// `int_{-kappa}^{kappa} dt / (r^2 + t^2) = 2 arctan(kappa / r) / r`.
pub fn arctan_kernel(r: f64, kappa: f64) -> f64 {
    2.0 * (kappa / r).atan() / r
}

#[derive(Debug, Clone, Serialize)]
pub struct LiftReport {
    pub kappa: f64,
    pub window: (f64, f64),
    /// Max over window nodes of `|grad G_kappa - grad G_2D| / |grad G_2D|`.
    pub max_relative_discrepancy: f64,
    pub mean_relative_discrepancy: f64,
    pub fitted_exponent: f64,
    pub fitted_constant: f64,
    /// Fitted constant of `|grad G_kappa|` at `kappa / 2`.
    pub half_kappa_constant: f64,
    pub integrand_nonnegative: bool,
    pub kappa_monotone: bool,
}

/// Compares `grad_x G_kappa` with the gradient of the planar Green column on
/// the annular window around `y`.
pub fn compare_lift(
    field: &PeriodicField,
    base: &BoxGrid,
    y: usize,
    kappa: f64,
    window: (f64, f64),
) -> Result<LiftReport> {
    let slab = SlabGrid::new(base, kappa)?;
    let lifted = lifted_column(field, &slab, y)?;
    let full = integrate_layers(&slab, &lifted, kappa)?;
    let h = base.spacing();
    let half_kappa = ((kappa / 2.0) / h).round().max(1.0) * h;
    let half = integrate_layers(&slab, &lifted, half_kappa)?;
    let planar = green_column(field, base, y)?;

    let gk = gradient_field(&full, base);
    let g2 = planar.gradient();
    let yc = base.coordinate(y);
    let (mut worst, mut sum, mut count): (f64, f64, usize) = (0.0, 0.0, 0);
    for node in 0..base.num_nodes() {
        let s = base.distance(&base.coordinate(node), &yc);
        if s >= window.0 && s <= window.1 {
            let diff = ((gk[node][0] - g2[node][0]).powi(2) + (gk[node][1] - g2[node][1]).powi(2)).sqrt();
            let rel = diff / (g2[node][0].hypot(g2[node][1]));
            worst = worst.max(rel);
            sum += rel;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Geometry("no nodes in the comparison window".into()));
    }

    let radii = log_spaced_radii(window.0, window.1, 8);
    let spec = AnnulusSpec::new(yc, DEFAULT_THICKNESS, radii.clone())?;
    let stats = crate::analysis::annulus_average(&magnitudes(&gk), base, &spec)?;
    let fit = fit_power_decay(Quantity::GradX, &radii, &stats, window)?;
    let half_stats = crate::analysis::annulus_average(&magnitudes(&gradient_field(&half, base)), base, &spec)?;
    let half_fit = fit_power_decay(Quantity::GradX, &radii, &half_stats, window)?;

    let top = lifted.iter().cloned().fold(0.0, f64::max);
    Ok(LiftReport {
        kappa,
        window,
        max_relative_discrepancy: worst,
        mean_relative_discrepancy: sum / count as f64,
        fitted_exponent: fit.fitted_exponent,
        fitted_constant: fit.fitted_constant,
        half_kappa_constant: half_fit.fitted_constant,
        integrand_nonnegative: lifted.iter().all(|&v| v >= -1e-10 * top),
        kappa_monotone: full.iter().zip(&half).all(|(a, b)| *a >= *b - 1e-10 * top),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{assemble, build_grid};
    use std::f64::consts::PI;

    #[test]
    fn slab_layers_are_symmetric() {
        let base = build_grid(2, 1.0, 9).unwrap();
        let slab = SlabGrid::new(&base, 1.0).unwrap();
        assert_eq!(slab.layers(), 9);
        assert_eq!(slab.layer_t(4), 0.0);
        assert_eq!(slab.layer_t(0), -slab.layer_t(8));
        assert!(SlabGrid::new(&base, 0.3).is_err());
        assert!(SlabGrid::new(&build_grid(3, 1.0, 9).unwrap(), 1.0).is_err());
    }

    #[test]
    fn identity_lift_is_the_3d_operator() {
        let base = build_grid(2, 1.0, 9).unwrap();
        let slab = SlabGrid::new(&base, 1.0).unwrap();
        let lifted = assemble_lifted(&PeriodicField::identity(2).unwrap(), &slab).unwrap();
        let direct = assemble(&PeriodicField::identity(3).unwrap(), slab.volume()).unwrap();
        assert_eq!(lifted, direct);
    }

    #[test]
    fn lift_commutes_with_transposition() {
        let f = PeriodicField::new(2, crate::coeff::Family::NonsymSkew, &[0.3, 0.5, 1.0]).unwrap();
        let base = build_grid(2, 1.0, 9).unwrap();
        let slab = SlabGrid::new(&base, 1.0).unwrap();
        let mut a = assemble_lifted(&f, &slab).unwrap().transpose();
        let b = assemble_lifted(&f.transposed(), &slab).unwrap();
        a.set_symmetric_flag(b.is_symmetric_flagged());
        assert_eq!(a, b);

        let s = assemble_lifted(&PeriodicField::identity(2).unwrap(), &slab).unwrap();
        assert!(s.is_symmetric_flagged());
        assert_eq!(s.transpose(), s);
    }

    #[test]
    fn kappa_integral_positive_and_monotone() {
        let base = build_grid(2, 1.0, 9).unwrap();
        let slab = SlabGrid::new(&base, 2.0).unwrap();
        let f = PeriodicField::builtin(2).unwrap().remove(1);
        let y = base.center_node();
        let lifted = lifted_column(&f, &slab, y).unwrap();
        let small = integrate_layers(&slab, &lifted, 1.0).unwrap();
        let large = integrate_layers(&slab, &lifted, 2.0).unwrap();
        for (s, l) in small.iter().zip(&large) {
            assert!(*s >= 0.0 && *l >= *s);
        }
        assert!(small[y] > 0.0);
        assert!(kappa_integral(&f, &slab, y, 3.0).is_err());
    }

    #[test]
    fn arctan_kernel_values() {
        assert!((arctan_kernel(1.0, 100.0) - 2.0 * 100f64.atan()).abs() < 1e-15);
        assert!((arctan_kernel(1.0, 100.0) - 3.121_593_320_216_463).abs() < 1e-12);
        assert!((arctan_kernel(0.5, 1e13) - PI / 0.5).abs() < 1e-12);
    }
}
