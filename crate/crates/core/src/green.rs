//! Discrete Dirichlet Green functions `x -> G_h(x, y)` and the constructions
//! built from them: domain growth, the 2D additive normalisation, adjoint
//! columns and mixed derivatives.

use serde::Serialize;

use crate::coeff::{Mat3, PeriodicField};
use crate::error::{Error, Result};
use crate::mesh::{assemble, gradient_field, load_delta, BoxGrid};
use crate::sparse::{solve, CsrMatrix, SolverOptions};

/// One column of the discrete Green matrix, extended by zero to the boundary.
#[derive(Debug, Clone)]
pub struct GreenColumn {
    pub grid: BoxGrid,
    pub source: usize,
    pub values: Vec<f64>,
    /// Total constant subtracted by [`normalize_2d`].
    pub normalization_offset: f64,
    pub field: PeriodicField,
    pub iterations: usize,
}

impl GreenColumn {
    pub fn source_point(&self) -> [f64; 3] {
        self.grid.coordinate(self.source)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `min(values) >= -tol * max(values)`.
    pub fn is_nonnegative(&self, tol: f64) -> bool {
        self.min_value() >= -tol * self.max_value()
    }

    pub fn gradient(&self) -> Vec<[f64; 3]> {
        gradient_field(&self.values, &self.grid)
    }
}

/// An assembled operator on a fixed grid, reused for many sources.
pub struct GreenSolver {
    field: PeriodicField,
    grid: BoxGrid,
    system: CsrMatrix,
    options: SolverOptions,
}

impl GreenSolver {
    pub fn new(field: &PeriodicField, grid: &BoxGrid) -> Result<Self> {
        Ok(Self {
            field: field.clone(),
            grid: grid.clone(),
            system: assemble(field, grid)?,
            options: SolverOptions::default(),
        })
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    pub fn system(&self) -> &CsrMatrix {
        &self.system
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn column(&self, y: usize) -> Result<GreenColumn> {
        let rhs = load_delta(&self.grid, y)?;
        let sol = solve(&self.system, &rhs, &self.options)?;
        Ok(GreenColumn {
            grid: self.grid.clone(),
            source: y,
            values: self.grid.extend_by_zero(&sol.x),
            normalization_offset: 0.0,
            field: self.field.clone(),
            iterations: sol.iterations,
        })
    }

    /// `grad_x grad_y G(., y)` per node, with `grad_y` by central differences
    /// over the neighbouring source nodes `y +- h e_j`.
    pub fn mixed_derivative(&self, y: usize) -> Result<Vec<Mat3>> {
        let grid = &self.grid;
        let d = grid.dim();
        let base = grid.multi_index(y);
        let mut plus = Vec::with_capacity(d);
        let mut minus = Vec::with_capacity(d);
        for j in 0..d {
            let mut up = base;
            let mut down = base;
            up[j] += 1;
            if base[j] == 0 {
                return Err(Error::SourcePlacement(y));
            }
            down[j] -= 1;
            if up[j] >= grid.count(j) {
                return Err(Error::SourcePlacement(y));
            }
            let (yu, yd) = (grid.node_index(&up), grid.node_index(&down));
            if grid.is_boundary(yu) || grid.is_boundary(yd) {
                return Err(Error::SourcePlacement(y));
            }
            plus.push(self.column(yu)?.values);
            minus.push(self.column(yd)?.values);
        }
        Ok(mixed_from_columns(grid, &plus, &minus))
    }
}

/// Mixed-derivative tensor from the shifted-source columns:
/// `T[i][j] = d/dx_i (G(., y + h e_j) - G(., y - h e_j)) / 2h`.
pub fn mixed_from_columns(grid: &BoxGrid, plus: &[Vec<f64>], minus: &[Vec<f64>]) -> Vec<Mat3> {
    let d = grid.dim();
    let h = grid.spacing();
    let mut tensor = vec![[[0.0; 3]; 3]; grid.num_nodes()];
    for j in 0..d {
        let diff: Vec<f64> = plus[j]
            .iter()
            .zip(&minus[j])
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        for (node, g) in gradient_field(&diff, grid).into_iter().enumerate() {
            for i in 0..d {
                tensor[node][i][j] = g[i];
            }
        }
    }
    tensor
}

/// Frobenius norm of each tensor.
pub fn tensor_magnitudes(t: &[Mat3]) -> Vec<f64> {
    t.iter()
        .map(|m| m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Solves `K u = e_y` for the Dirichlet Green column of source node `y`.
pub fn green_column(field: &PeriodicField, grid: &BoxGrid, y: usize) -> Result<GreenColumn> {
    GreenSolver::new(field, grid)?.column(y)
}

/// Green column of the adjoint operator `-div(A^T grad)` with source `x`.
pub fn adjoint_column(field: &PeriodicField, grid: &BoxGrid, x: usize) -> Result<GreenColumn> {
    green_column(&field.transposed(), grid, x)
}

pub fn mixed_derivative(field: &PeriodicField, grid: &BoxGrid, y: usize) -> Result<Vec<Mat3>> {
    GreenSolver::new(field, grid)?.mixed_derivative(y)
}

/// Volume of `cell(node) ∩ B_radius(center)` per node, by midpoint
/// sub-sampling of each node's control cell.
pub fn ball_weights(grid: &BoxGrid, center: &[f64; 3], radius: f64) -> Vec<f64> {
    const SUB: usize = 16;
    let d = grid.dim();
    let h = grid.spacing();
    let sub_vol = grid.cell_volume() / (SUB.pow(d as u32)) as f64;
    let reach = radius + h;
    (0..grid.num_nodes())
        .map(|node| {
            let x = grid.coordinate(node);
            let r = grid.distance(&x, center);
            if r > reach {
                return 0.0;
            }
            if r + h <= radius {
                return grid.cell_volume();
            }
            let mut inside = 0usize;
            let total = SUB.pow(d as u32);
            for s in 0..total {
                let mut rem = s;
                let mut dist2 = 0.0;
                for k in 0..d {
                    let i = rem % SUB;
                    rem /= SUB;
                    let p = x[k] - 0.5 * h + (i as f64 + 0.5) * h / SUB as f64;
                    dist2 += (p - center[k]).powi(2);
                }
                if dist2 <= radius * radius {
                    inside += 1;
                }
            }
            inside as f64 * sub_vol
        })
        .collect()
}

/// Fixes the 2D additive constant by `int_{B_1(y)} G = 0`, using
/// cell-overlap weights for the discrete mean.
pub fn normalize_2d(col: &GreenColumn) -> Result<GreenColumn> {
    if col.grid.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: col.grid.dim(),
        });
    }
    let y = col.source_point();
    if col.grid.clearance(&y) < 1.0 {
        return Err(Error::Geometry(
            "unit ball around the source leaves the domain".into(),
        ));
    }
    let w = ball_weights(&col.grid, &y, 1.0);
    let mass: f64 = w.iter().sum();
    let mean = w.iter().zip(&col.values).map(|(w, v)| w * v).sum::<f64>() / mass;
    let mut out = col.clone();
    for v in out.values.iter_mut() {
        *v -= mean;
    }
    out.normalization_offset += mean;
    Ok(out)
}

/// Weighted mean of `values` over the unit ball around the source.
pub fn unit_ball_mean(col: &GreenColumn) -> f64 {
    let w = ball_weights(&col.grid, &col.source_point(), 1.0);
    let mass: f64 = w.iter().sum();
    w.iter().zip(&col.values).map(|(w, v)| w * v).sum::<f64>() / mass
}

/// Grids `center + [-R, R]^d` with common spacing `h` for every `R`.
pub fn nested_grids(dim: usize, center: [f64; 3], radii: &[f64], h: f64) -> Result<Vec<BoxGrid>> {
    if radii.is_empty() {
        return Err(Error::Config("need at least one box half-width".into()));
    }
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("box half-widths must increase strictly".into()));
    }
    radii
        .iter()
        .map(|&r| {
            let cells = 2.0 * r / h;
            let rounded = cells.round();
            if (cells - rounded).abs() > 1e-9 * cells.max(1.0) || rounded < 4.0 {
                return Err(Error::Geometry(format!(
                    "spacing {h} does not divide the box of half-width {r}"
                )));
            }
            BoxGrid::cube(dim, r, rounded as usize + 1, center)
        })
        .collect()
}

/// Node of `big` at the position of node `i` of `small` (same spacing and
/// center).
pub fn embed_node(small: &BoxGrid, big: &BoxGrid, i: usize) -> usize {
    let m = small.multi_index(i);
    let mut mb = [0; 3];
    for k in 0..small.dim() {
        mb[k] = m[k] + (big.count(k) - small.count(k)) / 2;
    }
    big.node_index(&mb)
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthPair {
    pub r_small: f64,
    pub r_large: f64,
    /// `min over shared nodes of G_{R'} - G_R`, relative to `max G_{R'}`.
    pub min_relative_increment: f64,
    pub monotone: bool,
    /// Mean of `G_{R'} - G_R` over shared nodes within `R/4` of the source.
    pub near_drift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub pairs: Vec<GrowthPair>,
    pub monotone: bool,
    /// `max |G_{R_k} - G_{R_{k-1}}|` on the smallest box, for `k = 1..`.
    pub successive_differences: Vec<f64>,
}

/// Green columns on nested boxes `[-R, R]^d` with a shared source, and the
/// maximum-principle check `G_{R'} >= G_R` on shared nodes.
pub fn domain_growth(
    field: &PeriodicField,
    y: &[f64; 3],
    radii: &[f64],
    h: f64,
) -> Result<(Vec<GreenColumn>, GrowthReport)> {
    let grids = nested_grids(field.dim, [0.0; 3], radii, h)?;
    let mut cols = Vec::with_capacity(grids.len());
    for g in &grids {
        let node = g
            .node_at(y)
            .ok_or_else(|| Error::Geometry("source is not a node of every grid".into()))?;
        cols.push(green_column(field, g, node)?);
    }
    let report = growth_report(&cols);
    Ok((cols, report))
}

pub fn growth_report(cols: &[GreenColumn]) -> GrowthReport {
    let mut pairs = Vec::new();
    for w in cols.windows(2) {
        let (small, large) = (&w[0], &w[1]);
        let scale = large.max_value();
        let y = small.source_point();
        let r_small = small.grid.half_width(0);
        let mut min_inc = f64::INFINITY;
        let (mut drift, mut count) = (0.0, 0usize);
        for i in 0..small.grid.num_nodes() {
            let j = embed_node(&small.grid, &large.grid, i);
            let inc = large.values[j] - small.values[i];
            min_inc = min_inc.min(inc / scale);
            if small.grid.distance(&small.grid.coordinate(i), &y) <= 0.25 * r_small {
                drift += inc;
                count += 1;
            }
        }
        pairs.push(GrowthPair {
            r_small,
            r_large: large.grid.half_width(0),
            min_relative_increment: min_inc,
            monotone: min_inc >= -1e-10,
            near_drift: drift / count.max(1) as f64,
        });
    }
    let mut successive = Vec::new();
    if let Some(first) = cols.first() {
        for w in cols.windows(2) {
            let mut m: f64 = 0.0;
            for i in 0..first.grid.num_nodes() {
                let a = w[0].values[embed_node(&first.grid, &w[0].grid, i)];
                let b = w[1].values[embed_node(&first.grid, &w[1].grid, i)];
                m = m.max((b - a).abs());
            }
            successive.push(m);
        }
    }
    GrowthReport {
        monotone: pairs.iter().all(|p| p.monotone),
        pairs,
        successive_differences: successive,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::Family;
    use crate::mesh::build_grid;
    use crate::sparse::DenseLu;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn columns_are_nonnegative_with_peak_at_source() {
        for d in [2, 3] {
            let n = if d == 2 { 17 } else { 9 };
            let g = build_grid(d, 1.0, n).unwrap();
            for field in PeriodicField::builtin(d).unwrap() {
                let col = green_column(&field, &g, g.center_node()).unwrap();
                assert!(col.is_nonnegative(1e-12), "{} d={d}", field.family);
                assert_eq!(col.max_value(), col.values[col.source]);
                for i in 0..g.num_nodes() {
                    if g.is_boundary(i) {
                        assert_eq!(col.values[i], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn boundary_source_rejected() {
        let g = build_grid(2, 1.0, 9).unwrap();
        let f = PeriodicField::identity(2).unwrap();
        assert!(matches!(green_column(&f, &g, 0), Err(Error::SourcePlacement(0))));
    }

    #[test]
    fn normalisation_examples() {
        let g = build_grid(2, 2.0, 17).unwrap();
        let f = PeriodicField::identity(2).unwrap();
        let constant = GreenColumn {
            grid: g.clone(),
            source: g.center_node(),
            values: vec![0.75; g.num_nodes()],
            normalization_offset: 0.0,
            field: f.clone(),
            iterations: 0,
        };
        let n = normalize_2d(&constant).unwrap();
        assert_abs_diff_eq!(n.normalization_offset, 0.75, epsilon = 1e-14);
        assert!(n.values.iter().all(|v| v.abs() <= 1e-14));

        let col = green_column(&f, &g, g.center_node()).unwrap();
        let once = normalize_2d(&col).unwrap();
        assert!(unit_ball_mean(&once).abs() <= 1e-13 * once.max_value());
        let mut fresh = once.clone();
        fresh.normalization_offset = 0.0;
        let twice = normalize_2d(&fresh).unwrap();
        assert!(twice.normalization_offset.abs() <= 1e-13 * once.max_value());
        for (a, b) in once.values.iter().zip(&twice.values) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn normalisation_needs_room_and_two_dimensions() {
        let g = build_grid(2, 0.75, 9).unwrap();
        let f = PeriodicField::identity(2).unwrap();
        let col = green_column(&f, &g, g.center_node()).unwrap();
        assert!(matches!(normalize_2d(&col), Err(Error::Geometry(_))));
        let g3 = build_grid(3, 2.0, 9).unwrap();
        let col3 = green_column(&PeriodicField::identity(3).unwrap(), &g3, g3.center_node()).unwrap();
        assert!(matches!(normalize_2d(&col3), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ball_weights_cover_the_disk_area() {
        let g = build_grid(2, 2.0, 65).unwrap();
        let w = ball_weights(&g, &[0.0; 3], 1.0);
        assert!((w.iter().sum::<f64>() - PI).abs() < 2e-3);
    }

    #[test]
    fn symmetric_adjoint_equals_direct() {
        let g = build_grid(2, 1.0, 13).unwrap();
        let f = PeriodicField::new(2, Family::ScalarTrig, &[]).unwrap();
        let y = g.center_node() + 2;
        let a = adjoint_column(&f, &g, y).unwrap();
        let b = green_column(&f, &g, y).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn adjoint_identity_against_dense_oracle() {
        let g = build_grid(2, 1.0, 17).unwrap();
        for params in [[0.3, 0.0, 1.0], [0.3, 0.8, 1.0]] {
            let f = PeriodicField::new(2, Family::NonsymSkew, &params).unwrap();
            let lu = DenseLu::factor(&assemble(&f, &g).unwrap()).unwrap();
            let x = g.node_at(&[0.25, -0.375]).unwrap();
            let y = g.node_at(&[-0.5, 0.125]).unwrap();
            let adj = adjoint_column(&f, &g, x).unwrap();
            let dir = green_column(&f, &g, y).unwrap();
            let scale = dir.max_value();
            assert!((adj.values[y] - dir.values[x]).abs() <= 1e-8 * scale);
            let oracle = lu.solve(&load_delta(&g, y).unwrap()).unwrap();
            assert!((oracle[g.dof(x).unwrap()] - dir.values[x]).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn mixed_tensor_ignores_constant_shifts() {
        let g = build_grid(2, 1.0, 9).unwrap();
        let f = PeriodicField::identity(2).unwrap();
        let s = GreenSolver::new(&f, &g).unwrap();
        let y = g.center_node();
        let m = g.multi_index(y);
        let mut plus = Vec::new();
        let mut minus = Vec::new();
        for j in 0..2 {
            let (mut u, mut dn) = (m, m);
            u[j] += 1;
            dn[j] -= 1;
            plus.push(s.column(g.node_index(&u)).unwrap().values);
            minus.push(s.column(g.node_index(&dn)).unwrap().values);
        }
        let t = mixed_from_columns(&g, &plus, &minus);
        let shift = |cols: &Vec<Vec<f64>>, c: f64| -> Vec<Vec<f64>> {
            cols.iter().map(|v| v.iter().map(|x| x + c).collect()).collect()
        };
        let ts = mixed_from_columns(&g, &shift(&plus, 3.0), &shift(&minus, -1.5));
        for (a, b) in t.iter().zip(&ts) {
            for i in 0..2 {
                for j in 0..2 {
                    assert_abs_diff_eq!(a[i][j], b[i][j], epsilon = 1e-9);
                }
            }
        }
        assert_eq!(t, s.mixed_derivative(y).unwrap());
    }

    #[test]
    fn mixed_tensor_swaps_under_symmetry() {
        let g = build_grid(2, 1.0, 17).unwrap();
        let f = PeriodicField::new(2, Family::ScalarTrig, &[]).unwrap();
        let s = GreenSolver::new(&f, &g).unwrap();
        let x = g.node_at(&[0.375, 0.25]).unwrap();
        let y = g.node_at(&[-0.25, -0.125]).unwrap();
        let tx = s.mixed_derivative(y).unwrap()[x];
        let ty = s.mixed_derivative(x).unwrap()[y];
        let scale = tensor_magnitudes(&[tx])[0];
        for i in 0..2 {
            for j in 0..2 {
                assert!((tx[i][j] - ty[j][i]).abs() <= 0.1 * scale, "{tx:?} vs {ty:?}");
            }
        }
    }

    #[test]
    fn mixed_needs_interior_neighbours() {
        let g = build_grid(2, 1.0, 9).unwrap();
        let f = PeriodicField::identity(2).unwrap();
        let near_edge = g.node_index(&[1, 4, 0]);
        assert!(matches!(mixed_derivative(&f, &g, near_edge), Err(Error::SourcePlacement(_))));
    }

    #[test]
    fn single_box_growth_is_trivially_monotone() {
        let f = PeriodicField::identity(2).unwrap();
        let (cols, report) = domain_growth(&f, &[0.0; 3], &[1.0], 0.25).unwrap();
        assert_eq!(cols.len(), 1);
        assert!(report.monotone);
        assert!(report.pairs.is_empty());
    }

    #[test]
    fn growth_rejects_non_nested_spacing() {
        let f = PeriodicField::identity(2).unwrap();
        assert!(domain_growth(&f, &[0.0; 3], &[1.0, 1.3], 0.25).is_err());
        assert!(domain_growth(&f, &[0.0; 3], &[2.0, 1.0], 0.25).is_err());
        assert!(domain_growth(&f, &[0.1, 0.0, 0.0], &[1.0, 2.0], 0.25).is_err());
    }
}
