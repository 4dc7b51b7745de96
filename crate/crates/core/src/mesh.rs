//! Uniform tensor grids and Q1 assembly of the discrete weak form
//! `K_ij = int grad(phi_i)^T A grad(phi_j)` with homogeneous Dirichlet data.

use serde::{Deserialize, Serialize};

use crate::coeff::{Mat3, PeriodicField};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// A uniform grid with common spacing `h` on every axis.
///
/// Nodes are numbered lexicographically with the first axis slowest.
/// Interior nodes (the unknowns) are numbered in the same order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    dim: usize,
    counts: [usize; 3],
    h: f64,
    center: [f64; 3],
}

/// Cube grid on `[-R, R]^d` with `n` nodes per axis.
pub fn build_grid(d: usize, half_width: f64, n: usize) -> Result<BoxGrid> {
    BoxGrid::cube(d, half_width, n, [0.0; 3])
}

impl BoxGrid {
    /// Cube grid on `center + [-R, R]^d`.
    pub fn cube(d: usize, half_width: f64, n: usize, center: [f64; 3]) -> Result<Self> {
        if d != 2 && d != 3 {
            return Err(Error::Config(format!("dimension must be 2 or 3, got {d}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::Config(format!("half-width must be positive, got {half_width}")));
        }
        if n < 5 || n % 2 == 0 {
            return Err(Error::Config(format!(
                "nodes per axis must be odd and at least 5, got {n}"
            )));
        }
        let mut counts = [1; 3];
        counts[..d].fill(n);
        Ok(Self {
            dim: d,
            counts,
            h: 2.0 * half_width / (n - 1) as f64,
            center,
        })
    }

    /// Grid with an individual odd node count per axis and spacing `h`.
    pub fn with_counts(counts: &[usize], h: f64, center: [f64; 3]) -> Result<Self> {
        let dim = counts.len();
        if dim != 2 && dim != 3 {
            return Err(Error::Config(format!("dimension must be 2 or 3, got {dim}")));
        }
        if counts.iter().any(|&n| n < 5 || n % 2 == 0) {
            return Err(Error::Config(format!(
                "node counts must be odd and at least 5, got {counts:?}"
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("spacing must be positive, got {h}")));
        }
        let mut c = [1; 3];
        c[..dim].copy_from_slice(counts);
        Ok(Self {
            dim,
            counts: c,
            h,
            center,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn center(&self) -> [f64; 3] {
        self.center
    }

    /// Node count along `axis`.
    pub fn count(&self, axis: usize) -> usize {
        self.counts[axis]
    }

    /// Half-width along `axis`.
    pub fn half_width(&self, axis: usize) -> f64 {
        self.h * ((self.counts[axis] - 1) / 2) as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn num_nodes(&self) -> usize {
        self.counts[..self.dim].iter().product()
    }

    pub fn num_interior(&self) -> usize {
        self.counts[..self.dim].iter().map(|n| n - 2).product()
    }

    pub fn multi_index(&self, node: usize) -> [usize; 3] {
        let mut m = [0; 3];
        let mut rem = node;
        for k in (0..self.dim).rev() {
            m[k] = rem % self.counts[k];
            rem /= self.counts[k];
        }
        m
    }

    pub fn node_index(&self, m: &[usize; 3]) -> usize {
        (0..self.dim).fold(0, |acc, k| acc * self.counts[k] + m[k])
    }

    /// Signed offset (in cells) of a node from the grid center.
    pub fn lattice_offset(&self, node: usize) -> [i64; 3] {
        let m = self.multi_index(node);
        let mut o = [0; 3];
        for k in 0..self.dim {
            o[k] = m[k] as i64 - ((self.counts[k] - 1) / 2) as i64;
        }
        o
    }

    pub fn coordinate(&self, node: usize) -> [f64; 3] {
        let o = self.lattice_offset(node);
        let mut x = [0.0; 3];
        for k in 0..self.dim {
            x[k] = self.center[k] + o[k] as f64 * self.h;
        }
        x
    }

    /// Node whose coordinate equals `x` up to `1e-9 h`, if any.
    pub fn node_at(&self, x: &[f64]) -> Option<usize> {
        let mut m = [0; 3];
        for k in 0..self.dim {
            let c = ((self.counts[k] - 1) / 2) as f64;
            let s = (x[k] - self.center[k]) / self.h + c;
            let r = s.round();
            if (s - r).abs() > 1e-9 || r < 0.0 || r > (self.counts[k] - 1) as f64 {
                return None;
            }
            m[k] = r as usize;
        }
        Some(self.node_index(&m))
    }

    pub fn center_node(&self) -> usize {
        let mut m = [0; 3];
        for k in 0..self.dim {
            m[k] = (self.counts[k] - 1) / 2;
        }
        self.node_index(&m)
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let m = self.multi_index(node);
        (0..self.dim).any(|k| m[k] == 0 || m[k] == self.counts[k] - 1)
    }

    /// Unknown index of an interior node.
    pub fn dof(&self, node: usize) -> Option<usize> {
        let m = self.multi_index(node);
        let mut idx = 0;
        for k in 0..self.dim {
            if m[k] == 0 || m[k] == self.counts[k] - 1 {
                return None;
            }
            idx = idx * (self.counts[k] - 2) + (m[k] - 1);
        }
        Some(idx)
    }

    pub fn node_of_dof(&self, dof: usize) -> usize {
        let mut m = [0; 3];
        let mut rem = dof;
        for k in (0..self.dim).rev() {
            let n = self.counts[k] - 2;
            m[k] = rem % n + 1;
            rem /= n;
        }
        self.node_index(&m)
    }

    /// Spreads a vector of unknowns onto all nodes, zero on the boundary.
    pub fn extend_by_zero(&self, interior: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.num_nodes()];
        for (dof, &v) in interior.iter().enumerate() {
            full[self.node_of_dof(dof)] = v;
        }
        full
    }

    /// Euclidean distance between two points in the grid's dimension.
    pub fn distance(&self, a: &[f64; 3], b: &[f64; 3]) -> f64 {
        (0..self.dim).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
    }

    /// Largest `r` such that the ball of radius `r` around `x` stays in the box.
    pub fn clearance(&self, x: &[f64; 3]) -> f64 {
        (0..self.dim)
            .map(|k| self.half_width(k) - (x[k] - self.center[k]).abs())
            .fold(f64::INFINITY, f64::min)
    }

    fn num_elements(&self) -> usize {
        self.counts[..self.dim].iter().map(|n| n - 1).product()
    }

    /// Lowest-corner node of element `e` (elements are numbered
    /// lexicographically like nodes).
    fn element_origin(&self, e: usize) -> [usize; 3] {
        let mut m = [0; 3];
        let mut rem = e;
        for k in (0..self.dim).rev() {
            m[k] = rem % (self.counts[k] - 1);
            rem /= self.counts[k] - 1;
        }
        m
    }

    /// Node of local vertex `a` (bit `k` of `a` is the offset along axis `k`).
    fn element_vertex(&self, origin: &[usize; 3], a: usize) -> usize {
        let mut m = *origin;
        for (k, mk) in m.iter_mut().enumerate().take(self.dim) {
            *mk += (a >> k) & 1;
        }
        self.node_index(&m)
    }
}

const GAUSS: [f64; 2] = [
    0.5 - 0.288_675_134_594_812_9, // (1 - 1/sqrt3) / 2
    0.5 + 0.288_675_134_594_812_9,
];

/// Reference gradients of the `2^d` bilinear/trilinear shape functions at
/// each of the `2^d` tensor Gauss points, already scaled by `1/h`.
struct Q1Reference {
    /// `points[q]` in reference coordinates on `[0,1]^d`.
    points: Vec<[f64; 3]>,
    /// `grads[q][a][k]`.
    grads: Vec<Vec<[f64; 3]>>,
    weight: f64,
}

impl Q1Reference {
    fn new(dim: usize, h: f64) -> Self {
        let nv = 1 << dim;
        let mut points = Vec::with_capacity(nv);
        let mut grads = Vec::with_capacity(nv);
        for q in 0..nv {
            let mut xi = [0.0; 3];
            for (k, x) in xi.iter_mut().enumerate().take(dim) {
                *x = GAUSS[(q >> k) & 1];
            }
            let g: Vec<[f64; 3]> = (0..nv).map(|a| shape_gradient(dim, a, &xi, h)).collect();
            points.push(xi);
            grads.push(g);
        }
        Self {
            points,
            grads,
            weight: h.powi(dim as i32) / nv as f64,
        }
    }
}

fn shape_gradient(dim: usize, a: usize, xi: &[f64; 3], h: f64) -> [f64; 3] {
    let factor = |k: usize, x: f64| if (a >> k) & 1 == 1 { x } else { 1.0 - x };
    let dfactor = |k: usize| if (a >> k) & 1 == 1 { 1.0 } else { -1.0 };
    let mut g = [0.0; 3];
    for (k, gk) in g.iter_mut().enumerate().take(dim) {
        let mut v = dfactor(k) / h;
        for m in 0..dim {
            if m != k {
                v *= factor(m, xi[m]);
            }
        }
        *gk = v;
    }
    g
}

/// `u^T M v`, summed so that swapping `(u, M, v)` for `(v, M^T, u)` gives a
/// bitwise identical result.
#[inline]
fn contract(u: &[f64; 3], m: &Mat3, v: &[f64; 3], dim: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        s += m[i][i] * (u[i] * v[i]);
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            s += m[i][j] * (u[i] * v[j]) + m[j][i] * (u[j] * v[i]);
        }
    }
    s
}

/// Assembles the Dirichlet-eliminated Q1 stiffness matrix of `field` on `grid`.
pub fn assemble(field: &PeriodicField, grid: &BoxGrid) -> Result<CsrMatrix> {
    if field.dim != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: field.dim,
        });
    }
    Ok(assemble_with(grid, field.is_symmetric(), |x| field.evaluate(x)))
}

/// Q1 assembly for an arbitrary coefficient `x -> A(x)` in the grid's
/// dimension. Elements are visited in a fixed order, so entries are
/// reproducible bit for bit.
pub fn assemble_with<F>(grid: &BoxGrid, symmetric: bool, coef: F) -> CsrMatrix
where
    F: Fn(&[f64; 3]) -> Mat3,
{
    let d = grid.dim();
    let nv = 1 << d;
    let stencil = 3usize.pow(d as u32);
    let reference = Q1Reference::new(d, grid.spacing());
    let ndof = grid.num_interior();
    let mut slots = vec![0.0; ndof * stencil];
    let h = grid.spacing();

    let mut ke = vec![0.0; nv * nv];
    let mut nodes = vec![0usize; nv];
    let mut dofs = vec![None; nv];
    for e in 0..grid.num_elements() {
        let origin = grid.element_origin(e);
        for a in 0..nv {
            nodes[a] = grid.element_vertex(&origin, a);
            dofs[a] = grid.dof(nodes[a]);
        }
        if dofs.iter().all(Option::is_none) {
            continue;
        }
        let base = grid.coordinate(nodes[0]);
        ke.fill(0.0);
        for (q, xi) in reference.points.iter().enumerate() {
            let mut x = [0.0; 3];
            for k in 0..d {
                x[k] = base[k] + xi[k] * h;
            }
            let a_q = coef(&x);
            let g = &reference.grads[q];
            for a in 0..nv {
                for b in 0..nv {
                    ke[a * nv + b] += reference.weight * contract(&g[a], &a_q, &g[b], d);
                }
            }
        }
        for a in 0..nv {
            let Some(row) = dofs[a] else { continue };
            for b in 0..nv {
                // Slot of vertex b relative to vertex a, base-3 digits in
                // lexicographic axis order.
                let mut slot = 0;
                for k in 0..d {
                    let off = ((b >> k) & 1) as isize - ((a >> k) & 1) as isize;
                    slot = slot * 3 + (off + 1) as usize;
                }
                slots[row * stencil + slot] += ke[a * nv + b];
            }
        }
    }

    let mut row_ptr = Vec::with_capacity(ndof + 1);
    let mut col_idx = Vec::with_capacity(ndof * stencil);
    let mut values = Vec::with_capacity(ndof * stencil);
    row_ptr.push(0);
    for row in 0..ndof {
        let node = grid.node_of_dof(row);
        let m = grid.multi_index(node);
        for slot in 0..stencil {
            let mut nm = m;
            let mut rem = slot;
            for k in (0..d).rev() {
                let off = (rem % 3) as isize - 1;
                rem /= 3;
                nm[k] = (m[k] as isize + off) as usize;
            }
            if let Some(col) = grid.dof(grid.node_index(&nm)) {
                col_idx.push(col);
                values.push(slots[row * stencil + slot]);
            }
        }
        row_ptr.push(col_idx.len());
    }
    CsrMatrix::from_parts(ndof, row_ptr, col_idx, values, symmetric)
}

/// Unit load at source node `y`: the Q1 weak-form right-hand side of a point
/// source, since `phi_i(y) = delta_iy` at nodes.
pub fn load_delta(grid: &BoxGrid, y: usize) -> Result<Vec<f64>> {
    let dof = grid.dof(y).ok_or(Error::SourcePlacement(y))?;
    let mut b = vec![0.0; grid.num_interior()];
    b[dof] = 1.0;
    Ok(b)
}

/// Per-node gradient: Q1 element gradients at element centers, averaged over
/// the elements sharing each node.
pub fn gradient_field(values: &[f64], grid: &BoxGrid) -> Vec<[f64; 3]> {
    let d = grid.dim();
    let nv = 1 << d;
    let h = grid.spacing();
    let mut grad = vec![[0.0; 3]; grid.num_nodes()];
    let mut touches = vec![0u32; grid.num_nodes()];
    let scale = 1.0 / (h * (1 << (d - 1)) as f64);
    let mut nodes = vec![0usize; nv];
    for e in 0..grid.num_elements() {
        let origin = grid.element_origin(e);
        let mut g = [0.0; 3];
        for a in 0..nv {
            nodes[a] = grid.element_vertex(&origin, a);
            let u = values[nodes[a]];
            for (k, gk) in g.iter_mut().enumerate().take(d) {
                if (a >> k) & 1 == 1 {
                    *gk += u;
                } else {
                    *gk -= u;
                }
            }
        }
        for gk in g.iter_mut().take(d) {
            *gk *= scale;
        }
        for &node in &nodes {
            for k in 0..d {
                grad[node][k] += g[k];
            }
            touches[node] += 1;
        }
    }
    for (g, &t) in grad.iter_mut().zip(&touches) {
        for gk in g.iter_mut() {
            *gk /= t as f64;
        }
    }
    grad
}

/// Euclidean norm of each vector of a gradient field.
pub fn magnitudes(field: &[[f64; 3]]) -> Vec<f64> {
    field
        .iter()
        .map(|g| (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::Family;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_counts() {
        let g = build_grid(2, 1.0, 5).unwrap();
        assert_eq!(g.num_nodes(), 25);
        assert_eq!(g.num_interior(), 9);
        assert_eq!(g.spacing(), 0.5);

        let g3 = build_grid(3, 2.0, 9).unwrap();
        assert_eq!(g3.num_nodes(), 729);
        assert_eq!(g3.spacing(), 0.5);
        assert_eq!(g3.num_interior(), 343);
    }

    #[test]
    fn even_or_tiny_node_counts_rejected() {
        assert!(build_grid(2, 1.0, 4).is_err());
        assert!(build_grid(2, 1.0, 3).is_err());
        assert!(build_grid(2, 0.0, 5).is_err());
    }

    #[test]
    fn origin_is_a_node_and_indices_round_trip() {
        let g = build_grid(3, 1.5, 7).unwrap();
        let c = g.center_node();
        assert_eq!(g.coordinate(c), [0.0; 3]);
        for node in 0..g.num_nodes() {
            assert_eq!(g.node_index(&g.multi_index(node)), node);
            assert_eq!(g.node_at(&g.coordinate(node)), Some(node));
        }
        let boundary = (0..g.num_nodes()).filter(|&i| g.is_boundary(i)).count();
        assert_eq!(g.num_nodes() - boundary, 125);
        for dof in 0..g.num_interior() {
            assert_eq!(g.dof(g.node_of_dof(dof)), Some(dof));
        }
    }

    #[test]
    fn laplacian_stencil_in_2d() {
        let field = PeriodicField::identity(2).unwrap();
        for n in [5, 9] {
            let g = build_grid(2, 1.0, n).unwrap();
            let k = assemble(&field, &g).unwrap();
            let row = g.dof(g.center_node()).unwrap();
            let (cols, vals) = k.row(row);
            assert_eq!(cols.len(), 9);
            for (&c, &v) in cols.iter().zip(vals) {
                let expected = if c == row { 8.0 / 3.0 } else { -1.0 / 3.0 };
                assert_abs_diff_eq!(v, expected, epsilon = 1e-14);
            }
            assert_abs_diff_eq!(vals.iter().sum::<f64>(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn fully_interior_rows_sum_to_zero() {
        for field in PeriodicField::builtin(3).unwrap() {
            let g = build_grid(3, 1.0, 7).unwrap();
            let k = assemble(&field, &g).unwrap();
            for dof in 0..g.num_interior() {
                let m = g.multi_index(g.node_of_dof(dof));
                if (0..3).all(|a| m[a] >= 2 && m[a] <= 4) {
                    let (_, vals) = k.row(dof);
                    assert_eq!(vals.len(), 27);
                    let scale: f64 = vals.iter().map(|v| v.abs()).sum();
                    assert!(vals.iter().sum::<f64>().abs() <= 1e-14 * scale);
                }
            }
        }
    }

    #[test]
    fn symmetric_fields_give_bitwise_symmetric_matrices() {
        for d in [2, 3] {
            let g = build_grid(d, 1.0, 7).unwrap();
            for field in PeriodicField::builtin(d).unwrap() {
                if !field.is_symmetric() {
                    continue;
                }
                let k = assemble(&field, &g).unwrap();
                assert!(k.is_symmetric_flagged());
                assert_eq!(k.transpose(), k);
            }
        }
    }

    #[test]
    fn transposed_field_gives_transposed_matrix() {
        for d in [2, 3] {
            let g = build_grid(d, 1.0, 7).unwrap();
            let field = PeriodicField::new(d, Family::NonsymSkew, &[0.3, 0.6, 1.0]).unwrap();
            let k = assemble(&field, &g).unwrap();
            let kt = assemble(&field.transposed(), &g).unwrap();
            let mut expected = k.transpose();
            expected.set_symmetric_flag(false);
            assert_eq!(kt, expected);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let g = build_grid(2, 1.0, 5).unwrap();
        let f = PeriodicField::identity(3).unwrap();
        assert!(matches!(assemble(&f, &g), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn stencil_locality() {
        let g = build_grid(2, 1.0, 9).unwrap();
        let f = PeriodicField::new(2, Family::DiagAniso, &[]).unwrap();
        let k = assemble(&f, &g).unwrap();
        for row in 0..k.n_rows() {
            let mr = g.multi_index(g.node_of_dof(row));
            for &c in k.row(row).0 {
                let mc = g.multi_index(g.node_of_dof(c));
                assert!((0..2).all(|a| mr[a].abs_diff(mc[a]) <= 1));
            }
        }
    }

    #[test]
    fn delta_loads() {
        let g = build_grid(2, 1.0, 9).unwrap();
        let c = load_delta(&g, g.center_node()).unwrap();
        assert_eq!(c.iter().sum::<f64>(), 1.0);
        assert_eq!(c[g.dof(g.center_node()).unwrap()], 1.0);
        assert!(matches!(load_delta(&g, 0), Err(Error::SourcePlacement(0))));
        let other = load_delta(&g, g.center_node() + 1).unwrap();
        assert_eq!(c.iter().zip(&other).map(|(a, b)| a * b).sum::<f64>(), 0.0);
    }

    #[test]
    fn gradient_reproduces_linear_and_constant_fields() {
        for d in [2, 3] {
            let g = build_grid(d, 1.0, 9).unwrap();
            let lin: Vec<f64> = (0..g.num_nodes()).map(|i| g.coordinate(i)[0]).collect();
            let grad = gradient_field(&lin, &g);
            for gr in &grad {
                assert_abs_diff_eq!(gr[0], 1.0, epsilon = 1e-13);
                for gk in gr.iter().skip(1) {
                    assert_abs_diff_eq!(*gk, 0.0, epsilon = 1e-13);
                }
            }
            let flat = gradient_field(&vec![3.5; g.num_nodes()], &g);
            assert!(flat.iter().all(|v| v.iter().all(|c| *c == 0.0)));
        }
    }

    #[test]
    fn gradient_of_bilinear_monomial() {
        let g = build_grid(2, 1.0, 17).unwrap();
        let h = g.spacing();
        let vals: Vec<f64> = (0..g.num_nodes())
            .map(|i| {
                let x = g.coordinate(i);
                x[0] * x[1]
            })
            .collect();
        let grad = gradient_field(&vals, &g);
        for i in 0..g.num_nodes() {
            if g.is_boundary(i) {
                continue;
            }
            let x = g.coordinate(i);
            assert!((grad[i][0] - x[1]).abs() <= h * h);
            assert!((grad[i][1] - x[0]).abs() <= h * h);
        }
    }

    #[test]
    fn affine_functions_are_discretely_harmonic_for_constant_coefficients() {
        let fields = [
            PeriodicField::identity(2).unwrap(),
            PeriodicField::new(2, Family::NonsymSkew, &[]).unwrap(),
        ];
        for field in fields {
            let g = build_grid(2, 1.0, 9).unwrap();
            let k = assemble(&field, &g).unwrap();
            let u: Vec<f64> = (0..g.num_interior())
                .map(|dof| {
                    let x = g.coordinate(g.node_of_dof(dof));
                    0.7 * x[0] - 1.3 * x[1] + 0.2
                })
                .collect();
            let ku = k.matvec(&u).unwrap();
            for (dof, r) in ku.iter().enumerate() {
                let m = g.multi_index(g.node_of_dof(dof));
                if (2..=6).contains(&m[0]) && (2..=6).contains(&m[1]) {
                    assert_abs_diff_eq!(*r, 0.0, epsilon = 1e-13);
                }
            }
        }
    }
}
