//! Periodic coefficient fields `A(x)` for the operator `-div(A grad u)`.
//!
//! Every built-in family is a trigonometric polynomial with period one in
//! each coordinate, so it is smooth (Hölder for every exponent up to one),
//! bounded, and coercive with an analytically known constant.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `d x d` matrix stored in the upper-left corner of a 3x3 array.
/// Entries outside the active block are zero.
pub type Mat3 = [[f64; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `A = I`.
    Identity,
    /// `A = a(x) I` with `a = base + amplitude * prod_i sin(2 pi f x_i)`.
    ScalarTrig,
    /// `A = diag(c_i (1 + m sin(2 pi f x_i)))`.
    DiagAniso,
    /// `A = I + s (1 + m prod_i sin(2 pi f x_i)) J` with `J` antisymmetric.
    NonsymSkew,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Identity,
        Family::ScalarTrig,
        Family::DiagAniso,
        Family::NonsymSkew,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Family::Identity => "identity",
            Family::ScalarTrig => "scalar_trig",
            Family::DiagAniso => "diag_aniso",
            Family::NonsymSkew => "nonsym_skew",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.tag() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown field family `{s}`")))
    }
}

/// A `Z^d`-periodic coefficient field with its declared structural constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicField {
    pub dim: usize,
    pub family: Family,
    pub params: Vec<f64>,
    /// Declared coercivity constant.
    pub alpha: f64,
    /// Declared bound on `|A_ij(x)|`.
    pub bound: f64,
    /// Declared Hölder exponent; metadata only.
    pub holder_exponent: f64,
    /// Evaluate `A(x)^T` instead of `A(x)`.
    #[serde(default)]
    pub transposed: bool,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(Error::Config(format!("dimension must be 2 or 3, got {dim}")))
    }
}

fn sine_product(x: &[f64], freq: f64) -> f64 {
    x.iter().map(|&xi| (2.0 * PI * freq * xi).sin()).product()
}

fn skew_unit(dim: usize) -> Mat3 {
    let mut j = [[0.0; 3]; 3];
    j[0][1] = 1.0;
    j[1][0] = -1.0;
    if dim == 3 {
        j[1][2] = 1.0;
        j[2][1] = -1.0;
    }
    j
}

impl PeriodicField {
    /// Builds a field from a family tag and its raw parameter list, deriving
    /// `alpha` and `bound` analytically. An empty parameter list selects the
    /// family defaults.
    pub fn new(dim: usize, family: Family, params: &[f64]) -> Result<Self> {
        check_dim(dim)?;
        let params = if params.is_empty() {
            Self::default_params(dim, family)
        } else {
            params.to_vec()
        };
        let expect = |n: usize| -> Result<()> {
            if params.len() == n {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{family} in d={dim} takes {n} parameters, got {}",
                    params.len()
                )))
            }
        };
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("field parameters must be finite".into()));
        }
        let (alpha, bound) = match family {
            Family::Identity => {
                expect(0)?;
                (1.0, 1.0)
            }
            Family::ScalarTrig => {
                expect(3)?;
                let (base, amp) = (params[0], params[1].abs());
                (base - amp, base + amp)
            }
            Family::DiagAniso => {
                expect(dim + 2)?;
                let amp = params[dim].abs();
                let coefs = &params[..dim];
                if coefs.iter().any(|&c| c <= 0.0) {
                    return Err(Error::Config("diag_aniso coefficients must be positive".into()));
                }
                let lo = coefs.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = coefs.iter().cloned().fold(0.0, f64::max);
                (lo * (1.0 - amp), hi * (1.0 + amp))
            }
            Family::NonsymSkew => {
                expect(3)?;
                let skew = params[0].abs() * (1.0 + params[1].abs());
                (1.0, skew.max(1.0))
            }
        };
        if alpha <= 0.0 {
            return Err(Error::NonCoercive(alpha));
        }
        Ok(Self {
            dim,
            family,
            params,
            alpha,
            bound,
            holder_exponent: 1.0,
            transposed: false,
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(dim, Family::Identity, &[])
    }

    pub fn default_params(dim: usize, family: Family) -> Vec<f64> {
        match family {
            Family::Identity => vec![],
            Family::ScalarTrig => vec![2.0, 1.0, 1.0],
            Family::DiagAniso if dim == 2 => vec![1.0, 1.3, 0.2, 1.0],
            Family::DiagAniso => vec![1.0, 1.2, 1.1, 0.2, 1.0],
            Family::NonsymSkew => vec![0.3, 0.0, 1.0],
        }
    }

    /// The field with default parameters for each family.
    pub fn builtin(dim: usize) -> Result<Vec<Self>> {
        Family::ALL.into_iter().map(|f| Self::new(dim, f, &[])).collect()
    }

    /// The field of the adjoint operator, `x -> A(x)^T`.
    pub fn transposed(&self) -> Self {
        Self {
            transposed: !self.transposed,
            ..self.clone()
        }
    }

    /// Whether `A(x)` is symmetric for every `x`, as a structural property of
    /// the family and its parameters.
    pub fn is_symmetric(&self) -> bool {
        match self.family {
            Family::NonsymSkew => self.params[0] == 0.0,
            _ => true,
        }
    }

    /// `A(x)`. Only the first `dim` coordinates of `x` are read.
    pub fn evaluate(&self, x: &[f64]) -> Mat3 {
        let d = self.dim;
        let x = &x[..d];
        let mut a = [[0.0; 3]; 3];
        match self.family {
            Family::Identity => {
                for (i, row) in a.iter_mut().enumerate().take(d) {
                    row[i] = 1.0;
                }
            }
            Family::ScalarTrig => {
                let s = self.params[0] + self.params[1] * sine_product(x, self.params[2]);
                for (i, row) in a.iter_mut().enumerate().take(d) {
                    row[i] = s;
                }
            }
            Family::DiagAniso => {
                let (amp, freq) = (self.params[d], self.params[d + 1]);
                for i in 0..d {
                    a[i][i] = self.params[i] * (1.0 + amp * (2.0 * PI * freq * x[i]).sin());
                }
            }
            Family::NonsymSkew => {
                let (s, m, freq) = (self.params[0], self.params[1], self.params[2]);
                let w = if m == 0.0 {
                    s
                } else {
                    s * (1.0 + m * sine_product(x, freq))
                };
                let j = skew_unit(d);
                for i in 0..d {
                    a[i][i] = 1.0;
                    for k in 0..d {
                        if j[i][k] != 0.0 {
                            a[i][k] = w * j[i][k];
                        }
                    }
                }
            }
        }
        if self.transposed {
            transpose(&a)
        } else {
            a
        }
    }

    /// Smallest eigenvalue of the symmetric part of `A`, minimised over the
    /// lattice `k / samples_per_axis` of the unit cell.
    ///
    /// Rejects fields whose sampled minimum is not positive, and fields whose
    /// declared `alpha` exceeds the sampled minimum.
    pub fn verify_coercivity(&self, samples_per_axis: usize) -> Result<f64> {
        if samples_per_axis < 2 {
            return Err(Error::Config("samples_per_axis must be at least 2".into()));
        }
        let d = self.dim;
        let s = samples_per_axis;
        let total = s.pow(d as u32);
        let mut min_eig = f64::INFINITY;
        let mut x = [0.0; 3];
        for flat in 0..total {
            let mut rem = flat;
            for xk in x.iter_mut().take(d).rev() {
                *xk = (rem % s) as f64 / s as f64;
                rem /= s;
            }
            let a = self.evaluate(&x);
            min_eig = min_eig.min(min_sym_eigenvalue(&a, d));
        }
        if min_eig <= 0.0 {
            return Err(Error::NonCoercive(min_eig));
        }
        if min_eig < self.alpha - 1e-12 * self.bound {
            return Err(Error::DeclaredCoercivity {
                declared: self.alpha,
                sampled: min_eig,
            });
        }
        Ok(min_eig)
    }

    /// Checks `A(x + k) = A(x)` at `trials` pseudo-random points of the unit
    /// cell and integer shifts with `|k|_inf <= 3`.
    pub fn verify_periodicity(&self, trials: usize, seed: u64) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dim;
        let tol = 1e-14 * self.bound;
        for _ in 0..trials.max(1) {
            let mut x = [0.0; 3];
            let mut shifted = [0.0; 3];
            for k in 0..d {
                x[k] = rng.gen::<f64>();
                shifted[k] = x[k] + rng.gen_range(-3i32..=3) as f64;
            }
            let (a, b) = (self.evaluate(&x), self.evaluate(&shifted));
            for i in 0..d {
                for j in 0..d {
                    if (a[i][j] - b[i][j]).abs() > tol {
                        return false;
                    }
                }
            }
        }
        true
    }
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

/// Smallest eigenvalue of `(A + A^T) / 2` restricted to the leading `d x d`
/// block. Closed form in both dimensions.
pub fn min_sym_eigenvalue(a: &Mat3, d: usize) -> f64 {
    let s = |i: usize, j: usize| 0.5 * (a[i][j] + a[j][i]);
    if d == 2 {
        let (p, q, r) = (s(0, 0), s(1, 1), s(0, 1));
        let mean = 0.5 * (p + q);
        let rad = (0.25 * (p - q) * (p - q) + r * r).sqrt();
        return mean - rad;
    }
    sym3_eigenvalues([
        [s(0, 0), s(0, 1), s(0, 2)],
        [s(1, 0), s(1, 1), s(1, 2)],
        [s(2, 0), s(2, 1), s(2, 2)],
    ])[0]
}

/// Eigenvalues of a symmetric 3x3 matrix in ascending order (trigonometric
/// closed form).
pub fn sym3_eigenvalues(m: Mat3) -> [f64; 3] {
    let off = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    let scale = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if off <= 1e-30 * scale * scale {
        let mut e = [m[0][0], m[1][1], m[2][2]];
        e.sort_by(|a, b| a.total_cmp(b));
        return e;
    }
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * off;
    let p = (p2 / 6.0).sqrt();
    let mut b = m;
    for (i, row) in b.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let largest = q + 2.0 * p * phi.cos();
    let smallest = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let middle = 3.0 * q - largest - smallest;
    [smallest, middle, largest]
}
