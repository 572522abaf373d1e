//! The coefficient matrix `A(x) = (a^{ij})` and the Riemannian metric
//! `g = A^{-1}` it induces.
//!
//! `A` is smooth, symmetric, uniformly elliptic
//! (`c1 |v|^2 <= a^{ij} v_i v_j <= c2 |v|^2`) and equal to the identity
//! outside a bounded region, so the far field is exactly flat. The built-in
//! coefficient zoo spans flat, isotropic-curved (conformal) and anisotropic
//! (wavy) regimes, each with analytic oracles used by the tests.

pub mod curvature;

use crate::fields::reduce::map_nodes;
use crate::fields::stencil::{gradient_fd, BoundaryRule, Domain};
use crate::fields::{Grid, MatrixField, ScalarField, VectorField};
use crate::mat3::{self, Mat3, Vec3};
use crate::{Error, Result};
use std::sync::Arc;

/// C-infinity step: 0 for `t <= 0`, 1 for `t >= 1`, smooth in between.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let f = (-1.0 / t).exp();
        let g = (-1.0 / (1.0 - t)).exp();
        f / (f + g)
    }
}

/// Radial plateau bump: identically 1 for `r <= r_plateau`, identically 0 for
/// `r >= r_support`, smooth monotone in between.
pub fn plateau_bump(r: f64, r_plateau: f64, r_support: f64) -> f64 {
    smooth_step((r_support - r) / (r_support - r_plateau))
}

/// Rotation by `angle` about the unit axis `n` (Rodrigues formula).
fn rotation(n: Vec3, angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    let k = 1.0 - c;
    [
        c + n[0] * n[0] * k,
        n[0] * n[1] * k - n[2] * s,
        n[0] * n[2] * k + n[1] * s,
        n[1] * n[0] * k + n[2] * s,
        c + n[1] * n[1] * k,
        n[1] * n[2] * k - n[0] * s,
        n[2] * n[0] * k - n[1] * s,
        n[2] * n[1] * k + n[0] * s,
        c + n[2] * n[2] * k,
    ]
}

/// Built-in coefficient families. All are exactly the identity outside their
/// support radius.
#[derive(Clone, Debug)]
pub enum Coefficients {
    Identity,
    /// Constant `A = diag(d)`.
    ConstantDiagonal([f64; 3]),
    /// Conformal family: the metric is `g = e^{2 psi} delta` with
    /// `psi = amplitude * bump(|x|) * sin(k x1) sin(k x2) sin(k x3)`,
    /// so `A = e^{-2 psi} I`. Inside the plateau radius the bump factor is
    /// exactly 1 and every curvature quantity has a closed form.
    Conformal { amplitude: f64, wavenumber: f64, r_plateau: f64, r_support: f64 },
    /// Anisotropic family: `A = R^T D R` with
    /// `D = diag(1, 1 + eps*bump*sin(k x1), 1 + eps*bump*cos(k x2))` and `R`
    /// a rotation about (1,1,1)/sqrt(3) by angle `twist*bump*sin(k x3)`.
    Wavy { epsilon: f64, wavenumber: f64, twist: f64, r_plateau: f64, r_support: f64 },
}

impl Coefficients {
    /// Analytic evaluation of `A(x)`.
    pub fn matrix(&self, x: &Vec3) -> Mat3 {
        match self {
            Coefficients::Identity => mat3::IDENT,
            Coefficients::ConstantDiagonal(d) => {
                [d[0], 0.0, 0.0, 0.0, d[1], 0.0, 0.0, 0.0, d[2]]
            }
            Coefficients::Conformal { amplitude, wavenumber, r_plateau, r_support } => {
                let r = mat3::norm(x);
                let chi = plateau_bump(r, *r_plateau, *r_support);
                let k = *wavenumber;
                let psi = amplitude * chi * (k * x[0]).sin() * (k * x[1]).sin() * (k * x[2]).sin();
                let f = (-2.0 * psi).exp();
                [f, 0.0, 0.0, 0.0, f, 0.0, 0.0, 0.0, f]
            }
            Coefficients::Wavy { epsilon, wavenumber, twist, r_plateau, r_support } => {
                let r = mat3::norm(x);
                let chi = plateau_bump(r, *r_plateau, *r_support);
                let k = *wavenumber;
                let d1 = 1.0 + epsilon * chi * (k * x[0]).sin();
                let d2 = 1.0 + epsilon * chi * (k * x[1]).cos();
                let axis = [1.0 / 3f64.sqrt(); 3];
                let rot = rotation(axis, twist * chi * (k * x[2]).sin());
                // R^T D R
                let mut dr = [0.0; 9];
                for i in 0..3 {
                    let s = [1.0, d1, d2][i];
                    for j in 0..3 {
                        dr[3 * i + j] = s * rot[3 * i + j];
                    }
                }
                mat3::mat_mul(&mat3::transpose(&rot), &dr)
            }
        }
    }

    /// Parse a family by name with keyword parameters (missing keys take the
    /// documented defaults).
    pub fn from_name(name: &str, get: &impl Fn(&str) -> Option<f64>) -> Result<Self> {
        let v = |key: &str, default: f64| get(key).unwrap_or(default);
        match name {
            "identity" => Ok(Coefficients::Identity),
            "constant_diagonal" => Ok(Coefficients::ConstantDiagonal([
                v("d1", 1.0),
                v("d2", 1.0),
                v("d3", 1.0),
            ])),
            "conformal" => Ok(Coefficients::Conformal {
                amplitude: v("amplitude", 0.1),
                wavenumber: v("wavenumber", std::f64::consts::PI),
                r_plateau: v("r_plateau", 0.65),
                r_support: v("r_support", 0.92),
            }),
            "wavy" => Ok(Coefficients::Wavy {
                epsilon: v("epsilon", 0.3),
                wavenumber: v("wavenumber", std::f64::consts::PI),
                twist: v("twist", 0.4),
                r_plateau: v("r_plateau", 0.65),
                r_support: v("r_support", 0.92),
            }),
            other => Err(Error::UnknownScenario(format!("unknown metric family `{other}`"))),
        }
    }
}

/// Smallest and largest eigenvalue of `A` over the region (exact symmetric
/// 3x3 eigensolve per node). Rejects asymmetric or non-positive-definite
/// nodes with the offending node index.
pub fn ellipticity_bounds(
    a: &MatrixField,
    region: impl Fn(usize) -> bool + Sync + Send,
) -> Result<(f64, f64)> {
    let grid = a.grid();
    let data = a.data();
    let per_node: Vec<std::result::Result<Option<(f64, f64)>, Error>> =
        map_nodes(grid.n_nodes(), |i| {
            if !region(i) {
                return Ok(None);
            }
            let m = &data[i];
            let asym = mat3::max_asymmetry(m);
            let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
            if asym > 1e-12 * scale {
                return Err(Error::NotSymmetric { node: i, asym });
            }
            let (eigs, _) = mat3::eigh(m);
            if eigs[0] <= 0.0 {
                return Err(Error::NotPositiveDefinite { node: i, eig: eigs[0] });
            }
            Ok(Some((eigs[0], eigs[2])))
        });
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in per_node {
        if let Some((a, b)) = r? {
            lo = lo.min(a);
            hi = hi.max(b);
        }
    }
    if !lo.is_finite() {
        return Err(Error::EmptyRegion { what: "ellipticity_bounds", param: 0.0 });
    }
    Ok((lo, hi))
}

/// The coefficient matrix together with everything derived from it: the
/// metric `g = A^{-1}`, `det(g)`, and the global ellipticity constants.
pub struct MetricField {
    coefficients: Option<Coefficients>,
    a: MatrixField,
    g: MatrixField,
    det_g: ScalarField,
    c1: f64,
    c2: f64,
}

impl MetricField {
    /// Sample a built-in family on a grid.
    pub fn build(grid: Arc<Grid>, family: &Coefficients) -> Result<Self> {
        let f = family.clone();
        let data = map_nodes(grid.n_nodes(), {
            let grid = grid.clone();
            move |i| f.matrix(&grid.pos(i))
        });
        let mut m = Self::from_matrix_field(MatrixField::from_vec(grid, data))?;
        m.coefficients = Some(family.clone());
        Ok(m)
    }

    /// Wrap an arbitrary node-sampled coefficient field, validating symmetry
    /// and positive-definiteness everywhere (the matrix is defined on all
    /// nodes — the obstacle mask restricts the PDE, not the geometry).
    pub fn from_matrix_field(a: MatrixField) -> Result<Self> {
        let grid = a.grid().clone();
        let (c1, c2) = ellipticity_bounds(&a, |_| true)?;
        let adata = a.data();
        let pairs: Vec<(Mat3, f64)> = map_nodes(grid.n_nodes(), |i| {
            let g = mat3::inv(&adata[i]);
            let det = mat3::det(&g);
            (g, det)
        });
        let mut gmats = Vec::with_capacity(pairs.len());
        let mut dets = Vec::with_capacity(pairs.len());
        for (g, d) in pairs {
            gmats.push(g);
            dets.push(d);
        }
        let g = MatrixField::from_vec(grid.clone(), gmats);
        let det_g = ScalarField::from_vec(grid, dets);
        Ok(MetricField { coefficients: None, a, g, det_g, c1, c2 })
    }

    pub fn identity(grid: Arc<Grid>) -> Self {
        Self::build(grid, &Coefficients::Identity).expect("identity matrix is SPD")
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.a.grid()
    }
    pub fn coefficients(&self) -> Option<&Coefficients> {
        self.coefficients.as_ref()
    }
    pub fn a(&self) -> &MatrixField {
        &self.a
    }
    pub fn g(&self) -> &MatrixField {
        &self.g
    }
    pub fn det_g(&self) -> &ScalarField {
        &self.det_g
    }
    /// Global ellipticity constants: `c1 |v|^2 <= a^{ij} v_i v_j <= c2 |v|^2`.
    pub fn c1(&self) -> f64 {
        self.c1
    }
    pub fn c2(&self) -> f64 {
        self.c2
    }
    #[inline]
    pub fn a_at(&self, node: usize) -> Mat3 {
        self.a.get(node)
    }
    #[inline]
    pub fn g_at(&self, node: usize) -> Mat3 {
        self.g.get(node)
    }

    /// Tangent-space inner product `<X, Y>_g = g_{ij} X^i Y^j = <A^{-1}X, Y>`.
    #[inline]
    pub fn g_inner(&self, node: usize, x: &Vec3, y: &Vec3) -> f64 {
        mat3::quad(&self.g.data()[node], x, y)
    }

    /// Dual pairing `a^{ij} x_i y_j` (for gradients/covectors; this is
    /// `<grad_g w, grad_g v>_g` when `x`, `y` are coordinate gradients).
    #[inline]
    pub fn a_inner(&self, node: usize, x: &Vec3, y: &Vec3) -> f64 {
        mat3::quad(&self.a.data()[node], x, y)
    }

    /// `A v` per node.
    pub fn apply_a(&self, v: &VectorField) -> VectorField {
        let grid = v.grid().clone();
        let adata = self.a.data();
        let vdata = v.data();
        let out = map_nodes(grid.n_nodes(), |i| mat3::mul_vec(&adata[i], &vdata[i]));
        VectorField::from_vec(grid, out)
    }

    /// Riemannian gradient `grad_g w = A * (FD gradient of w)`, one-sided at
    /// boundaries (diagnostic quality).
    pub fn g_gradient(&self, w: &ScalarField) -> VectorField {
        self.apply_a(&gradient_fd(w, Domain::FullGrid, BoundaryRule::OneSided))
    }

    /// `|grad_g w|_g^2 = a^{ij} w_i w_j` from a precomputed coordinate
    /// gradient.
    pub fn grad_norm2_g(&self, grad: &VectorField) -> ScalarField {
        let grid = grad.grid().clone();
        let adata = self.a.data();
        let vdata = grad.data();
        let out = map_nodes(grid.n_nodes(), |i| mat3::quad(&adata[i], &vdata[i], &vdata[i]));
        ScalarField::from_vec(grid, out)
    }

    /// Christoffel symbols of `g` by O(h^2) differences of the metric:
    /// `Gamma^k_{ij} = 1/2 a^{kl} (d_i g_{jl} + d_j g_{il} - d_l g_{ij})`.
    pub fn christoffels(&self) -> ChristoffelField {
        let grid = self.grid().clone();
        // d_d g as nine scalar gradients.
        let mut dg = vec![[0.0f64; 27]; grid.n_nodes()]; // [d*9 + 3i+j]
        for c in 0..9 {
            let comp = ScalarField::from_vec(
                grid.clone(),
                self.g.data().iter().map(|m| m[c]).collect(),
            );
            let gradc = gradient_fd(&comp, Domain::FullGrid, BoundaryRule::OneSided);
            for (i, row) in dg.iter_mut().enumerate() {
                let gv = gradc.data()[i];
                row[c] = gv[0];
                row[9 + c] = gv[1];
                row[18 + c] = gv[2];
            }
        }
        let adata = self.a.data();
        let data = map_nodes(grid.n_nodes(), |n| {
            let d = &dg[n];
            let a = &adata[n];
            let mut gam = [0.0f64; 27];
            for k in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        let mut s = 0.0;
                        for l in 0..3 {
                            // d[dir*9 + 3r+c] = d_dir g_{rc}
                            s += a[3 * k + l]
                                * (d[9 * i + 3 * j + l] + d[9 * j + 3 * i + l]
                                    - d[9 * l + 3 * i + j]);
                        }
                        gam[9 * k + 3 * i + j] = 0.5 * s;
                    }
                }
            }
            gam
        });
        ChristoffelField { grid, data }
    }
}

/// Node-sampled Christoffel symbols `Gamma^k_{ij}` (symmetric in `i, j`).
pub struct ChristoffelField {
    grid: Arc<Grid>,
    data: Vec<[f64; 27]>,
}

impl ChristoffelField {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    #[inline]
    pub fn gamma(&self, node: usize, k: usize, i: usize, j: usize) -> f64 {
        self.data[node][9 * k + 3 * i + j]
    }
    #[inline]
    pub fn at(&self, node: usize) -> &[f64; 27] {
        &self.data[node]
    }
}
