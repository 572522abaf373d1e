//! Sectional curvature probes.
//!
//! The Riemann tensor is assembled per node from the Christoffel symbols of
//! `g` (themselves O(h^2) differences of the metric):
//!
//! ```text
//! R^r_{s mu nu} = d_mu Gamma^r_{nu s} - d_nu Gamma^r_{mu s}
//!                 + Gamma^r_{mu l} Gamma^l_{nu s} - Gamma^r_{nu l} Gamma^l_{mu s}
//! ```
//!
//! and the sectional curvature of the plane spanned by X, Y is
//! `K = g(R(X,Y)Y, X) / (g(X,X) g(Y,Y) - g(X,Y)^2)`.
//!
//! The curvature bound `a = sqrt(max |K|)` feeds the two-sided Laplacian and
//! Hessian comparison bands for the distance function.

use super::{ChristoffelField, MetricField};
use crate::fields::reduce::map_nodes;
use crate::mat3::{self, Vec3};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};

#[derive(Clone, Copy, Debug)]
pub struct CurvatureSample {
    pub node: usize,
    /// 0,1,2 = coordinate planes (xy, xz, yz); 3+ = random planes.
    pub plane: usize,
    pub kappa: f64,
}

#[derive(Clone, Debug)]
pub struct CurvatureReport {
    pub samples: Vec<CurvatureSample>,
    pub max_abs_kappa: f64,
    /// `a = sqrt(max |kappa|)`, so every sample satisfies -a^2 <= k <= a^2.
    pub bound_a: f64,
}

/// Central difference of one Christoffel component along `axis`.
#[inline]
fn dgamma(
    gam: &ChristoffelField,
    grid: &crate::fields::Grid,
    node: usize,
    axis: usize,
    comp: usize,
) -> f64 {
    let p = grid.neighbor(node, axis, 1).expect("stencil checked");
    let m = grid.neighbor(node, axis, -1).expect("stencil checked");
    (gam.at(p)[comp] - gam.at(m)[comp]) / (2.0 * grid.spacing()[axis])
}

/// Sectional curvatures over `region` nodes: the three coordinate planes plus
/// `random_planes` seeded random planes per node. Every region node must have
/// all six axis neighbors inside the grid and outside the obstacle.
pub fn curvature(
    m: &MetricField,
    region: impl Fn(usize) -> bool + Sync + Send,
    random_planes: usize,
    seed: u64,
) -> Result<CurvatureReport> {
    let grid = m.grid().clone();
    let gam = m.christoffels();

    // Pre-scan: stencil availability (one cell of halo for d Gamma).
    for i in 0..grid.n_nodes() {
        if !region(i) {
            continue;
        }
        for axis in 0..3 {
            for dir in [-1isize, 1] {
                match grid.neighbor(i, axis, dir) {
                    Some(j) if grid.is_fluid(j) => {}
                    _ => return Err(Error::InsufficientStencil { node: i }),
                }
            }
        }
    }

    let gdata = m.g().data();
    let per_node: Vec<Vec<CurvatureSample>> = map_nodes(grid.n_nodes(), |i| {
        if !region(i) {
            return Vec::new();
        }
        // Riemann components R^r_{s mu nu}, indexed r*27 + s*9 + mu*3 + nu.
        let mut riem = [0.0f64; 81];
        for r in 0..3 {
            for s in 0..3 {
                for mu in 0..3 {
                    for nu in 0..3 {
                        let mut v = dgamma(&gam, &grid, i, mu, 9 * r + 3 * nu + s)
                            - dgamma(&gam, &grid, i, nu, 9 * r + 3 * mu + s);
                        for l in 0..3 {
                            v += gam.gamma(i, r, mu, l) * gam.gamma(i, l, nu, s)
                                - gam.gamma(i, r, nu, l) * gam.gamma(i, l, mu, s);
                        }
                        riem[27 * r + 9 * s + 3 * mu + nu] = v;
                    }
                }
            }
        }
        let gm = &gdata[i];
        let sectional = |x: &Vec3, y: &Vec3| -> Option<f64> {
            // W^r = R^r_{s mu nu} Y^s X^mu Y^nu
            let mut w = [0.0f64; 3];
            for r in 0..3 {
                let mut acc = 0.0;
                for s in 0..3 {
                    for mu in 0..3 {
                        for nu in 0..3 {
                            acc += riem[27 * r + 9 * s + 3 * mu + nu] * y[s] * x[mu] * y[nu];
                        }
                    }
                }
                w[r] = acc;
            }
            let num = mat3::quad(gm, &w, x);
            let gxx = mat3::quad(gm, x, x);
            let gyy = mat3::quad(gm, y, y);
            let gxy = mat3::quad(gm, x, y);
            let den = gxx * gyy - gxy * gxy;
            if den <= 1e-3 * gxx * gyy {
                return None; // nearly degenerate plane
            }
            Some(num / den)
        };
        let mut out = Vec::with_capacity(3 + random_planes);
        let axes = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for (pid, (a, b)) in [(0usize, 1usize), (0, 2), (1, 2)].iter().enumerate() {
            if let Some(k) = sectional(&axes[*a], &axes[*b]) {
                out.push(CurvatureSample { node: i, plane: pid, kappa: k });
            }
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut pid = 3;
        while pid < 3 + random_planes {
            let rv = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec3 {
                [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
            };
            let x = rv(&mut rng);
            let y = rv(&mut rng);
            if let Some(k) = sectional(&x, &y) {
                out.push(CurvatureSample { node: i, plane: pid, kappa: k });
                pid += 1;
            }
        }
        out
    });

    let mut samples = Vec::new();
    for mut v in per_node {
        samples.append(&mut v);
    }
    if samples.is_empty() {
        return Err(Error::EmptyRegion { what: "curvature", param: 0.0 });
    }
    let max_abs_kappa = samples.iter().fold(0.0f64, |s, c| s.max(c.kappa.abs()));
    Ok(CurvatureReport { samples, max_abs_kappa, bound_a: max_abs_kappa.sqrt() })
}

/// Closed-form sectional curvature of the conformal metric
/// `g = e^{2 psi} delta` with `psi = amp sin(kx1) sin(kx2) sin(kx3)` (the
/// plateau form of the conformal family), for the coordinate plane `(a, b)`:
///
/// `K_ab = e^{-2 psi} ( -psi_aa - psi_bb + psi_a^2 + psi_b^2 - |grad psi|^2 )`
///
/// with every derivative analytic. Fully independent of the FD pipeline.
pub fn conformal_plane_curvature(amp: f64, k: f64, x: &Vec3, a: usize, b: usize) -> f64 {
    let s = [(k * x[0]).sin(), (k * x[1]).sin(), (k * x[2]).sin()];
    let c = [(k * x[0]).cos(), (k * x[1]).cos(), (k * x[2]).cos()];
    let psi = amp * s[0] * s[1] * s[2];
    let d = [
        amp * k * c[0] * s[1] * s[2],
        amp * k * s[0] * c[1] * s[2],
        amp * k * s[0] * s[1] * c[2],
    ];
    // psi_ii = -k^2 psi for every axis, so -psi_aa - psi_bb = 2 k^2 psi.
    let grad2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    (-2.0 * psi).exp() * (2.0 * k * k * psi + d[a] * d[a] + d[b] * d[b] - grad2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Grid, Obstacle};
    use crate::metric::Coefficients;

    #[test]
    fn flat_and_constant_metrics_have_zero_curvature() {
        let g = Grid::cube(17, 0.5, Obstacle::None).unwrap();
        for fam in [Coefficients::Identity, Coefficients::ConstantDiagonal([2.0, 0.5, 1.5])] {
            let m = MetricField::build(g.clone(), &fam).unwrap();
            let gg = g.clone();
            let rep = curvature(&m, move |i| gg.interior_margin(i, 2), 2, 42).unwrap();
            assert!(rep.max_abs_kappa <= 1e-6, "{fam:?}: {}", rep.max_abs_kappa);
            assert!(rep.bound_a <= 1e-3);
        }
    }

    #[test]
    fn conformal_curvature_matches_closed_form_oracle() {
        // h = 1/64; samples restricted to where the bump factor is exactly 1
        // (with stencil halo), so psi is the trig product the oracle assumes.
        let g = Grid::cube(65, 0.5, Obstacle::None).unwrap();
        assert!((g.h_max() - 1.0 / 64.0).abs() < 1e-15);
        let amp = 0.1;
        let k = std::f64::consts::PI;
        let m = MetricField::build(
            g.clone(),
            &Coefficients::Conformal {
                amplitude: amp,
                wavenumber: k,
                r_plateau: 0.65,
                r_support: 0.92,
            },
        )
        .unwrap();
        let gg = g.clone();
        let h = g.h_max();
        let rep = curvature(
            &m,
            move |i| {
                gg.interior_margin(i, 2)
                    && crate::mat3::norm(&gg.pos(i)) + 3.0 * h <= 0.65
            },
            0,
            1,
        )
        .unwrap();
        let planes = [(0usize, 1usize), (0, 2), (1, 2)];
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for smp in &rep.samples {
            let (a, b) = planes[smp.plane];
            let oracle = conformal_plane_curvature(amp, k, &g.pos(smp.node), a, b);
            worst = worst.max((smp.kappa - oracle).abs());
            scale = scale.max(oracle.abs());
        }
        assert!(scale > 0.5, "oracle curvature unexpectedly small: {scale}");
        assert!(worst <= 0.05 * scale, "sup error {worst} vs scale {scale}");
    }

    #[test]
    fn report_bound_dominates_every_sample() {
        let g = Grid::cube(17, 0.25, Obstacle::None).unwrap();
        let m = MetricField::build(
            g.clone(),
            &Coefficients::Wavy {
                epsilon: 0.3,
                wavenumber: std::f64::consts::PI,
                twist: 0.4,
                r_plateau: 0.65,
                r_support: 0.92,
            },
        )
        .unwrap();
        let gg = g.clone();
        let rep = curvature(&m, move |i| gg.interior_margin(i, 2), 3, 9).unwrap();
        let a2 = rep.bound_a * rep.bound_a;
        for s in &rep.samples {
            assert!(s.kappa.abs() <= a2 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn region_touching_obstacle_is_rejected() {
        let g = Grid::cube(17, 0.5, Obstacle::Sphere { center: [0.0; 3], radius: 0.2 }).unwrap();
        let m = MetricField::identity(g.clone());
        // Obstacle-adjacent fluid nodes have solid stencil neighbors.
        let gg = g.clone();
        let err = curvature(
            &m,
            move |i| gg.kind(i) == crate::fields::NodeKind::Boundary,
            0,
            1,
        );
        assert!(matches!(err, Err(Error::InsufficientStencil { .. })));
    }
}
