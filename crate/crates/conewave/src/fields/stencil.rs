//! Finite-difference stencils.
//!
//! Two boundary rules serve two masters:
//! - `OneSided`: second-order one-sided differences where a neighbor is
//!   missing. Accurate up to the boundary; used by diagnostics (energies,
//!   multiplier fields, traces).
//! - `ZeroExtend`: central differences with missing values read as zero.
//!   Under Dirichlet masking (fields vanishing on boundary/face/solid nodes)
//!   the gradient is antisymmetric and the composition
//!   `divergence(A * gradient(u))` is symmetric negative semidefinite, which
//!   is what keeps the leapfrog energy bounded. Used by the wave operator.
//!
//! The divergence is flux-form with half-node averaging,
//! `(V_d(i+1/2) - V_d(i-1/2))/h_d` with `V_d(i+1/2) = (V_d(i)+V_d(i+1))/2`;
//! away from boundaries this telescopes to the central difference of each
//! component, so the kernel below applies the matching per-component rule.

use super::{Grid, MatrixField, NodeKind, ScalarField, VectorField};
use crate::fields::reduce::map_nodes;

/// Which nodes carry field values for differencing purposes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    /// Every node of the box (used by distance fields, which extend through
    /// the obstacle).
    FullGrid,
    /// Only fluid nodes; solid neighbors count as missing.
    Fluid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryRule {
    OneSided,
    ZeroExtend,
}

#[inline]
fn value(grid: &Grid, w: &[f64], node: usize, axis: usize, dir: isize, domain: Domain) -> Option<f64> {
    let j = grid.neighbor(node, axis, dir)?;
    if domain == Domain::Fluid && grid.kind(j) == NodeKind::Solid {
        return None;
    }
    Some(w[j])
}

/// First derivative of `w` along `axis` at `node`.
pub fn deriv_axis(
    grid: &Grid,
    w: &[f64],
    node: usize,
    axis: usize,
    domain: Domain,
    rule: BoundaryRule,
) -> f64 {
    let h = grid.spacing()[axis];
    let minus = value(grid, w, node, axis, -1, domain);
    let plus = value(grid, w, node, axis, 1, domain);
    match rule {
        BoundaryRule::ZeroExtend => {
            (plus.unwrap_or(0.0) - minus.unwrap_or(0.0)) / (2.0 * h)
        }
        BoundaryRule::OneSided => match (minus, plus) {
            (Some(m), Some(p)) => (p - m) / (2.0 * h),
            (None, Some(p)) => match value(grid, w, node, axis, 2, domain) {
                Some(pp) => (-3.0 * w[node] + 4.0 * p - pp) / (2.0 * h),
                None => (p - w[node]) / h,
            },
            (Some(m), None) => match value(grid, w, node, axis, -2, domain) {
                Some(mm) => (3.0 * w[node] - 4.0 * m + mm) / (2.0 * h),
                None => (w[node] - m) / h,
            },
            (None, None) => 0.0,
        },
    }
}

/// Gradient field of a scalar.
pub fn gradient_fd(w: &ScalarField, domain: Domain, rule: BoundaryRule) -> VectorField {
    let grid = w.grid().clone();
    let data = w.data();
    let g = grid.clone();
    let out = map_nodes(grid.n_nodes(), move |i| {
        [
            deriv_axis(&g, data, i, 0, domain, rule),
            deriv_axis(&g, data, i, 1, domain, rule),
            deriv_axis(&g, data, i, 2, domain, rule),
        ]
    });
    VectorField::from_vec(grid, out)
}

/// Serial gradient (bench baseline; same arithmetic as [`gradient_fd`]).
pub fn gradient_fd_serial(w: &ScalarField, domain: Domain, rule: BoundaryRule) -> VectorField {
    let grid = w.grid().clone();
    let data = w.data();
    let out = (0..grid.n_nodes())
        .map(|i| {
            [
                deriv_axis(&grid, data, i, 0, domain, rule),
                deriv_axis(&grid, data, i, 1, domain, rule),
                deriv_axis(&grid, data, i, 2, domain, rule),
            ]
        })
        .collect();
    VectorField::from_vec(grid, out)
}

/// Divergence of a vector field (flux-form; see module docs).
pub fn divergence_fd(v: &VectorField, domain: Domain, rule: BoundaryRule) -> ScalarField {
    let grid = v.grid().clone();
    let data = v.data();
    let g = grid.clone();
    let out = map_nodes(grid.n_nodes(), move |i| {
        let mut s = 0.0;
        for axis in 0..3 {
            // Component view: the closure below reads component `axis`.
            let h = g.spacing()[axis];
            let read = |dir: isize| -> Option<f64> {
                let j = g.neighbor(i, axis, dir)?;
                if domain == Domain::Fluid && g.kind(j) == NodeKind::Solid {
                    return None;
                }
                Some(data[j][axis])
            };
            let minus = read(-1);
            let plus = read(1);
            s += match rule {
                BoundaryRule::ZeroExtend => (plus.unwrap_or(0.0) - minus.unwrap_or(0.0)) / (2.0 * h),
                BoundaryRule::OneSided => match (minus, plus) {
                    (Some(m), Some(p)) => (p - m) / (2.0 * h),
                    (None, Some(p)) => match read(2) {
                        Some(pp) => (-3.0 * data[i][axis] + 4.0 * p - pp) / (2.0 * h),
                        None => (p - data[i][axis]) / h,
                    },
                    (Some(m), None) => match read(-2) {
                        Some(mm) => (3.0 * data[i][axis] - 4.0 * m + mm) / (2.0 * h),
                        None => (data[i][axis] - m) / h,
                    },
                    (None, None) => 0.0,
                },
            };
        }
        s
    });
    ScalarField::from_vec(grid, out)
}

/// Central-difference Hessian. Returns the (symmetric) matrix field and a
/// per-node flag that is true where the full stencil (axis neighbors and the
/// four in-plane diagonals per cross term) was available; entries at flagged
/// `false` nodes fall back to lower order and should be masked downstream.
pub fn hessian_fd(w: &ScalarField, domain: Domain) -> (MatrixField, Vec<bool>) {
    let grid = w.grid().clone();
    let data = w.data();
    let g = grid.clone();
    let pairs: Vec<([f64; 9], bool)> = map_nodes(grid.n_nodes(), move |i| {
        let mut m = [0.0f64; 9];
        let mut ok = true;
        let h = g.spacing();
        // Diagonal entries.
        for d in 0..3 {
            let minus = value(&g, data, i, d, -1, domain);
            let plus = value(&g, data, i, d, 1, domain);
            m[3 * d + d] = match (minus, plus) {
                (Some(a), Some(b)) => (a - 2.0 * data[i] + b) / (h[d] * h[d]),
                (None, Some(b)) => {
                    ok = false;
                    match (value(&g, data, i, d, 2, domain), value(&g, data, i, d, 3, domain)) {
                        (Some(b2), Some(b3)) => {
                            (2.0 * data[i] - 5.0 * b + 4.0 * b2 - b3) / (h[d] * h[d])
                        }
                        (Some(b2), None) => (data[i] - 2.0 * b + b2) / (h[d] * h[d]),
                        _ => 0.0,
                    }
                }
                (Some(a), None) => {
                    ok = false;
                    match (value(&g, data, i, d, -2, domain), value(&g, data, i, d, -3, domain)) {
                        (Some(a2), Some(a3)) => {
                            (2.0 * data[i] - 5.0 * a + 4.0 * a2 - a3) / (h[d] * h[d])
                        }
                        (Some(a2), None) => (data[i] - 2.0 * a + a2) / (h[d] * h[d]),
                        _ => 0.0,
                    }
                }
                (None, None) => {
                    ok = false;
                    0.0
                }
            };
        }
        // Cross terms from the four plane diagonals.
        let corner = |d: usize, e: usize, sd: isize, se: isize| -> Option<f64> {
            let j = g.neighbor(i, d, sd)?;
            let k = g.neighbor(j, e, se)?;
            if domain == Domain::Fluid && g.kind(k) == NodeKind::Solid {
                return None;
            }
            Some(data[k])
        };
        for d in 0..3 {
            for e in (d + 1)..3 {
                let v = match (
                    corner(d, e, 1, 1),
                    corner(d, e, 1, -1),
                    corner(d, e, -1, 1),
                    corner(d, e, -1, -1),
                ) {
                    (Some(pp), Some(pm), Some(mp), Some(mm)) => {
                        (pp - pm - mp + mm) / (4.0 * h[d] * h[e])
                    }
                    _ => {
                        ok = false;
                        0.0
                    }
                };
                m[3 * d + e] = v;
                m[3 * e + d] = v;
            }
        }
        (m, ok)
    });
    let mut mats = Vec::with_capacity(pairs.len());
    let mut flags = Vec::with_capacity(pairs.len());
    for (m, f) in pairs {
        mats.push(m);
        flags.push(f);
    }
    (MatrixField::from_vec(grid, mats), flags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Grid, Obstacle};

    /// One-sided second-order differences are exact on quadratics, so the
    /// gradient of a quadratic is exact at every node including faces.
    #[test]
    fn gradient_exact_on_quadratics_everywhere() {
        let g = Grid::cube(9, 1.0, Obstacle::None).unwrap();
        let w = ScalarField::from_fn(g.clone(), |x| {
            x[0] * x[0] + 0.5 * x[0] * x[1] - x[2] * x[2] + 2.0 * x[1]
        });
        let grad = gradient_fd(&w, Domain::FullGrid, BoundaryRule::OneSided);
        for i in 0..g.n_nodes() {
            let x = g.pos(i);
            let want = [2.0 * x[0] + 0.5 * x[1], 0.5 * x[0] + 2.0, -2.0 * x[2]];
            let got = grad.get(i);
            for d in 0..3 {
                assert!(
                    (got[d] - want[d]).abs() < 1e-12,
                    "node {i} axis {d}: {} vs {}",
                    got[d],
                    want[d]
                );
            }
        }
    }

    #[test]
    fn gradient_second_order_on_trig_field() {
        let mut errs = Vec::new();
        for n in [17usize, 33, 65] {
            let g = Grid::cube(n, 1.0, Obstacle::None).unwrap();
            let w = ScalarField::from_fn(g.clone(), |x| {
                (std::f64::consts::PI * x[0]).sin()
                    * (std::f64::consts::PI * x[1]).cos()
                    * (0.5 * std::f64::consts::PI * x[2]).sin()
            });
            let grad = gradient_fd(&w, Domain::FullGrid, BoundaryRule::OneSided);
            let mut emax = 0.0f64;
            for i in 0..g.n_nodes() {
                let x = g.pos(i);
                let p = std::f64::consts::PI;
                let want = [
                    p * (p * x[0]).cos() * (p * x[1]).cos() * (0.5 * p * x[2]).sin(),
                    -p * (p * x[0]).sin() * (p * x[1]).sin() * (0.5 * p * x[2]).sin(),
                    0.5 * p * (p * x[0]).sin() * (p * x[1]).cos() * (0.5 * p * x[2]).cos(),
                ];
                let got = grad.get(i);
                for d in 0..3 {
                    emax = emax.max((got[d] - want[d]).abs());
                }
            }
            errs.push(emax);
        }
        println!("gradient errors: {errs:?}");
        for k in 1..errs.len() {
            let order = (errs[k - 1] / errs[k]).log2();
            println!("observed order {order:.2}");
            assert!(order > 1.8, "order {order} too low");
        }
    }

    #[test]
    fn hessian_exact_on_quadratics_in_interior() {
        let g = Grid::cube(11, 1.0, Obstacle::None).unwrap();
        let w = ScalarField::from_fn(g.clone(), |x| {
            x[0] * x[0] - 2.0 * x[0] * x[2] + 3.0 * x[1] * x[2] + x[1]
        });
        let (hess, ok) = hessian_fd(&w, Domain::FullGrid);
        let want = [2.0, 0.0, -2.0, 0.0, 0.0, 3.0, -2.0, 3.0, 0.0];
        for i in 0..g.n_nodes() {
            if !ok[i] {
                continue;
            }
            let got = hess.get(i);
            for k in 0..9 {
                assert!((got[k] - want[k]).abs() < 1e-10, "node {i} entry {k}");
            }
        }
        // Interior nodes must all have full stencils on an unmasked grid.
        for i in 0..g.n_nodes() {
            if g.interior_margin(i, 1) {
                assert!(ok[i]);
            }
        }
    }

    /// With zero-extension and Dirichlet masking the composed operator
    /// L = div(grad .) is symmetric and negative semidefinite: check
    /// <Lu, v> = <u, Lv> and <Lu, u> <= 0 on random masked fields.
    #[test]
    fn zero_extend_composition_is_symmetric_nsd() {
        use rand::{Rng, SeedableRng};
        let g = Grid::cube(13, 1.0, Obstacle::Sphere { center: [0.2, 0.0, -0.1], radius: 0.3 })
            .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut random_masked = || {
            let mut f = ScalarField::zeros(g.clone());
            for i in 0..g.n_nodes() {
                if !g.is_dirichlet(i) {
                    f.set(i, rng.gen_range(-1.0..1.0));
                }
            }
            f
        };
        let apply = |f: &ScalarField| {
            let grad = gradient_fd(f, Domain::Fluid, BoundaryRule::ZeroExtend);
            divergence_fd(&grad, Domain::Fluid, BoundaryRule::ZeroExtend)
        };
        let inner = |a: &ScalarField, b: &ScalarField| {
            let ad = a.data().to_vec();
            let bd = b.data().to_vec();
            let gg = g.clone();
            crate::fields::reduce::sum_indexed(g.n_nodes(), move |i| {
                if gg.is_fluid(i) {
                    ad[i] * bd[i]
                } else {
                    0.0
                }
            })
        };
        for _ in 0..5 {
            let u = random_masked();
            let v = random_masked();
            let lu = apply(&u);
            let lv = apply(&v);
            let luv = inner(&lu, &v);
            let ulv = inner(&u, &lv);
            assert!(
                (luv - ulv).abs() <= 1e-9 * luv.abs().max(ulv.abs()).max(1.0),
                "asymmetry: {luv} vs {ulv}"
            );
            let luu = inner(&lu, &u);
            assert!(luu <= 1e-9, "positive energy pairing {luu}");
        }
    }

    #[test]
    fn divergence_of_linear_vector_field_is_exact() {
        let g = Grid::cube(9, 1.0, Obstacle::None).unwrap();
        let mut v = VectorField::zeros(g.clone());
        for i in 0..g.n_nodes() {
            let x = g.pos(i);
            v.set(i, [2.0 * x[0] + x[1], -x[1], 3.0 * x[2] + 0.25 * x[0]]);
        }
        let div = divergence_fd(&v, Domain::FullGrid, BoundaryRule::OneSided);
        for i in 0..g.n_nodes() {
            assert!((div.get(i) - 4.0).abs() < 1e-12, "node {i}: {}", div.get(i));
        }
    }
}
