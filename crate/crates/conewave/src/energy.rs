//! Energy bookkeeping on truncated interior cones: total and cone-restricted
//! energies, the mantle flux computed two independent ways (direct shell
//! quadrature and cone-energy differences), the pointwise energy-balance
//! residual, boundary trace norms, and the apex tangency fit.

use std::sync::Arc;

use crate::error::Error;
use crate::fields::io::CsvWriter;
use crate::fields::reduce;
use crate::fields::stencil::{divergence_fd, gradient_fd, BoundaryRule, Domain};
use crate::fields::{Grid, ScalarField, VectorField};
use crate::geodesic::GeodesicField;
use crate::mat3;
use crate::metric::MetricField;
use crate::wave::WaveSolver;
use crate::Result;

/// Pointwise energy density `1/2 (u_t^2 + a^{ij} u_i u_j) + u^6/6`
/// (zero on solid nodes).
pub fn energy_density(m: &MetricField, u: &ScalarField, ut: &ScalarField) -> ScalarField {
    let grid = m.grid().clone();
    let grad = gradient_fd(u, Domain::Fluid, BoundaryRule::ZeroExtend);
    let vals = reduce::map_nodes(grid.n_nodes(), |i| {
        if !grid.is_fluid(i) {
            return 0.0;
        }
        let gi = grad.get(i);
        let v = ut.get(i);
        let ui = u.get(i);
        let u2 = ui * ui;
        0.5 * (v * v + m.a_inner(i, &gi, &gi)) + u2 * u2 * u2 / 6.0
    });
    ScalarField::from_vec(grid, vals)
}

/// Energy over the whole fluid region.
pub fn total_energy(m: &MetricField, u: &ScalarField, ut: &ScalarField) -> f64 {
    let e = energy_density(m, u, ut);
    let grid = m.grid();
    let vol = grid.cell_volume();
    reduce::sum_indexed(grid.n_nodes(), |i| e.get(i)) * vol
}

/// A backward light cone over the Riemannian distance field: the section at
/// time `t < t0` is `D(t) = { rho(x) <= t0 - t + delta }`. `delta = 0` is the
/// plain cone; `delta > 0` the expanded cone used for perturbed inclusions.
#[derive(Clone, Copy)]
pub struct Cone<'a> {
    gf: &'a GeodesicField,
    t0: f64,
    delta: f64,
}

impl<'a> Cone<'a> {
    pub fn new(gf: &'a GeodesicField, t0: f64) -> Self {
        Cone { gf, t0, delta: 0.0 }
    }

    pub fn expanded(gf: &'a GeodesicField, t0: f64, delta: f64) -> Self {
        Cone { gf, t0, delta }
    }

    pub fn gf(&self) -> &GeodesicField {
        self.gf
    }
    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Geodesic radius of the section at time `t`.
    pub fn radius(&self, t: f64) -> f64 {
        self.t0 - t + self.delta
    }

    /// Rejects sections that stick out of the trusted distance range.
    pub fn checked_radius(&self, t: f64) -> Result<f64> {
        let r = self.radius(t);
        if r > self.gf.rho_max() {
            return Err(Error::ConeOutsideValid { t, need: r, have: self.gf.rho_max() });
        }
        Ok(r)
    }

    pub fn contains(&self, node: usize, t: f64) -> bool {
        let r = self.gf.rho().get(node);
        r.is_finite() && r <= self.radius(t)
    }
}

/// Energy over the cone section at time `t` (zero once the section closes).
pub fn cone_energy(
    m: &MetricField,
    cone: &Cone,
    t: f64,
    u: &ScalarField,
    ut: &ScalarField,
) -> Result<f64> {
    let radius = cone.checked_radius(t)?;
    if radius <= 0.0 {
        return Ok(0.0);
    }
    let e = energy_density(m, u, ut);
    let grid = m.grid();
    let rho = cone.gf.rho();
    let vol = grid.cell_volume();
    let total = reduce::sum_indexed(grid.n_nodes(), |i| {
        let r = rho.get(i);
        if r.is_finite() && r <= radius {
            e.get(i)
        } else {
            0.0
        }
    });
    Ok(total * vol)
}

/// `int_{D(t)} u^6/6`: the part of the cone energy that signals
/// concentration.
pub fn l6_cone_mass(cone: &Cone, t: f64, u: &ScalarField) -> Result<f64> {
    let radius = cone.checked_radius(t)?;
    if radius <= 0.0 {
        return Ok(0.0);
    }
    let grid = u.grid();
    let rho = cone.gf.rho();
    let vol = grid.cell_volume();
    let total = reduce::sum_indexed(grid.n_nodes(), |i| {
        if !grid.is_fluid(i) {
            return 0.0;
        }
        let r = rho.get(i);
        if r.is_finite() && r <= radius {
            let ui = u.get(i);
            let u2 = ui * ui;
            u2 * u2 * u2 / 6.0
        } else {
            0.0
        }
    });
    Ok(total * vol)
}

/// One sampled time level of a run: owned copies so ledgers outlive the
/// solver state.
pub struct Snapshot {
    pub t: f64,
    pub u: ScalarField,
    pub ut: ScalarField,
}

impl Snapshot {
    pub fn of(solver: &WaveSolver) -> Snapshot {
        Snapshot { t: solver.time(), u: solver.u().clone(), ut: solver.velocity() }
    }
}

/// Result of the direct mantle quadrature, with its own bookkeeping of how
/// many time slabs found no shell nodes (reported, never silently dropped).
#[derive(Clone, Copy, Debug)]
pub struct FluxDirect {
    pub value: f64,
    pub slabs: usize,
    pub empty_slabs: usize,
}

/// Direct quadrature of the outward energy flux through the cone mantle
/// between the first and last snapshot times. The mantle is the graph
/// `{ rho(x) = t0 - t }`, so the space-time surface integral reduces exactly
/// to a volume integral over the annulus `radius(t_last) < rho <=
/// radius(t_first)`; each node is binned to the snapshot whose time is
/// nearest to its own crossing time `t0 - rho(x)` and weighted by the plain
/// cell volume. The integrand is `e(u) - u_t a^{ij} u_j rho_i`, nonnegative
/// up to discretization because `|grad rho|_g = 1`.
pub fn flux_direct(m: &MetricField, cone: &Cone, snaps: &[Snapshot]) -> Result<FluxDirect> {
    if snaps.len() < 2 {
        return Err(Error::EmptyRegion { what: "mantle snapshot series", param: snaps.len() as f64 });
    }
    for w in snaps.windows(2) {
        if w[1].t <= w[0].t {
            return Err(Error::TimeOutsideSeries { t: w[1].t, lo: w[0].t, hi: f64::INFINITY });
        }
    }
    cone.checked_radius(snaps[0].t)?;
    let grid = m.grid();
    let rho = cone.gf.rho();
    let grad_rho = cone.gf.grad_rho();
    let vol = grid.cell_volume();
    let mut value = 0.0;
    let mut empty = 0;
    let last = snaps.len() - 1;
    for (k, snap) in snaps.iter().enumerate() {
        // Slab of crossing times nearest to snapshot k (midpoints between
        // neighbors; outer edges at the series ends). radius() decreases in
        // t, so the time slab [t_lo, t_hi) maps to the shell
        // (radius(t_hi), radius(t_lo)].
        let t_lo = if k == 0 { snap.t } else { 0.5 * (snaps[k - 1].t + snap.t) };
        let t_hi = if k == last { snap.t } else { 0.5 * (snap.t + snaps[k + 1].t) };
        let (r_hi, r_lo) = (cone.radius(t_lo), cone.radius(t_hi));
        let grad_u = gradient_fd(&snap.u, Domain::Fluid, BoundaryRule::ZeroExtend);
        let flux = m.apply_a(&grad_u);
        let include = |r: f64| {
            if k == 0 {
                r > r_lo && r <= r_hi
            } else {
                r > r_lo && r <= r_hi
            }
        };
        let slab = reduce::sum_indexed(grid.n_nodes(), |i| {
            if !grid.is_fluid(i) {
                return 0.0;
            }
            let r = rho.get(i);
            if !r.is_finite() || !include(r) {
                return 0.0;
            }
            let gi = grad_u.get(i);
            let v = snap.ut.get(i);
            let ui = snap.u.get(i);
            let u2 = ui * ui;
            let dens = 0.5 * (v * v + m.a_inner(i, &gi, &gi)) + u2 * u2 * u2 / 6.0;
            dens - v * mat3::dot(&flux.get(i), &grad_rho.get(i))
        });
        if slab == 0.0 && r_hi > r_lo {
            empty += 1;
        }
        value += slab * vol;
    }
    Ok(FluxDirect { value, slabs: snaps.len(), empty_slabs: empty })
}

/// The same flux from the energy identity: what the cone lost between the
/// two snapshot times.
pub fn flux_from_identity(
    m: &MetricField,
    cone: &Cone,
    a: &Snapshot,
    b: &Snapshot,
) -> Result<f64> {
    if b.t <= a.t {
        return Err(Error::TimeOutsideSeries { t: b.t, lo: a.t, hi: f64::INFINITY });
    }
    let ea = cone_energy(m, cone, a.t, &a.u, &a.ut)?;
    let eb = cone_energy(m, cone, b.t, &b.u, &b.ut)?;
    Ok(ea - eb)
}

/// Which identity `density_identity_residual` checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResidualMode {
    /// `d/dt e(u) - div(u_t A grad u)` alone: vanishes at second order along
    /// an actual unforced trajectory.
    Solution,
    /// The same expression minus `u_t (u_tt - div(A grad u) + u^5)`: vanishes
    /// at second order for arbitrary smooth fields, solution or not.
    Algebraic,
}

/// Centered residual of the energy-balance identity from five consecutive
/// `u` levels spaced `dt` apart (the residual lives at the middle level).
/// Returns the residual field and its grid L2 norm.
pub fn density_identity_residual(
    m: &MetricField,
    levels: &[&ScalarField; 5],
    dt: f64,
    linear: bool,
    mode: ResidualMode,
) -> Result<(ScalarField, f64)> {
    let grid = m.grid().clone();
    for l in levels {
        crate::fields::same_grid(m.grid(), l.grid())?;
    }
    let n = grid.n_nodes();
    let diff = |a: &ScalarField, b: &ScalarField, s: f64| -> ScalarField {
        let vals = reduce::map_nodes(n, |i| (a.get(i) - b.get(i)) * s);
        ScalarField::from_vec(grid.clone(), vals)
    };
    let ut_m = diff(levels[2], levels[0], 1.0 / (2.0 * dt));
    let ut_0 = diff(levels[3], levels[1], 1.0 / (2.0 * dt));
    let ut_p = diff(levels[4], levels[2], 1.0 / (2.0 * dt));

    let dens = |u: &ScalarField, v: &ScalarField| -> ScalarField { energy_density(m, u, v) };
    let e_m = dens(levels[1], &ut_m);
    let e_p = dens(levels[3], &ut_p);

    let grad0 = gradient_fd(levels[2], Domain::Fluid, BoundaryRule::ZeroExtend);
    let a_grad0 = m.apply_a(&grad0);
    let mut carried = VectorField::zeros(grid.clone());
    for i in 0..n {
        let g = a_grad0.get(i);
        let v = ut_0.get(i);
        carried.set(i, [v * g[0], v * g[1], v * g[2]]);
    }
    let div_carried = divergence_fd(&carried, Domain::Fluid, BoundaryRule::ZeroExtend);
    let lap0 = divergence_fd(&a_grad0, Domain::Fluid, BoundaryRule::ZeroExtend);

    let dt2 = dt * dt;
    let vals = reduce::map_nodes(n, |i| {
        if !grid.is_fluid(i) {
            return 0.0;
        }
        let lhs = (e_p.get(i) - e_m.get(i)) / (2.0 * dt) - div_carried.get(i);
        match mode {
            ResidualMode::Solution => lhs,
            ResidualMode::Algebraic => {
                let u0 = levels[2].get(i);
                let utt = (levels[3].get(i) - 2.0 * u0 + levels[1].get(i)) / dt2;
                let mut pde = utt - lap0.get(i);
                if !linear {
                    let u2 = u0 * u0;
                    pde += u2 * u2 * u0;
                }
                lhs - ut_0.get(i) * pde
            }
        }
    });
    let field = ScalarField::from_vec(grid.clone(), vals);
    let vol = grid.cell_volume();
    let l2 = (reduce::sum_indexed(n, |i| {
        let r = field.get(i);
        r * r
    }) * vol)
        .sqrt();
    Ok((field, l2))
}

/// Squared L2 norm of the obstacle-boundary normal trace, with the staircase
/// surface measure `(exposed faces) * h^2` per boundary node. Stable under
/// refinement (the staircase measure converges to a fixed anisotropic
/// surface integral), which is what the ratio diagnostics need.
pub fn trace_norm_sq(u: &ScalarField) -> Result<f64> {
    let grid = u.grid().clone();
    let trace = crate::wave::boundary_normal_trace(u)?;
    let h = grid.spacing();
    let face_area = (h[0] * h[1] * h[2]).powf(2.0 / 3.0);
    let mut total = 0.0;
    for (pos, &b) in grid.boundary_nodes().iter().enumerate() {
        let w = grid.exposed_faces()[pos] as f64 * face_area;
        let v = trace.get(b);
        total += v * v * w;
    }
    Ok(total)
}

/// Apex tangency fit. For an apex on the obstacle boundary, geodesics leave
/// tangentially, and `grad_g(rho^2/2) . nu` measured on the wall vanishes
/// like `rho^2`. Samples sit a height `sd(x)` off the wall, so both the
/// sample and the apex are projected to the surface at first order using the
/// measured metric (`nu^T g nu` is the leading normal second derivative of
/// `rho^2/2`); the corrected magnitudes are fitted as `C rho^p` by log-log
/// least squares over boundary nodes with `2h <= rho <= rho_fit`.
#[derive(Clone, Copy, Debug)]
pub struct TangencyReport {
    pub samples: usize,
    pub p: f64,
    pub c: f64,
}

pub fn tangency_check(gf: &GeodesicField, m: &MetricField, rho_fit: f64) -> Result<TangencyReport> {
    let grid = m.grid().clone();
    if !grid.obstacle().is_some() {
        return Err(Error::NoObstacle);
    }
    let apex = gf.x0();
    let d0 = grid.obstacle().signed_distance(&apex);
    let h = grid.h_max();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &b in grid.boundary_nodes() {
        let r = gf.rho().get(b);
        if !r.is_finite() || r < 2.0 * h || r > rho_fit {
            continue;
        }
        let x = grid.pos(b);
        let nu = grid.obstacle().normal_into_fluid(&x);
        // grad_g(rho^2/2) = rho * A grad rho.
        let v_raw = r * mat3::dot(&gf.grad_g_rho().get(b), &nu);
        let q = mat3::quad(&m.g_at(b), &nu, &nu);
        let v = (v_raw - (grid.obstacle().signed_distance(&x) - d0) * q).abs();
        if v > 1e-14 {
            xs.push(r.ln());
            ys.push(v.ln());
        }
    }
    if xs.len() < 8 {
        return Err(Error::EmptyRegion { what: "tangency samples", param: xs.len() as f64 });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let p = sxy / sxx;
    let c = (my - p * mx).exp();
    Ok(TangencyReport { samples: xs.len(), p, c })
}

/// Time series of the cone diagnostics, one row per sampled time. The flux
/// columns are cumulative from the first sampled time, so monotonicity reads
/// directly off the file.
pub struct ConeLedger {
    rows: Vec<[f64; 7]>,
}

pub const CONE_LEDGER_HEADER: [&str; 7] =
    ["t", "E_total", "E_cone", "flux_identity", "flux_direct", "l6_mass", "trace_accum"];

impl ConeLedger {
    pub fn new() -> Self {
        ConeLedger { rows: Vec::new() }
    }

    pub fn push(&mut self, row: [f64; 7]) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[[f64; 7]] {
        &self.rows
    }

    pub fn write(&self, path: &std::path::Path, config_text: &str) -> Result<()> {
        let mut w = CsvWriter::create(path, config_text, &CONE_LEDGER_HEADER)?;
        for row in &self.rows {
            w.row(row)?;
        }
        w.finish()
    }
}

impl Default for ConeLedger {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Obstacle;
    use crate::geodesic::{self, SolveOptions};
    use crate::metric::Coefficients;
    use crate::wave::{cfl_dt, smooth_bump, InitialData, WaveParams};

    fn flat(n: usize) -> Arc<MetricField> {
        let grid = Grid::cube(n, 1.0, Obstacle::None).unwrap();
        Arc::new(MetricField::build(grid, &Coefficients::Identity).unwrap())
    }

    fn flat_cone_field(m: &MetricField) -> GeodesicField {
        geodesic::from_distance_fn(m, [0.0; 3], |x| mat3::norm(x)).unwrap()
    }

    #[test]
    fn zero_state_has_zero_energy_everywhere() {
        let m = flat(17);
        let grid = m.grid().clone();
        let z = ScalarField::zeros(grid.clone());
        assert_eq!(total_energy(&m, &z, &z), 0.0);
        let gf = flat_cone_field(&m);
        let cone = Cone::new(&gf, 0.8);
        assert_eq!(cone_energy(&m, &cone, 0.0, &z, &z).unwrap(), 0.0);
        assert_eq!(l6_cone_mass(&cone, 0.0, &z).unwrap(), 0.0);
    }

    #[test]
    fn velocity_only_data_integrates_to_half_its_square() {
        let m = flat(33);
        let grid = m.grid().clone();
        let u = ScalarField::zeros(grid.clone());
        let g = smooth_bump(grid.clone(), [0.0; 3], 0.4, 1.3);
        let want = 0.5
            * reduce::sum_indexed(grid.n_nodes(), |i| g.get(i) * g.get(i))
            * grid.cell_volume();
        let got = total_energy(&m, &u, &g);
        assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
    }

    #[test]
    fn cone_energy_nested_in_total_and_expanded_cone() {
        let m = flat(33);
        let grid = m.grid().clone();
        let gf = flat_cone_field(&m);
        let u = smooth_bump(grid.clone(), [0.1, 0.0, 0.0], 0.35, 0.9);
        let v = smooth_bump(grid.clone(), [0.0, 0.1, 0.0], 0.3, -0.7);
        let cone = Cone::new(&gf, 0.6);
        let e_cone = cone_energy(&m, &cone, 0.1, &u, &v).unwrap();
        let e_tot = total_energy(&m, &u, &v);
        assert!(e_cone > 0.0 && e_cone <= e_tot);
        let wide = Cone::expanded(&gf, 0.6, 0.15);
        let e_wide = cone_energy(&m, &wide, 0.1, &u, &v).unwrap();
        assert!(e_wide >= e_cone, "expansion must not lose nodes");
        let l6 = l6_cone_mass(&cone, 0.1, &u).unwrap();
        assert!(l6 <= e_cone, "sixth-power mass exceeds the cone energy");
        // Past the tip the section is empty.
        assert_eq!(cone_energy(&m, &cone, 0.7, &u, &v).unwrap(), 0.0);
        // Sections beyond the trusted distance range are rejected.
        assert!(matches!(
            cone_energy(&m, &Cone::new(&gf, 5.0), 0.0, &u, &v),
            Err(Error::ConeOutsideValid { .. })
        ));
    }

    #[test]
    fn total_energy_is_conserved_over_a_light_crossing() {
        let m = flat(33);
        let grid = m.grid().clone();
        let f = smooth_bump(grid.clone(), [0.0; 3], 0.35, 1.0);
        let data = InitialData::new(f, ScalarField::zeros(grid)).unwrap();
        let mut s = WaveSolver::new(m.clone(), &data, cfl_dt(&m), WaveParams::nonlinear()).unwrap();
        let e0 = total_energy(&m, s.u(), &s.velocity());
        s.run_until(2.0).unwrap();
        let e1 = total_energy(&m, s.u(), &s.velocity());
        let drift = (e1 - e0).abs() / e0;
        assert!(drift <= 1e-3, "energy drift {drift:.3e} over one crossing");
    }

    #[test]
    fn cone_series_monotone_and_fluxes_agree() {
        let m = flat(33);
        let grid = m.grid().clone();
        let gf = flat_cone_field(&m);
        let f = smooth_bump(grid.clone(), [0.0; 3], 0.3, 1.2);
        let g = smooth_bump(grid.clone(), [0.05, 0.0, 0.0], 0.25, 0.8);
        let data = InitialData::new(f, g).unwrap();
        let mut s = WaveSolver::new(m.clone(), &data, cfl_dt(&m), WaveParams::nonlinear()).unwrap();
        let cone = Cone::new(&gf, 0.8);
        let mut snaps = vec![Snapshot::of(&s)];
        let sample_every = (grid.h_max() / s.dt()).round().max(1.0) as usize;
        while s.time() < 0.5 {
            s.step_n(sample_every).unwrap();
            snaps.push(Snapshot::of(&s));
        }
        let e0 = total_energy(&m, &snaps[0].u, &snaps[0].ut);
        // Cone energies nonincreasing up to the quadrature tolerance.
        let eps = 1e-2 * e0;
        let mut prev = f64::INFINITY;
        for snap in &snaps {
            let e = cone_energy(&m, &cone, snap.t, &snap.u, &snap.ut).unwrap();
            assert!(e <= prev + eps, "cone energy rose: {e} after {prev}");
            prev = e;
        }
        // Adjacent-pair identity fluxes are nonnegative up to tolerance and
        // add up exactly to the whole-interval flux.
        let mut acc = 0.0;
        for w in snaps.windows(2) {
            let fl = flux_from_identity(&m, &cone, &w[0], &w[1]).unwrap();
            assert!(fl >= -eps, "identity flux {fl} < -{eps}");
            acc += fl;
        }
        let whole =
            flux_from_identity(&m, &cone, snaps.first().unwrap(), snaps.last().unwrap()).unwrap();
        assert!((acc - whole).abs() <= 1e-9 * e0.max(1.0), "additivity defect {}", acc - whole);
        // Direct mantle quadrature within 5% of the energy drop.
        let direct = flux_direct(&m, &cone, &snaps).unwrap();
        assert_eq!(direct.empty_slabs, 0, "unexpected empty shells");
        assert!(
            (direct.value - whole).abs() <= 0.05 * e0,
            "flux mismatch: direct {} vs identity {} (E0 {e0})",
            direct.value,
            whole
        );
        // Direct flux likewise nonnegative up to tolerance.
        assert!(direct.value >= -eps);
    }

    #[test]
    fn flux_vanishes_as_the_window_shrinks_to_the_tip() {
        let m = flat(33);
        let grid = m.grid().clone();
        let gf = flat_cone_field(&m);
        let f = smooth_bump(grid.clone(), [0.0; 3], 0.3, 1.0);
        let data = InitialData::new(f, ScalarField::zeros(grid.clone())).unwrap();
        let mut s = WaveSolver::new(m.clone(), &data, cfl_dt(&m), WaveParams::nonlinear()).unwrap();
        let cone = Cone::new(&gf, 0.7);
        let t_final = 0.5;
        let mut snaps = vec![Snapshot::of(&s)];
        let sample_every = (grid.h_max() / s.dt()).round().max(1.0) as usize;
        while s.time() < t_final {
            s.step_n(sample_every).unwrap();
            snaps.push(Snapshot::of(&s));
        }
        // Flux over [s, t_final] as s -> t_final: nonincreasing in s up to
        // quadrature tolerance, ending near zero.
        let e0 = total_energy(&m, &snaps[0].u, &snaps[0].ut);
        let eps = 1e-2 * e0;
        let last = snaps.last().unwrap();
        let mut start_vals = Vec::new();
        for snap in &snaps[..snaps.len() - 1] {
            start_vals.push(flux_from_identity(&m, &cone, snap, last).unwrap());
        }
        for w in start_vals.windows(2) {
            assert!(w[1] <= w[0] + eps, "tail flux rose: {} -> {}", w[0], w[1]);
        }
        let tail = *start_vals.last().unwrap();
        assert!(
            tail.abs() <= 0.1 * start_vals[0].max(eps),
            "tail flux {tail} not small vs {}",
            start_vals[0]
        );
    }

    /// Five levels of a smooth closed-form field that is NOT a solution.
    fn analytic_levels(
        grid: &Arc<Grid>,
        dt: f64,
        f: impl Fn(f64, &[f64; 3]) -> f64 + Copy + Sync + Send,
    ) -> Vec<ScalarField> {
        (-2i32..=2)
            .map(|k| ScalarField::from_fn(grid.clone(), |x| f(k as f64 * dt, x)))
            .collect()
    }

    #[test]
    fn balance_residual_converges_for_arbitrary_smooth_fields() {
        let test_field = |t: f64, x: &[f64; 3]| {
            let r = mat3::norm(x);
            let env = crate::wave::bump_profile(r / 0.6);
            (1.3 * t + 2.0 * x[0] - 1.0 * x[1]).sin() * env
                + 0.4 * (0.7 * t - 1.5 * x[2]).cos() * env
        };
        let mut l2s = Vec::new();
        for n in [17usize, 33, 65] {
            let m = flat(n);
            let grid = m.grid().clone();
            let dt = 0.5 * grid.h_min();
            let levels = analytic_levels(&grid, dt, test_field);
            let refs: [&ScalarField; 5] =
                [&levels[0], &levels[1], &levels[2], &levels[3], &levels[4]];
            let (_field, l2) =
                density_identity_residual(&m, &refs, dt, false, ResidualMode::Algebraic).unwrap();
            l2s.push(l2);
        }
        let slope = (l2s[0] / l2s[2]).log2() / 2.0;
        assert!(slope >= 1.8, "balance residual slope {slope:.2} ({l2s:?})");
    }

    #[test]
    fn balance_residual_vanishes_along_a_trajectory() {
        let mut l2s = Vec::new();
        for n in [17usize, 33] {
            let m = flat(n);
            let grid = m.grid().clone();
            let f = smooth_bump(grid.clone(), [0.0; 3], 0.35, 1.0);
            let data = InitialData::new(f, ScalarField::zeros(grid.clone())).unwrap();
            let dt = 0.25 * grid.h_min() / (3.0f64).sqrt();
            let mut s = WaveSolver::new(m.clone(), &data, dt, WaveParams::nonlinear()).unwrap();
            let mut hist = vec![s.u().clone()];
            for _ in 0..4 {
                s.step().unwrap();
                hist.push(s.u().clone());
            }
            let refs: [&ScalarField; 5] = [&hist[0], &hist[1], &hist[2], &hist[3], &hist[4]];
            let (_field, l2) =
                density_identity_residual(&m, &refs, dt, false, ResidualMode::Solution).unwrap();
            l2s.push(l2);
        }
        assert!(
            l2s[1] <= 0.35 * l2s[0],
            "trajectory residual did not shrink: {l2s:?}"
        );
    }

    #[test]
    fn trace_norm_zero_without_signal_and_positive_with_it() {
        let grid =
            Grid::cube(33, 1.0, Obstacle::Sphere { center: [0.0; 3], radius: 0.3 }).unwrap();
        let z = ScalarField::zeros(grid.clone());
        assert_eq!(trace_norm_sq(&z).unwrap(), 0.0);
        let u = ScalarField::from_fn(grid.clone(), |x| {
            grid.obstacle().signed_distance(x).max(0.0)
        });
        let norm = trace_norm_sq(&u).unwrap();
        // The staircase measure of the sphere lies between its area and
        // sqrt(3) times it; the trace is ~1, so the norm sits in that band.
        let area = 4.0 * std::f64::consts::PI * 0.3 * 0.3;
        assert!(norm > 0.5 * area && norm < 2.5 * area, "trace norm {norm} vs area {area}");
    }

    #[test]
    fn tangency_exponent_for_an_apex_on_the_sphere() {
        let obstacle = Obstacle::Sphere { center: [0.0; 3], radius: 0.3 };
        let grid = Grid::cube(65, 1.0, obstacle).unwrap();
        let m = MetricField::build(grid.clone(), &Coefficients::Identity).unwrap();
        // Apex at the boundary node nearest the surface point (0.3, 0, 0).
        let mut apex = [0.3, 0.0, 0.0];
        let mut best = f64::INFINITY;
        for &b in grid.boundary_nodes() {
            let x = grid.pos(b);
            let sd = grid.obstacle().signed_distance(&x);
            let off = mat3::norm(&[x[0] - 0.3, x[1], x[2]]);
            if off < 3.0 * grid.h_max() && sd < best {
                best = sd;
                apex = x;
            }
        }
        let opts = SolveOptions {
            obstacle_mode: geodesic::ObstacleMode::Masked,
            source_ball_abs: Some(0.25),
            ..SolveOptions::default()
        };
        let gf = geodesic::solve_eikonal(&m, apex, opts).unwrap();
        let rep = tangency_check(&gf, &m, 0.2).unwrap();
        assert!(rep.samples >= 20, "only {} samples", rep.samples);
        assert!(rep.p >= 1.5, "tangency exponent {:.2} (C = {:.3e})", rep.p, rep.c);
    }
}
