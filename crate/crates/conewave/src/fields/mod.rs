//! Uniform 3-D grids with an obstacle mask, plus scalar/vector/matrix fields
//! over them. Node order is x-fastest: `idx = ix + nx*(iy + ny*iz)`.
//!
//! Node classes:
//! - `Solid`: inside the obstacle (outside the computational domain).
//! - `Face`: on the outer box shell; held at zero by the wave solver.
//! - `Boundary`: fluid node with a solid 6-neighbor; the discrete trace of
//!   the obstacle surface. Also held at zero (Dirichlet).
//! - `Interior`: everything else.

pub mod io;
pub mod reduce;
pub mod stencil;

use crate::error::Error;
use crate::Result;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum NodeKind {
    Interior = 0,
    Boundary = 1,
    Face = 2,
    Solid = 3,
}

/// Analytic obstacle shapes. The signed distance is positive in the fluid.
#[derive(Clone, Debug, PartialEq)]
pub enum Obstacle {
    None,
    Sphere { center: [f64; 3], radius: f64 },
    /// Solid half-space `x[axis] <= level`; the boundary is a flat face.
    HalfSpace { axis: usize, level: f64 },
}

impl Obstacle {
    /// Signed distance to the obstacle surface, positive in the fluid.
    pub fn signed_distance(&self, x: &[f64; 3]) -> f64 {
        match self {
            Obstacle::None => f64::INFINITY,
            Obstacle::Sphere { center, radius } => {
                let d = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
                crate::mat3::norm(&d) - radius
            }
            Obstacle::HalfSpace { axis, level } => x[*axis] - level,
        }
    }

    /// Unit normal pointing into the fluid (the gradient of the signed
    /// distance). Only meaningful near the surface.
    pub fn normal_into_fluid(&self, x: &[f64; 3]) -> [f64; 3] {
        match self {
            Obstacle::None => [0.0, 0.0, 0.0],
            Obstacle::Sphere { center, .. } => {
                let d = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
                let n = crate::mat3::norm(&d).max(1e-300);
                [d[0] / n, d[1] / n, d[2] / n]
            }
            Obstacle::HalfSpace { axis, .. } => {
                let mut n = [0.0, 0.0, 0.0];
                n[*axis] = 1.0;
                n
            }
        }
    }

    pub fn is_some(&self) -> bool {
        !matches!(self, Obstacle::None)
    }
}

#[derive(Debug)]
pub struct Grid {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    obstacle: Obstacle,
    kind: Vec<NodeKind>,
    n_fluid: usize,
    boundary_nodes: Vec<usize>,
    /// Per entry of `boundary_nodes`: number of solid 6-neighbors (exposed
    /// face count, used as the staircase area weight).
    exposed_faces: Vec<u8>,
}

impl Grid {
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        obstacle: Obstacle,
    ) -> Result<Arc<Grid>> {
        for d in 0..3 {
            if dims[d] < 5 {
                return Err(Error::GridMismatch("each axis needs at least 5 nodes"));
            }
            if !(spacing[d] > 0.0) {
                return Err(Error::GridMismatch("spacing must be positive"));
            }
        }
        let n = dims[0] * dims[1] * dims[2];
        let mut kind = vec![NodeKind::Interior; n];
        let mut n_fluid = 0usize;
        for iz in 0..dims[2] {
            for iy in 0..dims[1] {
                for ix in 0..dims[0] {
                    let i = ix + dims[0] * (iy + dims[1] * iz);
                    let x = [
                        origin[0] + ix as f64 * spacing[0],
                        origin[1] + iy as f64 * spacing[1],
                        origin[2] + iz as f64 * spacing[2],
                    ];
                    if obstacle.signed_distance(&x) < 0.0 {
                        kind[i] = NodeKind::Solid;
                    } else {
                        n_fluid += 1;
                        let on_face = ix == 0
                            || iy == 0
                            || iz == 0
                            || ix == dims[0] - 1
                            || iy == dims[1] - 1
                            || iz == dims[2] - 1;
                        if on_face {
                            kind[i] = NodeKind::Face;
                        }
                    }
                }
            }
        }
        // Mark fluid nodes with solid 6-neighbors as boundary.
        let mut boundary_nodes = Vec::new();
        let mut exposed_faces = Vec::new();
        for iz in 0..dims[2] {
            for iy in 0..dims[1] {
                for ix in 0..dims[0] {
                    let i = ix + dims[0] * (iy + dims[1] * iz);
                    if kind[i] == NodeKind::Solid {
                        continue;
                    }
                    let mut exposed = 0u8;
                    let idx3 = [ix as isize, iy as isize, iz as isize];
                    for axis in 0..3 {
                        for dir in [-1isize, 1] {
                            let mut j = idx3;
                            j[axis] += dir;
                            if j[axis] < 0 || j[axis] >= dims[axis] as isize {
                                continue;
                            }
                            let nj = j[0] as usize + dims[0] * (j[1] as usize + dims[1] * j[2] as usize);
                            if kind[nj] == NodeKind::Solid {
                                exposed += 1;
                            }
                        }
                    }
                    if exposed > 0 && kind[i] == NodeKind::Interior {
                        kind[i] = NodeKind::Boundary;
                    }
                    if exposed > 0 && kind[i] != NodeKind::Face {
                        boundary_nodes.push(i);
                        exposed_faces.push(exposed);
                    }
                }
            }
        }
        let grid = Grid {
            dims,
            spacing,
            origin,
            obstacle,
            kind,
            n_fluid,
            boundary_nodes,
            exposed_faces,
        };
        grid.check_connected()?;
        Ok(Arc::new(grid))
    }

    /// Cube grid on `[-half_width, half_width]^3` with `n` nodes per axis.
    pub fn cube(n: usize, half_width: f64, obstacle: Obstacle) -> Result<Arc<Grid>> {
        let h = 2.0 * half_width / (n - 1) as f64;
        Grid::new([n, n, n], [h, h, h], [-half_width, -half_width, -half_width], obstacle)
    }

    /// The fluid region must be one connected component; a mask that pinches
    /// the domain apart breaks every conservation statement downstream.
    fn check_connected(&self) -> Result<()> {
        let n = self.n_nodes();
        let seed = match (0..n).find(|&i| self.kind[i] != NodeKind::Solid) {
            Some(s) => s,
            None => return Err(Error::GridMismatch("no fluid nodes at all")),
        };
        let mut seen = vec![false; n];
        let mut stack = vec![seed];
        seen[seed] = true;
        let mut count = 0usize;
        while let Some(i) = stack.pop() {
            count += 1;
            for axis in 0..3 {
                for dir in [-1isize, 1] {
                    if let Some(j) = self.neighbor(i, axis, dir) {
                        if !seen[j] && self.kind[j] != NodeKind::Solid {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        if count != self.n_fluid {
            return Err(Error::GridMismatch("fluid region is disconnected"));
        }
        Ok(())
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    #[inline]
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }
    #[inline]
    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }
    #[inline]
    pub fn obstacle(&self) -> &Obstacle {
        &self.obstacle
    }
    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }
    #[inline]
    pub fn n_fluid(&self) -> usize {
        self.n_fluid
    }
    #[inline]
    pub fn h_min(&self) -> f64 {
        self.spacing[0].min(self.spacing[1]).min(self.spacing[2])
    }
    #[inline]
    pub fn h_max(&self) -> f64 {
        self.spacing[0].max(self.spacing[1]).max(self.spacing[2])
    }
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    #[inline]
    pub fn idx(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.dims[0] * (iy + self.dims[1] * iz)
    }

    #[inline]
    pub fn coords(&self, node: usize) -> [usize; 3] {
        let ix = node % self.dims[0];
        let rest = node / self.dims[0];
        [ix, rest % self.dims[1], rest / self.dims[1]]
    }

    #[inline]
    pub fn pos(&self, node: usize) -> [f64; 3] {
        let c = self.coords(node);
        [
            self.origin[0] + c[0] as f64 * self.spacing[0],
            self.origin[1] + c[1] as f64 * self.spacing[1],
            self.origin[2] + c[2] as f64 * self.spacing[2],
        ]
    }

    /// Node index offset by `dir` along `axis`, or None outside the box.
    #[inline]
    pub fn neighbor(&self, node: usize, axis: usize, dir: isize) -> Option<usize> {
        let c = self.coords(node);
        let v = c[axis] as isize + dir;
        if v < 0 || v >= self.dims[axis] as isize {
            return None;
        }
        let stride = match axis {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        };
        Some((node as isize + dir * stride as isize) as usize)
    }

    #[inline]
    pub fn kind(&self, node: usize) -> NodeKind {
        self.kind[node]
    }
    #[inline]
    pub fn is_fluid(&self, node: usize) -> bool {
        self.kind[node] != NodeKind::Solid
    }
    /// Nodes pinned to zero by the wave solver.
    #[inline]
    pub fn is_dirichlet(&self, node: usize) -> bool {
        self.kind[node] != NodeKind::Interior
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }
    pub fn exposed_faces(&self) -> &[u8] {
        &self.exposed_faces
    }

    /// Nearest node to a point (clamped into the box).
    pub fn node_nearest(&self, x: &[f64; 3]) -> usize {
        let mut c = [0usize; 3];
        for d in 0..3 {
            let t = ((x[d] - self.origin[d]) / self.spacing[d]).round();
            c[d] = t.clamp(0.0, (self.dims[d] - 1) as f64) as usize;
        }
        self.idx(c[0], c[1], c[2])
    }

    /// Distance from a point to the outer box boundary (minimum over faces).
    pub fn distance_to_outer(&self, x: &[f64; 3]) -> f64 {
        let mut d = f64::INFINITY;
        for axis in 0..3 {
            let lo = self.origin[axis];
            let hi = self.origin[axis] + (self.dims[axis] - 1) as f64 * self.spacing[axis];
            d = d.min(x[axis] - lo).min(hi - x[axis]);
        }
        d
    }

    /// True if every node within `margin` cells (Chebyshev) of `node` is a
    /// plain interior node.
    pub fn interior_margin(&self, node: usize, margin: usize) -> bool {
        let c = self.coords(node);
        let m = margin as isize;
        for dz in -m..=m {
            for dy in -m..=m {
                for dx in -m..=m {
                    let j = [c[0] as isize + dx, c[1] as isize + dy, c[2] as isize + dz];
                    for d in 0..3 {
                        if j[d] < 0 || j[d] >= self.dims[d] as isize {
                            return false;
                        }
                    }
                    let nj = j[0] as usize + self.dims[0] * (j[1] as usize + self.dims[1] * j[2] as usize);
                    if self.kind[nj] != NodeKind::Interior {
                        return false;
                    }
                }
            }
        }
        true
    }
}

macro_rules! field_common {
    ($name:ident, $elem:ty, $zero:expr) => {
        #[derive(Clone, Debug)]
        pub struct $name {
            grid: Arc<Grid>,
            data: Vec<$elem>,
        }

        impl $name {
            pub fn zeros(grid: Arc<Grid>) -> Self {
                let n = grid.n_nodes();
                Self { grid, data: vec![$zero; n] }
            }

            pub fn from_vec(grid: Arc<Grid>, data: Vec<$elem>) -> Self {
                assert_eq!(data.len(), grid.n_nodes(), "field length != node count");
                Self { grid, data }
            }

            #[inline]
            pub fn grid(&self) -> &Arc<Grid> {
                &self.grid
            }
            #[inline]
            pub fn data(&self) -> &[$elem] {
                &self.data
            }
            #[inline]
            pub fn data_mut(&mut self) -> &mut [$elem] {
                &mut self.data
            }
            #[inline]
            pub fn get(&self, node: usize) -> $elem {
                self.data[node]
            }
            #[inline]
            pub fn set(&mut self, node: usize, v: $elem) {
                self.data[node] = v;
            }
        }
    };
}

field_common!(ScalarField, f64, 0.0);
field_common!(VectorField, [f64; 3], [0.0; 3]);
field_common!(MatrixField, [f64; 9], [0.0; 9]);

impl ScalarField {
    /// Build from a per-node function of position (parallel when enabled).
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64; 3]) -> f64 + Sync + Send) -> Self {
        let g = grid.clone();
        let data = reduce::map_nodes(grid.n_nodes(), move |i| f(&g.pos(i)));
        Self { grid, data }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Trilinear interpolation at an arbitrary point (clamped to the box).
    pub fn trilinear(&self, x: &[f64; 3]) -> f64 {
        let g = &self.grid;
        let dims = g.dims();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for d in 0..3 {
            let t = (x[d] - g.origin()[d]) / g.spacing()[d];
            let t = t.clamp(0.0, (dims[d] - 1) as f64 - 1e-12);
            let f = t.floor();
            base[d] = f as usize;
            frac[d] = t - f;
        }
        let mut acc = 0.0;
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    let w = (if dx == 0 { 1.0 - frac[0] } else { frac[0] })
                        * (if dy == 0 { 1.0 - frac[1] } else { frac[1] })
                        * (if dz == 0 { 1.0 - frac[2] } else { frac[2] });
                    let node = g.idx(
                        (base[0] + dx).min(dims[0] - 1),
                        (base[1] + dy).min(dims[1] - 1),
                        (base[2] + dz).min(dims[2] - 1),
                    );
                    acc += w * self.data[node];
                }
            }
        }
        acc
    }
}

impl VectorField {
    pub fn component(&self, axis: usize) -> ScalarField {
        let data = self.data.iter().map(|v| v[axis]).collect();
        ScalarField::from_vec(self.grid.clone(), data)
    }
}

/// Verify two fields live on the same grid (pointer or shape equality).
pub fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    if Arc::ptr_eq(a, b) || (a.dims() == b.dims() && a.spacing() == b.spacing() && a.origin() == b.origin()) {
        Ok(())
    } else {
        Err(Error::GridMismatch("fields live on different grids"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip_is_x_fastest() {
        let g = Grid::cube(8, 1.0, Obstacle::None).unwrap();
        assert_eq!(g.idx(1, 0, 0), 1);
        assert_eq!(g.idx(0, 1, 0), 8);
        assert_eq!(g.idx(0, 0, 1), 64);
        for node in [0usize, 5, 63, 200, 511] {
            let c = g.coords(node);
            assert_eq!(g.idx(c[0], c[1], c[2]), node);
        }
    }

    #[test]
    fn sphere_mask_classifies_nodes() {
        let g = Grid::cube(33, 1.0, Obstacle::Sphere { center: [0.0; 3], radius: 0.3 }).unwrap();
        let mut counts = [0usize; 4];
        for i in 0..g.n_nodes() {
            counts[g.kind(i) as usize] += 1;
        }
        assert!(counts[NodeKind::Solid as usize] > 0, "sphere should cover some nodes");
        assert!(counts[NodeKind::Boundary as usize] > 0, "sphere should have a boundary shell");
        assert_eq!(
            counts[NodeKind::Solid as usize]
                + counts[NodeKind::Boundary as usize]
                + counts[NodeKind::Face as usize]
                + counts[NodeKind::Interior as usize],
            g.n_nodes()
        );
        assert_eq!(g.n_fluid(), g.n_nodes() - counts[NodeKind::Solid as usize]);
        // Solid ball volume should approximate (4/3) pi r^3 within a few
        // staircase cells.
        let vol = counts[NodeKind::Solid as usize] as f64 * g.cell_volume();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 0.3f64.powi(3);
        assert!((vol - exact).abs() < 0.2 * exact, "vol {vol} vs {exact}");
    }

    #[test]
    fn obstacle_covering_everything_is_rejected() {
        let err = Grid::cube(9, 0.2, Obstacle::Sphere { center: [0.0; 3], radius: 10.0 });
        assert!(err.is_err());
    }

    #[test]
    fn trilinear_reproduces_linear_fields() {
        let g = Grid::cube(9, 1.0, Obstacle::None).unwrap();
        let f = ScalarField::from_fn(g.clone(), |x| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[2]);
        for p in [[0.1, 0.2, -0.3], [0.49, -0.51, 0.0], [-0.9, 0.9, 0.77]] {
            let want = 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[2];
            assert!((f.trilinear(&p) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_to_outer_is_min_face_distance() {
        let g = Grid::cube(9, 1.0, Obstacle::None).unwrap();
        assert!((g.distance_to_outer(&[0.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((g.distance_to_outer(&[0.75, 0.0, 0.0]) - 0.25).abs() < 1e-15);
    }
}
