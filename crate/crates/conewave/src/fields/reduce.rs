//! Deterministic reductions and node-parallel map helpers.
//!
//! Sums use a fixed-topology pairwise tree: node contributions are summed
//! sequentially inside fixed-size blocks, block sums are combined by
//! recursive halving. The tree shape depends only on the node count, never
//! on the thread count, so parallel and serial runs produce bit-identical
//! results — which is what makes "same CSV bytes at any --threads" possible.

use super::{Grid, ScalarField};
use crate::error::Error;
use crate::Result;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Nodes per sequentially-summed leaf block. Fixed: part of the tree shape.
const BLOCK: usize = 4096;

fn block_count(n: usize) -> usize {
    n.div_ceil(BLOCK)
}

fn block_sum<F: Fn(usize) -> f64>(b: usize, n: usize, f: &F) -> f64 {
    let lo = b * BLOCK;
    let hi = ((b + 1) * BLOCK).min(n);
    let mut s = 0.0;
    for i in lo..hi {
        s += f(i);
    }
    s
}

/// Recursive halving over block sums; left-biased midpoint, data independent.
fn pairwise(s: &[f64]) -> f64 {
    match s.len() {
        0 => 0.0,
        1 => s[0],
        len => {
            let mid = len.div_ceil(2);
            pairwise(&s[..mid]) + pairwise(&s[mid..])
        }
    }
}

/// Serial tree sum of `f(0) + ... + f(n-1)` (fixed topology).
pub fn sum_indexed_serial<F: Fn(usize) -> f64 + Sync + Send>(n: usize, f: F) -> f64 {
    let sums: Vec<f64> = (0..block_count(n)).map(|b| block_sum(b, n, &f)).collect();
    pairwise(&sums)
}

/// Parallel tree sum; bit-identical to [`sum_indexed_serial`] by construction.
#[cfg(feature = "parallel")]
pub fn sum_indexed_parallel<F: Fn(usize) -> f64 + Sync + Send>(n: usize, f: F) -> f64 {
    let sums: Vec<f64> = (0..block_count(n))
        .into_par_iter()
        .map(|b| block_sum(b, n, &f))
        .collect();
    pairwise(&sums)
}

/// Tree sum with the crate's default execution policy.
pub fn sum_indexed<F: Fn(usize) -> f64 + Sync + Send>(n: usize, f: F) -> f64 {
    #[cfg(feature = "parallel")]
    {
        sum_indexed_parallel(n, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        sum_indexed_serial(n, f)
    }
}

/// Serial node map.
pub fn map_nodes_serial<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Parallel node map (embarrassingly parallel; per-node values are
/// independent, so determinism is free).
#[cfg(feature = "parallel")]
pub fn map_nodes_parallel<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

/// Node map with the crate's default execution policy.
pub fn map_nodes<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        map_nodes_parallel(n, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_nodes_serial(n, f)
    }
}

/// Integral of `w` over the nodes selected by `region`, as a full-cell
/// quadrature `sum w_i * hx*hy*hz`. The region must consist of fluid nodes;
/// a masked node in the region is an error.
pub fn integrate<F: Fn(usize) -> bool + Sync>(w: &ScalarField, region: F) -> Result<f64> {
    let grid = w.grid();
    // Cheap pre-scan for mask violations so the hot sum stays branch-light.
    for i in 0..grid.n_nodes() {
        if region(i) && !grid.is_fluid(i) {
            return Err(Error::InsufficientStencil { node: i });
        }
    }
    Ok(integrate_unchecked(w, region))
}

/// As [`integrate`] but trusting the region to avoid masked nodes
/// (contributions from masked nodes are dropped silently).
pub fn integrate_unchecked<F: Fn(usize) -> bool + Sync>(w: &ScalarField, region: F) -> f64 {
    let grid = w.grid().clone();
    let data = w.data();
    let raw = sum_indexed(grid.n_nodes(), |i| {
        if region(i) && grid.is_fluid(i) {
            data[i]
        } else {
            0.0
        }
    });
    raw * grid.cell_volume()
}

/// Integral of a per-node integrand closure over fluid nodes in `region`.
/// Used by the energy ledger so densities never need materializing.
pub fn integrate_fn<G, F>(grid: &Grid, region: G, integrand: F) -> f64
where
    G: Fn(usize) -> bool + Sync,
    F: Fn(usize) -> f64 + Sync,
{
    let raw = sum_indexed(grid.n_nodes(), |i| {
        if region(i) && grid.is_fluid(i) {
            integrand(i)
        } else {
            0.0
        }
    });
    raw * grid.cell_volume()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Grid, Obstacle, ScalarField};

    #[test]
    fn constant_over_counted_region_is_exact() {
        let g = Grid::cube(9, 1.0, Obstacle::None).unwrap();
        let w = ScalarField::from_fn(g.clone(), |_| 1.0);
        let region = |i: usize| i < 100;
        let v = integrate(&w, region).unwrap();
        assert_eq!(v, 100.0 * g.cell_volume());
    }

    #[test]
    fn masked_region_is_an_error() {
        let g = Grid::cube(17, 1.0, Obstacle::Sphere { center: [0.0; 3], radius: 0.4 }).unwrap();
        let w = ScalarField::from_fn(g.clone(), |_| 1.0);
        let all = |_i: usize| true;
        assert!(integrate(&w, all).is_err());
        // Restricting to fluid nodes is fine.
        let g2 = g.clone();
        assert!(integrate(&w, move |i| g2.is_fluid(i)).is_ok());
    }

    /// With dyadic-rational data every partial sum is exact, so additivity
    /// over arbitrarily interleaved disjoint regions must hold bit-for-bit.
    #[test]
    fn additive_over_interleaved_disjoint_regions() {
        let g = Grid::new([16, 16, 16], [0.25, 0.25, 0.25], [0.0; 3], Obstacle::None).unwrap();
        let w = ScalarField::from_fn(g.clone(), |x| {
            (4.0 * x[0]).round() + 2.0 * (4.0 * x[1]).round() - 0.5 * (4.0 * x[2]).round()
        });
        let r1 = |i: usize| i % 3 == 0;
        let r2 = |i: usize| i % 3 == 1;
        let both = |i: usize| i % 3 != 2;
        let v1 = integrate(&w, r1).unwrap();
        let v2 = integrate(&w, r2).unwrap();
        let v12 = integrate(&w, both).unwrap();
        assert_eq!(v12, v1 + v2, "exact additivity on dyadic data");
    }

    #[test]
    fn tree_sum_matches_naive_on_smooth_data() {
        let n = 100_000;
        let vals: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.1).sin() / 7.0).collect();
        let tree = sum_indexed_serial(n, |i| vals[i]);
        let naive: f64 = vals.iter().sum();
        assert!((tree - naive).abs() < 1e-9 * naive.abs().max(1.0));
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_and_serial_sums_are_bit_identical() {
        let n = 1_000_003;
        let f = |i: usize| ((i as f64) * 0.001).sin() * ((i % 17) as f64 - 8.0);
        let a = sum_indexed_serial(n, f);
        let b = sum_indexed_parallel(n, f);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
