//! Small dense 3x3 helpers. Matrices are `[f64; 9]`, row-major; the
//! symmetric eigensolver is a cyclic Jacobi iteration, which is exact to
//! machine precision for these sizes and never sacrifices orthogonality.

pub type Mat3 = [f64; 9];
pub type Vec3 = [f64; 3];

pub const IDENT: Mat3 = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

#[inline]
pub fn at(m: &Mat3, i: usize, j: usize) -> f64 {
    m[3 * i + j]
}

#[inline]
pub fn mul_vec(m: &Mat3, v: &Vec3) -> Vec3 {
    [
        m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
        m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
        m[6] * v[0] + m[7] * v[1] + m[8] * v[2],
    ]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for k in 0..3 {
                s += a[3 * i + k] * b[3 * k + j];
            }
            c[3 * i + j] = s;
        }
    }
    c
}

pub fn transpose(m: &Mat3) -> Mat3 {
    [m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]]
}

pub fn det(m: &Mat3) -> f64 {
    m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
        + m[2] * (m[3] * m[7] - m[4] * m[6])
}

/// Inverse via the adjugate; fine for well-conditioned metric blocks.
pub fn inv(m: &Mat3) -> Mat3 {
    let d = det(m);
    let id = 1.0 / d;
    [
        (m[4] * m[8] - m[5] * m[7]) * id,
        (m[2] * m[7] - m[1] * m[8]) * id,
        (m[1] * m[5] - m[2] * m[4]) * id,
        (m[5] * m[6] - m[3] * m[8]) * id,
        (m[0] * m[8] - m[2] * m[6]) * id,
        (m[2] * m[3] - m[0] * m[5]) * id,
        (m[3] * m[7] - m[4] * m[6]) * id,
        (m[1] * m[6] - m[0] * m[7]) * id,
        (m[0] * m[4] - m[1] * m[3]) * id,
    ]
}

/// x^T M y.
#[inline]
pub fn quad(m: &Mat3, x: &Vec3, y: &Vec3) -> f64 {
    let my = mul_vec(m, y);
    x[0] * my[0] + x[1] * my[1] + x[2] * my[2]
}

#[inline]
pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_asymmetry(m: &Mat3) -> f64 {
    (m[1] - m[3]).abs().max((m[2] - m[6]).abs()).max((m[5] - m[7]).abs())
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues ascending and the matching eigenvectors as columns.
pub fn eigh(m: &Mat3) -> (Vec3, Mat3) {
    let mut a = *m;
    let mut v = IDENT;
    let scale = m.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..64 {
        let off = (at(&a, 0, 1).powi(2) + at(&a, 0, 2).powi(2) + at(&a, 1, 2).powi(2)).sqrt();
        if off <= 1e-16 * scale {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = at(&a, p, q);
            if apq.abs() <= 1e-300 {
                continue;
            }
            let theta = (at(&a, q, q) - at(&a, p, p)) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            // A <- J^T A J and V <- V J with the rotation in the (p,q) plane.
            for k in 0..3 {
                let akp = at(&a, k, p);
                let akq = at(&a, k, q);
                a[3 * k + p] = c * akp - s * akq;
                a[3 * k + q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = at(&a, p, k);
                let aqk = at(&a, q, k);
                a[3 * p + k] = c * apk - s * aqk;
                a[3 * q + k] = s * apk + c * aqk;
            }
            for k in 0..3 {
                let vkp = at(&v, k, p);
                let vkq = at(&v, k, q);
                v[3 * k + p] = c * vkp - s * vkq;
                v[3 * k + q] = s * vkp + c * vkq;
            }
        }
    }
    let mut eig = [at(&a, 0, 0), at(&a, 1, 1), at(&a, 2, 2)];
    // Sort ascending, permuting eigenvector columns alongside.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig[i].total_cmp(&eig[j]));
    let eig_sorted = [eig[order[0]], eig[order[1]], eig[order[2]]];
    let mut vs = [0.0; 9];
    for (newcol, &oldcol) in order.iter().enumerate() {
        for k in 0..3 {
            vs[3 * k + newcol] = at(&v, k, oldcol);
        }
    }
    eig = eig_sorted;
    (eig, vs)
}

/// Symmetric positive definite square root via the eigen-decomposition.
pub fn sqrt_spd(m: &Mat3) -> Mat3 {
    let (eig, v) = eigh(m);
    let d = [eig[0].max(0.0).sqrt(), eig[1].max(0.0).sqrt(), eig[2].max(0.0).sqrt()];
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for k in 0..3 {
                s += at(&v, i, k) * d[k] * at(&v, j, k);
            }
            out[3 * i + j] = s;
        }
    }
    out
}

/// Eigenvalues of H relative to the metric g = A^{-1}: the generalized
/// problem H x = lambda g x, solved by whitening with S = A^{1/2}
/// (g^{-1/2} = A^{1/2}), i.e. the ordinary eigenvalues of S H S.
pub fn eigs_vs_metric(h: &Mat3, a: &Mat3) -> Vec3 {
    let s = sqrt_spd(a);
    let w = mat_mul(&s, &mat_mul(h, &s));
    // Symmetrize away roundoff before the Jacobi pass.
    let wsym = [
        w[0],
        0.5 * (w[1] + w[3]),
        0.5 * (w[2] + w[6]),
        0.5 * (w[1] + w[3]),
        w[4],
        0.5 * (w[5] + w[7]),
        0.5 * (w[2] + w[6]),
        0.5 * (w[5] + w[7]),
        w[8],
    ];
    eigh(&wsym).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_known_matrix() {
        let m: Mat3 = [2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.5];
        let mi = inv(&m);
        let p = mat_mul(&m, &mi);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((at(&p, i, j) - want).abs() < 1e-12, "m*inv(m) != I at ({i},{j})");
            }
        }
    }

    #[test]
    fn jacobi_reproduces_diagonal_eigenvalues_exactly() {
        let m: Mat3 = [0.5, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 7.25];
        let (eig, _) = eigh(&m);
        assert_eq!(eig, [0.5, 2.0, 7.25]);
    }

    #[test]
    fn jacobi_matches_hand_computed_2x2_block() {
        // [[2,1,0],[1,2,0],[0,0,5]] has eigenvalues 1, 3, 5.
        let m: Mat3 = [2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0];
        let (eig, v) = eigh(&m);
        assert!((eig[0] - 1.0).abs() < 1e-14);
        assert!((eig[1] - 3.0).abs() < 1e-14);
        assert!((eig[2] - 5.0).abs() < 1e-14);
        // Columns are eigenvectors: M v_k = lambda_k v_k.
        for k in 0..3 {
            let col = [at(&v, 0, k), at(&v, 1, k), at(&v, 2, k)];
            let mv = mul_vec(&m, &col);
            for i in 0..3 {
                assert!((mv[i] - eig[k] * col[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spd_sqrt_squares_back() {
        let m: Mat3 = [4.0, 1.0, 0.5, 1.0, 3.0, 0.25, 0.5, 0.25, 2.0];
        let s = sqrt_spd(&m);
        let ss = mat_mul(&s, &s);
        for i in 0..9 {
            assert!((ss[i] - m[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn metric_relative_eigenvalues_of_g_are_ones() {
        // H = g = A^{-1}: relative eigenvalues are exactly 1.
        let a: Mat3 = [1.5, 0.2, 0.0, 0.2, 1.1, 0.1, 0.0, 0.1, 0.9];
        let g = inv(&a);
        let eig = eigs_vs_metric(&g, &a);
        for k in 0..3 {
            assert!((eig[k] - 1.0).abs() < 1e-12, "eig {k} = {}", eig[k]);
        }
    }
}
