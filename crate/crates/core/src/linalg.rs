//! Fixed-size aliases and the handful of dense routines the planners and
//! dynamics share.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Vec6 = SVector<f64, 6>;
pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Vec9 = SVector<f64, 9>;
pub type Mat9 = SMatrix<f64, 9, 9>;
pub type Vec12 = SVector<f64, 12>;
pub type Mat12 = SMatrix<f64, 12, 12>;

/// Skew-symmetric cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(a: &Vec3) -> Mat3 {
    Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Builds a symmetric matrix from `[xx, yy, zz, xy, xz, yz]`.
pub fn symmetric_from_entries(e: &[f64; 6]) -> Mat3 {
    Mat3::new(e[0], e[3], e[4], e[3], e[1], e[5], e[4], e[5], e[2])
}

/// True when `m` is symmetric to `sym_tol` (relative to its largest entry)
/// and its smallest eigenvalue is strictly positive.
pub fn is_spd3(m: &Mat3, sym_tol: f64) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    if (m - m.transpose()).amax() > sym_tol * scale {
        return false;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min() > 0.0
}

/// 2-norm condition number of a square matrix via SVD. Returns infinity for
/// exactly singular input.
pub fn condition_number<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    let sv = nalgebra::DMatrix::from_column_slice(N, N, m.as_slice()).singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Gaussian elimination with partial pivoting on a 4x4 system. Returns
/// `None` when a pivot vanishes.
pub fn solve4(a: &[[f64; 4]; 4], b: &[f64; 4]) -> Option<[f64; 4]> {
    let mut m = *a;
    let mut rhs = *b;
    for col in 0..4 {
        let pivot_row = (col..4).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap_or(col);
        if m[pivot_row][col] == 0.0 {
            return None;
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for row in col + 1..4 {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                let pivot = m[col];
                for (a, b) in m[row][col..].iter_mut().zip(&pivot[col..]) {
                    *a -= f * b;
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut acc = rhs[row];
        for k in row + 1..4 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skew_matches_cross_product() {
        let a = Vec3::new(0.3, -1.2, 2.0);
        let b = Vec3::new(-0.7, 0.4, 1.1);
        assert!((skew(&a) * b - a.cross(&b)).norm() < 1e-15);
        assert_eq!(skew(&a).transpose(), -skew(&a));
        assert_eq!(skew(&Vec3::zeros()), Mat3::zeros());
        let e = skew(&Vec3::x()) * Vec3::y();
        assert_eq!(e, Vec3::z());
        assert!((skew(&a) * b + skew(&b) * a).norm() < 1e-15);
    }

    #[test]
    fn solve4_agrees_with_lu() {
        let a = [[2.0, 1.0, -1.0, 0.5], [0.0, 3.0, 1.0, 1.0], [1.0, -2.0, 4.0, 0.0], [0.3, 0.0, 1.0, 5.0]];
        let b = [1.0, -2.0, 0.5, 3.0];
        let x = solve4(&a, &b).unwrap();
        let m = SMatrix::<f64, 4, 4>::from_fn(|i, j| a[i][j]);
        let xr = m.lu().solve(&SVector::<f64, 4>::from_column_slice(&b)).unwrap();
        for i in 0..4 {
            assert!((x[i] - xr[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_system_is_rejected() {
        let a = [[1.0, 2.0, 0.0, 0.0], [2.0, 4.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
        assert!(solve4(&a, &[1.0, 1.0, 1.0, 1.0]).is_none());
    }

    #[test]
    fn spd_check() {
        assert!(is_spd3(&Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 3.0)), 1e-12));
        assert!(!is_spd3(&Mat3::from_diagonal(&Vec3::new(1.0, -2.0, 3.0)), 1e-12));
        let mut m = Mat3::identity();
        m[(0, 1)] = 0.5;
        assert!(!is_spd3(&m, 1e-12));
    }
}
