use crate::error::{Error, Result};
use crate::num::Scalar;

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is row-major `n x n`; on return `b` holds `x`.
pub fn solve_dense<F: Scalar>(a: &mut [F], b: &mut [F]) -> Result<()> {
    let n = b.len();
    assert_eq!(a.len(), n * n, "matrix shape");
    let scale = a.iter().fold(F::zero(), |m, &v| m.max(v.abs())).max(F::one());
    let tiny = F::epsilon() * scale * F::of(n as f64);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap())
            .unwrap();
        if a[pivot * n + col].abs() <= tiny {
            return Err(Error::Structure(format!("singular system at column {col}")));
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let p = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / p;
            if f == F::zero() {
                continue;
            }
            a[row * n + col] = F::zero();
            for j in col + 1..n {
                let v = a[col * n + j];
                a[row * n + j] -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in row + 1..n {
            acc -= a[row * n + j] * b[j];
        }
        b[row] = acc / a[row * n + row];
    }
    Ok(())
}
