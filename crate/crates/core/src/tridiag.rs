//! Symmetric tridiagonal eigensolver (implicit-shift QL).

use crate::error::{Error, Result};

/// Eigenvalues of a symmetric tridiagonal matrix with diagonal `d` and
/// subdiagonal `e` (`e.len() == d.len() - 1`). Returned unsorted.
pub(crate) fn eigenvalues(d: &[f64], e: &[f64]) -> Result<Vec<f64>> {
    let mut d = d.to_vec();
    let mut e = prep_offdiag(&d, e);
    ql_implicit(&mut d, &mut e, None)?;
    Ok(d)
}

/// Eigenvalues and eigenvectors. The second result holds the eigenvector
/// matrix `z` row-major (`z[r * m + c]` = component `r` of eigenvector `c`).
pub(crate) fn eigen(d: &[f64], e: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = d.len();
    let mut d = d.to_vec();
    let mut e = prep_offdiag(&d, e);
    let mut z = vec![0.0; m * m];
    for i in 0..m {
        z[i * m + i] = 1.0;
    }
    ql_implicit(&mut d, &mut e, Some(&mut z))?;
    Ok((d, z))
}

fn prep_offdiag(d: &[f64], e: &[f64]) -> Vec<f64> {
    assert_eq!(e.len() + 1, d.len(), "subdiagonal length mismatch");
    // shift the subdiagonal up one slot so e[i] couples rows i and i+1,
    // with a spare trailing element the sweep uses as scratch
    let mut out = e.to_vec();
    out.push(0.0);
    out
}

/// Implicit-shift QL sweeps; standard formulation, O(m^2) without vectors.
fn ql_implicit(d: &mut [f64], e: &mut [f64], mut z: Option<&mut [f64]>) -> Result<()> {
    let m = d.len();
    if m == 0 {
        return Ok(());
    }
    for l in 0..m {
        let mut iter = 0;
        loop {
            // find the first negligible subdiagonal at or after l
            let mut split = m - 1;
            for i in l..m - 1 {
                let dd = d[i].abs() + d[i + 1].abs();
                if e[i].abs() <= f64::EPSILON * dd {
                    split = i;
                    break;
                }
            }
            if split == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::NoConvergence {
                    iterations: 50,
                    residual: e[l].abs(),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[split] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut i = split;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[split] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(zm) = z.as_deref_mut() {
                    for row in 0..m {
                        let f2 = zm[row * m + i + 1];
                        zm[row * m + i + 1] = s * zm[row * m + i] + c * f2;
                        zm[row * m + i] = c * zm[row * m + i] - s * f2;
                    }
                }
            }
            if r == 0.0 && i > l {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[split] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn dense_oracle(d: &[f64], e: &[f64]) -> Vec<f64> {
        let m = d.len();
        let mut a = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            a[(i, i)] = d[i];
            if i + 1 < m {
                a[(i, i + 1)] = e[i];
                a[(i + 1, i)] = e[i];
            }
        }
        let mut vals: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().cloned().collect();
        vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
        vals
    }

    fn seeded(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed;
        (0..n)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn eigenvalues_match_dense_oracle() {
        for m in [1usize, 2, 3, 5, 17, 60] {
            let d = seeded(m, 0x1234 + m as u64);
            let e = seeded(m - 1, 0x9876 + m as u64);
            let mut got = eigenvalues(&d, &e).unwrap();
            got.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let want = dense_oracle(&d, &e);
            for (a, b) in got.iter().zip(&want) {
                assert_relative_eq!(a, b, epsilon = 1e-10, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn eigenvectors_reconstruct_the_matrix_action() {
        let m = 40;
        let d = seeded(m, 7);
        let e = seeded(m - 1, 11);
        let (vals, z) = eigen(&d, &e).unwrap();
        // check A z_c = lambda_c z_c componentwise
        for c in 0..m {
            for r in 0..m {
                let mut av = d[r] * z[r * m + c];
                if r > 0 {
                    av += e[r - 1] * z[(r - 1) * m + c];
                }
                if r + 1 < m {
                    av += e[r] * z[(r + 1) * m + c];
                }
                assert_relative_eq!(av, vals[c] * z[r * m + c], epsilon = 1e-9);
            }
        }
        // orthonormality
        for a in 0..m {
            for b in a..m {
                let dot: f64 = (0..m).map(|r| z[r * m + a] * z[r * m + b]).sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert_relative_eq!(dot, expect, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn handles_already_diagonal_input() {
        let d = [3.0, -1.0, 2.0];
        let e = [0.0, 0.0];
        let mut got = eigenvalues(&d, &e).unwrap();
        got.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(got, vec![-1.0, 2.0, 3.0]);
    }
}
