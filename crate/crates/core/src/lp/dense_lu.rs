//! Dense LU factorization of the simplex basis.
//!
//! Column-major storage, partial pivoting, blocked right-looking update.
//! Markowitz-style sparsity pivoting degenerates to plain partial
//! pivoting on a dense factor, which is what we do. The trailing-matrix
//! update is the hot loop; it is written as a small rank-k kernel and,
//! with the `parallel` feature, split over column chunks with rayon.

const PANEL: usize = 48;

#[derive(Debug, Clone, Default)]
pub struct DenseLu {
    m: usize,
    /// Combined L (unit lower) and U factors, column-major.
    f: Vec<f64>,
    /// Row permutation: `perm[k]` is the pivot row swapped into position k.
    perm: Vec<u32>,
}

impl DenseLu {
    /// Factorize `a` (column-major m*m, consumed in place).
    /// Returns Err with the offending column when the matrix is singular.
    pub fn factor(a: Vec<f64>, m: usize, parallel: bool) -> Result<DenseLu, usize> {
        let mut f = a;
        debug_assert_eq!(f.len(), m * m);
        let mut perm = vec![0u32; m];
        let mut k0 = 0;
        while k0 < m {
            let kend = (k0 + PANEL).min(m);
            // Panel factorization; row swaps stay within the panel columns.
            for k in k0..kend {
                // Left-looking update of column k from earlier panel columns.
                for j in k0..k {
                    let mul = f[j + k * m];
                    if mul != 0.0 {
                        let (lcol, kcol) = split_cols(&mut f, m, j, k);
                        for i in j + 1..m {
                            kcol[i] -= lcol[i] * mul;
                        }
                    }
                }
                // Partial pivoting below the diagonal.
                let mut pr = k;
                let mut pv = f[k + k * m].abs();
                for i in k + 1..m {
                    let v = f[i + k * m].abs();
                    if v > pv {
                        pv = v;
                        pr = i;
                    }
                }
                if pv < 1e-13 {
                    return Err(k);
                }
                perm[k] = pr as u32;
                if pr != k {
                    for j in k0..kend {
                        f.swap(k + j * m, pr + j * m);
                    }
                }
                let inv = 1.0 / f[k + k * m];
                for i in k + 1..m {
                    f[i + k * m] *= inv;
                }
            }
            // Apply the panel's interchanges to the columns outside it.
            for k in k0..kend {
                let pr = perm[k] as usize;
                if pr != k {
                    for j in (0..k0).chain(kend..m) {
                        f.swap(k + j * m, pr + j * m);
                    }
                }
            }
            if kend < m {
                let (panel, trail) = f.split_at_mut(kend * m);
                let update_col = |col: &mut [f64]| {
                    // Forward substitution for the U entries of this column.
                    for k in k0..kend {
                        let mul = col[k];
                        if mul != 0.0 {
                            let lcol = &panel[k * m..k * m + m];
                            for i in k + 1..kend {
                                col[i] -= lcol[i] * mul;
                            }
                        }
                    }
                    // Rank-kb trailing update on rows [kend, m), 4-way unrolled.
                    let mut k = k0;
                    while k + 4 <= kend {
                        let u0 = col[k];
                        let u1 = col[k + 1];
                        let u2 = col[k + 2];
                        let u3 = col[k + 3];
                        if u0 != 0.0 || u1 != 0.0 || u2 != 0.0 || u3 != 0.0 {
                            let l0 = &panel[k * m..k * m + m];
                            let l1 = &panel[(k + 1) * m..(k + 1) * m + m];
                            let l2 = &panel[(k + 2) * m..(k + 2) * m + m];
                            let l3 = &panel[(k + 3) * m..(k + 3) * m + m];
                            for i in kend..m {
                                col[i] -= l0[i] * u0 + l1[i] * u1 + l2[i] * u2 + l3[i] * u3;
                            }
                        }
                        k += 4;
                    }
                    while k < kend {
                        let u0 = col[k];
                        if u0 != 0.0 {
                            let l0 = &panel[k * m..k * m + m];
                            for i in kend..m {
                                col[i] -= l0[i] * u0;
                            }
                        }
                        k += 1;
                    }
                };
                run_over_columns(trail, m, parallel, update_col);
            }
            k0 = kend;
        }
        Ok(DenseLu { m, f, perm })
    }

    /// Solve B x = b in place (FTRAN core).
    pub fn solve(&self, x: &mut [f64]) {
        let m = self.m;
        for k in 0..m {
            let pr = self.perm[k] as usize;
            if pr != k {
                x.swap(k, pr);
            }
        }
        // L y = Pb (unit lower triangular)
        for k in 0..m {
            let xk = x[k];
            if xk != 0.0 {
                let col = &self.f[k * m..k * m + m];
                for i in k + 1..m {
                    x[i] -= col[i] * xk;
                }
            }
        }
        // U x = y
        for k in (0..m).rev() {
            let xk = x[k] / self.f[k + k * m];
            x[k] = xk;
            if xk != 0.0 {
                let col = &self.f[k * m..k * m + m];
                for i in 0..k {
                    x[i] -= col[i] * xk;
                }
            }
        }
    }

    /// Solve B^T y = c in place (BTRAN core).
    pub fn solve_transposed(&self, x: &mut [f64]) {
        let m = self.m;
        // U^T z = c (forward, dot products down columns)
        for k in 0..m {
            let col = &self.f[k * m..k * m + m];
            let mut s = x[k];
            for i in 0..k {
                s -= col[i] * x[i];
            }
            x[k] = s / col[k];
        }
        // L^T w = z (backward)
        for k in (0..m).rev() {
            let col = &self.f[k * m..k * m + m];
            let mut s = x[k];
            for i in k + 1..m {
                s -= col[i] * x[i];
            }
            x[k] = s;
        }
        for k in (0..m).rev() {
            let pr = self.perm[k] as usize;
            if pr != k {
                x.swap(k, pr);
            }
        }
    }
}

/// Two distinct columns of the column-major matrix, mutably.
fn split_cols(f: &mut [f64], m: usize, a: usize, b: usize) -> (&[f64], &mut [f64]) {
    debug_assert!(a < b);
    let (lo, hi) = f.split_at_mut(b * m);
    (&lo[a * m..a * m + m], &mut hi[..m])
}

/// Run `body(col)` over every full column stored in `trail`
/// (column-major, each of length `m`).
fn run_over_columns<F>(trail: &mut [f64], m: usize, parallel: bool, body: F)
where
    F: Fn(&mut [f64]) + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if parallel && trail.len() >= 256 * m {
            use rayon::prelude::*;
            trail.par_chunks_mut(m).with_min_len(16).for_each(|col| body(col));
            return;
        }
    }
    let _ = parallel;
    for col in trail.chunks_mut(m) {
        body(col);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat_vec(a: &[f64], m: usize, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; m];
        for j in 0..m {
            for i in 0..m {
                y[i] += a[i + j * m] * x[j];
            }
        }
        y
    }

    #[test]
    fn factor_solve_roundtrip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for &m in &[1usize, 2, 5, 17, 64, 130] {
            let mut a: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for i in 0..m {
                a[i + i * m] += 4.0; // keep it comfortably nonsingular
            }
            let lu = DenseLu::factor(a.clone(), m, false).expect("factor");
            let xs: Vec<f64> = (0..m).map(|i| (i as f64) - 2.5).collect();
            let b = mat_vec(&a, m, &xs);
            let mut sol = b.clone();
            lu.solve(&mut sol);
            for i in 0..m {
                assert!((sol[i] - xs[i]).abs() < 1e-9, "ftran m={m} i={i}");
            }
            // transposed solve: A^T y = c with c = A^T xs
            let mut c = vec![0.0; m];
            for j in 0..m {
                for i in 0..m {
                    c[j] += a[i + j * m] * xs[i];
                }
            }
            let mut sol_t = c;
            lu.solve_transposed(&mut sol_t);
            for i in 0..m {
                assert!((sol_t[i] - xs[i]).abs() < 1e-9, "btran m={m} i={i}");
            }
        }
    }

    #[test]
    fn blocked_path_matches_reference_on_wide_matrix() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let m = 173; // forces several panels with a ragged tail
        let mut a: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for i in 0..m {
            a[i + i * m] += 3.0;
        }
        let lu_s = DenseLu::factor(a.clone(), m, false).unwrap();
        let lu_p = DenseLu::factor(a.clone(), m, true).unwrap();
        assert_eq!(lu_s.perm, lu_p.perm);
        let xs: Vec<f64> = (0..m).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        let b = mat_vec(&a, m, &xs);
        let mut s1 = b.clone();
        let mut s2 = b;
        lu_s.solve(&mut s1);
        lu_p.solve(&mut s2);
        for i in 0..m {
            assert!((s1[i] - xs[i]).abs() < 1e-9);
            assert_eq!(s1[i].to_bits(), s2[i].to_bits());
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let m = 3;
        let a = vec![1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 0.0]; // col1 = 2*col0
        assert!(DenseLu::factor(a, m, false).is_err());
    }
}
