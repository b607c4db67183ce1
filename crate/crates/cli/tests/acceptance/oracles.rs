//! Independent reference computations. Nothing here calls into the library
//! code it checks.

use num_complex::Complex64 as C;

/// Dense complex inverse by Gauss-Jordan elimination with partial pivoting.
pub fn complex_inverse(a: &[Vec<C>]) -> Vec<Vec<C>> {
    let n = a.len();
    let mut m: Vec<Vec<C>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| C::new(if i == j { 1.0 } else { 0.0 }, 0.0)));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| m[p][col].norm().total_cmp(&m[q][col].norm()))
            .unwrap();
        m.swap(col, pivot);
        let inv = C::new(1.0, 0.0) / m[col][col];
        for v in m[col].iter_mut() {
            *v *= inv;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                for c in 0..2 * n {
                    let sub = f * m[col][c];
                    m[r][c] -= sub;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Transmission of a chain of cavities with port couplings on both ends.
pub fn cavity_transmission(freqs: &[f64], couplings: &[f64], kappa_int: f64, kappa_ext: f64, omega: f64) -> C {
    let n = freqs.len();
    let mut a = vec![vec![C::new(0.0, 0.0); n]; n];
    for i in 0..n {
        let mut kappa = kappa_int;
        if i == 0 || i == n - 1 {
            kappa += kappa_ext;
        }
        a[i][i] = C::new(kappa / 2.0, -(omega - freqs[i]));
        if i + 1 < n {
            a[i][i + 1] = C::new(0.0, couplings[i]);
            a[i + 1][i] = C::new(0.0, couplings[i]);
        }
    }
    let g = complex_inverse(&a);
    -kappa_ext * g[0][n - 1]
}

type M4 = [[C; 4]; 4];

fn matmul4(a: &M4, b: &M4) -> M4 {
    let mut out = [[C::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// exp(A) by scaling and squaring a truncated Taylor series.
pub fn expm4(a: M4) -> M4 {
    let norm = a
        .iter()
        .map(|r| r.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = (norm.max(1e-300).log2().ceil() as i32 + 4).max(0);
    let scale = 0.5f64.powi(squarings);
    let mut small = a;
    for r in small.iter_mut() {
        for v in r.iter_mut() {
            *v *= scale;
        }
    }
    let mut result = [[C::new(0.0, 0.0); 4]; 4];
    let mut term = result;
    for i in 0..4 {
        result[i][i] = C::new(1.0, 0.0);
        term[i][i] = C::new(1.0, 0.0);
    }
    for k in 1..30 {
        term = matmul4(&term, &small);
        for r in term.iter_mut() {
            for v in r.iter_mut() {
                *v /= k as f64;
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = matmul4(&result, &result);
    }
    result
}

/// Lowest eigenvector of a real symmetric 4×4 matrix by cyclic Jacobi sweeps.
pub fn lowest_eigenvector4(mut a: [[f64; 4]; 4]) -> [f64; 4] {
    let mut v = [[0.0; 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..100 {
        for p in 0..4 {
            for q in p + 1..4 {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = c * x - s * y;
                    row[q] = s * x + c * y;
                }
                for k in 0..4 {
                    let (x, y) = (a[p][k], a[q][k]);
                    a[p][k] = c * x - s * y;
                    a[q][k] = s * x + c * y;
                }
                for row in v.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = c * x - s * y;
                    row[q] = s * x + c * y;
                }
            }
        }
    }
    let low = (0..4).min_by(|&i, &j| a[i][i].total_cmp(&a[j][j])).unwrap();
    [v[0][low], v[1][low], v[2][low], v[3][low]]
}

/// Up probability of qubit 0 in a two-qubit chain after a π pulse on the
/// ground state and free evolution for `t`. Basis index is `q0 + 2 q1`,
/// a set bit meaning up.
pub fn two_qubit_p_up(w0: f64, w1: f64, j: f64, t: f64) -> f64 {
    let z = |s: usize, i: usize| if s >> i & 1 == 1 { 1.0 } else { -1.0 };
    let mut h = [[0.0; 4]; 4];
    for (s, row) in h.iter_mut().enumerate() {
        row[s] = w0 * z(s, 0) + w1 * z(s, 1);
        row[s ^ 3] = j;
    }
    let g = lowest_eigenvector4(h);
    let kicked: Vec<C> = (0..4).map(|s| C::new(g[s ^ 1], 0.0)).collect();
    let mut a = [[C::new(0.0, 0.0); 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            a[r][c] = C::new(0.0, -h[r][c] * t);
        }
    }
    let u = expm4(a);
    [1, 3]
        .iter()
        .map(|&s| (0..4).map(|c| u[s][c] * kicked[c]).sum::<C>().norm_sqr())
        .sum()
}

pub fn normal_log_density(x: f64, mean: f64, std: f64) -> f64 {
    let u = (x - mean) / std;
    -0.5 * u * u - std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

pub fn gaussian_kl(m1: f64, s1: f64, m0: f64, s0: f64) -> f64 {
    (s0 / s1).ln() + (s1 * s1 + (m1 - m0).powi(2)) / (2.0 * s0 * s0) - 0.5
}
