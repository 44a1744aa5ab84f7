//! Inertia of symmetric matrices by Bunch–Kaufman `LDLᵀ` factorization
//! with symmetric pivoting. Sylvester's law gives the signature of `A` from
//! the 1×1 and 2×2 diagonal blocks of `D`.

use crate::geometry::Matrix;

/// Counts of negative, zero and positive eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

const ALPHA: f64 = 0.640_388_203_202_208_4; // (1 + √17)/8

fn swap_symmetric(a: &mut Matrix, i: usize, j: usize) {
    if i != j {
        a.swap_rows(i, j);
        a.swap_columns(i, j);
    }
}

/// Inertia of the symmetric part of `a − shift·I`.
pub fn inertia(a: &Matrix, shift: f64) -> Inertia {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "inertia needs a square matrix");
    let mut w = (a + a.transpose()) * 0.5;
    for i in 0..n {
        w[(i, i)] -= shift;
    }
    let mut out = Inertia {
        negative: 0,
        zero: 0,
        positive: 0,
    };
    let mut count = |d: f64| {
        if d < 0.0 {
            out.negative += 1;
        } else if d > 0.0 {
            out.positive += 1;
        } else {
            out.zero += 1;
        }
    };
    let mut k = 0;
    while k < n {
        let akk = w[(k, k)].abs();
        let (imax, colmax) = (k + 1..n)
            .map(|i| (i, w[(i, k)].abs()))
            .fold((k, 0.0), |best, x| if x.1 > best.1 { x } else { best });
        if akk.max(colmax) == 0.0 {
            count(0.0);
            k += 1;
            continue;
        }
        let two_by_two = if akk >= ALPHA * colmax {
            false
        } else {
            let rowmax = (k..n)
                .filter(|&j| j != imax)
                .map(|j| w[(imax, j)].abs())
                .fold(0.0, f64::max);
            if akk * rowmax >= ALPHA * colmax * colmax {
                false
            } else if w[(imax, imax)].abs() >= ALPHA * rowmax {
                swap_symmetric(&mut w, k, imax);
                false
            } else {
                swap_symmetric(&mut w, k + 1, imax);
                true
            }
        };
        if !two_by_two {
            let d = w[(k, k)];
            count(d);
            for j in k + 1..n {
                let f = w[(j, k)] / d;
                if f != 0.0 {
                    for i in k + 1..n {
                        w[(i, j)] -= f * w[(i, k)];
                    }
                }
            }
            k += 1;
        } else {
            let (d11, d21, d22) = (w[(k, k)], w[(k + 1, k)], w[(k + 1, k + 1)]);
            let det = d11 * d22 - d21 * d21;
            // the pivot choice guarantees det < 0: one eigenvalue of each sign
            if det < 0.0 {
                count(-1.0);
                count(1.0);
            } else {
                let tr = d11 + d22;
                count(tr);
                count(if det == 0.0 { 0.0 } else { tr });
            }
            let (i11, i12, i22) = (d22 / det, -d21 / det, d11 / det);
            for j in k + 2..n {
                let (x, y) = (w[(k, j)], w[(k + 1, j)]);
                let f1 = i11 * x + i12 * y;
                let f2 = i12 * x + i22 * y;
                for i in k + 2..n {
                    w[(i, j)] -= w[(i, k)] * f1 + w[(i, k + 1)] * f2;
                }
            }
            k += 2;
        }
    }
    out
}

/// `(m, m*)`: eigenvalues below `−κ` and at most `+κ`.
pub fn index_pair(a: &Matrix, kappa: f64) -> (usize, usize) {
    let m = inertia(a, -kappa).negative;
    let above = inertia(a, kappa).positive;
    (m, a.nrows() - above)
}
