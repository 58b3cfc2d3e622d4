//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use twofloat::TwoFloat;

/// `a / b` to double-double accuracy. twofloat's own division only carries
/// about one double of precision, so the quotient is refined by Newton steps
/// built from its (accurate) multiplication.
pub fn dd_div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let one = TwoFloat::from(1.0);
    let r0 = TwoFloat::from(1.0 / b.hi());
    let r = r0 + r0 * (one - b * r0);
    let q = a * r;
    q + r * (a - b * q)
}

/// Ridge weights from the explicit normal equations `(Q^T Q + lambda I) a =
/// Q^T r`, accumulated and solved in double-double arithmetic with Gaussian
/// elimination and partial pivoting.
pub fn ridge_oracle(r: ArrayView1<'_, f64>, q: ArrayView2<'_, f64>, lambda: f64) -> Array1<f64> {
    let (d, p) = q.dim();
    let mut a = vec![vec![TwoFloat::from(0.0); p + 1]; p];
    for i in 0..p {
        for k in 0..p {
            let mut s = TwoFloat::from(0.0);
            for t in 0..d {
                s += TwoFloat::new_mul(q[[t, i]], q[[t, k]]);
            }
            if i == k {
                s += TwoFloat::from(lambda);
            }
            a[i][k] = s;
        }
        let mut s = TwoFloat::from(0.0);
        for t in 0..d {
            s += TwoFloat::new_mul(q[[t, i]], r[t]);
        }
        a[i][p] = s;
    }
    for col in 0..p {
        let piv = (col..p)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        for row in col + 1..p {
            let f = dd_div(a[row][col], a[col][col]);
            for k in col..=p {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
        }
    }
    let mut x = vec![TwoFloat::from(0.0); p];
    for i in (0..p).rev() {
        let mut s = a[i][p];
        for k in i + 1..p {
            s -= a[i][k] * x[k];
        }
        x[i] = dd_div(s, a[i][i]);
    }
    x.into_iter().map(|v| v.hi() + v.lo()).collect()
}

pub fn relative_error(got: ArrayView1<'_, f64>, want: ArrayView1<'_, f64>) -> f64 {
    let diff: f64 = got.iter().zip(want).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm: f64 = want.iter().map(|b| b * b).sum::<f64>().sqrt();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

/// Textbook two-pass Pearson correlation.
pub fn pearson_oracle(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for i in 0..a.len() {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Correlation of every voxel pair over the rows of `responses`
/// (`rows x M`), one pair at a time.
pub fn connectivity_oracle(responses: &Array2<f64>) -> Array2<f64> {
    let m = responses.ncols();
    let cols: Vec<Vec<f64>> = (0..m).map(|j| responses.column(j).to_vec()).collect();
    let mut out = Array2::zeros((m, m));
    for j in 0..m {
        for k in 0..m {
            out[[j, k]] = pearson_oracle(&cols[j], &cols[k]);
        }
    }
    out
}

/// All other voxels sorted by (squared distance, index); the first `p`.
pub fn knn_oracle(coords: &[[i64; 3]], spacing: [f64; 3], j: usize, p: usize) -> Vec<usize> {
    let d2 = |k: usize| -> f64 {
        (0..3)
            .map(|a| {
                let d = (coords[j][a] - coords[k][a]) as f64 * spacing[a];
                d * d
            })
            .sum()
    };
    let mut others: Vec<(f64, usize)> = (0..coords.len()).filter(|&k| k != j).map(|k| (d2(k), k)).collect();
    others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    others.into_iter().take(p).map(|(_, k)| k).collect()
}
