//! Classical (Torgerson) multidimensional scaling: double-center the squared
//! pairwise distance matrix, take the top-2 eigenpairs, and scale each
//! eigenvector by the square root of its eigenvalue.

use crate::{MfError, Result};

/// 2-D embedding of the input vectors. `degenerate` is true when fewer than
/// two positive eigenvalues were available (the missing coordinates are
/// zero-filled).
#[derive(Clone, Debug)]
pub struct MdsEmbedding {
    pub coords: Vec<[f64; 2]>,
    pub eigenvalues: [f64; 2],
    pub degenerate: bool,
}

/// Classical MDS to two dimensions. Requires at least three points.
pub fn classical_mds(points: &[Vec<f64>]) -> Result<MdsEmbedding> {
    let n = points.len();
    if n < 3 {
        return Err(MfError::Contract(format!(
            "classical MDS needs at least 3 rows, got {n}"
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(MfError::Contract("ragged meta-feature rows".into()));
    }

    // Squared distance matrix.
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = 0.0;
            for k in 0..dim {
                let d = points[i][k] - points[j][k];
                s += d * d;
            }
            d2[i * n + j] = s;
            d2[j * n + i] = s;
        }
    }

    // Double centering: B = -1/2 * C * D2 * C with C = I - J/n.
    let mut row_mean = vec![0.0; n];
    let mut grand = 0.0;
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            s += d2[i * n + j];
        }
        row_mean[i] = s / n as f64;
        grand += s;
    }
    grand /= (n * n) as f64;
    let mut b = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            b[i * n + j] = -0.5 * (d2[i * n + j] - row_mean[i] - row_mean[j] + grand);
        }
    }

    let (mut eigenvalues, vectors) = jacobi_eigen(&mut b, n);

    // Sort descending, keep the top two.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eigenvalues[c].partial_cmp(&eigenvalues[a]).unwrap());
    eigenvalues = order.iter().map(|&i| eigenvalues[i]).collect();

    let mut coords = vec![[0.0; 2]; n];
    let mut used = [0.0; 2];
    let mut degenerate = false;
    for axis in 0..2 {
        let lambda = eigenvalues[axis];
        if lambda > 1e-12 {
            used[axis] = lambda;
            let col = order[axis];
            let scale = lambda.sqrt();
            for (i, c) in coords.iter_mut().enumerate() {
                c[axis] = vectors[i * n + col] * scale;
            }
        } else {
            degenerate = true;
            log::warn!(
                "MDS axis {axis} has non-positive eigenvalue {lambda:.3e}; zero-filled"
            );
        }
    }
    Ok(MdsEmbedding {
        coords,
        eigenvalues: used,
        degenerate,
    })
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major,
/// overwritten). Returns (eigenvalues, column eigenvectors).
fn jacobi_eigen(a: &mut [f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eig = (0..n).map(|i| a[i * n + i]).collect();
    (eig, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairwise(coords: &[[f64; 2]]) -> Vec<f64> {
        let n = coords.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = coords[i][0] - coords[j][0];
                let dy = coords[i][1] - coords[j][1];
                out.push((dx * dx + dy * dy).sqrt());
            }
        }
        out
    }

    #[test]
    fn all_identical_inputs_collapse_to_origin() {
        let points = vec![vec![0.3, 0.7, 0.1]; 5];
        let emb = classical_mds(&points).unwrap();
        assert!(emb.degenerate);
        for c in &emb.coords {
            assert_eq!(*c, [0.0, 0.0]);
        }
    }

    #[test]
    fn square_embedded_in_high_dimension_is_recovered() {
        // 4-point unit square zero-padded into 64 dimensions.
        let mut points = vec![vec![0.0; 64]; 4];
        let corners = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        for (p, c) in points.iter_mut().zip(&corners) {
            p[10] = c[0];
            p[37] = c[1];
        }
        let emb = classical_mds(&points).unwrap();
        assert!(!emb.degenerate);
        let mut got = pairwise(&emb.coords);
        let mut expect = {
            let c: Vec<[f64; 2]> = corners.to_vec();
            pairwise(&c)
        };
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-9, "{g} vs {e}");
        }
    }

    #[test]
    fn two_dimensional_inputs_are_reproduced_up_to_similarity() {
        // Procrustes check: centered original and embedding differ only by an
        // orthogonal transform, so the residual after optimal rotation is ~0.
        let original = [
            [0.0, 0.0],
            [2.0, 0.3],
            [1.1, 1.9],
            [-0.7, 1.2],
            [0.4, -1.5],
        ];
        let points: Vec<Vec<f64>> = original.iter().map(|p| p.to_vec()).collect();
        let emb = classical_mds(&points).unwrap();

        let center = |pts: &[[f64; 2]]| -> Vec<[f64; 2]> {
            let n = pts.len() as f64;
            let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
            let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
            pts.iter().map(|p| [p[0] - cx, p[1] - cy]).collect()
        };
        let x = center(&original);
        let y = center(&emb.coords);

        // Optimal 2x2 orthogonal map via the cross-covariance SVD (closed
        // form for 2x2), trying both the rotation and reflection branches.
        let mut h = [[0.0; 2]; 2];
        for (a, b) in x.iter().zip(&y) {
            for r in 0..2 {
                for c in 0..2 {
                    h[r][c] += b[r] * a[c];
                }
            }
        }
        let best_residual = [false, true]
            .iter()
            .map(|&reflect| {
                let mut hh = h;
                if reflect {
                    hh[0][1] = -hh[0][1];
                    hh[1][1] = -hh[1][1];
                }
                let angle = (hh[0][1] - hh[1][0]).atan2(hh[0][0] + hh[1][1]);
                let (s, c) = angle.sin_cos();
                let mut res = 0.0;
                for (a, b) in x.iter().zip(&y) {
                    let bx = if reflect { [b[0], -b[1]] } else { *b };
                    let rx = c * bx[0] + s * bx[1];
                    let ry = -s * bx[0] + c * bx[1];
                    res += (rx - a[0]).powi(2) + (ry - a[1]).powi(2);
                }
                res
            })
            .fold(f64::INFINITY, f64::min);
        assert!(best_residual < 1e-8, "procrustes residual {best_residual}");
    }

    #[test]
    fn needs_three_points() {
        let err = classical_mds(&[vec![0.0], vec![1.0]]).unwrap_err();
        assert!(matches!(err, MfError::Contract(_)));
    }
}
