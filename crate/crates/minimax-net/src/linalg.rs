//! Small dense linear-algebra helpers shared by the topology and problem
//! modules. Everything here operates on symmetric matrices only.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest eigenvalue magnitude of a symmetric matrix, i.e. its spectral
/// norm, computed by power iteration on `M^2`.
///
/// Squaring makes the iteration converge to `max |eig|^2` even when the
/// extreme eigenvalues come in `+a, -a` pairs (common for circulant mixing
/// matrices). `deflate_mean` re-orthogonalizes the iterate against the
/// all-ones vector each pass; callers set it when the ones vector is a known
/// exact null vector, so roundoff cannot reintroduce it.
pub(crate) fn sym_spectral_norm(
    m: &Array2<f64>,
    tol: f64,
    max_iters: usize,
    deflate_mean: bool,
) -> f64 {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "matrix must be square");
    if n == 0 {
        return 0.0;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a1a);
    let mut v = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
    if deflate_mean {
        remove_mean(&mut v);
    }
    let norm = l2(&v);
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        v /= norm;
    }

    let mut estimate = 0.0_f64;
    for _ in 0..max_iters.max(100) {
        // Rayleigh quotient of M^2 at the unit iterate: ||M v||^2
        let u = m.dot(&v);
        let next = l2(&u);
        let mut w = m.dot(&u);
        if deflate_mean {
            remove_mean(&mut w);
        }
        let w_norm = l2(&w);
        if w_norm == 0.0 {
            return next;
        }
        v = w / w_norm;
        if (next - estimate).abs() <= tol * next.max(1.0) {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Haar-ish random orthogonal matrix via Gram-Schmidt on a Gaussian draw.
pub(crate) fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    use rand_distr::Distribution;
    let mut m = Array2::from_shape_fn((d, d), |_| {
        let v: f64 = rand_distr::StandardNormal.sample(rng);
        v
    });
    for k in 0..d {
        for prev in 0..k {
            let proj = m.column(k).dot(&m.column(prev));
            let prev_col = m.column(prev).to_owned();
            let mut col = m.column_mut(k);
            col.scaled_add(-proj, &prev_col);
        }
        let norm = m.column(k).dot(&m.column(k)).sqrt();
        if norm < 1e-12 {
            let mut col = m.column_mut(k);
            col.fill(0.0);
            col[k] = 1.0;
        } else {
            let mut col = m.column_mut(k);
            col /= norm;
        }
    }
    m
}

fn remove_mean(v: &mut Array1<f64>) {
    let mean = v.sum() / v.len() as f64;
    v.mapv_inplace(|x| x - mean);
}

pub(crate) fn l2(v: &Array1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations.
///
/// Used as the dense reference solver against which the power iteration is
/// tested; it shares no code path with `sym_spectral_norm`.
pub(crate) fn jacobi_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let mut m = a.clone();
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);

    for _sweep in 0..200 {
        let off: f64 = off_diag_sq(&m);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[[p, q]].abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[[i, i]]).collect()
}

fn off_diag_sq(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m[[i, j]] * m[[i, j]];
            }
        }
    }
    acc
}
