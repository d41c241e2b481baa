//! Kernel norms and the per-state spectral radius.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::SdHawkesModel;

const POWER_TOLERANCE: f64 = 1e-10;
const POWER_MAX_ITER: usize = 100_000;

/// `int_0^t alpha exp(-beta s) ds`.
pub fn truncated_kernel_norm(alpha: f64, beta: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("truncation time {t} must be non-negative")));
    }
    if !(beta > 0.0) || !(alpha >= 0.0) {
        return Err(Error::invalid(format!("need alpha >= 0 and beta > 0, got {alpha}, {beta}")));
    }
    Ok(alpha / beta * -(-beta * t).exp_m1())
}

/// `m[i][j] = alpha[j][x][i] / beta[j][x][i]`, the full norm of the kernel
/// from type `j` to type `i` in state `x`.
pub fn kernel_norm_matrix(model: &SdHawkesModel, state: usize) -> Result<Vec<Vec<f64>>> {
    if state >= model.n_states() {
        return Err(Error::invalid(format!("state {state} out of range")));
    }
    let de = model.n_events();
    Ok((0..de)
        .map(|i| (0..de).map(|j| model.kernel.norm(j, state, i)).collect())
        .collect())
}

/// Spectral radius of the norm matrix in `state`.
pub fn spectral_radius(model: &SdHawkesModel, state: usize) -> Result<f64> {
    perron_root(&kernel_norm_matrix(model, state)?)
}

/// Largest eigenvalue modulus of a square non-negative matrix.
///
/// The matrix is split into strongly connected blocks; the radius is the
/// maximum over blocks. Each irreducible block `B` is handled by power
/// iteration on `B + I`, which is primitive, from the all-ones vector. The
/// Collatz–Wielandt quotients `(Bv)_i / v_i` bracket the root and iteration
/// stops once the bracket is within the relative tolerance.
pub fn perron_root(m: &[Vec<f64>]) -> Result<f64> {
    let n = m.len();
    if m.iter().any(|row| row.len() != n) {
        return Err(Error::invalid("matrix is not square"));
    }
    if m.iter().flatten().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("matrix must be finite and non-negative"));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut best: f64 = 0.0;
    for block in strongly_connected_blocks(m) {
        let sub: Vec<Vec<f64>> = block.iter().map(|&i| block.iter().map(|&j| m[i][j]).collect()).collect();
        best = best.max(irreducible_root(&sub)?);
    }
    Ok(best)
}

fn irreducible_root(m: &[Vec<f64>]) -> Result<f64> {
    let n = m.len();
    if n == 1 {
        return Ok(m[0][0]);
    }
    let mut v = vec![1.0; n];
    let mut w = vec![0.0; n];
    // once within tolerance, keep iterating while the bracket still shrinks
    let mut converged: Option<(f64, f64)> = None;
    let mut stalls = 0;
    for _ in 0..POWER_MAX_ITER {
        for i in 0..n {
            w[i] = m[i].iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let q = w[i] / v[i];
            lo = lo.min(q);
            hi = hi.max(q);
        }
        if hi == 0.0 {
            return Ok(0.0);
        }
        if let Some((best_lo, best_hi)) = converged {
            if hi - lo < best_hi - best_lo {
                converged = Some((lo, hi));
                stalls = 0;
            } else {
                stalls += 1;
            }
            let (best_lo, best_hi) = converged.unwrap();
            if stalls >= 5 || best_hi - best_lo <= 4.0 * f64::EPSILON * best_hi {
                return Ok(0.5 * (best_hi + best_lo));
            }
        } else if hi - lo <= POWER_TOLERANCE * hi {
            converged = Some((lo, hi));
        }
        // step with B + I
        let norm = w.iter().zip(&v).map(|(a, b)| a + b).fold(0.0, f64::max);
        for i in 0..n {
            v[i] = (w[i] + v[i]) / norm;
        }
    }
    match converged {
        Some((lo, hi)) => Ok(0.5 * (lo + hi)),
        None => Err(Error::Numerical(format!(
            "power iteration did not converge in {POWER_MAX_ITER} iterations"
        ))),
    }
}

/// Strongly connected components of the graph `i -> j` iff `m[i][j] > 0`
/// (Tarjan, iterative).
fn strongly_connected_blocks(m: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = m.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut blocks = Vec::new();
    let mut counter = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut work = vec![(root, 0usize)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(top) = work.last_mut() {
            let v = top.0;
            if top.1 < n {
                let w = top.1;
                top.1 += 1;
                if m[v][w] <= 0.0 {
                    continue;
                }
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut block = Vec::new();
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        block.push(w);
                        if w == v {
                            break;
                        }
                    }
                    block.sort_unstable();
                    blocks.push(block);
                }
            }
        }
    }
    blocks
}

/// Closed-form Perron root of a 2x2 non-negative matrix.
pub fn perron_root_2x2(m: [[f64; 2]; 2]) -> f64 {
    let half_trace = 0.5 * (m[0][0] + m[1][1]);
    let half_diff = 0.5 * (m[0][0] - m[1][1]);
    half_trace + (half_diff * half_diff + m[0][1] * m[1][0]).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateEndogeneity {
    pub x: usize,
    pub label: String,
    pub norm_matrix: Vec<Vec<f64>>,
    pub rho: f64,
}

pub fn endogeneity(model: &SdHawkesModel) -> Result<Vec<StateEndogeneity>> {
    (0..model.n_states())
        .map(|x| {
            let norm_matrix = kernel_norm_matrix(model, x)?;
            let rho = perron_root(&norm_matrix)?;
            if model.n_events() == 2 {
                let closed = perron_root_2x2([
                    [norm_matrix[0][0], norm_matrix[0][1]],
                    [norm_matrix[1][0], norm_matrix[1][1]],
                ]);
                if (closed - rho).abs() > 1e-8 * closed.max(1.0) {
                    return Err(Error::Numerical(format!(
                        "power iteration radius {rho} disagrees with closed form {closed} in state {x}"
                    )));
                }
            }
            Ok(StateEndogeneity {
                x,
                label: model.dims.state_labels()[x].clone(),
                norm_matrix,
                rho,
            })
        })
        .collect()
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// The default time grid for truncated-norm curves: 1 µs to 100 s.
pub fn standard_grid(points: usize) -> Vec<f64> {
    log_grid(1e-6, 1e2, points)
}

/// One truncated-norm curve `t -> ||k_{e' -> e}(., x)||_{1,t}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormCurve {
    pub source_event: usize,
    pub state: usize,
    pub target_event: usize,
    pub values: Vec<f64>,
}

pub fn norm_curves(model: &SdHawkesModel, grid: &[f64]) -> Result<Vec<NormCurve>> {
    let (de, dx) = (model.n_events(), model.n_states());
    let mut out = Vec::with_capacity(de * dx * de);
    for ep in 0..de {
        for x in 0..dx {
            for e in 0..de {
                let (a, b) = (model.kernel.alpha(ep, x, e), model.kernel.beta(ep, x, e));
                let values = grid
                    .iter()
                    .map(|&t| truncated_kernel_norm(a, b, t))
                    .collect::<Result<Vec<_>>>()?;
                out.push(NormCurve {
                    source_event: ep,
                    state: x,
                    target_event: e,
                    values,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_norm_examples() {
        assert!((truncated_kernel_norm(2.0, 4.0, 1e9).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(truncated_kernel_norm(2.0, 4.0, 0.0).unwrap(), 0.0);
        let half = truncated_kernel_norm(2.0, 4.0, std::f64::consts::LN_2 / 4.0).unwrap();
        assert!((half - 0.25).abs() < 1e-15);
        assert!(truncated_kernel_norm(2.0, 4.0, -1.0).is_err());
    }

    #[test]
    fn symmetric_two_by_two() {
        let m = vec![vec![0.5, 0.2], vec![0.2, 0.5]];
        assert!((perron_root(&m).unwrap() - 0.7).abs() < 1e-12);
        assert!((perron_root_2x2([[0.5, 0.2], [0.2, 0.5]]) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn diagonal_and_triangular() {
        let d = vec![vec![0.3, 0.0, 0.0], vec![0.0, 0.9, 0.0], vec![0.0, 0.0, 0.1]];
        assert!((perron_root(&d).unwrap() - 0.9).abs() < 1e-15);
        let t = vec![vec![0.2, 5.0], vec![0.0, 0.4]];
        assert!((perron_root(&t).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn periodic_block_converges() {
        let m = vec![vec![0.0, 2.0], vec![0.5, 0.0]];
        assert!((perron_root(&m).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_matrix() {
        assert_eq!(perron_root(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap(), 0.0);
    }

    #[test]
    fn rejects_negative_entries() {
        assert!(perron_root(&[vec![-0.1]]).is_err());
        assert!(perron_root(&[vec![0.1, 0.2]]).is_err());
    }

    #[test]
    fn grid_endpoints() {
        let g = standard_grid(9);
        assert!((g[0] - 1e-6).abs() < 1e-18);
        assert!((g[8] - 100.0).abs() < 1e-9);
        assert!((g[4] - 0.01).abs() < 1e-12);
    }
}
