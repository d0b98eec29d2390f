//! Brute-force reference solutions used to cross-check the solver.
//!
//! Nothing here touches the formulation or solver modules. The code is slow
//! and direct on purpose: no Jacobians, no damping.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("conductance matrix is singular; a node has no path to a slack voltage")]
    SingularNetwork,
    #[error("loading P={p}, Q={q} is beyond the maximum transfer of the line")]
    InfeasibleLoading { p: f64, q: f64 },
}

/// A resistive conductor between two oracle nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resistor {
    pub from: usize,
    pub to: usize,
    pub r: f64,
}

/// Node voltages of a linear resistive network.
///
/// `injections[k]` is the current injected into node `k` from outside the
/// network. Nodes listed in `slack` have their voltage fixed and absorb
/// whatever current balances them.
pub fn solve_dc_linear(
    n_nodes: usize,
    resistors: &[Resistor],
    injections: &[f64],
    slack: &[(usize, f64)],
) -> Result<Vec<f64>, OracleError> {
    assert_eq!(injections.len(), n_nodes);
    let mut fixed: Vec<Option<f64>> = vec![None; n_nodes];
    for &(k, u) in slack {
        fixed[k] = Some(u);
    }
    let free: Vec<usize> = (0..n_nodes).filter(|&k| fixed[k].is_none()).collect();
    let mut pos = vec![usize::MAX; n_nodes];
    for (i, &k) in free.iter().enumerate() {
        pos[k] = i;
    }
    let m = free.len();
    let mut a = vec![vec![0.0; m + 1]; m];
    for (i, &k) in free.iter().enumerate() {
        a[i][m] = injections[k];
    }
    // Current leaving node k through a resistor: (U_k − U_other) / r.
    for res in resistors {
        let g = 1.0 / res.r;
        for (here, there) in [(res.from, res.to), (res.to, res.from)] {
            if fixed[here].is_some() {
                continue;
            }
            let row = pos[here];
            a[row][row] += g;
            match fixed[there] {
                Some(u) => a[row][m] += g * u,
                None => a[row][pos[there]] -= g,
            }
        }
    }
    let x = gauss(a)?;
    let mut u = vec![0.0; n_nodes];
    for k in 0..n_nodes {
        u[k] = match fixed[k] {
            Some(v) => v,
            None => x[pos[k]],
        };
    }
    Ok(u)
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn gauss(mut a: Vec<Vec<f64>>) -> Result<Vec<f64>, OracleError> {
    let m = a.len();
    let scale = a.iter().flat_map(|r| r[..m].iter()).fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        if a[piv][col].abs() <= 1e-12 * scale {
            return Err(OracleError::SingularNetwork);
        }
        a.swap(col, piv);
        for row in col + 1..m {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                let (top, bottom) = a.split_at_mut(row);
                for (t, p) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *t -= f * p;
                }
            }
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let mut s = a[row][m];
        for k in row + 1..m {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Ok(x)
}

/// Load-bus voltage `(U, θ)` of a generator feeding one load over a single
/// series admittance `g + jb`, with the generator at angle 0.
///
/// Derivation: write the load-bus injection as `S = −(P + jQ)` and the line
/// current from the load side. With `V = U²` the angle eliminates to
/// `V² + (2α − U_g²)V + α² + β² = 0`, where
/// `α = (gP − bQ)/|y|²` and `β = (gQ + bP)/|y|²`. The upper root is found by
/// bisection and `θ = atan2(β, V + α)`.
pub fn solve_two_bus_ac(g: f64, b: f64, u_gen: f64, p_load: f64, q_load: f64) -> Result<(f64, f64), OracleError> {
    let y2 = g * g + b * b;
    let alpha = (g * p_load - b * q_load) / y2;
    let beta = (g * q_load + b * p_load) / y2;
    let c1 = 2.0 * alpha - u_gen * u_gen;
    let c0 = alpha * alpha + beta * beta;
    let h = |v: f64| v * v + c1 * v + c0;

    let vertex = -c1 / 2.0;
    if vertex <= 0.0 || h(vertex) > 0.0 {
        return Err(OracleError::InfeasibleLoading { p: p_load, q: q_load });
    }
    // h is increasing right of the vertex; find an upper bracket.
    let mut lo = vertex;
    let mut hi = vertex.max(1.0);
    while h(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let v = 0.5 * (lo + hi);
    let u = v.sqrt();
    // U_g·U·cos θ = V + α and U_g·U·sin θ = β from the eliminated pair.
    let theta = beta.atan2(v + alpha);
    Ok((u, theta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ohms_law_two_nodes() {
        let u = solve_dc_linear(2, &[Resistor { from: 0, to: 1, r: 0.01 }], &[0.01, 0.0], &[(1, 1.0)]).unwrap();
        assert!((u[0] - 1.0001).abs() < 1e-14);
        let u = solve_dc_linear(2, &[Resistor { from: 0, to: 1, r: 0.01 }], &[1.0, 0.0], &[(1, 1.0)]).unwrap();
        assert!((u[0] - 1.01).abs() < 1e-12);
    }

    #[test]
    fn zero_injection_is_flat() {
        let rs = [Resistor { from: 0, to: 1, r: 0.02 }, Resistor { from: 1, to: 2, r: 0.05 }];
        let u = solve_dc_linear(3, &rs, &[0.0; 3], &[(2, 0.97)]).unwrap();
        assert!(u.iter().all(|&v| (v - 0.97).abs() < 1e-14));
    }

    #[test]
    fn floating_node_is_singular() {
        let rs = [Resistor { from: 0, to: 1, r: 0.02 }];
        let r = solve_dc_linear(3, &rs, &[0.0; 3], &[(1, 1.0)]);
        assert_eq!(r, Err(OracleError::SingularNetwork));
    }

    #[test]
    fn unloaded_line_is_flat() {
        let (u, th) = solve_two_bus_ac(1.0, -10.0, 1.02, 0.0, 0.0).unwrap();
        assert!((u - 1.02).abs() < 1e-12 && th.abs() < 1e-12);
    }

    #[test]
    fn lossless_line_reference_point() {
        let (u, th) = solve_two_bus_ac(0.0, -10.0, 1.0, 0.5, 0.0).unwrap();
        // Check against the polar balance equations directly.
        let p = 10.0 * u * th.sin();
        let q = -10.0 * u * u + 10.0 * u * th.cos();
        assert!((p + 0.5).abs() < 1e-12, "{p}");
        assert!(q.abs() < 1e-12, "{q}");
        assert!((u - 0.998746).abs() < 1e-6 && (th + 0.050084).abs() < 1e-5, "{u} {th}");
    }

    #[test]
    fn overload_is_infeasible() {
        assert!(matches!(solve_two_bus_ac(0.0, -10.0, 1.0, 6.0, 0.0), Err(OracleError::InfeasibleLoading { .. })));
    }
}
