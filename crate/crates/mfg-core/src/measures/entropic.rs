//! Debiased entropic W2: log-domain Sinkhorn iterations with epsilon
//! annealing, returning the Sinkhorn divergence
//! `S_eps(a,b) = OT_eps(a,b) - (OT_eps(a,a) + OT_eps(b,b)) / 2`
//! which removes the entropic bias at first order.

use super::{sq_dist, EmpiricalMeasure};
use crate::error::Result;

const MAX_ITERS: usize = 300;
const MARGINAL_TOL: f64 = 1e-10;

/// Debiased entropic approximation of `W2(m1, m2)` at regularization `eps`.
pub fn sinkhorn_divergence(m1: &EmpiricalMeasure, m2: &EmpiricalMeasure, eps: f64) -> Result<f64> {
    let ab = ot_eps(m1, m2, eps);
    let aa = ot_eps(m1, m1, eps);
    let bb = ot_eps(m2, m2, eps);
    let s = ab - 0.5 * (aa + bb);
    Ok(s.max(0.0).sqrt())
}

/// Sharp transport cost `<pi, C>` at regularization `eps`, with annealing
/// from a coarse epsilon down to the target.
fn ot_eps(a: &EmpiricalMeasure, b: &EmpiricalMeasure, eps_target: f64) -> f64 {
    let na = a.len();
    let nb = b.len();
    let cost: Vec<f64> = {
        let mut c = Vec::with_capacity(na * nb);
        for i in 0..na {
            for j in 0..nb {
                c.push(sq_dist(a.point(i), b.point(j)));
            }
        }
        c
    };
    let log_wa: Vec<f64> = a.weights().iter().map(|w| w.max(1e-300).ln()).collect();
    let log_wb: Vec<f64> = b.weights().iter().map(|w| w.max(1e-300).ln()).collect();

    let mut f = vec![0.0f64; na];
    let mut g = vec![0.0f64; nb];

    let mut eps = eps_target.max(1.0);
    loop {
        for _ in 0..MAX_ITERS {
            // f_i = -eps log sum_j exp(log wb_j + (g_j - C_ij)/eps)
            let mut delta: f64 = 0.0;
            for i in 0..na {
                let row = &cost[i * nb..(i + 1) * nb];
                let new = -eps * logsumexp(row.iter().zip(&g).zip(&log_wb).map(|((c, gj), lw)| lw + (gj - c) / eps));
                delta = delta.max((new - f[i]).abs());
                f[i] = new;
            }
            for j in 0..nb {
                let new = -eps
                    * logsumexp(
                        (0..na).map(|i| log_wa[i] + (f[i] - cost[i * nb + j]) / eps),
                    );
                delta = delta.max((new - g[j]).abs());
                g[j] = new;
            }
            if delta < MARGINAL_TOL * eps {
                break;
            }
        }
        if eps <= eps_target {
            break;
        }
        eps = (eps * 0.5).max(eps_target);
    }

    // <pi, C> with pi_ij = wa_i wb_j exp((f_i + g_j - C_ij)/eps)
    let mut total = 0.0;
    for i in 0..na {
        for j in 0..nb {
            let c = cost[i * nb + j];
            let log_pi = log_wa[i] + log_wb[j] + (f[i] + g[j] - c) / eps_target.max(eps);
            total += log_pi.exp() * c;
        }
    }
    total
}

fn logsumexp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + vals.map(|v| (v - max).exp()).sum::<f64>().ln()
}
