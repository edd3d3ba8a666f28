//! Trap-plus-Coulomb potential on a flat coordinate slice `[x0, y0, z0, x1, ...]`.
//!
//! The same kernels serve both the SI-facing functions and the dimensionless
//! minimizer; only the coefficients differ.

/// `U = sum_j 1/2 sum_c trap[c] x_jc^2 + coulomb * sum_{j<k} 1/r_jk`
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Coefficients {
    pub trap: [f64; 3],
    pub coulomb: f64,
}

#[inline]
fn pair_distance_sq(x: &[f64], j: usize, k: usize) -> f64 {
    let dx = x[3 * j] - x[3 * k];
    let dy = x[3 * j + 1] - x[3 * k + 1];
    let dz = x[3 * j + 2] - x[3 * k + 2];
    dx * dx + dy * dy + dz * dz
}

/// First coincident pair, if any.
pub(crate) fn coincident_pair(x: &[f64]) -> Option<(usize, usize)> {
    let n = x.len() / 3;
    for j in 0..n {
        for k in (j + 1)..n {
            if pair_distance_sq(x, j, k) == 0.0 {
                return Some((j, k));
            }
        }
    }
    None
}

pub(crate) fn energy(x: &[f64], c: &Coefficients) -> f64 {
    let n = x.len() / 3;
    let mut trap = 0.0;
    for p in x.chunks_exact(3) {
        trap += 0.5 * (c.trap[0] * p[0] * p[0] + c.trap[1] * p[1] * p[1] + c.trap[2] * p[2] * p[2]);
    }
    let mut inv = 0.0;
    for j in 0..n {
        for k in (j + 1)..n {
            inv += 1.0 / pair_distance_sq(x, j, k).sqrt();
        }
    }
    trap + c.coulomb * inv
}

pub(crate) fn gradient(x: &[f64], c: &Coefficients, g: &mut [f64]) {
    let n = x.len() / 3;
    for (gp, p) in g.chunks_exact_mut(3).zip(x.chunks_exact(3)) {
        gp[0] = c.trap[0] * p[0];
        gp[1] = c.trap[1] * p[1];
        gp[2] = c.trap[2] * p[2];
    }
    for j in 0..n {
        for k in (j + 1)..n {
            let d = [
                x[3 * j] - x[3 * k],
                x[3 * j + 1] - x[3 * k + 1],
                x[3 * j + 2] - x[3 * k + 2],
            ];
            let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            let s = c.coulomb / (r2 * r2.sqrt());
            for a in 0..3 {
                g[3 * j + a] -= s * d[a];
                g[3 * k + a] += s * d[a];
            }
        }
    }
}

/// `U(x + step) - U(x)`, evaluated term by term so that the result keeps
/// relative precision even when it is many orders below `U` itself.
pub(crate) fn energy_change(x: &[f64], step: &[f64], c: &Coefficients) -> f64 {
    let n = x.len() / 3;
    let mut trap = 0.0;
    for (p, s) in x.chunks_exact(3).zip(step.chunks_exact(3)) {
        for a in 0..3 {
            trap += 0.5 * c.trap[a] * s[a] * (2.0 * p[a] + s[a]);
        }
    }
    let mut inv = 0.0;
    for j in 0..n {
        for k in (j + 1)..n {
            let mut r2_old = 0.0;
            let mut dr2 = 0.0;
            for a in 0..3 {
                let d = x[3 * j + a] - x[3 * k + a];
                let e = step[3 * j + a] - step[3 * k + a];
                r2_old += d * d;
                dr2 += e * (2.0 * d + e);
            }
            let r_old = r2_old.sqrt();
            let r_new = (r2_old + dr2).sqrt();
            // 1/r_new - 1/r_old = -(r_new^2 - r_old^2) / (r_old r_new (r_old + r_new))
            inv -= dr2 / (r_old * r_new * (r_old + r_new));
        }
    }
    trap + c.coulomb * inv
}
