//! Initial configurations: a triangular-lattice disk patch with small jitter.

use rand::Rng;
use std::f64::consts::PI;

/// Dimensionless seed for `n` ions (lengths in units of `(k q^2 / M omega_1^2)^(1/3)`).
///
/// The patch spacing fills the radius of the continuum planar charge disk,
/// `R^3 = (3 pi / 2) n / beta`, so the minimizer starts near the right size.
pub(crate) fn jittered_patch<R: Rng>(n: usize, beta: f64, jitter: f64, z_jitter: f64, rng: &mut R) -> Vec<f64> {
    let radius = (1.5 * PI * n as f64 / beta).cbrt();
    let spacing = if n > 1 {
        radius * (2.0 * PI / (3f64.sqrt() * n as f64)).sqrt()
    } else {
        1.0
    };
    let mut sites = triangular_sites(n);
    for s in sites.iter_mut() {
        s[0] *= spacing;
        s[1] *= spacing;
    }
    let mut out = Vec::with_capacity(3 * n);
    for s in sites {
        out.push(s[0] + spacing * jitter * rng.random_range(-1.0..1.0));
        out.push(s[1] + spacing * jitter * rng.random_range(-1.0..1.0));
        out.push(spacing * z_jitter * rng.random_range(-1.0..1.0));
    }
    out
}

/// The `n` unit-spacing triangular lattice sites closest to the origin.
fn triangular_sites(n: usize) -> Vec<[f64; 2]> {
    let k = ((n as f64).sqrt().ceil() as i64) + 2;
    let h = 3f64.sqrt() / 2.0;
    let mut sites: Vec<[f64; 2]> = Vec::new();
    for j in -k..=k {
        for i in -k..=k {
            sites.push([i as f64 + 0.5 * j as f64, h * j as f64]);
        }
    }
    sites.sort_by(|a, b| {
        let ra = a[0] * a[0] + a[1] * a[1];
        let rb = b[0] * b[0] + b[1] * b[1];
        ra.total_cmp(&rb).then(a[1].atan2(a[0]).total_cmp(&b[1].atan2(b[0])))
    });
    sites.truncate(n);
    sites
}
