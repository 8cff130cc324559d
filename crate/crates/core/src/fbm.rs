//! Exact fractional Brownian motion sampling.
//!
//! On a uniform grid the increments form a stationary Gaussian sequence
//! (fractional Gaussian noise). The Durbin-Levinson recursion produces the
//! rows of the Cholesky factor of its Toeplitz covariance one at a time, so
//! the sample equals `L z` for the dense factor `L` without ever storing it.
//! Non-uniform grids fall back to a dense Cholesky factorization of the fBm
//! covariance, which is only feasible for small grids.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::TimeGridSequence;
use crate::rng::{normals, streams};
use crate::sum::KahanSum;

/// Largest number of increments sampled on a uniform grid.
pub const MAX_UNIFORM_INCREMENTS: usize = 1 << 15;
/// Largest number of points for the dense (non-uniform grid) factorization.
pub const MAX_DENSE_POINTS: usize = 1 << 11;

/// `Cov(B^H_s, B^H_t)`.
pub fn fbm_covariance(s: f64, t: f64, hurst: f64) -> f64 {
    let h2 = 2.0 * hurst;
    0.5 * (s.abs().powf(h2) + t.abs().powf(h2) - (t - s).abs().powf(h2))
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(k: usize, hurst: f64) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.0 && hurst < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("Hurst exponent must lie in (0, 1), got {hurst}")))
    }
}

/// Raw fBm `B^H` on the finest grid for each seed, `B^H_0 = 0`.
///
/// Seeds in one call share the Levinson coefficients, which makes batteries
/// of many seeds roughly twice as fast as sampling them one by one.
pub fn fbm_batch(hurst: f64, grids: &TimeGridSequence, seeds: &[u64]) -> Result<Vec<Vec<f64>>> {
    check_hurst(hurst)?;
    let n = grids.len() - 1;
    if grids.is_uniform() {
        if n > MAX_UNIFORM_INCREMENTS {
            return Err(Error::Resource {
                what: format!("fBm grid with {n} increments"),
                limit: MAX_UNIFORM_INCREMENTS,
            });
        }
        let dt = grids.horizon() / n as f64;
        let scale = dt.powf(hurst);
        let noise: Vec<Vec<f64>> = seeds.iter().map(|&s| normals(s, streams::FBM, n)).collect();
        let incs = fgn_levinson(hurst, &noise);
        Ok(incs
            .into_iter()
            .map(|inc| {
                let mut acc = KahanSum::new();
                std::iter::once(0.0)
                    .chain(inc.into_iter().map(|d| {
                        acc.add(scale * d);
                        acc.value()
                    }))
                    .collect()
            })
            .collect())
    } else {
        if n > MAX_DENSE_POINTS {
            return Err(Error::Resource {
                what: format!("dense fBm factorization with {n} points"),
                limit: MAX_DENSE_POINTS,
            });
        }
        let l = dense_factor(hurst, &grids.times()[1..])?;
        Ok(seeds
            .iter()
            .map(|&s| {
                let z = nalgebra::DVector::from_vec(normals(s, streams::FBM, n));
                std::iter::once(0.0).chain((&l * z).iter().copied()).collect()
            })
            .collect())
    }
}

/// Single-seed convenience wrapper over [`fbm_batch`].
pub fn fbm_values(hurst: f64, grids: &TimeGridSequence, seed: u64) -> Result<Vec<f64>> {
    Ok(fbm_batch(hurst, grids, &[seed])?.pop().unwrap())
}

/// Lower Cholesky factor of the fBm covariance at `times` (all > 0).
pub fn dense_factor(hurst: f64, times: &[f64]) -> Result<DMatrix<f64>> {
    let n = times.len();
    let cov = DMatrix::from_fn(n, n, |i, j| fbm_covariance(times[i], times[j], hurst));
    cov.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::config("fBm covariance is not positive definite"))
}

/// Unit-step fractional Gaussian noise driven by the given standard normals.
///
/// Each row of `noise` yields one sample; all rows must have equal length.
pub fn fgn_levinson(hurst: f64, noise: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = noise.first().map_or(0, Vec::len);
    let mut out: Vec<Vec<f64>> = noise.iter().map(|_| Vec::with_capacity(n)).collect();
    if n == 0 {
        return out;
    }
    let gamma: Vec<f64> = (0..n).map(|k| fgn_autocovariance(k, hurst)).collect();
    // phi[j-1] holds the order-k prediction coefficient for lag j
    let mut phi: Vec<f64> = Vec::with_capacity(n);
    let mut v = gamma[0];
    for (x, z) in out.iter_mut().zip(noise) {
        x.push(v.sqrt() * z[0]);
    }
    for k in 1..n {
        let mut num = gamma[k];
        for j in 1..k {
            num -= phi[j - 1] * gamma[k - j];
        }
        let kappa = num / v;
        // symmetric in-place update phi_j <- phi_j - kappa * phi_{k-j}
        let (mut lo, mut hi) = (0usize, k.saturating_sub(2));
        while lo < hi {
            let a = phi[lo];
            let b = phi[hi];
            phi[lo] = a - kappa * b;
            phi[hi] = b - kappa * a;
            lo += 1;
            hi -= 1;
        }
        if lo == hi && k >= 2 {
            phi[lo] -= kappa * phi[lo];
        }
        phi.push(kappa);
        v *= 1.0 - kappa * kappa;
        let sd = v.sqrt();
        for (x, z) in out.iter_mut().zip(noise) {
            let mean: f64 = phi.iter().zip(x.iter().rev()).map(|(p, h)| p * h).sum();
            x.push(mean + sd * z[k]);
        }
    }
    out
}
