//! Nested time-grid sequences.
//!
//! A [`TimeGridSequence`] stores the finest grid's time stamps once and
//! every coarser level as a list of indices into it. Nestedness is then an
//! exact statement about integer index sets, never about float equality.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deepest dyadic level accepted by [`dyadic_grids`].
pub const MAX_DYADIC_LEVEL: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGridSequence {
    horizon: f64,
    times: Vec<f64>,
    levels: Vec<Vec<usize>>,
}

/// Dyadic grids `{k 2^-N T}` for `N = 0..=max_level`.
pub fn dyadic_grids(horizon: f64, max_level: usize) -> Result<TimeGridSequence> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::config(format!("horizon must be > 0, got {horizon}")));
    }
    if max_level > MAX_DYADIC_LEVEL {
        return Err(Error::config(format!(
            "max_level {max_level} exceeds {MAX_DYADIC_LEVEL}"
        )));
    }
    let n = 1usize << max_level;
    let scale = 1.0 / n as f64;
    let times = (0..=n).map(|k| horizon * (k as f64 * scale)).collect();
    let levels = (0..=max_level)
        .map(|lvl| {
            let stride = 1usize << (max_level - lvl);
            (0..=(1usize << lvl)).map(|k| k * stride).collect()
        })
        .collect();
    Ok(TimeGridSequence { horizon, times, levels })
}

impl TimeGridSequence {
    /// Builds a sequence from explicit time lists, coarsest first.
    ///
    /// Each level must start at 0, end at the common horizon, be strictly
    /// increasing and be contained (bitwise) in the next level. Meshes must
    /// strictly decrease; the finest mesh must not exceed `mesh_bound` if given.
    pub fn from_levels(levels: Vec<Vec<f64>>, mesh_bound: Option<f64>) -> Result<Self> {
        let finest = levels
            .last()
            .ok_or_else(|| Error::config("grid sequence needs at least one level"))?
            .clone();
        let horizon = *finest.last().unwrap_or(&0.0);
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::config("grid horizon must be > 0"));
        }
        for (n, lvl) in levels.iter().enumerate() {
            if lvl.len() < 2 || lvl[0] != 0.0 || *lvl.last().unwrap() != horizon {
                return Err(Error::config(format!(
                    "level {n} must contain 0 and the horizon {horizon}"
                )));
            }
            if lvl.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::config(format!("level {n} is not strictly increasing")));
            }
        }
        let mut index_levels = Vec::with_capacity(levels.len());
        for (n, lvl) in levels.iter().enumerate() {
            let mut idx = Vec::with_capacity(lvl.len());
            let mut j = 0;
            for &t in lvl {
                while j < finest.len() && finest[j] < t {
                    j += 1;
                }
                if j == finest.len() || finest[j] != t {
                    return Err(Error::config(format!("level {n} time {t} is not in the finest level")));
                }
                idx.push(j);
            }
            index_levels.push(idx);
        }
        // nestedness between consecutive levels, not only into the finest
        for n in 1..index_levels.len() {
            let next = &index_levels[n];
            if !index_levels[n - 1].iter().all(|i| next.binary_search(i).is_ok()) {
                return Err(Error::config(format!("level {} is not a subset of level {n}", n - 1)));
            }
        }
        let grids = TimeGridSequence {
            horizon,
            times: finest,
            levels: index_levels,
        };
        for n in 1..grids.num_levels() {
            if !(grids.mesh(n) < grids.mesh(n - 1)) {
                return Err(Error::config(format!("mesh does not decrease at level {n}")));
            }
        }
        if let Some(bound) = mesh_bound {
            let m = grids.mesh(grids.finest_level());
            if m > bound {
                return Err(Error::config(format!("finest mesh {m} exceeds bound {bound}")));
            }
        }
        Ok(grids)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn finest_level(&self) -> usize {
        self.levels.len() - 1
    }

    /// Time stamps of the finest grid.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of points on the finest grid.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Indices (into the finest grid) of the points of level `n`.
    ///
    /// Panics if `n` is not a level of this sequence.
    pub fn level(&self, n: usize) -> &[usize] {
        &self.levels[n]
    }

    pub fn level_times(&self, n: usize) -> Vec<f64> {
        self.levels[n].iter().map(|&i| self.times[i]).collect()
    }

    /// Largest step of level `n`.
    pub fn mesh(&self, n: usize) -> f64 {
        self.levels[n]
            .windows(2)
            .map(|w| self.times[w[1]] - self.times[w[0]])
            .fold(0.0, f64::max)
    }

    /// True when the finest grid has equal steps (to rounding of the time stamps).
    pub fn is_uniform(&self) -> bool {
        let h = self.horizon / (self.times.len() - 1) as f64;
        self.times.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h)
    }

    /// Finest-grid index of time `t`, matched within `tol`.
    pub fn index_of(&self, t: f64, tol: f64) -> Option<usize> {
        let pos = self.times.partition_point(|&s| s < t - tol);
        (pos < self.times.len() && (self.times[pos] - t).abs() <= tol).then_some(pos)
    }

    pub(crate) fn check_level(&self, n: usize) -> Result<()> {
        if n < self.num_levels() {
            Ok(())
        } else {
            Err(Error::config(format!(
                "level {n} out of range (finest is {})",
                self.finest_level()
            )))
        }
    }
}
