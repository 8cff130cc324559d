use serde::{Deserialize, Serialize};

use crate::sum::KahanSum;

/// Cumulative values of a grid-indexed sum at the points of one level.
///
/// `values[j]` is the sum over consecutive level points `t_i, t_{i+1}` with
/// `t_{i+1} <= t_j`; `values[0] = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSeries {
    pub level: usize,
    /// Finest-grid indices of the level's points.
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl LevelSeries {
    /// Compensated cumulative sum of `term(i, j)` over consecutive level
    /// points with finest indices `i < j`.
    pub fn accumulate(level: usize, indices: &[usize], mut term: impl FnMut(usize, usize) -> f64) -> Self {
        let mut acc = KahanSum::new();
        let mut values = Vec::with_capacity(indices.len());
        values.push(0.0);
        for w in indices.windows(2) {
            acc.add(term(w[0], w[1]));
            values.push(acc.value());
        }
        LevelSeries {
            level,
            indices: indices.to_vec(),
            values,
        }
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Value at finest index `idx`: the last level point at or before it.
    pub fn at_index(&self, idx: usize) -> f64 {
        let p = self.indices.partition_point(|&i| i <= idx);
        self.values[p.saturating_sub(1)]
    }

    /// Value at time `t` given the finest grid's time stamps.
    pub fn at_time(&self, times: &[f64], t: f64) -> f64 {
        let p = self.indices.partition_point(|&i| times[i] <= t);
        self.values[p.saturating_sub(1)]
    }

    /// Step-function extension onto every finest-grid point.
    pub fn on_finest(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (w, v) in self.indices.windows(2).zip(&self.values) {
            out[w[0]..w[1]].fill(*v);
        }
        let last = *self.indices.last().unwrap();
        out[last..].fill(self.terminal());
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
