//! Fuel rationing, SoC-based forecast-error estimation, the moving-average
//! error predictor and the reserve-factor rules.

use std::collections::VecDeque;

use crate::scenario::GroupProfile;

/// End-of-window fuel floor for a stage-1 solve at slot `t` of day `d`
/// (both 1-based) out of `t_len` slots per day and `d_len` days.
pub fn fuel_reserve_target(
    f_prev: f64,
    f_final: f64,
    t: usize,
    d: usize,
    t_len: usize,
    d_len: usize,
) -> f64 {
    if f_prev < f_final {
        log::warn!("fuel {f_prev:.1} L already below final reserve {f_final:.1} L; clamping target");
        return f_final;
    }
    rationed_target(f_prev, f_final, t, d, t_len, d_len)
}

/// Linear interpolation from `current` down to `last` over the restoration,
/// evaluated at the end of the window that starts at (`t`, `d`).
pub fn rationed_target(current: f64, last: f64, t: usize, d: usize, t_len: usize, d_len: usize) -> f64 {
    debug_assert!(d >= 1 && t >= 1 && t_len > 0 && d_len > 0);
    if d >= d_len {
        return last;
    }
    let done = (t_len * d + t - 1) as f64 / (t_len * d_len) as f64;
    current - (current - last) * done
}

/// Average net-load forecast error over an interval, from the gap between
/// measured and scheduled state of charge. Positive means the forecast was
/// higher than what materialized.
pub fn estimate_interval_error(soc_meas: f64, soc_sched: f64, kwh: f64, eta: f64, dt_h: f64) -> f64 {
    kwh * eta / dt_h * (soc_meas - soc_sched)
}

/// Interval error estimates in chronological order, one per stage-1 slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorHistory {
    capacity: usize,
    entries: VecDeque<(usize, f64)>,
}

impl ErrorHistory {
    pub fn new(capacity: usize) -> Self {
        ErrorHistory {
            capacity: capacity.max(1),
            entries: VecDeque::new(),
        }
    }

    /// Appends an estimate; slots must be increasing.
    pub fn push(&mut self, slot: usize, value: f64) {
        if let Some((last, _)) = self.entries.back() {
            assert!(slot > *last, "error history must be chronological");
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((slot, value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &(usize, f64)> {
        self.entries.iter()
    }

    /// The most recent `n` values, oldest first.
    pub fn recent(&self, n: usize) -> Vec<f64> {
        let skip = self.entries.len().saturating_sub(n);
        self.entries.iter().skip(skip).map(|e| e.1).collect()
    }

    pub fn last(&self) -> Option<f64> {
        self.entries.back().map(|e| e.1)
    }
}

impl FromIterator<f64> for ErrorHistory {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let values: Vec<f64> = iter.into_iter().collect();
        let mut h = ErrorHistory::new(values.len());
        for (i, v) in values.into_iter().enumerate() {
            h.push(i, v);
        }
        h
    }
}

/// Mean of the last `min(k, available)` estimates; zero with no history.
pub fn correction_factor(history: &ErrorHistory, k: usize) -> f64 {
    let recent = history.recent(k);
    if recent.is_empty() {
        0.0
    } else {
        recent.iter().sum::<f64>() / recent.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaModel {
    pub mean: f64,
    pub coefficients: Vec<f64>,
}

impl MaModel {
    pub fn zero(order: usize) -> Self {
        MaModel {
            mean: 0.0,
            coefficients: vec![0.0; order],
        }
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }
}

/// Fits the error model on the last `window` estimates: the mean, then
/// lag coefficients by least squares of the next deviation on the `q`
/// preceding deviations.
pub fn fit_ma(history: &ErrorHistory, q: usize, window: usize) -> MaModel {
    let v = history.recent(window);
    let mean = if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    };
    let mut model = MaModel {
        mean,
        coefficients: vec![0.0; q],
    };
    if q == 0 || v.len() < q + 2 {
        return model;
    }
    let dev: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let mut ata = vec![vec![0.0; q]; q];
    let mut atb = vec![0.0; q];
    for s in (q - 1)..(dev.len() - 1) {
        let target = dev[s + 1];
        let row: Vec<f64> = (1..=q).map(|i| dev[s + 1 - i]).collect();
        for a in 0..q {
            atb[a] += row[a] * target;
            for b in 0..q {
                ata[a][b] += row[a] * row[b];
            }
        }
    }
    let scale = (0..q).map(|i| ata[i][i]).fold(0.0, f64::max);
    if scale <= 1e-12 {
        return model;
    }
    for (i, row) in ata.iter_mut().enumerate() {
        row[i] += 1e-9 * scale;
    }
    if let Some(theta) = solve_dense(ata, atb) {
        if theta.iter().all(|t| t.is_finite()) {
            model.coefficients = theta;
        }
    }
    model
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// One-step-ahead error: `mean + Σ θ_i · e[t−i] + e[t]`, where `e[t]` is the
/// latest estimate. Missing lags count as zero.
pub fn predict_error(model: &MaModel, history: &ErrorHistory) -> f64 {
    let v = history.recent(model.order() + 1);
    let n = v.len();
    if n == 0 {
        return model.mean;
    }
    let lagged: f64 = model
        .coefficients
        .iter()
        .enumerate()
        .map(|(k, theta)| {
            let i = k + 1;
            if i < n {
                theta * v[n - 1 - i]
            } else {
                0.0
            }
        })
        .sum();
    model.mean + lagged + v[n - 1]
}

/// Total forecast net load (load minus PV, all groups and phases) at `slot`.
pub fn forecast_net_load(profile: &GroupProfile, slot: usize) -> f64 {
    (0..profile.groups()).map(|g| profile.net_total(g, slot)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReserveState {
    pub gamma: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Minimum reserve fraction.
    pub min_reserve: f64,
}

impl ReserveState {
    pub fn new(gamma_min: f64, gamma_max: f64, min_reserve: f64) -> Self {
        ReserveState {
            gamma: gamma_max,
            gamma_min,
            gamma_max,
            min_reserve,
        }
    }

    pub fn clamp(&self, gamma: f64) -> f64 {
        gamma.clamp(self.gamma_min, self.gamma_max)
    }
}

/// Reserve factor from the previous interval's measured vs forecast net load.
pub fn dynamic_reserve(
    p_net_meas: f64,
    p_net_forecast: f64,
    predicted_error: f64,
    es_rating: f64,
    state: &ReserveState,
) -> f64 {
    assert!(es_rating > 0.0, "storage rating must be positive");
    let raw = if p_net_meas > p_net_forecast {
        1.0 - predicted_error.max(0.0) / es_rating
    } else {
        1.0 - state.min_reserve
    };
    state.clamp(raw)
}

/// Reserve sized as a fraction of the forecast net load, as a factor on
/// the storage rating.
pub fn netload_fraction_reserve(forecast_net: f64, fraction: f64, es_rating: f64) -> f64 {
    (1.0 - fraction * forecast_net.max(0.0) / es_rating).clamp(0.0, 1.0)
}
