/// Rolling Z-score of `series` over the `window` values ending at each `t`.
/// Entries before `window − 1` and zero-variance windows are `None`.
pub fn rolling_zscore(series: &[f64], window: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; series.len()];
    if window < 2 {
        return out;
    }
    for t in window - 1..series.len() {
        let w = &series[t + 1 - window..=t];
        let mean = w.iter().sum::<f64>() / window as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (window - 1) as f64;
        let sd = var.sqrt();
        if sd > 1e-12 * mean.abs().max(1.0) {
            out[t] = Some((series[t] - mean) / sd);
        }
    }
    out
}

/// Position `clamp(−z · I_max / z_cap, ±I_max)` at every step; flat where `z` is undefined.
pub fn zscore_positions(series: &[f64], window: usize, i_max: f64, z_cap: f64) -> Vec<f64> {
    rolling_zscore(series, window)
        .into_iter()
        .map(|z| z.map_or(0.0, |z| (-z * i_max / z_cap).clamp(-i_max, i_max)))
        .collect()
}
