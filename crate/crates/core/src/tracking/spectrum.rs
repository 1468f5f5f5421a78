//! Spectral analysis of tracked trajectories.

use std::f64::consts::TAU;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// One-sided power spectrum of a uniformly sampled signal after mean
/// removal and a Hann window. Returns `(angular frequencies [rad/s], power)`.
pub fn power_spectrum(signal: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
    let n = signal.len();
    if n < 2 {
        return (Vec::new(), Vec::new());
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = signal
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let w = 0.5 - 0.5 * (TAU * k as f64 / (n - 1) as f64).cos();
            Complex::new((x - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = TAU / (n as f64 * dt);
    let half = n / 2 + 1;
    let freqs = (0..half).map(|k| k as f64 * df).collect();
    let power = buf[..half].iter().map(|c| c.norm_sqr()).collect();
    (freqs, power)
}

/// Strongest spectral line within `band` (angular frequencies), refined by
/// parabolic interpolation of the log power around the peak bin.
pub fn dominant_frequency(signal: &[f64], dt: f64, band: (f64, f64)) -> Option<f64> {
    let (freqs, power) = power_spectrum(signal, dt);
    let k = (1..freqs.len().saturating_sub(1))
        .filter(|&k| freqs[k] >= band.0 && freqs[k] <= band.1)
        .max_by(|&i, &j| power[i].total_cmp(&power[j]))?;
    let (a, b, c) = (power[k - 1].ln(), power[k].ln(), power[k + 1].ln());
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    Some(freqs[k] + shift.clamp(-0.5, 0.5) * (freqs[1] - freqs[0]))
}

/// Moving average over `window` samples, centred, shrinking at the ends.
pub fn moving_average(signal: &[f64], window: usize) -> Vec<f64> {
    let n = signal.len();
    let half = window / 2;
    let mut prefix = vec![0.0; n + 1];
    for (k, &x) in signal.iter().enumerate() {
        prefix[k + 1] = prefix[k] + x;
    }
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Number of oscillation periods in a signal, from its sign changes about
/// the mean, with the partial cycles at both ends estimated linearly.
pub fn oscillation_count(signal: &[f64]) -> f64 {
    let n = signal.len();
    if n < 2 {
        return 0.0;
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let crossings: Vec<f64> = signal
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[0] - mean) * (w[1] - mean) < 0.0)
        .map(|(k, w)| k as f64 + (mean - w[0]) / (w[1] - w[0]))
        .collect();
    match crossings.len() {
        0 => 0.0,
        1 => 0.5,
        m => {
            let spacing = (crossings[m - 1] - crossings[0]) / (m - 1) as f64;
            let inner = 0.5 * (m - 1) as f64;
            let ends = (crossings[0] + (n - 1) as f64 - crossings[m - 1]) / (2.0 * spacing);
            inner + ends
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn recovers_a_pure_tone() {
        let dt = 1e-9;
        let w = TAU * 37.3e6;
        let x: Vec<f64> = (0..4096).map(|k| (w * k as f64 * dt).sin() + 0.2).collect();
        let found = dominant_frequency(&x, dt, (TAU * 1e6, TAU * 400e6)).unwrap();
        assert_relative_eq!(found, w, max_relative = 2e-3);
    }

    #[test]
    fn picks_the_stronger_line_in_band() {
        let dt = 1e-10;
        let (w1, w2) = (TAU * 100e6, TAU * 900e6);
        let x: Vec<f64> = (0..8192)
            .map(|k| {
                let t = k as f64 * dt;
                (w1 * t).cos() + 0.3 * (w2 * t).cos()
            })
            .collect();
        let low = dominant_frequency(&x, dt, (TAU * 10e6, TAU * 500e6)).unwrap();
        let high = dominant_frequency(&x, dt, (TAU * 500e6, TAU * 2e9)).unwrap();
        assert_relative_eq!(low, w1, max_relative = 5e-3);
        assert_relative_eq!(high, w2, max_relative = 5e-3);
    }

    #[test]
    fn counts_oscillations() {
        let x: Vec<f64> = (0..1000).map(|k| (TAU * 4.25 * k as f64 / 999.0).sin()).collect();
        assert_relative_eq!(oscillation_count(&x), 4.25, epsilon = 0.05);
        let avg = moving_average(&[1.0, 2.0, 3.0, 4.0, 5.0], 3);
        assert_eq!(avg, vec![1.5, 2.0, 3.0, 4.0, 4.5]);
    }
}
