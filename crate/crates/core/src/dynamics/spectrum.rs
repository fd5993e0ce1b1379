use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::Trajectory;
use crate::error::{Error, Result};

const ZERO_PAD: usize = 4;
/// Peak must stand this far above the median of the searched band.
const MIN_PROMINENCE: f64 = 10.0;
pub const MIN_SECULAR_PERIODS: f64 = 20.0;

/// Dominant angular frequency below `Omega / 2` of one coordinate of a
/// trajectory, from a Hann-windowed FFT with log-parabolic peak interpolation.
pub fn extract_secular_frequency(traj: &Trajectory, axis: usize) -> Result<f64> {
    if axis > 2 {
        return Err(Error::InvalidParameter(format!("axis must be 0, 1 or 2, got {axis}")));
    }
    let samples: Vec<f64> = traj.x.iter().map(|p| p[axis]).collect();
    let w = spectral_peak(&samples, traj.sample_interval(), 0.5 * traj.drive_omega)?;
    let span = traj.sample_interval() * (samples.len() - 1) as f64;
    let periods = w * span / (2.0 * PI);
    if periods < MIN_SECULAR_PERIODS {
        return Err(Error::NoPeak(format!("trajectory spans only {periods:.1} secular periods")));
    }
    Ok(w)
}

/// Angular frequency of the strongest spectral line in `(0, max_omega)`.
pub fn spectral_peak(samples: &[f64], dt: f64, max_omega: f64) -> Result<f64> {
    let n = samples.len();
    if n < 16 || !(dt > 0.0) {
        return Err(Error::NoPeak(format!("{n} samples are too few")));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let scale = samples.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(Error::NoPeak("signal is constant".into()));
    }
    let len = n.next_power_of_two() * ZERO_PAD;
    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); len];
    for (i, v) in samples.iter().enumerate() {
        let hann = 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
        buf[i].re = (v - mean) / scale * hann;
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let mag: Vec<f64> = buf[..len / 2].iter().map(|c| c.norm()).collect();
    let bin = 2.0 * PI / (len as f64 * dt);
    // skip the DC main lobe
    let k_lo = 2 * len / n + 1;
    let k_hi = ((max_omega / bin).floor() as usize).min(len / 2 - 2);
    if k_hi <= k_lo + 2 {
        return Err(Error::NoPeak("search band is empty".into()));
    }
    let band = &mag[k_lo..=k_hi];
    let (off, &peak) = band.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let mut sorted = band.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if !(peak > MIN_PROMINENCE * median) {
        return Err(Error::NoPeak(format!("peak/median ratio {:.2} is below {MIN_PROMINENCE}", peak / median)));
    }
    let k = k_lo + off;
    let (a, b, c) = (mag[k - 1].ln(), peak.ln(), mag[k + 1].ln());
    let denom = a - 2.0 * b + c;
    let delta = if denom < 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    Ok((k as f64 + delta) * bin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_tone() {
        let dt = 1e-3;
        let w = 2.0 * PI * 37.3;
        let s: Vec<f64> = (0..4000).map(|i| (w * i as f64 * dt).sin() + 0.2).collect();
        let got = spectral_peak(&s, dt, 2.0 * PI * 200.0).unwrap();
        assert!((got / w - 1.0).abs() < 1e-3, "{got} {w}");
    }

    #[test]
    fn constant_signal_has_no_peak() {
        assert!(matches!(spectral_peak(&[0.0; 100], 1e-3, 10.0), Err(Error::NoPeak(_))));
    }

    #[test]
    fn ignores_lines_above_limit() {
        let dt = 1e-3;
        let s: Vec<f64> = (0..4000)
            .map(|i| {
                let t = i as f64 * dt;
                0.3 * (2.0 * PI * 20.0 * t).cos() + (2.0 * PI * 150.0 * t).cos()
            })
            .collect();
        let got = spectral_peak(&s, dt, 2.0 * PI * 100.0).unwrap();
        assert!((got / (2.0 * PI * 20.0) - 1.0).abs() < 1e-3);
    }
}
