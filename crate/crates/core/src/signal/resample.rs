//! Anti-aliased rational resampling (windowed-sinc polyphase).

use crate::error::{Error, Result};

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Rational approximation of `target / current` as (up, down).
fn rational_ratio(target: f64, current: f64) -> Result<(usize, usize)> {
    let scale = 1000.0;
    let up = (target * scale).round() as u64;
    let down = (current * scale).round() as u64;
    if up == 0 || down == 0 {
        return Err(Error::Input(format!(
            "cannot resample from {current} Hz to {target} Hz"
        )));
    }
    let g = gcd(up, down);
    Ok(((up / g) as usize, (down / g) as usize))
}

/// Modified Bessel function I0 (series expansion), for the Kaiser window.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..50 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    }
}

/// Low-pass prototype for an up/down polyphase stage. Each polyphase branch
/// is normalized to unit DC gain so constant signals pass through exactly.
fn design_taps(up: usize, down: usize) -> Vec<f64> {
    let max_rate = up.max(down);
    let half = 10 * max_rate;
    let ntaps = 2 * half + 1;
    let cutoff = 1.0 / max_rate as f64; // relative to the upsampled Nyquist
    let beta = 5.0;
    let denom = bessel_i0(beta);
    let mut h = Vec::with_capacity(ntaps);
    for i in 0..ntaps {
        let t = i as f64 - half as f64;
        let window = {
            let r = t / half as f64;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        };
        h.push(cutoff * sinc(cutoff * t) * window);
    }
    // per-phase DC normalization: taps with index ≡ r (mod up) sum to 1/up
    for r in 0..up {
        let s: f64 = h.iter().skip(r).step_by(up).sum();
        if s.abs() > 1e-12 {
            for v in h.iter_mut().skip(r).step_by(up) {
                *v /= s * up as f64;
            }
        }
    }
    h
}

/// Resample `x` from `current_hz` to `target_hz`. Downsampling only; the
/// output has `round(len * target / current)` samples. Boundaries use edge
/// replication.
pub fn resample(x: &[f64], current_hz: f64, target_hz: f64) -> Result<Vec<f64>> {
    if target_hz > current_hz {
        return Err(Error::Input(format!(
            "upsampling ({current_hz} Hz -> {target_hz} Hz) is not supported"
        )));
    }
    if (target_hz - current_hz).abs() < 1e-9 {
        return Ok(x.to_vec());
    }
    let (up, down) = rational_ratio(target_hz, current_hz)?;
    let n_out = (x.len() as f64 * target_hz / current_hz).round() as usize;
    if x.is_empty() || n_out == 0 {
        return Ok(Vec::new());
    }
    let h = design_taps(up, down);
    let half = (h.len() - 1) / 2;
    let n = x.len() as i64;
    let mut y = Vec::with_capacity(n_out);
    for j in 0..n_out {
        // center of the output sample in the upsampled stream
        let t = (j * down) as i64 + half as i64;
        let mut acc = 0.0;
        for (k, &hk) in h.iter().enumerate() {
            let up_idx = t - k as i64;
            if up_idx.rem_euclid(up as i64) != 0 {
                continue;
            }
            let src = (up_idx.div_euclid(up as i64)).clamp(0, n - 1) as usize;
            acc += hk * x[src];
        }
        y.push(acc * up as f64);
    }
    Ok(y)
}
