//! IIR design (Butterworth band-pass, biquad notch) and zero-phase
//! forward-backward filtering over cascaded second-order sections.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3], // a[0] == 1
}

/// Butterworth band-pass of total order 4 (prototype order 2), returned as
/// two second-order sections. Frequencies in Hz.
pub fn butter_bandpass(low_hz: f64, high_hz: f64, fs: f64) -> Result<Vec<Biquad>> {
    let nyquist = fs / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
        return Err(Error::Input(format!(
            "band-pass cutoffs must satisfy 0 < {low_hz} < {high_hz} < {nyquist} (Nyquist)"
        )));
    }
    let order = 2; // analog prototype order; band transform doubles it
    // prewarp the band edges for the bilinear transform
    let warp = |f: f64| 2.0 * fs * (std::f64::consts::PI * f / fs).tan();
    let (w1, w2) = (warp(low_hz), warp(high_hz));
    let w0 = (w1 * w2).sqrt();
    let bw = w2 - w1;

    // analog low-pass prototype poles on the unit circle, left half plane
    let proto: Vec<Complex64> = (1..=order)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + order - 1) as f64 / (2 * order) as f64;
            Complex64::new(theta.cos(), theta.sin())
        })
        .collect();

    // low-pass -> band-pass: each pole maps to a pair
    let mut poles = Vec::with_capacity(2 * order);
    for p in proto {
        let pl = p * (bw / 2.0);
        let disc = (pl * pl - Complex64::new(w0 * w0, 0.0)).sqrt();
        poles.push(pl + disc);
        poles.push(pl - disc);
    }
    // zeros: `order` at s = 0; gain bw^order
    let k_analog = bw.powi(order as i32);

    // bilinear transform
    let fs2 = Complex64::new(2.0 * fs, 0.0);
    let zpoles: Vec<Complex64> = poles.iter().map(|&p| (fs2 + p) / (fs2 - p)).collect();
    // analog zeros at 0 -> z = 1; remaining (order) zeros go to z = -1
    // digital gain: k * Re(prod(fs2 - z_analog) / prod(fs2 - p_analog))
    let num: Complex64 = (0..order).map(|_| fs2).product();
    let den: Complex64 = poles.iter().map(|&p| fs2 - p).product();
    let k_digital = k_analog * (num / den).re;

    // pair conjugate poles into sections; each section takes zeros (1, -1)
    let mut remaining = zpoles;
    let mut sections = Vec::new();
    while !remaining.is_empty() {
        let p = remaining.remove(0);
        let idx = remaining
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                let da = (*a - p.conj()).norm();
                let db = (*b - p.conj()).norm();
                da.partial_cmp(&db).unwrap()
            })
            .map(|(i, _)| i)
            .expect("odd pole count in band-pass design");
        let q = remaining.remove(idx);
        // (z - p)(z - q) with conjugate pair -> real coefficients
        let a1 = -(p + q).re;
        let a2 = (p * q).re;
        sections.push(Biquad { b: [1.0, 0.0, -1.0], a: [1.0, a1, a2] });
    }
    // apply the overall gain to the first section
    if let Some(first) = sections.first_mut() {
        for b in &mut first.b {
            *b *= k_digital;
        }
    }
    Ok(sections)
}

/// Second-order IIR notch (RBJ cookbook) at `freq_hz` with quality `q`.
pub fn notch(freq_hz: f64, q: f64, fs: f64) -> Result<Biquad> {
    if !(freq_hz > 0.0 && freq_hz < fs / 2.0) {
        return Err(Error::Input(format!(
            "notch frequency {freq_hz} Hz outside (0, {}) for fs {fs}",
            fs / 2.0
        )));
    }
    if q <= 0.0 {
        return Err(Error::Input(format!("notch quality factor {q} must be positive")));
    }
    let w0 = 2.0 * std::f64::consts::PI * freq_hz / fs;
    let alpha = w0.sin() / (2.0 * q);
    let cosw = w0.cos();
    let a0 = 1.0 + alpha;
    Ok(Biquad {
        b: [1.0 / a0, -2.0 * cosw / a0, 1.0 / a0],
        a: [1.0, -2.0 * cosw / a0, (1.0 - alpha) / a0],
    })
}

/// Steady-state initial conditions for a unit step (direct form II
/// transposed), scaled by the first input sample at filter time.
fn lfilter_zi(s: &Biquad) -> [f64; 2] {
    let (a1, a2) = (s.a[1], s.a[2]);
    let b = [s.b[1] - a1 * s.b[0], s.b[2] - a2 * s.b[0]];
    // solve (I - A^T) zi = B with companion A = [[-a1, -a2], [1, 0]]
    let m = [[1.0 + a1, -1.0], [a2, 1.0]];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [
        (b[0] * m[1][1] - b[1] * m[0][1]) / det,
        (m[0][0] * b[1] - m[1][0] * b[0]) / det,
    ]
}

fn lfilter(s: &Biquad, x: &[f64], zi: [f64; 2]) -> Vec<f64> {
    let mut z1 = zi[0];
    let mut z2 = zi[1];
    let mut y = Vec::with_capacity(x.len());
    for &xi in x {
        let yi = s.b[0] * xi + z1;
        z1 = s.b[1] * xi - s.a[1] * yi + z2;
        z2 = s.b[2] * xi - s.a[2] * yi;
        y.push(yi);
    }
    y
}

/// Zero-phase filtering: odd reflective padding, forward pass, reversed
/// backward pass, per cascaded section.
pub fn filtfilt(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    // reflective padding of 3x the cascade order at each boundary
    let pad = if x.len() > 1 { (6 * sections.len()).min(x.len() - 1) } else { 0 };
    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    let mut y = ext;
    for s in sections {
        let zi = lfilter_zi(s);
        let y0 = y[0];
        y = lfilter(s, &y, [zi[0] * y0, zi[1] * y0]);
        y.reverse();
        let y0 = y[0];
        y = lfilter(s, &y, [zi[0] * y0, zi[1] * y0]);
        y.reverse();
    }
    y[pad..pad + n].to_vec()
}
