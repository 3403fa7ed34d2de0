//! Small numeric building blocks shared by the filter-bank, degradation and
//! system-identification code: windows, a radix-2 FFT, DTFT evaluation and
//! percentiles.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

/// Zeroth-order modified Bessel function of the first kind, by power series.
pub fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= (half / k) * (half / k);
        sum += term;
        if term < sum * 1e-17 {
            return sum;
        }
        k += 1.0;
    }
}

/// Kaiser shape parameter for a requested stopband attenuation in dB.
pub fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * libm::pow(atten_db - 21.0, 0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

/// Symmetric Kaiser window of length `n`.
pub fn kaiser(n: usize, beta: f64) -> Vec<f64> {
    if n == 1 {
        return alloc::vec![1.0];
    }
    let denom = bessel_i0(beta);
    let m = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let r = 2.0 * i as f64 / m - 1.0;
            bessel_i0(beta * libm::sqrt((1.0 - r * r).max(0.0))) / denom
        })
        .collect()
}

/// Periodic Hann window (the DFT-even form used for spectral estimation).
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * libm::cos(2.0 * PI * i as f64 / n as f64))
        .collect()
}

/// Symmetric Blackman window.
pub fn blackman(n: usize) -> Vec<f64> {
    if n == 1 {
        return alloc::vec![1.0];
    }
    let m = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / m;
            0.42 - 0.5 * libm::cos(t) + 0.08 * libm::cos(2.0 * t)
        })
        .collect()
}

/// Normalized sinc, `sin(pi x) / (pi x)`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        libm::sin(PI * x) / (PI * x)
    }
}

/// In-place iterative radix-2 FFT. `inverse` applies the `1/n` scaling.
///
/// Panics if the length is not a power of two.
pub fn fft_in_place(data: &mut [Complex64], inverse: bool) {
    let n = data.len();
    assert!(n.is_power_of_two(), "fft length {n} is not a power of two");
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            data.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let half = len / 2;
        // Twiddles per stage computed directly to avoid accumulated drift.
        let tw: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, ang * k as f64))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = data[start + k];
                let b = data[start + k + half] * tw[k];
                data[start + k] = a + b;
                data[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
    if inverse {
        let scale = 1.0 / n as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Half spectrum (`n/2 + 1` bins) of a real frame of power-of-two length.
pub fn rfft(frame: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = frame.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf, false);
    buf.truncate(frame.len() / 2 + 1);
    buf
}

/// `H(e^{jw}) = sum_n h[n] e^{-jwn}` at one angular frequency.
pub fn dtft(h: &[f64], omega: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (n, &v) in h.iter().enumerate() {
        let ph = -omega * n as f64;
        acc += Complex64::new(v * libm::cos(ph), v * libm::sin(ph));
    }
    acc
}

pub fn dtft_mag(h: &[f64], omega: f64) -> f64 {
    dtft(h, omega).norm()
}

/// Magnitude in dB with a floor so that silence maps to a finite value.
pub fn mag_to_db(mag: f64) -> f64 {
    20.0 * libm::log10(mag.max(1e-15))
}

pub fn db_to_mag(db: f64) -> f64 {
    libm::pow(10.0, db / 20.0)
}

/// Linear-interpolated percentile (`q` in `[0, 100]`) of an already sorted
/// slice.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Full linear convolution of `x` with `h`.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut out = alloc::vec![0.0; x.len() + h.len() - 1];
    for (i, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (o, &hv) in out[i..].iter_mut().zip(h) {
            *o += xv * hv;
        }
    }
    out
}
