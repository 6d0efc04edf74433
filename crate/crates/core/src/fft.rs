//! Discrete Fourier transform of arbitrary length.
//!
//! Power-of-two lengths use an iterative radix-2 Cooley-Tukey transform.
//! Other lengths go through Bluestein's chirp-z reformulation, which turns
//! the DFT into a circular convolution of power-of-two size.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

fn twiddle(numerator: u64, denominator: u64) -> Complex64 {
    // exp(-i * pi * numerator / denominator)
    let angle = -PI * numerator as f64 / denominator as f64;
    Complex64::new(libm::cos(angle), libm::sin(angle))
}

/// In-place forward transform, `data.len()` must be a power of two.
fn radix2(data: &mut [Complex64], inverse: bool) {
    let n = data.len();
    debug_assert!(n.is_power_of_two());
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
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let table: Vec<Complex64> = (0..half)
            .map(|k| {
                let w = twiddle(2 * k as u64, len as u64);
                if inverse { w.conj() } else { w }
            })
            .collect();
        for chunk in data.chunks_exact_mut(len) {
            let (lo, hi) = chunk.split_at_mut(half);
            for ((a, b), w) in lo.iter_mut().zip(hi.iter_mut()).zip(&table) {
                let t = *b * w;
                *b = *a - t;
                *a += t;
            }
        }
        len <<= 1;
    }
}

fn bluestein(input: &[Complex64]) -> Vec<Complex64> {
    let n = input.len();
    let m = (2 * n - 1).next_power_of_two();
    let modulus = 2 * n as u64;
    // chirp[k] = exp(-i pi k^2 / n); reduce k^2 mod 2n to keep the angle small
    let chirp: Vec<Complex64> = (0..n as u64).map(|k| twiddle((k * k) % modulus, n as u64)).collect();

    let mut a = vec![Complex64::new(0.0, 0.0); m];
    for (slot, (x, w)) in a.iter_mut().zip(input.iter().zip(&chirp)) {
        *slot = x * w;
    }
    let mut b = vec![Complex64::new(0.0, 0.0); m];
    b[0] = chirp[0].conj();
    for k in 1..n {
        b[k] = chirp[k].conj();
        b[m - k] = chirp[k].conj();
    }
    radix2(&mut a, false);
    radix2(&mut b, false);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    radix2(&mut a, true);
    let scale = 1.0 / m as f64;
    (0..n).map(|k| a[k] * scale * chirp[k]).collect()
}

/// Forward DFT: X[k] = sum_n x[n] exp(-2 pi i k n / N).
pub fn dft(input: &[Complex64]) -> Vec<Complex64> {
    let n = input.len();
    if n.is_power_of_two() {
        let mut out = input.to_vec();
        radix2(&mut out, false);
        out
    } else {
        bluestein(input)
    }
}

/// Forward DFT of a real signal.
pub fn dft_real(input: &[f64]) -> Vec<Complex64> {
    let data: Vec<Complex64> = input.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    dft(&data)
}
