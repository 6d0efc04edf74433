//! Frequency-domain view of a waveform.
//!
//! Bin `k` of the spectrum counts how many times a pattern repeats across the
//! analysed interval. Magnitudes are divided by the sample count, so bin 0 is
//! the mean CPI and the other bins are amplitude-like CPI values.

use alloc::vec::Vec;
use core::fmt;

use crate::attribution::Waveform;
use crate::config::AnalysisConfig;
use crate::fft;

/// Magnitudes for occurrence numbers `0..=N/2`. Index 0 is the DC term and is
/// also stored in `dc_value`; main-spectrum search starts at index 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub magnitudes: Vec<f64>,
    pub dc_value: f64,
    pub source_length_instructions: u64,
    pub sample_count: usize,
}

/// Dominant repeating pattern: it occurs `occurrence` times and each
/// repetition spans `phase_length_instructions`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MainSpectrum {
    pub occurrence: usize,
    pub magnitude: f64,
    pub phase_length_instructions: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectralError {
    /// Fewer than two samples, so there is no non-DC bin.
    TooShort,
    /// No non-DC bin carries energy.
    FlatSpectrum,
}

impl fmt::Display for SpectralError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectralError::TooShort => write!(f, "waveform needs at least two samples"),
            SpectralError::FlatSpectrum => write!(f, "spectrum is flat"),
        }
    }
}

impl core::error::Error for SpectralError {}

/// Relative tolerance under which two bins count as equal maxima.
const TIE_TOLERANCE: f64 = 1e-9;

pub fn dft_magnitude(waveform: &Waveform) -> Spectrum {
    dft_magnitude_of(&waveform.samples, waveform.length_instructions)
}

/// Spectrum of raw samples covering `length_instructions`.
pub fn dft_magnitude_of(samples: &[f64], length_instructions: u64) -> Spectrum {
    let n = samples.len();
    let bins = fft::dft_real(samples);
    let magnitudes: Vec<f64> = bins.iter().take(n / 2 + 1).map(|c| c.norm() / n as f64).collect();
    Spectrum {
        dc_value: magnitudes.first().copied().unwrap_or(0.0),
        magnitudes,
        source_length_instructions: length_instructions,
        sample_count: n,
    }
}

impl Spectrum {
    /// Largest magnitude over occurrence numbers >= 1.
    pub fn max_dynamic(&self) -> f64 {
        self.magnitudes.iter().skip(1).copied().fold(0.0, f64::max)
    }
}

/// Picks the strongest non-DC bin, preferring the smaller occurrence number
/// among equal maxima, and derives the phase length D / X.
pub fn main_spectrum(spectrum: &Spectrum) -> Result<MainSpectrum, SpectralError> {
    if spectrum.magnitudes.len() < 2 {
        return Err(SpectralError::TooShort);
    }
    let peak = spectrum.max_dynamic();
    let floor = 1e-12 * spectrum.dc_value.max(1.0);
    if peak <= floor {
        return Err(SpectralError::FlatSpectrum);
    }
    let occurrence = (1..spectrum.magnitudes.len())
        .find(|&k| spectrum.magnitudes[k] >= peak * (1.0 - TIE_TOLERANCE))
        .expect("peak is attained");
    let d = spectrum.source_length_instructions;
    let length = libm::round(d as f64 / occurrence as f64) as u64;
    Ok(MainSpectrum {
        occurrence,
        magnitude: spectrum.magnitudes[occurrence],
        phase_length_instructions: length.max(1),
    })
}

/// True when the segment should be treated as a single phase.
pub fn is_flat(waveform: &Waveform, spectrum: &Spectrum, config: &AnalysisConfig) -> bool {
    let (lo, hi) = waveform.range();
    hi - lo <= config.flat_cpi_range || spectrum.max_dynamic() <= config.flat_spectrum_ratio * spectrum.dc_value
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::PI;

    fn wf(samples: Vec<f64>) -> Waveform {
        let n = samples.len();
        Waveform { samples, sample_stride: 1, origin_instruction: 0, length_instructions: n as u64, sample_heads: vec![None; n] }
    }

    #[test]
    fn constant_has_only_dc() {
        let s = dft_magnitude(&wf(vec![1.7; 48]));
        assert!((s.dc_value - 1.7).abs() < 1e-12);
        assert!(s.magnitudes[1..].iter().all(|&m| m < 1e-12));
        assert_eq!(main_spectrum(&s), Err(SpectralError::FlatSpectrum));
        assert!(is_flat(&wf(vec![1.7; 48]), &s, &AnalysisConfig::default()));
    }

    #[test]
    fn cosine_closed_form() {
        let n = 64;
        let w = wf((0..n).map(|i| libm::cos(2.0 * PI * 4.0 * i as f64 / n as f64)).collect());
        let s = dft_magnitude(&w);
        assert_eq!(s.magnitudes.len(), 33);
        let m = main_spectrum(&s).unwrap();
        assert_eq!(m.occurrence, 4);
        assert!((m.magnitude - 0.5).abs() < 1e-9);
        for (k, &v) in s.magnitudes.iter().enumerate() {
            if k != 4 {
                assert!(v < 1e-9);
            }
        }
    }

    #[test]
    fn phase_length_examples() {
        let spec = |d: u64, k: usize| {
            let mut magnitudes = vec![0.0; 64];
            magnitudes[0] = 1.0;
            magnitudes[k] = 0.4;
            Spectrum { magnitudes, dc_value: 1.0, source_length_instructions: d, sample_count: 126 }
        };
        let m = main_spectrum(&spec(4500, 4)).unwrap();
        assert_eq!((m.occurrence, m.phase_length_instructions), (4, 1125));
        let m = main_spectrum(&spec(400, 40)).unwrap();
        assert_eq!((m.occurrence, m.phase_length_instructions), (40, 10));
    }

    #[test]
    fn ties_go_to_smaller_occurrence() {
        let mut magnitudes = vec![0.0; 10];
        magnitudes[0] = 2.0;
        magnitudes[3] = 0.7;
        magnitudes[6] = 0.7;
        let s = Spectrum { magnitudes, dc_value: 2.0, source_length_instructions: 90, sample_count: 18 };
        assert_eq!(main_spectrum(&s).unwrap().occurrence, 3);
    }

    #[test]
    fn square_wave_is_not_flat() {
        // amplitude 1.0 around mean 1.5: levels 1.0 / 2.0
        let w = wf((0..64).map(|i| if (i / 8) % 2 == 0 { 1.0 } else { 2.0 }).collect());
        let s = dft_magnitude(&w);
        let cfg = AnalysisConfig::default();
        // range 1.0 > 0.3; fundamental ~ (2/pi) * 0.5 / (8 sin(pi/16)...) well above 0.02 * 1.5
        assert!(s.max_dynamic() > cfg.flat_spectrum_ratio * s.dc_value);
        assert!(!is_flat(&w, &s, &cfg));
        assert_eq!(main_spectrum(&s).unwrap().occurrence, 4);
    }

    #[test]
    fn small_range_is_flat() {
        let w = wf((0..64).map(|i| if (i / 8) % 2 == 0 { 1.0 } else { 1.25 }).collect());
        let s = dft_magnitude(&w);
        assert!(is_flat(&w, &s, &AnalysisConfig::default()));
    }
}
