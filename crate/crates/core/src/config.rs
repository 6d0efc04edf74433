use core::fmt;

use crate::attribution::DEFAULT_RESOLUTION;

/// Knobs for the recursive phase analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    /// Samples per segment waveform.
    pub resolution: usize,
    /// Multiplied by the main-spectrum magnitude to get the CPI difference
    /// that marks a head-block candidate.
    pub boundary_threshold_fraction: f64,
    /// A segment whose CPI range is within this is a single phase.
    pub flat_cpi_range: f64,
    /// A segment whose strongest non-DC bin is within this fraction of the
    /// DC value is a single phase.
    pub flat_spectrum_ratio: f64,
    pub max_depth: usize,
    pub min_segment_instructions: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            boundary_threshold_fraction: 0.5,
            flat_cpi_range: 0.3,
            flat_spectrum_ratio: 0.02,
            max_depth: 8,
            min_segment_instructions: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub &'static str);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid analysis config: {}", self.0)
    }
}

impl core::error::Error for ConfigError {}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.resolution < 2 {
            return Err(ConfigError("resolution must be >= 2"));
        }
        let f = self.boundary_threshold_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(ConfigError("boundary_threshold_fraction must lie in (0, 1]"));
        }
        if !(self.flat_cpi_range >= 0.0 && self.flat_cpi_range.is_finite()) {
            return Err(ConfigError("flat_cpi_range must be non-negative"));
        }
        let r = self.flat_spectrum_ratio;
        if !(r > 0.0 && r < 1.0) {
            return Err(ConfigError("flat_spectrum_ratio must lie in (0, 1)"));
        }
        if self.max_depth == 0 {
            return Err(ConfigError("max_depth must be >= 1"));
        }
        if self.min_segment_instructions == 0 {
            return Err(ConfigError("min_segment_instructions must be >= 1"));
        }
        Ok(())
    }
}
