use std::str::FromStr;

use super::RenderError;
use crate::image::Rgb;

/// Sequential colour ramps, light to dark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Palette {
    /// Light yellow to dark red.
    #[default]
    YlOrRd,
    /// Colour-blind safe viridis, reversed so that it runs light to dark.
    Viridis,
    Blues,
}

impl Palette {
    pub const NAMES: [&'static str; 3] = ["ylorrd", "viridis", "blues"];

    fn anchors(self) -> &'static [Rgb] {
        match self {
            Self::YlOrRd => &[
                [0xff, 0xff, 0xb2],
                [0xfe, 0xcc, 0x5c],
                [0xfd, 0x8d, 0x3c],
                [0xf0, 0x3b, 0x20],
                [0xbd, 0x00, 0x26],
            ],
            Self::Viridis => &[
                [0xfd, 0xe7, 0x25],
                [0x5e, 0xc9, 0x62],
                [0x21, 0x91, 0x8c],
                [0x3b, 0x52, 0x8b],
                [0x44, 0x01, 0x54],
            ],
            Self::Blues => &[
                [0xef, 0xf3, 0xff],
                [0xbd, 0xd7, 0xe7],
                [0x6b, 0xae, 0xd6],
                [0x31, 0x82, 0xbd],
                [0x08, 0x51, 0x9c],
            ],
        }
    }

    /// `n` colours evenly spaced along the ramp; `n = 5` returns the anchors.
    pub fn colors(self, n: usize) -> Vec<Rgb> {
        let anchors = self.anchors();
        if n == anchors.len() {
            return anchors.to_vec();
        }
        (0..n)
            .map(|i| {
                let t = if n == 1 {
                    0.0
                } else {
                    i as f64 / (n - 1) as f64
                };
                let pos = t * (anchors.len() - 1) as f64;
                let lo = (pos.floor() as usize).min(anchors.len() - 2);
                let frac = pos - lo as f64;
                let (a, b) = (anchors[lo], anchors[lo + 1]);
                [0, 1, 2].map(|c| {
                    (f64::from(a[c]) + frac * (f64::from(b[c]) - f64::from(a[c]))).round() as u8
                })
            })
            .collect()
    }
}

impl FromStr for Palette {
    type Err = RenderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ylorrd" | "default" => Ok(Self::YlOrRd),
            "viridis" | "colorblind" => Ok(Self::Viridis),
            "blues" => Ok(Self::Blues),
            _ => Err(RenderError::UnknownPalette(s.to_owned())),
        }
    }
}

/// Global value → colour bin mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileScale {
    pub n_bins: usize,
    /// `n_bins - 1` non-decreasing cut points.
    pub breakpoints: Vec<f64>,
    pub colors: Vec<Rgb>,
}

impl QuantileScale {
    pub fn bin_of(&self, value: f64) -> usize {
        bin_of(value, self)
    }

    pub fn color_of(&self, value: f64) -> Rgb {
        self.colors[self.bin_of(value)]
    }
}

/// Empirical quantile of sorted data with linear interpolation between
/// order statistics (`h = (n - 1)·p`).
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    match sorted.get(lo + 1) {
        Some(&next) if frac > 0.0 => sorted[lo] + frac * (next - sorted[lo]),
        _ => sorted[lo],
    }
}

/// Breakpoints at the `j / n_bins` quantiles of every value supplied.
pub fn build_quantile_scale(
    all_values: &[f64],
    n_bins: usize,
    palette: Palette,
) -> Result<QuantileScale, RenderError> {
    if n_bins < 2 {
        return Err(RenderError::BadBinCount(n_bins));
    }
    let mut sorted: Vec<f64> = all_values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .collect();
    if sorted.is_empty() {
        return Err(RenderError::EmptyValues);
    }
    sorted.sort_by(f64::total_cmp);
    let breakpoints = (1..n_bins)
        .map(|j| quantile_sorted(&sorted, j as f64 / n_bins as f64))
        .collect();
    Ok(QuantileScale {
        n_bins,
        breakpoints,
        colors: palette.colors(n_bins),
    })
}

/// Number of breakpoints strictly below `value`; ties go to the lower bin.
pub fn bin_of(value: f64, scale: &QuantileScale) -> usize {
    scale.breakpoints.iter().filter(|&&b| b < value).count()
}
