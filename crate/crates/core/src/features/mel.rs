/// Mel scale, `2595 log10(1 + f / 700)`.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters equally spaced in mel between 0 Hz and Nyquist.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// Row-major `n_filters x n_bins` weights, `n_bins = fft_len / 2 + 1`.
    weights: Vec<f64>,
    n_filters: usize,
    n_bins: usize,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_filters: usize, fft_len: usize, sample_rate: u32) -> Self {
        let nyquist = sample_rate as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..n_filters + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_filters + 1) as f64))
            .collect();
        let n_bins = fft_len / 2 + 1;
        let bin_hz = sample_rate as f64 / fft_len as f64;
        let mut weights = vec![0.0; n_filters * n_bins];
        for j in 0..n_filters {
            let (lo, mid, hi) = (edges[j], edges[j + 1], edges[j + 2]);
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = ((f - lo) / (mid - lo)).min((hi - f) / (hi - mid));
                if w > 0.0 {
                    weights[j * n_bins + k] = w;
                }
            }
        }
        Self {
            weights,
            n_filters,
            n_bins,
            centers_hz: edges[1..=n_filters].to_vec(),
        }
    }

    pub fn n_filters(&self) -> usize {
        self.n_filters
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn filter(&self, j: usize) -> &[f64] {
        &self.weights[j * self.n_bins..(j + 1) * self.n_bins]
    }

    /// Weighted sums of a one-sided power spectrum.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        debug_assert_eq!(power.len(), self.n_bins);
        (0..self.n_filters)
            .map(|j| self.filter(j).iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_roundtrip() {
        for hz in [0.0, 100.0, 700.0, 4000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn filters_cover_band_and_peak_below_one() {
        let fb = MelFilterbank::new(40, 512, 16000);
        assert_eq!(fb.n_bins(), 257);
        for j in 0..40 {
            let f = fb.filter(j);
            assert!(f.iter().any(|&w| w > 0.0), "filter {j} is empty");
            assert!(f.iter().all(|&w| (0.0..=1.0).contains(&w)));
        }
        assert!(fb.centers_hz().windows(2).all(|w| w[0] < w[1]));
        assert!(*fb.centers_hz().last().unwrap() < 8000.0);
    }
}
