use std::f64::consts::PI;

/// Orthonormal DCT-II of `x`, all `x.len()` coefficients.
pub fn dct_ortho(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let nf = n as f64;
    (0..n)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / nf).sqrt()
            } else {
                (2.0 / nf).sqrt()
            };
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * nf)).cos())
                .sum();
            scale * s
        })
        .collect()
}

/// Inverse of [`dct_ortho`] (orthonormal DCT-III).
pub fn idct_ortho(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let nf = n as f64;
    (0..n)
        .map(|i| {
            c.iter()
                .enumerate()
                .map(|(k, v)| {
                    let scale = if k == 0 {
                        (1.0 / nf).sqrt()
                    } else {
                        (2.0 / nf).sqrt()
                    };
                    scale * v * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * nf)).cos()
                })
                .sum()
        })
        .collect()
}
