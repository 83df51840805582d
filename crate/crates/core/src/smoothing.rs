//! Savitzky-Golay smoothing for loss curves.

use nalgebra::DMatrix;

/// Least-squares polynomial smoothing over a sliding window.
///
/// Near the ends the polynomial fitted to the first (or last) full window
/// is evaluated instead of a centred one. Short inputs shrink the window to
/// the largest odd length that fits.
pub fn savitzky_golay(data: &[f64], window: usize, order: usize) -> Vec<f64> {
    let len = data.len();
    let mut w = window.min(len);
    if w % 2 == 0 {
        w = w.saturating_sub(1);
    }
    if w <= order || w < 3 {
        return data.to_vec();
    }
    let half = w / 2;
    let centre = half as f64;
    let vander = DMatrix::from_fn(w, order + 1, |i, j| ((i as f64 - centre) / centre).powi(j as i32));
    let gram = vander.transpose() * &vander;
    let inv = gram.try_inverse().expect("Vandermonde Gram matrix is invertible");
    let proj = &vander * inv * vander.transpose();

    (0..len)
        .map(|i| {
            let start = i.saturating_sub(half).min(len - w);
            let r = i - start;
            (0..w).map(|k| proj[(r, k)] * data[start + k]).sum()
        })
        .collect()
}
