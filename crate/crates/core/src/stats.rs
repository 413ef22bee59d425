use alloc::vec::Vec;

/// Lower median: the element at rank `(n - 1) / 2`. Monotone transforms of
/// the inputs commute with it, which the focal enumeration relies on.
pub(crate) fn lower_median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mid = (values.len() - 1) / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    Some(*m)
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Pixel indices of a stride-subsampled grid holding at most `max_points`.
pub(crate) fn stride_subsample(width: usize, height: usize, max_points: usize) -> Vec<usize> {
    let mut stride = 1;
    while width.div_ceil(stride) * height.div_ceil(stride) > max_points {
        stride += 1;
    }
    let mut out = Vec::with_capacity(width.div_ceil(stride) * height.div_ceil(stride));
    for y in (0..height).step_by(stride) {
        for x in (0..width).step_by(stride) {
            out.push(y * width + x);
        }
    }
    out
}
