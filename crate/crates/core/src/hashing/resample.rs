use super::GrayImage;

/// Separable triangle-filter resampling to `out_w`×`out_h`, in `f64`.
///
/// Upscaling is plain bilinear interpolation; when downscaling, the triangle
/// support is stretched by the scale factor so every source pixel contributes.
pub fn resize_bilinear(image: &GrayImage, out_w: usize, out_h: usize) -> Vec<f64> {
    let (w, h) = (image.width(), image.height());
    let src = image.samples();

    let xw = axis_weights(w, out_w);
    let mut rows = vec![0.0f64; h * out_w];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for (ox, (start, weights)) in xw.iter().enumerate() {
            rows[y * out_w + ox] = weights
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * f64::from(line[start + k]))
                .sum();
        }
    }

    let yw = axis_weights(h, out_h);
    let mut out = vec![0.0f64; out_w * out_h];
    for (oy, (start, weights)) in yw.iter().enumerate() {
        for ox in 0..out_w {
            out[oy * out_w + ox] = weights
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * rows[(start + k) * out_w + ox])
                .sum();
        }
    }
    out
}

/// For each output sample: first contributing source index and normalized weights.
fn axis_weights(src: usize, dst: usize) -> Vec<(usize, Vec<f64>)> {
    let scale = src as f64 / dst as f64;
    let support = scale.max(1.0);
    (0..dst)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale - 0.5;
            let lo = ((center - support).floor().max(0.0)) as usize;
            let hi = ((center + support).ceil() as usize).min(src - 1);
            let mut weights: Vec<f64> = (lo..=hi)
                .map(|i| (1.0 - (i as f64 - center).abs() / support).max(0.0))
                .collect();
            let total: f64 = weights.iter().sum();
            if total > 0.0 {
                weights.iter_mut().for_each(|w| *w /= total);
                (lo, weights)
            } else {
                // center sits outside the source grid; clamp to the edge pixel
                let edge = center.round().clamp(0.0, (src - 1) as f64) as usize;
                (edge, vec![1.0])
            }
        })
        .collect()
}
