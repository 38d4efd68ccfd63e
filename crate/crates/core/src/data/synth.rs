use super::image::ImageU8;
use super::rng::Rng;

/// A seeded test pattern: smooth low-frequency shading per channel with a
/// few hard-edged discs and bars on top. Gives both flat regions and edges,
/// which is what resampling and super-resolution checks need.
pub fn synthetic_image(width: usize, height: usize, seed: u64) -> ImageU8 {
    let mut rng = Rng::new(seed);
    let (fw, fh) = (width.max(1) as f64, height.max(1) as f64);
    let waves: Vec<[f64; 4]> = (0..9)
        .map(|_| {
            [
                (rng.next_f64() * 2.0 + 0.5) * std::f64::consts::TAU / fw,
                (rng.next_f64() * 2.0 + 0.5) * std::f64::consts::TAU / fh,
                rng.next_f64() * std::f64::consts::TAU,
                rng.next_f64() * 40.0 + 10.0,
            ]
        })
        .collect();
    let base: [f64; 3] = [0; 3].map(|_| rng.next_f64() * 80.0 + 80.0);
    let discs: Vec<(f64, f64, f64, [f64; 3])> = (0..3)
        .map(|_| {
            (
                rng.next_f64() * fw,
                rng.next_f64() * fh,
                (rng.next_f64() * 0.2 + 0.1) * fw.min(fh),
                [0; 3].map(|_| rng.next_f64() * 255.0),
            )
        })
        .collect();
    let bar_x = rng.below(width.max(1));
    let bar_w = 1 + width / 10;
    ImageU8::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let mut px = [0.0; 3];
        for (c, v) in px.iter_mut().enumerate() {
            *v = base[c]
                + waves[3 * c..3 * c + 3]
                    .iter()
                    .map(|[kx, ky, ph, amp]| amp * (kx * xf + ky * yf + ph).sin())
                    .sum::<f64>();
        }
        for (cx, cy, r, col) in &discs {
            if (xf - cx).powi(2) + (yf - cy).powi(2) < r * r {
                px = *col;
            }
        }
        if x >= bar_x && x < bar_x + bar_w {
            px = [px[0] * 0.3, px[1] * 0.3, 255.0 - px[2] * 0.5];
        }
        px.map(|v| v.round().clamp(0.0, 255.0) as u8)
    })
}
