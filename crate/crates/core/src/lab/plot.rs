//! Static PNG plots: line charts and heatmaps, no text.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::grid::GridSpec;
use crate::Result;

const WIDTH: u32 = 640;
const HEIGHT: u32 = 400;
const MARGIN: u32 = 40;

const PALETTE: [[u8; 3]; 6] = [[31, 119, 180], [214, 39, 40], [44, 160, 44], [255, 127, 14], [148, 103, 189], [23, 190, 207]];

/// One polyline per series; non-finite points and, on log axes,
/// nonpositive ones are skipped.
pub fn line_chart(path: &Path, series: &[Vec<(f64, f64)>], log_x: bool, log_y: bool) -> Result<()> {
    let tx = |v: f64| if log_x { v.log10() } else { v };
    let ty = |v: f64| if log_y { v.log10() } else { v };
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.iter()
                .filter(|(x, y)| (!log_x || *x > 0.0) && (!log_y || *y > 0.0))
                .map(|&(x, y)| (tx(x), ty(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect()
        })
        .collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    axes(&mut img);
    if x0.is_finite() {
        if x1 - x0 < 1e-12 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 < 1e-12 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let (w, h) = ((WIDTH - 2 * MARGIN) as f64, (HEIGHT - 2 * MARGIN) as f64);
        let px = |x: f64| MARGIN as f64 + (x - x0) / (x1 - x0) * w;
        let py = |y: f64| (HEIGHT - MARGIN) as f64 - (y - y0) / (y1 - y0) * h;
        for (i, s) in pts.iter().enumerate() {
            let c = Rgb(PALETTE[i % PALETTE.len()]);
            for w2 in s.windows(2) {
                segment(&mut img, (px(w2[0].0), py(w2[0].1)), (px(w2[1].0), py(w2[1].1)), c);
            }
            for &(x, y) in s {
                marker(&mut img, px(x), py(y), c);
            }
        }
    }
    img.save(path)?;
    Ok(())
}

/// Heatmap of a 2-d grid (first axis horizontal); other dimensions are
/// drawn as a single-row strip.
pub fn heatmap(path: &Path, spec: &GridSpec, values: &[f64]) -> Result<()> {
    let (nx, ny) = match spec.dim() {
        1 => (spec.resolution[0], 1),
        2 => (spec.resolution[0], spec.resolution[1]),
        _ => (spec.len(), 1),
    };
    let lo = values.iter().cloned().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let scale = ((WIDTH as usize / nx.max(1)).max(1), (HEIGHT as usize / ny.max(1)).max(1));
    let (w, h) = ((nx * scale.0) as u32, (ny * scale.1) as u32);
    let mut img = RgbImage::new(w.max(1), h.max(1));
    for i in 0..nx {
        for j in 0..ny {
            let v = if spec.dim() == 2 { values[i * ny + j] } else { values[i] };
            let c = colormap(if v.is_finite() { (v - lo) / span } else { 0.0 });
            for a in 0..scale.0 {
                for b in 0..scale.1 {
                    let (x, y) = ((i * scale.0 + a) as u32, h - 1 - (j * scale.1 + b) as u32);
                    img.put_pixel(x, y, c);
                }
            }
        }
    }
    img.save(path)?;
    Ok(())
}

fn colormap(t: f64) -> Rgb<u8> {
    let t = t.clamp(0.0, 1.0);
    let stops = [[68.0, 1.0, 84.0], [59.0, 82.0, 139.0], [33.0, 145.0, 140.0], [94.0, 201.0, 98.0], [253.0, 231.0, 37.0]];
    let s = t * (stops.len() - 1) as f64;
    let k = (s as usize).min(stops.len() - 2);
    let f = s - k as f64;
    let mix = |c: usize| (stops[k][c] * (1.0 - f) + stops[k + 1][c] * f).round() as u8;
    Rgb([mix(0), mix(1), mix(2)])
}

fn axes(img: &mut RgbImage) {
    let black = Rgb([0, 0, 0]);
    for x in MARGIN..=WIDTH - MARGIN {
        img.put_pixel(x, HEIGHT - MARGIN, black);
    }
    for y in MARGIN..=HEIGHT - MARGIN {
        img.put_pixel(MARGIN, y, black);
    }
}

fn put(img: &mut RgbImage, x: f64, y: f64, c: Rgb<u8>) {
    if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn segment(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
    let n = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
    for k in 0..=n {
        let t = k as f64 / n as f64;
        put(img, a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), c);
    }
}

fn marker(img: &mut RgbImage, x: f64, y: f64, c: Rgb<u8>) {
    for dx in -2..=2 {
        for dy in -2..=2 {
            put(img, x + dx as f64, y + dy as f64, c);
        }
    }
}
