//! Minimal PNG line charts and attention-map renderings.
//!
//! Charts carry no text: axes span the data range given by the caller,
//! with a light grid at tenths.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::attention::AttentionMap;
use crate::datasets::ImageShape;
use crate::error::{Error, Result};

const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [214, 39, 40],
    [44, 160, 44],
    [255, 127, 14],
    [148, 103, 189],
    [23, 190, 207],
];

#[derive(Debug, Clone, PartialEq)]
pub struct LinePlot {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub series: Vec<Vec<(f64, f64)>>,
}

impl LinePlot {
    pub fn new(x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        Self {
            x_range,
            y_range,
            series: Vec::new(),
        }
    }

    pub fn with_series(mut self, points: Vec<(f64, f64)>) -> Self {
        self.series.push(points);
        self
    }

    pub fn render(&self, width: u32, height: u32) -> RgbImage {
        let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
        let margin = 20i64;
        let (w, h) = (width as i64 - 2 * margin, height as i64 - 2 * margin);
        let span = |(lo, hi): (f64, f64)| if hi > lo { (lo, hi - lo) } else { (lo - 0.5, 1.0) };
        let (x0, xs) = span(self.x_range);
        let (y0, ys) = span(self.y_range);
        let to_px = |x: f64, y: f64| -> (i64, i64) {
            let px = margin + ((x - x0) / xs * w as f64).round() as i64;
            let py = margin + h - ((y - y0) / ys * h as f64).round() as i64;
            (px, py)
        };
        let grid = Rgb([225, 225, 225]);
        for i in 1..10 {
            let gx = margin + w * i / 10;
            let gy = margin + h * i / 10;
            line(&mut img, (gx, margin), (gx, margin + h), grid);
            line(&mut img, (margin, gy), (margin + w, gy), grid);
        }
        let black = Rgb([0, 0, 0]);
        let corners = [(margin, margin), (margin + w, margin), (margin + w, margin + h), (margin, margin + h)];
        for i in 0..4 {
            line(&mut img, corners[i], corners[(i + 1) % 4], black);
        }
        for (s, points) in self.series.iter().enumerate() {
            let color = Rgb(PALETTE[s % PALETTE.len()]);
            let px: Vec<(i64, i64)> = points.iter().map(|&(x, y)| to_px(x, y)).collect();
            for pair in px.windows(2) {
                line(&mut img, pair[0], pair[1], color);
                line(&mut img, (pair[0].0, pair[0].1 + 1), (pair[1].0, pair[1].1 + 1), color);
            }
            for &(x, y) in &px {
                for dy in -2..=2 {
                    for dx in -2..=2 {
                        put(&mut img, x + dx, y + dy, color);
                    }
                }
            }
        }
        img
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
    for i in 0..=steps {
        let x = x0 + (x1 - x0) * i / steps;
        let y = y0 + (y1 - y0) * i / steps;
        put(img, x, y, c);
    }
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    })
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Original image, normalized attention map (grey) and attended image side
/// by side, each upscaled by `scale`.
pub fn attention_panel(pixels: &[f32], shape: ImageShape, map: &AttentionMap, scale: u32) -> Result<RgbImage> {
    if map.height != shape.height || map.width != shape.width || pixels.len() != shape.len() {
        return Err(Error::invalid("attention map and image sizes differ"));
    }
    let (h, w) = (shape.height as u32, shape.width as u32);
    let mut img = RgbImage::from_pixel(3 * w * scale + 2 * scale, h * scale, Rgb([255, 255, 255]));
    let rgb = |r: usize, c: usize| -> [f64; 3] {
        let at = (r * shape.width + c) * shape.channels;
        let px = &pixels[at..at + shape.channels];
        if shape.channels >= 3 {
            [px[0] as f64, px[1] as f64, px[2] as f64]
        } else {
            [px[0] as f64; 3]
        }
    };
    for r in 0..shape.height {
        for c in 0..shape.width {
            let m = map.values[r * shape.width + c];
            let panels = [rgb(r, c), [m; 3], rgb(r, c).map(|v| v * m)];
            for (p, color) in panels.iter().enumerate() {
                let ox = p as u32 * (w * scale + scale);
                let px = Rgb(color.map(to_byte));
                for dy in 0..scale {
                    for dx in 0..scale {
                        img.put_pixel(ox + c as u32 * scale + dx, r as u32 * scale + dy, px);
                    }
                }
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_deterministic_and_draws_series() {
        let plot = LinePlot::new((0.0, 1.0), (0.0, 1.0)).with_series(vec![(0.0, 0.0), (1.0, 1.0)]);
        let a = plot.render(120, 100);
        assert_eq!(a, plot.render(120, 100));
        assert_eq!((a.width(), a.height()), (120, 100));
        assert_eq!(*a.get_pixel(20, 80), Rgb(PALETTE[0]));
    }

    #[test]
    fn degenerate_range_still_renders() {
        let plot = LinePlot::new((3.0, 3.0), (0.5, 0.5)).with_series(vec![(3.0, 0.5)]);
        let img = plot.render(60, 60);
        assert!(img.pixels().any(|p| *p == Rgb(PALETTE[0])));
    }

    #[test]
    fn panel_layout() {
        let shape = ImageShape::new(2, 2, 3);
        let map = AttentionMap::new(2, 2, vec![0.0, 1.0, 0.5, 1.0]).unwrap();
        let img = attention_panel(&[1.0; 12], shape, &map, 2).unwrap();
        assert_eq!((img.width(), img.height()), (16, 4));
        assert_eq!(*img.get_pixel(0, 0), Rgb([255, 255, 255]));
        assert_eq!(*img.get_pixel(6, 0), Rgb([0, 0, 0]));
        assert_eq!(*img.get_pixel(12, 0), Rgb([0, 0, 0]));
        assert_eq!(*img.get_pixel(14, 0), Rgb([255, 255, 255]));
        assert!(attention_panel(&[1.0; 3], shape, &map, 2).is_err());
    }
}
