//! Line-chart rasterization of time series.
//!
//! Every variable gets its own square `S x S` panel; panels are stitched
//! row-major into a grid with `ceil(sqrt(M))` columns. Drawing is pure integer
//! arithmetic so the output is byte-identical across runs and platforms.

use std::io::BufWriter;
use std::path::Path;

use crate::data::TimeSeriesSample;
use crate::par::Exec;
use crate::{Error, Result};

pub type Rgb = [u8; 3];

pub const WHITE: Rgb = [255, 255, 255];
pub const DEFAULT_PANEL: usize = 64;

/// Row-major RGB image, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub pixels: Vec<u8>,
    pub panel_size: usize,
    pub rows: usize,
    pub cols: usize,
}

impl RasterImage {
    fn blank(panel_size: usize, rows: usize, cols: usize) -> Self {
        Self {
            pixels: vec![255; rows * cols * panel_size * panel_size * 3],
            panel_size,
            rows,
            cols,
        }
    }

    pub fn height(&self) -> usize {
        self.rows * self.panel_size
    }

    pub fn width(&self) -> usize {
        self.cols * self.panel_size
    }

    pub fn pixel(&self, row: usize, col: usize) -> Rgb {
        let i = (row * self.width() + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn put(&mut self, row: usize, col: usize, color: Rgb) {
        let i = (row * self.width() + col) * 3;
        self.pixels[i..i + 3].copy_from_slice(&color);
    }

    pub fn count_non_white(&self) -> usize {
        self.pixels.chunks_exact(3).filter(|p| *p != WHITE).count()
    }

    /// Channel-first `3 x H x W` ink intensities in `[0, 1]` (white is 0).
    pub fn to_chw(&self) -> Vec<f32> {
        let plane = self.height() * self.width();
        let mut out = vec![0f32; 3 * plane];
        for (p, px) in self.pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + p] = 1.0 - px[c] as f32 / 255.0;
            }
        }
        out
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_png_to(&mut buf)?;
        Ok(buf)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_png_to(BufWriter::new(file))
    }

    fn write_png_to<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut enc = png::Encoder::new(w, self.width() as u32, self.height() as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let png_err = |e: png::EncodingError| Error::Format {
            path: "<png>".into(),
            msg: e.to_string(),
        };
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(&self.pixels).map_err(png_err)?;
        writer.finish().map_err(png_err)
    }
}

/// `(rows, cols)` of the panel grid for `m` variables.
pub fn grid_layout(m: usize) -> (usize, usize) {
    let mut cols = (m as f64).sqrt().ceil() as usize;
    while cols * cols < m {
        cols += 1;
    }
    let cols = cols.max(1);
    (m.div_ceil(cols), cols)
}

/// `n` fully saturated colors with evenly spaced hues, starting at red.
pub fn default_palette(n: usize) -> Vec<Rgb> {
    (0..n)
        .map(|i| {
            let h = 6.0 * i as f64 / n as f64;
            let sector = h.floor() as usize % 6;
            let f = h - h.floor();
            let v = 220.0;
            let (up, down) = ((v * f).round() as u8, (v * (1.0 - f)).round() as u8);
            let v = v as u8;
            match sector {
                0 => [v, up, 0],
                1 => [down, v, 0],
                2 => [0, v, up],
                3 => [0, down, v],
                4 => [up, 0, v],
                _ => [v, 0, down],
            }
        })
        .collect()
}

pub fn rasterize(sample: &TimeSeriesSample, s: usize, palette: &[Rgb]) -> Result<RasterImage> {
    let (m, t) = sample.shape();
    if s < 16 {
        return Err(Error::config(format!(
            "panel size must be at least 16, got {s}"
        )));
    }
    if palette.len() < m {
        return Err(Error::config(format!(
            "palette has {} colors but the sample has {m} variables",
            palette.len()
        )));
    }
    let (rows, cols) = grid_layout(m);
    let mut img = RasterImage::blank(s, rows, cols);
    let center = (s / 2) as i64;
    // Drawable band is [center - half, center + half]; about 5% margin each side.
    let half = ((s as f64 * 0.45).floor() as i64)
        .min(center)
        .min(s as i64 - 1 - center);
    let markers = t * 4 <= s;

    for v in 0..m {
        let x = sample.variable(v);
        let (lo, hi) = x
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| {
                (a.min(y), b.max(y))
            });
        let pts: Vec<(i64, i64)> = x
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let col = round_ratio((i * (s - 1)) as i64, (t - 1) as i64);
                let row = if hi > lo {
                    // Signed offset from the center, rounded symmetrically so
                    // that negating the series mirrors the rows about `center`.
                    let u = ((y - lo) - (hi - y)) / (hi - lo);
                    center - (u * half as f64).round() as i64
                } else {
                    center
                };
                (col, row)
            })
            .collect();

        let mut panel = Panel {
            img: &mut img,
            top: (v / cols) * s,
            left: (v % cols) * s,
            size: s as i64,
            color: palette[v],
        };
        for w in pts.windows(2) {
            panel.segment(w[0], w[1]);
        }
        if pts.len() == 1 {
            panel.dot(pts[0].0, pts[0].1);
        }
        if markers {
            for &(c, r) in &pts {
                for (dc, dr) in [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)] {
                    panel.dot(c + dc, r + dr);
                }
            }
        }
    }
    Ok(img)
}

pub fn rasterize_batch(
    samples: &[TimeSeriesSample],
    s: usize,
    palette: &[Rgb],
    exec: Exec,
) -> Result<Vec<RasterImage>> {
    exec.try_map(samples, |_, x| rasterize(x, s, palette))
}

struct Panel<'a> {
    img: &'a mut RasterImage,
    top: usize,
    left: usize,
    size: i64,
    color: Rgb,
}

impl Panel<'_> {
    fn dot(&mut self, col: i64, row: i64) {
        if (0..self.size).contains(&col) && (0..self.size).contains(&row) {
            self.img.put(
                self.top + row as usize,
                self.left + col as usize,
                self.color,
            );
        }
    }

    /// Integer line: steps along the major axis and rounds the minor
    /// coordinate half away from zero, relative to the start point.
    fn segment(&mut self, (c0, r0): (i64, i64), (c1, r1): (i64, i64)) {
        let (dc, dr) = (c1 - c0, r1 - r0);
        if dc == 0 && dr == 0 {
            self.dot(c0, r0);
        } else if dc.abs() >= dr.abs() {
            for k in 0..=dc.abs() {
                let r = r0 + round_ratio(dr * k, dc.abs());
                self.dot(c0 + k * dc.signum(), r);
            }
        } else {
            for k in 0..=dr.abs() {
                let c = c0 + round_ratio(dc * k, dr.abs());
                self.dot(c, r0 + k * dr.signum());
            }
        }
    }
}

/// `p / q` rounded half away from zero, `q > 0`.
fn round_ratio(p: i64, q: i64) -> i64 {
    p.signum() * ((2 * p.abs() + q) / (2 * q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn sample(m: usize, t: usize, f: impl Fn(usize, usize) -> f64) -> TimeSeriesSample {
        TimeSeriesSample::new(Array2::from_shape_fn((m, t), |(a, b)| f(a, b)), None, "r").unwrap()
    }

    fn colored_rows(img: &RasterImage, col: usize) -> Vec<usize> {
        (0..img.height())
            .filter(|&r| img.pixel(r, col) != WHITE)
            .collect()
    }

    #[test]
    fn constant_series_is_center_line() {
        let img = rasterize(&sample(1, 8, |_, _| 3.0), 64, &default_palette(16)).unwrap();
        assert_eq!((img.height(), img.width()), (64, 64));
        for c in 0..64 {
            assert_eq!(img.pixel(32, c), default_palette(16)[0]);
        }
        // T = 8 <= 16, so markers extend one row above and below.
        assert_eq!(img.pixel(31, 0), default_palette(16)[0]);
        assert_eq!(img.pixel(33, 0), default_palette(16)[0]);
        assert_eq!(img.pixel(30, 0), WHITE);
    }

    #[test]
    fn dense_series_has_no_markers() {
        let img = rasterize(&sample(1, 40, |_, _| 1.0), 64, &default_palette(1)).unwrap();
        assert_eq!(img.count_non_white(), 64);
    }

    #[test]
    fn four_variables_make_two_by_two() {
        let img = rasterize(
            &sample(4, 50, |m, t| (t * (m + 1)) as f64),
            64,
            &default_palette(16),
        )
        .unwrap();
        assert_eq!((img.rows, img.cols), (2, 2));
        assert_eq!((img.height(), img.width()), (128, 128));
    }

    #[test]
    fn layouts() {
        assert_eq!(grid_layout(1), (1, 1));
        assert_eq!(grid_layout(2), (1, 2));
        assert_eq!(grid_layout(3), (2, 2));
        assert_eq!(grid_layout(5), (2, 3));
        assert_eq!(grid_layout(9), (3, 3));
        assert_eq!(grid_layout(10), (3, 4));
    }

    #[test]
    fn unused_cells_stay_white() {
        let img = rasterize(
            &sample(3, 30, |m, t| ((t + m) as f64).sin()),
            32,
            &default_palette(3),
        )
        .unwrap();
        for r in 32..64 {
            for c in 32..64 {
                assert_eq!(img.pixel(r, c), WHITE);
            }
        }
    }

    #[test]
    fn errors() {
        let x = sample(3, 10, |_, t| t as f64);
        assert!(matches!(
            rasterize(&x, 64, &default_palette(2)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            rasterize(&x, 8, &default_palette(3)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn palette_is_distinct_and_not_white() {
        let p = default_palette(16);
        for (i, a) in p.iter().enumerate() {
            assert_ne!(*a, WHITE);
            for b in &p[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn png_roundtrip() {
        let img = rasterize(
            &sample(2, 20, |m, t| (t * m) as f64),
            16,
            &default_palette(2),
        )
        .unwrap();
        let bytes = img.encode_png().unwrap();
        let dec = png::Decoder::new(std::io::Cursor::new(bytes));
        let mut reader = dec.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height), (32, 16));
        assert_eq!(&buf[..info.buffer_size()], &img.pixels[..]);
    }

    #[test]
    fn chw_is_ink() {
        let img = rasterize(&sample(1, 20, |_, t| t as f64), 16, &default_palette(1)).unwrap();
        let chw = img.to_chw();
        assert_eq!(chw.len(), 3 * 16 * 16);
        assert_eq!(chw[15 * 16], 1.0 - 220.0 / 255.0);
        assert_eq!(chw[1 * 256 + 0], 0.0);
    }

    proptest! {
        #[test]
        fn flip_mirrors_polyline(vals in proptest::collection::vec(-10.0f64..10.0, 20..80), s in 16usize..80) {
            let t = vals.len();
            let up = sample(1, t, |_, i| vals[i]);
            let down = sample(1, t, |_, i| -vals[i]);
            let pal = default_palette(1);
            let a = rasterize(&up, s, &pal).unwrap();
            let b = rasterize(&down, s, &pal).unwrap();
            let c = (s / 2) as i64;
            for col in 0..s {
                let ra = colored_rows(&a, col);
                let rb = colored_rows(&b, col);
                prop_assert_eq!(ra.is_empty(), rb.is_empty());
                if let (Some(&amin), Some(&amax)) = (ra.first(), ra.last()) {
                    prop_assert_eq!(*rb.first().unwrap() as i64, 2 * c - amax as i64);
                    prop_assert_eq!(*rb.last().unwrap() as i64, 2 * c - amin as i64);
                }
            }
        }

        #[test]
        fn panels_are_disjoint(m in 1usize..7, t in 2usize..40, seed in 0u64..1000) {
            let x = sample(m, t, |a, b| (((a * 31 + b * 17) as u64 ^ seed) % 97) as f64);
            let pal = default_palette(m);
            let img = rasterize(&x, 16, &pal).unwrap();
            for r in 0..img.height() {
                for c in 0..img.width() {
                    let px = img.pixel(r, c);
                    if px != WHITE {
                        let v = (r / 16) * img.cols + c / 16;
                        prop_assert_eq!(px, pal[v]);
                    }
                }
            }
            // Every variable left ink in its own panel.
            for v in 0..m {
                let (top, left) = ((v / img.cols) * 16, (v % img.cols) * 16);
                let ink = (top..top + 16).any(|r| (left..left + 16).any(|c| img.pixel(r, c) != WHITE));
                prop_assert!(ink);
            }
        }
    }
}
