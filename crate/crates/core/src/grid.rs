//! Tiles all pages of a document into one fixed-size image so a page
//! classifier can look at the whole document in a single pass.
//!
//! Layout: `g = ceil(sqrt(L))` rows and columns, cells of
//! `floor(width / g) x floor(height / g)` pixels, pages placed row-major from
//! the top-left. Unused cells and the remainder strip at the right/bottom
//! edge keep the background color. Resampling is always bilinear
//! ([`FilterType::Triangle`]).

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::imageops::{self, FilterType};
use image::{DynamicImage, ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RESAMPLING: FilterType = FilterType::Triangle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Resize each page to fill its cell exactly.
    Stretch,
    /// Keep the page aspect ratio and center it in its cell.
    Letterbox,
}

impl FromStr for Scaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stretch" | "stretch_to_cell" => Ok(Scaling::Stretch),
            "letterbox" | "aspect_preserving_letterbox" => Ok(Scaling::Letterbox),
            _ => Err(Error::InvalidArgument(format!("unknown scaling mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridConfig {
    pub height: u32,
    pub width: u32,
    pub background: Rgb<u8>,
    pub scaling: Scaling,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            height: 224,
            width: 224,
            background: Rgb([255, 255, 255]),
            scaling: Scaling::Stretch,
        }
    }
}

/// Parses `HEIGHTxWIDTH`, e.g. `224x224`.
pub fn parse_size(s: &str) -> Result<(u32, u32)> {
    let bad = || Error::InvalidArgument(format!("invalid size {s:?}, expected HEIGHTxWIDTH"));
    let (h, w) = s.split_once('x').ok_or_else(bad)?;
    let (h, w): (u32, u32) = (h.parse().map_err(|_| bad())?, w.parse().map_err(|_| bad())?);
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

/// Smallest `g` with `g * g >= pages`.
pub fn grid_side(pages: usize) -> usize {
    let mut g = (pages as f64).sqrt() as usize;
    while g * g < pages {
        g += 1;
    }
    while g > 1 && (g - 1) * (g - 1) >= pages {
        g -= 1;
    }
    g
}

/// Top-left corner and size `(x, y, width, height)` of cell `index`.
pub fn cell_rect(index: usize, pages: usize, config: &GridConfig) -> (u32, u32, u32, u32) {
    let g = grid_side(pages) as u32;
    let (cw, ch) = (config.width / g, config.height / g);
    let (row, col) = (index as u32 / g, index as u32 % g);
    (col * cw, row * ch, cw, ch)
}

pub fn compose(pages: &[DynamicImage], config: &GridConfig) -> Result<RgbImage> {
    if pages.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let g = grid_side(pages.len()) as u32;
    if config.width < g || config.height < g {
        return Err(Error::InvalidArgument(format!(
            "{}x{} output is too small for a {g}x{g} grid",
            config.height, config.width
        )));
    }
    let mut canvas = RgbImage::from_pixel(config.width, config.height, config.background);
    for (i, page) in pages.iter().enumerate() {
        let (x, y, cw, ch) = cell_rect(i, pages.len(), config);
        let rgb = page.to_rgb8();
        let (tile, dx, dy) = match config.scaling {
            Scaling::Stretch => (imageops::resize(&rgb, cw, ch, RESAMPLING), 0, 0),
            Scaling::Letterbox => {
                let (w, h) = (rgb.width().max(1) as f64, rgb.height().max(1) as f64);
                let scale = (cw as f64 / w).min(ch as f64 / h);
                let nw = ((w * scale).round() as u32).clamp(1, cw);
                let nh = ((h * scale).round() as u32).clamp(1, ch);
                (
                    imageops::resize(&rgb, nw, nh, RESAMPLING),
                    (cw - nw) / 2,
                    (ch - nh) / 2,
                )
            }
        };
        imageops::replace(&mut canvas, &tile, i64::from(x + dx), i64::from(y + dy));
    }
    Ok(canvas)
}

/// Loads the page images at `paths` and composes them.
pub fn compose_files<P: AsRef<Path>>(paths: &[P], config: &GridConfig) -> Result<RgbImage> {
    let pages = paths
        .iter()
        .map(|p| {
            let p = p.as_ref();
            image::open(p).map_err(|source| Error::Image {
                page: p.display().to_string(),
                source,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    compose(&pages, config)
}

/// Lossless PNG bytes of `image`.
pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    image
        .write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)
        .map_err(|source| Error::Image {
            page: "<grid>".into(),
            source,
        })?;
    Ok(bytes)
}

/// Writes `<out_dir>/<doc_id>.png`.
pub fn write_grid(image: &RgbImage, out_dir: &Path, doc_id: &str) -> Result<PathBuf> {
    let path = out_dir.join(format!("{doc_id}.png"));
    let bytes = encode_png(image)?;
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solid(w: u32, h: u32, v: u8) -> DynamicImage {
        DynamicImage::ImageRgb8(RgbImage::from_pixel(w, h, Rgb([v, v, v])))
    }

    #[test]
    fn grid_side_is_ceil_sqrt() {
        let expected = [(1, 1), (2, 2), (4, 2), (5, 3), (9, 3), (10, 4), (16, 4), (17, 5)];
        for (l, g) in expected {
            assert_eq!(grid_side(l), g, "L={l}");
        }
    }

    #[test]
    fn four_pages_fill_quadrants() {
        let pages: Vec<_> = (0..4).map(|i| solid(30, 40, i * 50)).collect();
        let img = compose(&pages, &GridConfig::default()).unwrap();
        assert_eq!(img.dimensions(), (224, 224));
        assert_eq!(cell_rect(3, 4, &GridConfig::default()), (112, 112, 112, 112));
        assert_eq!(img.get_pixel(0, 0).0, [0; 3]);
        assert_eq!(img.get_pixel(200, 10).0, [50; 3]);
        assert_eq!(img.get_pixel(10, 200).0, [100; 3]);
        assert_eq!(img.get_pixel(200, 200).0, [150; 3]);
    }

    #[test]
    fn single_page_stretch_is_a_resize() {
        let page = solid(50, 70, 17);
        let img = compose(std::slice::from_ref(&page), &GridConfig::default()).unwrap();
        let direct = imageops::resize(&page.to_rgb8(), 224, 224, RESAMPLING);
        assert_eq!(img, direct);
    }

    #[test]
    fn five_pages_leave_background_cells() {
        let pages: Vec<_> = (0..5).map(|_| solid(10, 10, 0)).collect();
        let cfg = GridConfig::default();
        let img = compose(&pages, &cfg).unwrap();
        // cells are 74x74 in a 3x3 grid
        for i in 0..9 {
            let (x, y, cw, ch) = cell_rect(i, 5, &cfg);
            assert_eq!((cw, ch), (74, 74));
            let px = img.get_pixel(x + cw / 2, y + ch / 2).0;
            assert_eq!(px, if i < 5 { [0; 3] } else { [255; 3] }, "cell {i}");
        }
        // remainder strip at the right edge
        assert_eq!(img.get_pixel(223, 10).0, [255; 3]);
    }

    #[test]
    fn letterbox_keeps_aspect() {
        let cfg = GridConfig {
            scaling: Scaling::Letterbox,
            ..Default::default()
        };
        let img = compose(&[solid(100, 200, 0)], &cfg).unwrap();
        // 112x224 page centered horizontally
        assert_eq!(img.get_pixel(10, 112).0, [255; 3]);
        assert_eq!(img.get_pixel(112, 112).0, [0; 3]);
        assert_eq!(img.get_pixel(213, 112).0, [255; 3]);
    }

    #[test]
    fn page_order_matters() {
        let a = solid(8, 8, 0);
        let b = solid(8, 8, 255);
        let cfg = GridConfig::default();
        let ab = compose(&[a.clone(), b.clone()], &cfg).unwrap();
        let ba = compose(&[b, a], &cfg).unwrap();
        assert_ne!(ab, ba);
    }

    #[test]
    fn errors() {
        assert!(compose(&[], &GridConfig::default()).is_err());
        let tiny = GridConfig {
            height: 2,
            width: 2,
            ..Default::default()
        };
        assert!(compose(&vec![solid(4, 4, 0); 9], &tiny).is_err());
        let err = compose_files(&["/nonexistent/page.png"], &GridConfig::default()).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/page.png"));
    }

    #[test]
    fn size_parsing() {
        assert_eq!(parse_size("224x224").unwrap(), (224, 224));
        assert_eq!(parse_size("100x300").unwrap(), (100, 300));
        assert!(parse_size("0x5").is_err());
        assert!(parse_size("224").is_err());
    }
}
