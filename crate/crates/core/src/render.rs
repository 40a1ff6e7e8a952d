//! Six-panel diagnostic composite:
//!
//! 1. input image
//! 2. ground-truth mask, or an "N/A" placeholder
//! 3. binary Px mask
//! 4. Px heatmap over the input
//! 5. Fx received-attention heatmap over the input, min-max normalised
//! 6. hybrid field heatmap with the sample's hybrid score printed on it
//!
//! Heatmaps use a piecewise-linear ramp black → red → yellow → white, which
//! is monotone in every channel, so brighter always means more anomalous.
//! Rendering is integer-exact after quantisation and fully deterministic.

use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::grid::Grid;
use crate::image::{quantise, Image};
use crate::pipeline::SampleAnalysis;

/// Gap between panels, in pixels.
pub const GAP: u32 = 4;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const PLACEHOLDER: Rgb<u8> = Rgb([96, 96, 96]);
/// Weight of the heatmap in overlays.
const OVERLAY_WEIGHT: f32 = 0.5;

/// Maps `t` in [0, 1] onto the heatmap ramp.
pub fn colour_ramp(t: f64) -> [f32; 3] {
    let s = if t.is_nan() { 0.0 } else { 3.0 * t.clamp(0.0, 1.0) };
    let rgb = if s < 1.0 {
        [s, 0.0, 0.0]
    } else if s < 2.0 {
        [1.0, s - 1.0, 0.0]
    } else {
        [1.0, 1.0, s - 2.0]
    };
    rgb.map(|v| v as f32)
}

/// Rescales to [0, 1] by the field's own range; a constant field maps to 0.
pub fn min_max_normalise(field: &Grid<f64>) -> Grid<f64> {
    let (lo, hi) = field.min_max();
    let span = hi - lo;
    field.map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
}

fn heat_panel(field: &Grid<f64>, base: Option<&Image>) -> RgbImage {
    RgbImage::from_fn(field.cols() as u32, field.rows() as u32, |x, y| {
        let (r, c) = (y as usize, x as usize);
        let heat = colour_ramp(field.get(r, c));
        let px = match base {
            Some(img) => {
                let under = img.rgb(r, c);
                [0, 1, 2].map(|k| OVERLAY_WEIGHT * heat[k] + (1.0 - OVERLAY_WEIGHT) * under[k])
            }
            None => heat,
        };
        Rgb(px.map(quantise))
    })
}

fn mask_panel(mask: &Grid<u8>) -> RgbImage {
    RgbImage::from_fn(mask.cols() as u32, mask.rows() as u32, |x, y| {
        let v = if mask.get(y as usize, x as usize) != 0 { 255 } else { 0 };
        Rgb([v, v, v])
    })
}

fn placeholder_panel(height: u32, width: u32) -> RgbImage {
    let mut p = RgbImage::from_pixel(width, height, PLACEHOLDER);
    let scale = (width / 40).max(1);
    let (tw, th) = text_size("N/A", scale);
    draw_text(
        &mut p,
        "N/A",
        width.saturating_sub(tw) / 2,
        height.saturating_sub(th) / 2,
        scale,
        Rgb([255, 255, 255]),
    );
    p
}

/// Builds the composite for one analysed sample. `input` and `gt` must be at
/// the analysis working size.
pub fn render_composite(
    input: &Image,
    gt: Option<&Grid<u8>>,
    analysis: &SampleAnalysis,
    fusion: &FusionConfig,
) -> Result<RgbImage> {
    let (h, w) = input.dims();
    let expected = (h, w);
    let check = |name: &str, dims: (usize, usize)| {
        if dims == expected {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{name} is {dims:?}, input image is {expected:?}"
            )))
        }
    };
    check("Px map", analysis.local.map_fullres.dims())?;
    check("Fx map", analysis.attention.values.dims())?;
    if let Some(m) = gt {
        check("ground-truth mask", m.dims())?;
    }

    let (ph, pw) = (h as u32, w as u32);
    let panels = [
        input.to_rgb8(),
        match gt {
            Some(m) => mask_panel(m),
            None => placeholder_panel(ph, pw),
        },
        mask_panel(&analysis.local.mask),
        heat_panel(&analysis.local.map_fullres, Some(input)),
        heat_panel(&min_max_normalise(&analysis.attention.values), Some(input)),
        {
            let mut p = heat_panel(&analysis.hybrid_field(fusion), None);
            let label = format!("S_H={:.3}", analysis.s_h);
            let scale = (pw / 80).max(1);
            let (tw, th) = text_size(&label, scale);
            let pad = scale * 2;
            for y in 0..(th + 2 * pad).min(ph) {
                for x in 0..(tw + 2 * pad).min(pw) {
                    p.put_pixel(x, y, Rgb([0, 0, 0]));
                }
            }
            draw_text(&mut p, &label, pad, pad, scale, Rgb([255, 255, 255]));
            p
        },
    ];

    let n = panels.len() as u32;
    let mut out = RgbImage::from_pixel(n * pw + (n - 1) * GAP, ph, BACKGROUND);
    for (i, panel) in panels.iter().enumerate() {
        image::imageops::replace(&mut out, panel, i64::from(i as u32 * (pw + GAP)), 0);
    }
    Ok(out)
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut png = Vec::new();
    img.write_to(&mut Cursor::new(&mut png), ImageFormat::Png)?;
    Ok(png)
}

const GLYPH_W: u32 = 5;
const GLYPH_H: u32 = 7;

/// 5×7 bitmaps, one byte per row, most significant of the low five bits on
/// the left.
fn glyph(ch: char) -> [u8; 7] {
    match ch {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        '=' => [0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '_' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F],
        '/' => [0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10],
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        _ => [0x00; 7],
    }
}

/// Pixel size of `text` at integer `scale`, one blank column between glyphs.
pub fn text_size(text: &str, scale: u32) -> (u32, u32) {
    let n = text.chars().count() as u32;
    let w = if n == 0 { 0 } else { n * (GLYPH_W + 1) - 1 };
    (w * scale, GLYPH_H * scale)
}

/// Draws `text` with its top-left corner at `(x0, y0)`, clipped to the image.
pub fn draw_text(img: &mut RgbImage, text: &str, x0: u32, y0: u32, scale: u32, colour: Rgb<u8>) {
    let (iw, ih) = img.dimensions();
    for (k, ch) in text.chars().enumerate() {
        let gx = x0 + k as u32 * (GLYPH_W + 1) * scale;
        for (row, bits) in glyph(ch).iter().enumerate() {
            for col in 0..GLYPH_W {
                if bits >> (GLYPH_W - 1 - col) & 1 == 0 {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        let x = gx + col * scale + dx;
                        let y = y0 + row as u32 * scale + dy;
                        if x < iw && y < ih {
                            img.put_pixel(x, y, colour);
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_is_monotone_per_channel() {
        let mut prev = colour_ramp(0.0);
        assert_eq!(prev, [0.0, 0.0, 0.0]);
        for i in 1..=300 {
            let cur = colour_ramp(i as f64 / 300.0);
            for k in 0..3 {
                assert!(cur[k] >= prev[k]);
            }
            prev = cur;
        }
        assert_eq!(prev, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn constant_field_normalises_to_zero() {
        let g = Grid::filled(3, 3, 0.25_f64);
        assert!(min_max_normalise(&g).data().iter().all(|&v| v == 0.0));
        let g = Grid::new(1, 3, vec![2.0, 3.0, 4.0]).unwrap();
        assert_eq!(min_max_normalise(&g).data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn text_marks_pixels() {
        let mut img = RgbImage::from_pixel(40, 10, Rgb([0, 0, 0]));
        draw_text(&mut img, "S_H=1", 0, 0, 1, Rgb([255, 255, 255]));
        let lit = img.pixels().filter(|p| p.0[0] == 255).count();
        assert!(lit > 20);
        assert_eq!(text_size("S_H=1", 2), (58, 14));
    }
}
