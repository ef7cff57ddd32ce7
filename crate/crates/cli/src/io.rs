//! Image and disparity file formats.
//!
//! * 8-bit PNG images, gray or RGB.
//! * KITTI disparity PNGs: 16-bit gray, `disparity = stored / 256`, stored
//!   `0` marks an invalid pixel.
//! * PFM (`Pf`, single channel): rows bottom-up, the sign of the scale
//!   field gives the byte order (negative = little-endian). Non-finite
//!   values are invalid. Written little-endian with `+inf` for holes.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ExtendedColorType, ImageBuffer, ImageReader, Luma};
use stereoproxy_core::{colormap, DisparityMap, Raster, SeedSet};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {cause}", path.display())]
    Io {
        path: PathBuf,
        cause: std::io::Error,
    },
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("{}: {cause}", path.display())]
    Content {
        path: PathBuf,
        cause: stereoproxy_core::Error,
    },
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;

fn format_err(path: &Path, reason: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |cause| IoError::Io {
        path: path.to_path_buf(),
        cause,
    }
}

fn content_err(path: &Path) -> impl FnOnce(stereoproxy_core::Error) -> IoError + '_ {
    move |cause| IoError::Content {
        path: path.to_path_buf(),
        cause,
    }
}

fn decode_png(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    ImageReader::with_format(std::io::Cursor::new(bytes), image::ImageFormat::Png)
        .decode()
        .map_err(|e| format_err(path, e.to_string()))
}

/// Loads an 8-bit gray or RGB PNG.
pub fn load_image(path: &Path) -> Result<Raster> {
    let img = decode_png(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw()),
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageRgb16(_) => {
            return Err(format_err(path, "16-bit PNG is not an image (disparity map?)"))
        }
        other => return Err(format_err(path, format!("unsupported pixel layout {:?}", other.color()))),
    };
    Raster::new(w, h, channels, data).map_err(content_err(path))
}

pub fn save_image(raster: &Raster, path: &Path) -> Result<()> {
    let color = match raster.channels() {
        1 => ExtendedColorType::L8,
        _ => ExtendedColorType::Rgb8,
    };
    image::save_buffer_with_format(
        path,
        raster.data(),
        raster.width() as u32,
        raster.height() as u32,
        color,
        image::ImageFormat::Png,
    )
    .map_err(|e| format_err(path, e.to_string()))
}

pub fn load_disparity_kitti(path: &Path) -> Result<DisparityMap> {
    let buf = match decode_png(path)? {
        DynamicImage::ImageLuma16(b) => b,
        DynamicImage::ImageLuma8(_) => {
            return Err(format_err(path, "8-bit PNG is not a KITTI disparity map (image?)"))
        }
        other => return Err(format_err(path, format!("expected 16-bit gray, got {:?}", other.color()))),
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let raw = buf.into_raw();
    let values = raw.iter().map(|&s| s as f32 / 256.0).collect();
    let valid = raw.iter().map(|&s| s != 0).collect();
    DisparityMap::from_parts(w, h, values, valid).map_err(content_err(path))
}

/// Fixed-point code of one disparity; `0` for invalid or values that round
/// to zero.
pub fn kitti_code(value: Option<f32>) -> u16 {
    match value {
        Some(v) if v.is_finite() => {
            let s = (v as f64 * 256.0).round();
            if s < 1.0 {
                0
            } else {
                s.min(65535.0) as u16
            }
        }
        _ => 0,
    }
}

pub fn save_disparity_kitti(map: &DisparityMap, path: &Path) -> Result<()> {
    let raw: Vec<u16> = map
        .values()
        .iter()
        .zip(map.validity())
        .map(|(&v, &ok)| kitti_code(ok.then_some(v)))
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width() as u32, map.height() as u32, raw).expect("buffer sized from map");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| format_err(path, e.to_string()))
}

/// Splits the ASCII header off a PFM file: (tag, width, height, scale, payload).
fn pfm_header<'a>(path: &Path, bytes: &'a [u8]) -> Result<(&'a str, usize, usize, f32, &'a [u8])> {
    let mut pos = 0;
    let mut token = || -> Result<&'a str> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(path, "truncated PFM header"));
        }
        std::str::from_utf8(&bytes[start..pos]).map_err(|_| format_err(path, "non-ASCII PFM header"))
    };
    let tag = token()?;
    let w = token()?;
    let h = token()?;
    let scale = token()?;
    let parse_dim = |s: &str| s.parse::<usize>().ok().filter(|&v| v > 0);
    let (Some(w), Some(h)) = (parse_dim(w), parse_dim(h)) else {
        return Err(format_err(path, format!("bad PFM dimensions {w:?} {h:?}")));
    };
    let scale: f32 = scale
        .parse()
        .ok()
        .filter(|s: &f32| s.is_finite() && *s != 0.0)
        .ok_or_else(|| format_err(path, format!("bad PFM scale {scale:?}")))?;
    // exactly one whitespace byte ends the header
    let payload = bytes.get(pos + 1..).unwrap_or(&[]);
    Ok((tag, w, h, scale, payload))
}

pub fn load_pfm(path: &Path) -> Result<DisparityMap> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let (tag, w, h, scale, payload) = pfm_header(path, &bytes)?;
    match tag {
        "Pf" => {}
        "PF" => return Err(format_err(path, "color PFM cannot hold a disparity map")),
        other => return Err(format_err(path, format!("not a PFM file (magic {other:?})"))),
    }
    let n = w * h;
    if payload.len() < 4 * n {
        return Err(format_err(path, format!("PFM payload holds {} bytes, need {}", payload.len(), 4 * n)));
    }
    let little = scale < 0.0;
    let mut values = vec![0f32; n];
    let mut valid = vec![false; n];
    for (i, chunk) in payload[..4 * n].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        // file rows run bottom-up
        let (fx, fy) = (i % w, i / w);
        let j = (h - 1 - fy) * w + fx;
        if v.is_finite() {
            values[j] = v;
            valid[j] = true;
        }
    }
    DisparityMap::from_parts(w, h, values, valid).map_err(content_err(path))
}

pub fn encode_pfm(map: &DisparityMap) -> Vec<u8> {
    let (w, h) = map.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * w * h);
    for y in (0..h).rev() {
        for x in 0..w {
            let v = map.get(x, y).unwrap_or(f32::INFINITY);
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_pfm(map: &DisparityMap, path: &Path) -> Result<()> {
    fs::write(path, encode_pfm(map)).map_err(io_err(path))
}

/// Disparity format picked by file extension: `.pfm`, else KITTI PNG.
pub fn load_disparity(path: &Path) -> Result<DisparityMap> {
    if has_ext(path, "pfm") {
        load_pfm(path)
    } else {
        load_disparity_kitti(path)
    }
}

pub fn save_disparity(map: &DisparityMap, path: &Path) -> Result<()> {
    if has_ext(path, "pfm") {
        save_pfm(map, path)
    } else {
        save_disparity_kitti(map, path)
    }
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

pub fn save_colorized(map: &DisparityMap, d_max: f32, path: &Path) -> Result<()> {
    save_image(&colormap::colorize(map, d_max), path)
}

pub fn load_seeds(path: &Path) -> Result<SeedSet> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    SeedSet::from_text(&text).map_err(content_err(path))
}

pub fn save_seeds(seeds: &SeedSet, path: &Path) -> Result<()> {
    fs::write(path, seeds.to_text()).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kitti_codes() {
        assert_eq!(kitti_code(Some(1.0)), 256);
        assert_eq!(kitti_code(Some(100.0)), 25600);
        assert_eq!(kitti_code(Some(0.001)), 0);
        assert_eq!(kitti_code(Some(1.0 / 256.0)), 1);
        assert_eq!(kitti_code(Some(1e6)), 65535);
        assert_eq!(kitti_code(None), 0);
    }

    #[test]
    fn pfm_header_layout() {
        let map = DisparityMap::from_fn(2, 2, |x, y| (x + y > 0).then_some((x + 2 * y) as f32));
        let bytes = encode_pfm(&map);
        assert!(bytes.starts_with(b"Pf\n2 2\n-1.0\n"));
        // first stored row is the bottom one
        assert_eq!(&bytes[12..16], &2f32.to_le_bytes());
        assert_eq!(&bytes[20..24], &f32::INFINITY.to_le_bytes());
    }
}
