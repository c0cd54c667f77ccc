//! PNG and PFM helpers for `[1, C, H, W]` tensors.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write a `[1, 3, H, W]` (RGB) or `[1, 1, H, W]` (gray) tensor in `[0, 1]` as
/// an 8-bit PNG. Values are clamped.
pub fn write_png(t: &Tensor, path: &Path) -> Result<()> {
    let (h, w) = (t.h() as u32, t.w() as u32);
    let res = match t.c() {
        3 => {
            let img: RgbImage = ImageBuffer::from_fn(w, h, |x, y| {
                let (x, y) = (x as usize, y as usize);
                Rgb([
                    to_u8(t.at(0, 0, y, x)),
                    to_u8(t.at(0, 1, y, x)),
                    to_u8(t.at(0, 2, y, x)),
                ])
            });
            img.save(path)
        }
        1 => {
            let img: GrayImage =
                ImageBuffer::from_fn(w, h, |x, y| Luma([to_u8(t.at(0, 0, y as usize, x as usize))]));
            img.save(path)
        }
        c => {
            return Err(Error::Shape(format!(
                "png export needs 1 or 3 channels, got {c}"
            )))
        }
    };
    res.map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Decode an 8-bit RGB image.
pub fn read_rgb8(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.to_rgb8())
}

/// Write a single-channel float map as little-endian PFM (`Pf`). PFM stores
/// rows bottom-to-top.
pub fn write_pfm(t: &Tensor, path: &Path) -> Result<()> {
    if t.c() != 1 || t.n() != 1 {
        return Err(Error::Shape(format!(
            "pfm export needs [1, 1, H, W], got {:?}",
            t.shape()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let (h, w) = (t.h(), t.w());
    let mut buf = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for y in (0..h).rev() {
        for x in 0..w {
            buf.extend_from_slice(&(t.at(0, 0, y, x) as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: &Path) -> Result<Tensor> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let bad = |msg: &str| Error::InvalidArgument(format!("{}: {msg}", path.display()));
    let mut line = String::new();
    let mut next_line = |reader: &mut BufReader<File>| -> Result<String> {
        line.clear();
        reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        Ok(line.trim().to_string())
    };
    if next_line(&mut reader)? != "Pf" {
        return Err(bad("not a single-channel PFM"));
    }
    let dims = next_line(&mut reader)?;
    let mut it = dims.split_whitespace().map(|s| s.parse::<usize>());
    let (w, h) = match (it.next(), it.next()) {
        (Some(Ok(w)), Some(Ok(h))) => (w, h),
        _ => return Err(bad("bad dimensions")),
    };
    let scale: f64 = next_line(&mut reader)?
        .parse()
        .map_err(|_| bad("bad scale"))?;
    let mut raw = vec![0u8; w * h * 4];
    reader.read_exact(&mut raw).map_err(|e| Error::io(path, e))?;
    let mut t = Tensor::zeros([1, 1, h, w]);
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (row, x) = (i / w, i % w);
        t.set(0, 0, h - 1 - row, x, v as f64);
    }
    Ok(t)
}
