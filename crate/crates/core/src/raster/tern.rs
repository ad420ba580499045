use std::fs;
use std::io::BufWriter;
use std::path::Path;

use super::PlotImage;
use crate::error::{Error, Result};

/// Canonical text encoding: `TERN1 <side> <side>` then one line per row.
pub fn to_tern_string(img: &PlotImage) -> String {
    let side = img.side();
    let mut s = String::with_capacity(16 + side * side * 3);
    s.push_str(&format!("TERN1 {side} {side}\n"));
    for row in img.pixels().chunks(side) {
        let line: Vec<&str> = row
            .iter()
            .map(|p| match p {
                1 => "1",
                -1 => "-1",
                _ => "0",
            })
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_tern(text: &str, origin: &str) -> Result<PlotImage> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut lines = text.split('\n');
    let header = lines.next().unwrap_or_default();
    let fields: Vec<&str> = header.split(' ').collect();
    let (rows, cols) = match fields.as_slice() {
        ["TERN1", r, c] => (
            r.parse::<usize>().map_err(|_| err(1, format!("bad row count {r:?}")))?,
            c.parse::<usize>().map_err(|_| err(1, format!("bad column count {c:?}")))?,
        ),
        _ => return Err(err(1, format!("expected \"TERN1 <side> <side>\", got {header:?}"))),
    };
    if rows != cols || rows == 0 {
        return Err(err(1, format!("image must be square and non-empty, got {rows}x{cols}")));
    }
    let mut pixels = Vec::with_capacity(rows * cols);
    let body: Vec<&str> = lines.collect();
    // the final "\n" leaves one empty trailing element
    let body = match body.split_last() {
        Some((&"", rest)) => rest,
        _ => return Err(err(rows + 2, "missing final newline".into())),
    };
    if body.len() != rows {
        return Err(err(
            body.len().min(rows) + 2,
            format!("header declares {rows} rows, found {}", body.len()),
        ));
    }
    for (i, line) in body.iter().enumerate() {
        let tokens: Vec<&str> = line.split(' ').collect();
        if tokens.len() != cols {
            return Err(err(i + 2, format!("expected {cols} values, found {}", tokens.len())));
        }
        for t in tokens {
            pixels.push(match t {
                "1" => 1,
                "0" => 0,
                "-1" => -1,
                other => return Err(err(i + 2, format!("value {other:?} not in {{-1,0,1}}"))),
            });
        }
    }
    PlotImage::new(rows, pixels)
}

pub fn write_image(img: &PlotImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_tern_string(img)).map_err(|e| Error::io(path, e))
}

pub fn read_image(path: impl AsRef<Path>) -> Result<PlotImage> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tern(&text, &path.display().to_string())
}

const POSITIVE: [u8; 3] = [253, 231, 37];
const NEGATIVE: [u8; 3] = [68, 1, 84];
const NONE: [u8; 3] = [255, 255, 255];

/// Display-only PNG, each pixel scaled up to `scale`×`scale`.
pub fn png_bytes(img: &PlotImage, scale: usize) -> Result<Vec<u8>> {
    let scale = scale.max(1);
    let side = img.side();
    let dim = (side * scale) as u32;
    let mut raw = Vec::with_capacity((dim * dim * 3) as usize);
    for r in 0..side * scale {
        for c in 0..side * scale {
            raw.extend_from_slice(match img.get(r / scale, c / scale) {
                1 => &POSITIVE,
                -1 => &NEGATIVE,
                _ => &NONE,
            });
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, dim, dim);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::Image(format!("png: {e}")))?;
        w.write_image_data(&raw)
            .map_err(|e| Error::Image(format!("png: {e}")))?;
    }
    Ok(out)
}

pub fn write_png(img: &PlotImage, path: impl AsRef<Path>, scale: usize) -> Result<()> {
    let path = path.as_ref();
    let bytes = png_bytes(img, scale)?;
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    std::io::Write::write_all(&mut w, &bytes).map_err(|e| Error::io(path, e))
}
