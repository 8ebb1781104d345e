//! Binary PGM (P5) masks and PPM (P6) images, 8-bit only.

use std::fs;
use std::path::Path;

use super::Image;
use crate::error::{Result, TcnnError};
use crate::mask::{ClassTable, SegMask};

struct Header {
    width: usize,
    height: usize,
    payload_at: usize,
}

fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(TcnnError::parse(
            0,
            format!("expected magic {}", String::from_utf8_lossy(magic)),
        ));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and comments before each field
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            let what = ["width", "height", "maxval"][i];
            return Err(TcnnError::parse(start, format!("expected {what}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| TcnnError::parse(start, format!("number {text} out of range")))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(TcnnError::parse(pos, "expected whitespace after maxval")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(TcnnError::parse(2, "image has zero extent"));
    }
    if maxval != 255 {
        return Err(TcnnError::parse(pos - 1, format!("unsupported maxval {maxval}")));
    }
    Ok(Header {
        width,
        height,
        payload_at: pos,
    })
}

fn payload<'a>(bytes: &'a [u8], header: &Header, channels: usize) -> Result<&'a [u8]> {
    let need = header.width * header.height * channels;
    let have = bytes.len() - header.payload_at;
    if have < need {
        return Err(TcnnError::parse(
            bytes.len(),
            format!("truncated payload: {have} of {need} bytes"),
        ));
    }
    if have > need {
        return Err(TcnnError::parse(
            header.payload_at + need,
            "trailing bytes after payload",
        ));
    }
    Ok(&bytes[header.payload_at..])
}

pub fn encode_pgm(mask: &SegMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend_from_slice(mask.grid());
    out
}

/// Decodes a mask; values outside `classes` are a validation error.
pub fn decode_pgm(bytes: &[u8], classes: &ClassTable) -> Result<SegMask> {
    let header = parse_header(bytes, b"P5")?;
    let data = payload(bytes, &header, 1)?;
    SegMask::new(header.height, header.width, data.to_vec(), classes.clone())
}

pub fn encode_ppm(image: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.data());
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let header = parse_header(bytes, b"P6")?;
    let data = payload(bytes, &header, 3)?;
    Image::new(header.height, header.width, data.to_vec())
}

pub fn write_mask(path: impl AsRef<Path>, mask: &SegMask) -> Result<()> {
    fs::write(path, encode_pgm(mask))?;
    Ok(())
}

pub fn read_mask(path: impl AsRef<Path>, classes: &ClassTable) -> Result<SegMask> {
    decode_pgm(&fs::read(path)?, classes)
}

pub fn write_image(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    fs::write(path, encode_ppm(image))?;
    Ok(())
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    decode_ppm(&fs::read(path)?)
}
