//! Byte-exact readers and writers for the three artifact formats.
//!
//! * BPR float raster: `"BPR1"`, height `u32` LE, width `u32` LE, then
//!   `height·width` binary32 LE values row-major. Nothing else.
//! * Mask: binary PGM (`P5`, maxval 255), 255 = foreground, 0 = background.
//! * Color image: binary PPM (`P6`, maxval 255).
//!
//! Writers emit the minimal netpbm header `P5\n<w> <h>\n255\n`; readers accept
//! any whitespace layout and `#` comments in the header.

use std::fs;
use std::path::Path;

use crate::error::FormatError;
use crate::raster::{BinaryMask, FloatRaster, Grid, RgbImage};

pub const BPR_MAGIC: &[u8; 4] = b"BPR1";
pub const BPR_HEADER_LEN: usize = 12;

/// Declared on-disk format, including how BPR values are validated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RasterFormat {
    Ppm,
    PgmMask,
    /// BPR whose values must lie in `[0, 1]`.
    BprProbability,
    /// BPR whose values must be finite.
    BprLogit,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AnyRaster {
    Rgb(RgbImage),
    Mask(BinaryMask),
    Probability(FloatRaster),
    Logit(FloatRaster),
}

impl AnyRaster {
    pub fn format(&self) -> RasterFormat {
        match self {
            AnyRaster::Rgb(_) => RasterFormat::Ppm,
            AnyRaster::Mask(_) => RasterFormat::PgmMask,
            AnyRaster::Probability(_) => RasterFormat::BprProbability,
            AnyRaster::Logit(_) => RasterFormat::BprLogit,
        }
    }
}

pub fn load_raster(path: &Path, format: RasterFormat) -> Result<AnyRaster, FormatError> {
    let bytes = read_file(path)?;
    Ok(match format {
        RasterFormat::Ppm => AnyRaster::Rgb(decode_ppm(&bytes)?),
        RasterFormat::PgmMask => AnyRaster::Mask(decode_pgm_mask(&bytes)?),
        RasterFormat::BprProbability => {
            let r = decode_bpr(&bytes)?;
            r.check_probability()?;
            AnyRaster::Probability(r)
        }
        RasterFormat::BprLogit => {
            let r = decode_bpr(&bytes)?;
            r.check_finite()?;
            AnyRaster::Logit(r)
        }
    })
}

pub fn store_raster(raster: &AnyRaster, path: &Path) -> Result<(), FormatError> {
    let bytes = match raster {
        AnyRaster::Rgb(img) => encode_ppm(img),
        AnyRaster::Mask(mask) => encode_pgm_mask(mask),
        AnyRaster::Probability(r) => {
            r.check_probability()?;
            encode_bpr(r)
        }
        AnyRaster::Logit(r) => {
            r.check_finite()?;
            encode_bpr(r)
        }
    };
    write_file(path, &bytes)
}

pub fn read_probability(path: &Path) -> Result<FloatRaster, FormatError> {
    match load_raster(path, RasterFormat::BprProbability)? {
        AnyRaster::Probability(r) => Ok(r),
        _ => unreachable!(),
    }
}

pub fn read_logits(path: &Path) -> Result<FloatRaster, FormatError> {
    match load_raster(path, RasterFormat::BprLogit)? {
        AnyRaster::Logit(r) => Ok(r),
        _ => unreachable!(),
    }
}

pub fn read_mask(path: &Path) -> Result<BinaryMask, FormatError> {
    decode_pgm_mask(&read_file(path)?)
}

pub fn read_rgb(path: &Path) -> Result<RgbImage, FormatError> {
    decode_ppm(&read_file(path)?)
}

pub fn write_probability(raster: &FloatRaster, path: &Path) -> Result<(), FormatError> {
    raster.check_probability()?;
    write_file(path, &encode_bpr(raster))
}

pub fn write_mask(mask: &BinaryMask, path: &Path) -> Result<(), FormatError> {
    write_file(path, &encode_pgm_mask(mask))
}

pub fn write_rgb(img: &RgbImage, path: &Path) -> Result<(), FormatError> {
    write_file(path, &encode_ppm(img))
}

fn read_file(path: &Path) -> Result<Vec<u8>, FormatError> {
    fs::read(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    fs::write(path, bytes).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn encode_bpr(raster: &FloatRaster) -> Vec<u8> {
    let mut out = Vec::with_capacity(BPR_HEADER_LEN + 4 * raster.len());
    out.extend_from_slice(BPR_MAGIC);
    out.extend_from_slice(&(raster.height() as u32).to_le_bytes());
    out.extend_from_slice(&(raster.width() as u32).to_le_bytes());
    for v in raster.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_bpr(bytes: &[u8]) -> Result<FloatRaster, FormatError> {
    if bytes.len() < BPR_HEADER_LEN {
        if !BPR_MAGIC.starts_with(&bytes[..bytes.len().min(4)]) {
            return Err(FormatError::BadMagic {
                expected: "BPR1",
                found: bytes[..bytes.len().min(4)].to_vec(),
            });
        }
        return Err(FormatError::Truncated {
            what: "BPR header",
            needed: BPR_HEADER_LEN,
            available: bytes.len(),
        });
    }
    if &bytes[..4] != BPR_MAGIC {
        return Err(FormatError::BadMagic {
            expected: "BPR1",
            found: bytes[..4].to_vec(),
        });
    }
    let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as u64;
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as u64;
    let payload_len = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| usize::try_from(n).ok())
        .filter(|n| n.checked_add(BPR_HEADER_LEN).is_some())
        .ok_or(FormatError::DimensionOverflow { height, width })?;
    let payload = &bytes[BPR_HEADER_LEN..];
    if payload.len() < payload_len {
        return Err(FormatError::Truncated {
            what: "BPR payload",
            needed: payload_len,
            available: payload.len(),
        });
    }
    if payload.len() > payload_len {
        return Err(FormatError::TrailingBytes(payload.len() - payload_len));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Grid::from_vec(height as usize, width as usize, values)?)
}

pub fn encode_pgm_mask(mask: &BinaryMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.as_slice().iter().map(|&v| if v { 255u8 } else { 0 }));
    out
}

pub fn decode_pgm_mask(bytes: &[u8]) -> Result<BinaryMask, FormatError> {
    let (height, width, offset) = parse_netpbm_header(bytes, b"P5")?;
    let pixels = netpbm_payload(bytes, offset, height, width, 1)?;
    let values = pixels
        .iter()
        .enumerate()
        .map(|(index, &value)| match value {
            255 => Ok(true),
            0 => Ok(false),
            _ => Err(FormatError::NonBinaryMaskValue { index, value }),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Grid::from_vec(height, width, values)?)
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    for px in img.as_slice() {
        out.extend_from_slice(px);
    }
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage, FormatError> {
    let (height, width, offset) = parse_netpbm_header(bytes, b"P6")?;
    let pixels = netpbm_payload(bytes, offset, height, width, 3)?;
    let values = pixels.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok(Grid::from_vec(height, width, values)?)
}

fn netpbm_payload(
    bytes: &[u8],
    offset: usize,
    height: usize,
    width: usize,
    channels: usize,
) -> Result<&[u8], FormatError> {
    let needed =
        height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(channels))
            .ok_or(FormatError::DimensionOverflow {
                height: height as u64,
                width: width as u64,
            })?;
    let payload = &bytes[offset..];
    if payload.len() < needed {
        return Err(FormatError::Truncated {
            what: "netpbm payload",
            needed,
            available: payload.len(),
        });
    }
    if payload.len() > needed {
        return Err(FormatError::TrailingBytes(payload.len() - needed));
    }
    Ok(payload)
}

/// Returns `(height, width, payload offset)`.
fn parse_netpbm_header(bytes: &[u8], magic: &'static [u8; 2]) -> Result<(usize, usize, usize), FormatError> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(FormatError::BadMagic {
            expected: if magic == b"P5" { "P5" } else { "P6" },
            found: bytes[..bytes.len().min(2)].to_vec(),
        });
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in fields.iter_mut() {
        // At least one whitespace byte separates header tokens.
        let start = pos;
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while let Some(&c) = bytes.get(pos) {
                        pos += 1;
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        if pos >= bytes.len() {
            return Err(FormatError::Truncated {
                what: "netpbm header",
                needed: pos + 1,
                available: bytes.len(),
            });
        }
        if pos == start {
            return Err(FormatError::BadHeader("missing whitespace between fields".into()));
        }
        let digits_start = pos;
        while bytes.get(pos).is_some_and(|c| c.is_ascii_digit()) {
            pos += 1;
        }
        if pos == digits_start {
            return match bytes.get(pos) {
                None => Err(FormatError::Truncated {
                    what: "netpbm header",
                    needed: pos + 1,
                    available: bytes.len(),
                }),
                Some(&c) => Err(FormatError::BadHeader(format!(
                    "expected a decimal number, found byte 0x{c:02x}"
                ))),
            };
        }
        let text = std::str::from_utf8(&bytes[digits_start..pos]).unwrap();
        *field = text
            .parse()
            .map_err(|_| FormatError::BadHeader(format!("number {text} too large")))?;
    }
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        Some(_) => return Err(FormatError::BadHeader("maxval must be followed by whitespace".into())),
        None => {
            return Err(FormatError::Truncated {
                what: "netpbm header",
                needed: pos + 1,
                available: bytes.len(),
            })
        }
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(FormatError::UnsupportedMaxval(maxval.min(u32::MAX as u64) as u32));
    }
    let h = usize::try_from(height).map_err(|_| FormatError::DimensionOverflow { height, width })?;
    let w = usize::try_from(width).map_err(|_| FormatError::DimensionOverflow { height, width })?;
    if h == 0 || w == 0 {
        return Err(FormatError::BadHeader(format!("zero dimension {width}x{height}")));
    }
    Ok((h, w, pos))
}
