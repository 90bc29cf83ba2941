//! Binary frame messages sent from the server to viewers.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `NGFR` |
//! | 4 | 4 | frame id (u32) |
//! | 8 | 1 | eye (0 left, 1 right) |
//! | 9 | 2 | width (u16) |
//! | 11 | 2 | height (u16) |
//! | 13 | 1 | encoding (0 raw rgb8, 1 PNG) |
//! | 14 | 2 | reserved, zero |
//! | 16 | 8 | timestamp, ms since the Unix epoch (u64) |
//!
//! followed by the payload.

use ngp_core::render::{Eye, Image};

pub const FRAME_MAGIC: [u8; 4] = *b"NGFR";
pub const HEADER_LEN: usize = 24;
pub const MAX_PAYLOAD: usize = 64 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("message of {0} bytes is shorter than the {HEADER_LEN}-byte header")]
    Truncated(usize),
    #[error("unknown eye tag {0}")]
    BadEye(u8),
    #[error("unknown encoding tag {0}")]
    BadEncoding(u8),
    #[error("reserved header bytes must be zero, found {0:#06x}")]
    Reserved(u16),
    #[error("payload of {got} bytes, expected {expected}")]
    PayloadLength { expected: usize, got: usize },
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD}-byte limit")]
    Oversize(usize),
    #[error("{0}x{1} does not fit the 16-bit dimension fields")]
    Dimensions(u32, u32),
    #[error("png payload: {0}")]
    Png(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Encoding {
    RawRgb8,
    Png,
}

impl Encoding {
    pub fn tag(self) -> u8 {
        match self {
            Encoding::RawRgb8 => 0,
            Encoding::Png => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self, WireError> {
        match tag {
            0 => Ok(Encoding::RawRgb8),
            1 => Ok(Encoding::Png),
            t => Err(WireError::BadEncoding(t)),
        }
    }
}

pub fn eye_tag(eye: Eye) -> u8 {
    match eye {
        Eye::Left => 0,
        Eye::Right => 1,
    }
}

pub fn eye_from_tag(tag: u8) -> Result<Eye, WireError> {
    match tag {
        0 => Ok(Eye::Left),
        1 => Ok(Eye::Right),
        t => Err(WireError::BadEye(t)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub frame_id: u32,
    pub eye: Eye,
    pub width: u16,
    pub height: u16,
    pub encoding: Encoding,
    pub timestamp_ms: u64,
}

impl FrameHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&FRAME_MAGIC);
        b[4..8].copy_from_slice(&self.frame_id.to_le_bytes());
        b[8] = eye_tag(self.eye);
        b[9..11].copy_from_slice(&self.width.to_le_bytes());
        b[11..13].copy_from_slice(&self.height.to_le_bytes());
        b[13] = self.encoding.tag();
        b[16..24].copy_from_slice(&self.timestamp_ms.to_le_bytes());
        b
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() < HEADER_LEN {
            return Err(WireError::Truncated(bytes.len()));
        }
        let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
        if magic != FRAME_MAGIC {
            return Err(WireError::BadMagic(magic));
        }
        let reserved = u16::from_le_bytes([bytes[14], bytes[15]]);
        if reserved != 0 {
            return Err(WireError::Reserved(reserved));
        }
        Ok(Self {
            frame_id: u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")),
            eye: eye_from_tag(bytes[8])?,
            width: u16::from_le_bytes([bytes[9], bytes[10]]),
            height: u16::from_le_bytes([bytes[11], bytes[12]]),
            encoding: Encoding::from_tag(bytes[13])?,
            timestamp_ms: u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")),
        })
    }

    fn raw_len(&self) -> usize {
        self.width as usize * self.height as usize * 3
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMessage {
    pub header: FrameHeader,
    pub payload: Vec<u8>,
}

impl FrameMessage {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&self.header.to_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Pixel bytes, decoding PNG payloads.
    pub fn rgb8(&self) -> Result<Vec<u8>, WireError> {
        match self.header.encoding {
            Encoding::RawRgb8 => Ok(self.payload.clone()),
            Encoding::Png => {
                let img = Image::decode_png(&self.payload).map_err(|e| WireError::Png(e.to_string()))?;
                if img.width != self.header.width as u32 || img.height != self.header.height as u32 {
                    return Err(WireError::Png(format!(
                        "image is {}x{}, header says {}x{}",
                        img.width, img.height, self.header.width, self.header.height
                    )));
                }
                Ok(img.to_rgb8())
            }
        }
    }

    pub fn to_image(&self) -> Result<Image, WireError> {
        let rgb = self.rgb8()?;
        Image::from_rgb8(self.header.width as u32, self.header.height as u32, &rgb)
            .map_err(|e| WireError::Png(e.to_string()))
    }
}

/// Encodes 8-bit RGB pixels, rows top to bottom.
pub fn encode_rgb8(
    width: u32,
    height: u32,
    rgb: &[u8],
    frame_id: u32,
    eye: Eye,
    encoding: Encoding,
    timestamp_ms: u64,
) -> Result<FrameMessage, WireError> {
    let (Ok(w), Ok(h)) = (u16::try_from(width), u16::try_from(height)) else {
        return Err(WireError::Dimensions(width, height));
    };
    let header = FrameHeader {
        frame_id,
        eye,
        width: w,
        height: h,
        encoding,
        timestamp_ms,
    };
    if rgb.len() != header.raw_len() {
        return Err(WireError::PayloadLength {
            expected: header.raw_len(),
            got: rgb.len(),
        });
    }
    if encoding == Encoding::RawRgb8 && rgb.len() > MAX_PAYLOAD {
        return Err(WireError::Oversize(rgb.len()));
    }
    let payload = match encoding {
        Encoding::RawRgb8 => rgb.to_vec(),
        Encoding::Png => Image::from_rgb8(width, height, rgb)
            .and_then(|img| img.encode_png())
            .map_err(|e| WireError::Png(e.to_string()))?,
    };
    if payload.len() > MAX_PAYLOAD {
        return Err(WireError::Oversize(payload.len()));
    }
    Ok(FrameMessage { header, payload })
}

pub fn encode_frame(
    image: &Image,
    frame_id: u32,
    eye: Eye,
    encoding: Encoding,
    timestamp_ms: u64,
) -> Result<FrameMessage, WireError> {
    encode_rgb8(
        image.width,
        image.height,
        &image.to_rgb8(),
        frame_id,
        eye,
        encoding,
        timestamp_ms,
    )
}

pub fn decode_frame(bytes: &[u8]) -> Result<FrameMessage, WireError> {
    let header = FrameHeader::parse(bytes)?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() > MAX_PAYLOAD {
        return Err(WireError::Oversize(payload.len()));
    }
    if header.encoding == Encoding::RawRgb8 && payload.len() != header.raw_len() {
        return Err(WireError::PayloadLength {
            expected: header.raw_len(),
            got: payload.len(),
        });
    }
    Ok(FrameMessage {
        header,
        payload: payload.to_vec(),
    })
}
