//! Record framing and the 7-byte recovery header.
//!
//! Every shaped record on the wire is a fixed header followed by exactly
//! `shaped_len` payload bytes:
//!
//! ```text
//! offset
//!    0  flags     bit0 = Data (1) / Cover (0)
//!               bit1 = more_fragments
//!               bit2 = stream_end
//!               bits 3-7 reserved, must be zero
//!    1  ┐ shaped_len (u16, big-endian), >= 1
//!    2  ┘
//!    3  ┐ real_len (u16, big-endian), <= shaped_len
//!    4  ┘
//!    5  ┐ seq (u16, big-endian, wrapping)
//!    6  ┘
//! ------
//!    payload (shaped_len bytes): real_len application bytes, then random fill
//! ```
//!
//! The observable size of a record is therefore `shaped_len + 7` and depends
//! only on the sampled size, never on how much of the payload is real.

use std::io::{self, Read};

use thiserror::Error;

/// Size of the encoded recovery header in bytes.
pub const HEADER_LEN: usize = 7;

const FLAG_DATA: u8 = 0b0000_0001;
const FLAG_MORE: u8 = 0b0000_0010;
const FLAG_END: u8 = 0b0000_0100;
const FLAG_RESERVED: u8 = !(FLAG_DATA | FLAG_MORE | FLAG_END);

#[derive(Debug, Error)]
pub enum WireError {
    #[error("malformed header: {0}")]
    MalformedHeader(&'static str),
    #[error("header invariant violated: {0}")]
    InvalidHeader(&'static str),
    #[error("payload length {actual} does not match shaped_len {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("stream truncated after {read} of {wanted} bytes")]
    Truncated { read: usize, wanted: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordType {
    Cover,
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RecoveryHeader {
    pub record_type: RecordType,
    pub more_fragments: bool,
    pub stream_end: bool,
    pub shaped_len: u16,
    pub real_len: u16,
    pub seq: u16,
}

impl RecoveryHeader {
    pub fn cover(shaped_len: u16, seq: u16) -> Self {
        Self {
            record_type: RecordType::Cover,
            more_fragments: false,
            stream_end: false,
            shaped_len,
            real_len: 0,
            seq,
        }
    }

    pub fn data(shaped_len: u16, real_len: u16, more_fragments: bool, seq: u16) -> Self {
        Self {
            record_type: RecordType::Data,
            more_fragments,
            stream_end: false,
            shaped_len,
            real_len,
            seq,
        }
    }

    /// The clean-shutdown marker: a Data record with no real bytes.
    pub fn stream_end(shaped_len: u16, seq: u16) -> Self {
        Self {
            record_type: RecordType::Data,
            more_fragments: false,
            stream_end: true,
            shaped_len,
            real_len: 0,
            seq,
        }
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if self.shaped_len == 0 {
            return Err("shaped_len must be at least 1");
        }
        if self.real_len > self.shaped_len {
            return Err("real_len exceeds shaped_len");
        }
        if self.record_type == RecordType::Cover {
            if self.real_len != 0 {
                return Err("cover record with nonzero real_len");
            }
            if self.more_fragments {
                return Err("cover record with more_fragments set");
            }
            if self.stream_end {
                return Err("cover record with stream_end set");
            }
        }
        if self.stream_end && (self.real_len != 0 || self.more_fragments) {
            return Err("stream_end record must carry no data");
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<[u8; HEADER_LEN], WireError> {
        self.validate().map_err(WireError::InvalidHeader)?;
        let mut flags = 0u8;
        if self.record_type == RecordType::Data {
            flags |= FLAG_DATA;
        }
        if self.more_fragments {
            flags |= FLAG_MORE;
        }
        if self.stream_end {
            flags |= FLAG_END;
        }
        let mut out = [0u8; HEADER_LEN];
        out[0] = flags;
        out[1..3].copy_from_slice(&self.shaped_len.to_be_bytes());
        out[3..5].copy_from_slice(&self.real_len.to_be_bytes());
        out[5..7].copy_from_slice(&self.seq.to_be_bytes());
        Ok(out)
    }

    /// Decodes the first [`HEADER_LEN`] bytes of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() < HEADER_LEN {
            return Err(WireError::Truncated {
                read: bytes.len(),
                wanted: HEADER_LEN,
            });
        }
        let flags = bytes[0];
        if flags & FLAG_RESERVED != 0 {
            return Err(WireError::MalformedHeader("reserved flag bits set"));
        }
        let header = Self {
            record_type: if flags & FLAG_DATA != 0 {
                RecordType::Data
            } else {
                RecordType::Cover
            },
            more_fragments: flags & FLAG_MORE != 0,
            stream_end: flags & FLAG_END != 0,
            shaped_len: u16::from_be_bytes([bytes[1], bytes[2]]),
            real_len: u16::from_be_bytes([bytes[3], bytes[4]]),
            seq: u16::from_be_bytes([bytes[5], bytes[6]]),
        };
        header.validate().map_err(WireError::MalformedHeader)?;
        Ok(header)
    }
}

pub fn encode_header(h: &RecoveryHeader) -> Result<[u8; HEADER_LEN], WireError> {
    h.encode()
}

pub fn decode_header(b: &[u8]) -> Result<RecoveryHeader, WireError> {
    RecoveryHeader::decode(b)
}

/// One on-wire unit: header plus exactly `shaped_len` payload bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapedRecord {
    header: RecoveryHeader,
    payload: Vec<u8>,
}

impl ShapedRecord {
    pub fn new(header: RecoveryHeader, payload: Vec<u8>) -> Result<Self, WireError> {
        header.validate().map_err(WireError::InvalidHeader)?;
        if payload.len() != usize::from(header.shaped_len) {
            return Err(WireError::PayloadLength {
                expected: usize::from(header.shaped_len),
                actual: payload.len(),
            });
        }
        Ok(Self { header, payload })
    }

    pub fn header(&self) -> &RecoveryHeader {
        &self.header
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// The application bytes carried by this record.
    pub fn real_bytes(&self) -> &[u8] {
        &self.payload[..usize::from(self.header.real_len)]
    }

    pub fn is_cover(&self) -> bool {
        self.header.record_type == RecordType::Cover
    }

    pub fn is_stream_end(&self) -> bool {
        self.header.stream_end
    }

    /// Total bytes this record occupies on the wire.
    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    /// Appends header and payload to `out` as one contiguous frame.
    pub fn write_to(&self, out: &mut Vec<u8>) {
        // `new` validated the header, so encoding cannot fail.
        let header = self.header.encode().expect("validated header");
        out.reserve(self.wire_len());
        out.extend_from_slice(&header);
        out.extend_from_slice(&self.payload);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        self.write_to(&mut out);
        out
    }
}

/// Reads up to `buf.len()` bytes, returning how many were read before EOF.
fn read_full<R: Read + ?Sized>(src: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match src.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Reads the next record from a byte stream positioned at a record boundary.
///
/// Returns `Ok(None)` only when the source is exhausted before any byte of a
/// new record was read. A malformed header is fatal for the connection:
/// framing cannot resynchronize.
pub fn read_record<R: Read + ?Sized>(src: &mut R) -> Result<Option<ShapedRecord>, WireError> {
    let mut header_buf = [0u8; HEADER_LEN];
    let n = read_full(src, &mut header_buf)?;
    if n == 0 {
        return Ok(None);
    }
    if n < HEADER_LEN {
        return Err(WireError::Truncated {
            read: n,
            wanted: HEADER_LEN,
        });
    }
    let header = RecoveryHeader::decode(&header_buf)?;
    let mut payload = vec![0u8; usize::from(header.shaped_len)];
    let n = read_full(src, &mut payload)?;
    if n < payload.len() {
        return Err(WireError::Truncated {
            read: HEADER_LEN + n,
            wanted: HEADER_LEN + payload.len(),
        });
    }
    Ok(Some(ShapedRecord { header, payload }))
}
