//! Fixed 68-byte insole packet and its length-prefixed stream framing.
//!
//! Layout (big-endian):
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 2    | magic `0x5349` ("SI")         |
//! | 2      | 1    | version (1)                   |
//! | 3      | 1    | foot (0 = left, 1 = right)    |
//! | 4      | 4    | seq                           |
//! | 8      | 8    | t_ms                          |
//! | 16     | 32   | 16 × u16 pressure ADC counts  |
//! | 48     | 18   | 9 × i16 accel, gyro, mag      |
//! | 66     | 2    | CRC-16/CCITT-FALSE of 0..66   |

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::model::{FootSide, SensorFrame, FULL_SCALE_KPA, SENSOR_COUNT};

pub const PACKET_LEN: usize = 68;
pub const MAGIC: u16 = 0x5349;
pub const VERSION: u8 = 1;

const STANDARD_GRAVITY: f64 = 9.80665;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("bad length: expected {PACKET_LEN} bytes, got {0}")]
    BadLength(usize),
    #[error("crc mismatch: packet carries {carried:#06x}, computed {computed:#06x}")]
    CrcMismatch { carried: u16, computed: u16 },
    #[error("bad magic {0:#06x}")]
    BadMagic(u16),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("bad foot byte {0}")]
    BadFoot(u8),
}

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor.
pub fn crc16_ccitt_false(data: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &byte in data {
        crc ^= u16::from(byte) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 { (crc << 1) ^ 0x1021 } else { crc << 1 };
        }
    }
    crc
}

/// Conversion factors from ADC counts to physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireScales {
    pub pressure_kpa: f64,
    pub accel_ms2: f64,
    pub gyro_dps: f64,
    pub mag_ut: f64,
}

impl Default for WireScales {
    fn default() -> Self {
        WireScales {
            pressure_kpa: FULL_SCALE_KPA / 65535.0,
            accel_ms2: 16.0 * STANDARD_GRAVITY / 32768.0,
            gyro_dps: 2000.0 / 32768.0,
            mag_ut: 100.0 / 32768.0,
        }
    }
}

fn to_u16_counts(value: f64, scale: f64) -> u16 {
    // `as` saturates and maps NaN to 0.
    (value / scale).round().clamp(0.0, 65535.0) as u16
}

fn to_i16_counts(value: f64, scale: f64) -> i16 {
    (value / scale).round().clamp(-32768.0, 32767.0) as i16
}

/// Encodes a frame, quantizing each channel to the nearest ADC count.
pub fn serialize_with(frame: &SensorFrame, scales: &WireScales) -> [u8; PACKET_LEN] {
    let mut buf = [0u8; PACKET_LEN];
    buf[0..2].copy_from_slice(&MAGIC.to_be_bytes());
    buf[2] = VERSION;
    buf[3] = match frame.foot {
        FootSide::Left => 0,
        FootSide::Right => 1,
    };
    buf[4..8].copy_from_slice(&frame.seq.to_be_bytes());
    buf[8..16].copy_from_slice(&frame.t_ms.to_be_bytes());
    let mut off = 16;
    for &p in &frame.pressure {
        buf[off..off + 2].copy_from_slice(&to_u16_counts(p, scales.pressure_kpa).to_be_bytes());
        off += 2;
    }
    for (values, scale) in
        [(&frame.accel, scales.accel_ms2), (&frame.gyro, scales.gyro_dps), (&frame.mag, scales.mag_ut)]
    {
        for &v in values {
            buf[off..off + 2].copy_from_slice(&to_i16_counts(v, scale).to_be_bytes());
            off += 2;
        }
    }
    let crc = crc16_ccitt_false(&buf[..PACKET_LEN - 2]);
    buf[PACKET_LEN - 2..].copy_from_slice(&crc.to_be_bytes());
    buf
}

pub fn serialize(frame: &SensorFrame) -> [u8; PACKET_LEN] {
    serialize_with(frame, &WireScales::default())
}

/// Decodes one packet. Checks run in the order length, CRC, magic, version, foot, so any
/// corruption of a well-sized packet surfaces as a CRC failure first.
pub fn parse_packet_with(bytes: &[u8], scales: &WireScales) -> Result<SensorFrame, WireError> {
    if bytes.len() != PACKET_LEN {
        return Err(WireError::BadLength(bytes.len()));
    }
    let carried = u16::from_be_bytes([bytes[66], bytes[67]]);
    let computed = crc16_ccitt_false(&bytes[..PACKET_LEN - 2]);
    if carried != computed {
        return Err(WireError::CrcMismatch { carried, computed });
    }
    let magic = u16::from_be_bytes([bytes[0], bytes[1]]);
    if magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    if bytes[2] != VERSION {
        return Err(WireError::BadVersion(bytes[2]));
    }
    let foot = match bytes[3] {
        0 => FootSide::Left,
        1 => FootSide::Right,
        other => return Err(WireError::BadFoot(other)),
    };
    let seq = u32::from_be_bytes(bytes[4..8].try_into().expect("4-byte slice"));
    let t_ms = u64::from_be_bytes(bytes[8..16].try_into().expect("8-byte slice"));

    let word = |i: usize| [bytes[16 + 2 * i], bytes[17 + 2 * i]];
    let mut pressure = [0.0; SENSOR_COUNT];
    for (i, p) in pressure.iter_mut().enumerate() {
        *p = f64::from(u16::from_be_bytes(word(i))) * scales.pressure_kpa;
    }
    let signed = |i: usize, scale: f64| f64::from(i16::from_be_bytes(word(i))) * scale;
    let triple = |first: usize, scale: f64| [signed(first, scale), signed(first + 1, scale), signed(first + 2, scale)];
    Ok(SensorFrame {
        foot,
        seq,
        t_ms,
        pressure,
        accel: triple(16, scales.accel_ms2),
        gyro: triple(19, scales.gyro_dps),
        mag: triple(22, scales.mag_ut),
    })
}

pub fn parse_packet(bytes: &[u8]) -> Result<SensorFrame, WireError> {
    parse_packet_with(bytes, &WireScales::default())
}

/// Writes `[u16 BE length][payload]`.
pub fn write_framed<W: Write>(w: &mut W, payload: &[u8]) -> io::Result<()> {
    let len = u16::try_from(payload.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame longer than 65535 bytes"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(payload)
}

/// Reads one length-prefixed message; `Ok(None)` on clean end of stream.
pub fn read_framed<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 2];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let mut payload = vec![0u8; usize::from(u16::from_be_bytes(len))];
    r.read_exact(&mut payload)?;
    Ok(Some(payload))
}

/// Incremental splitter for length-prefixed messages arriving in arbitrary chunks.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn next_message(&mut self) -> Option<Vec<u8>> {
        if self.buf.len() < 2 {
            return None;
        }
        let len = usize::from(u16::from_be_bytes([self.buf[0], self.buf[1]]));
        if self.buf.len() < 2 + len {
            return None;
        }
        let msg = self.buf[2..2 + len].to_vec();
        self.buf.drain(..2 + len);
        Some(msg)
    }

    pub fn pending(&self) -> usize {
        self.buf.len()
    }
}
