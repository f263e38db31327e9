//! CAN-style link between the 1 kHz position loop and the 10 kHz current loop.
//!
//! Every payload is exactly 8 bytes, little-endian, protected by a
//! CRC-16/CCITT-FALSE. The byte layouts are documented in `protocol.md`.

use std::collections::VecDeque;

use thiserror::Error;

/// CAN identifier bases; the module id is added to them.
pub const COMMAND_CAN_BASE: u16 = 0x100;
pub const STATUS_A_CAN_BASE: u16 = 0x200;
pub const STATUS_B_CAN_BASE: u16 = 0x280;

/// Fixed-point scale of the status velocity (counts per millisecond).
pub const VELOCITY_SCALE: f64 = 256.0;

pub const FLAG_ENABLE: u8 = 0b01;
pub const FLAG_CLEAR_FAULT: u8 = 0b10;

pub type Payload = [u8; 8];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BusError {
    #[error("CRC mismatch: frame carries {carried:#06x}, computed {computed:#06x}")]
    CrcMismatch { carried: u16, computed: u16 },

    #[error("{field} = {value} does not fit the frame field")]
    RangeOverflow { field: &'static str, value: i64 },

    #[error("status halves disagree on sequence ({a} vs {b})")]
    SequenceMismatch { a: u16, b: u16 },
}

const CRC_POLY: u16 = 0x1021;

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor.
pub fn crc16_ccitt_false(data: &[u8]) -> u16 {
    crc16_update(0xFFFF, data)
}

fn crc16_update(mut crc: u16, data: &[u8]) -> u16 {
    for &byte in data {
        crc ^= (byte as u16) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ CRC_POLY
            } else {
                crc << 1
            };
        }
    }
    crc
}

fn seal(payload: &mut Payload, prefix: &[u8]) {
    let crc = crc16_update(crc16_update(0xFFFF, prefix), &payload[..6]);
    payload[6..8].copy_from_slice(&crc.to_le_bytes());
}

fn check(payload: &Payload, prefix: &[u8]) -> Result<(), BusError> {
    let computed = crc16_update(crc16_update(0xFFFF, prefix), &payload[..6]);
    let carried = u16::from_le_bytes([payload[6], payload[7]]);
    if carried == computed {
        Ok(())
    } else {
        Err(BusError::CrcMismatch { carried, computed })
    }
}

fn to_i16(field: &'static str, value: i64) -> Result<i16, BusError> {
    // symmetric range: -32768 is reserved
    if (-(i16::MAX as i64)..=i16::MAX as i64).contains(&value) {
        Ok(value as i16)
    } else {
        Err(BusError::RangeOverflow { field, value })
    }
}

/// Amperes to the milliampere fixed-point used on the wire.
pub fn amps_to_ma(amps: f64) -> i64 {
    (amps * 1000.0).round() as i64
}

pub fn ma_to_amps(ma: i64) -> f64 {
    ma as f64 / 1000.0
}

/// Current setpoint sent from the position loop to one module.
///
/// Layout: `[id:1][seq:2][mA:2][flags:1][crc:2]`, CRC over bytes 0..6.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommandFrame {
    pub module_id: u8,
    pub sequence: u16,
    /// Must fit a symmetric signed 16-bit range on encode.
    pub current_ma: i32,
    pub flags: u8,
}

impl CommandFrame {
    pub fn can_id(&self) -> u16 {
        COMMAND_CAN_BASE + self.module_id as u16
    }

    pub fn encode(&self) -> Result<Payload, BusError> {
        let ma = to_i16("current_setpoint", self.current_ma as i64)?;
        let mut p = [0u8; 8];
        p[0] = self.module_id;
        p[1..3].copy_from_slice(&self.sequence.to_le_bytes());
        p[3..5].copy_from_slice(&ma.to_le_bytes());
        p[5] = self.flags;
        seal(&mut p, &[]);
        Ok(p)
    }

    pub fn decode(payload: &Payload) -> Result<Self, BusError> {
        check(payload, &[])?;
        Ok(Self {
            module_id: payload[0],
            sequence: u16::from_le_bytes([payload[1], payload[2]]),
            current_ma: i16::from_le_bytes([payload[3], payload[4]]) as i32,
            flags: payload[5],
        })
    }

    pub fn current_amps(&self) -> f64 {
        ma_to_amps(self.current_ma as i64)
    }
}

/// Encoder position, velocity and current reported back by one module.
///
/// Sent as two payloads. The module id travels in the CAN identifier and is
/// folded into the CRC, so a payload addressed to another module fails the
/// check.
///
/// * A: `[seq:2][position:4][crc:2]`
/// * B: `[seq:2][velocity:2][mA:2][crc:2]`
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatusFrame {
    pub module_id: u8,
    pub sequence: u16,
    /// Encoder counts, must fit i32.
    pub position: i64,
    /// Counts per millisecond × 256.
    pub velocity_q8: i32,
    pub current_ma: i32,
}

impl StatusFrame {
    pub fn can_ids(&self) -> (u16, u16) {
        (
            STATUS_A_CAN_BASE + self.module_id as u16,
            STATUS_B_CAN_BASE + self.module_id as u16,
        )
    }

    pub fn encode(&self) -> Result<[Payload; 2], BusError> {
        let position = i32::try_from(self.position).map_err(|_| BusError::RangeOverflow {
            field: "position",
            value: self.position,
        })?;
        let velocity = to_i16("velocity", self.velocity_q8 as i64)?;
        let current = to_i16("current", self.current_ma as i64)?;
        let id = [self.module_id];

        let mut a = [0u8; 8];
        a[0..2].copy_from_slice(&self.sequence.to_le_bytes());
        a[2..6].copy_from_slice(&position.to_le_bytes());
        seal(&mut a, &id);

        let mut b = [0u8; 8];
        b[0..2].copy_from_slice(&self.sequence.to_le_bytes());
        b[2..4].copy_from_slice(&velocity.to_le_bytes());
        b[4..6].copy_from_slice(&current.to_le_bytes());
        seal(&mut b, &id);
        Ok([a, b])
    }

    pub fn decode(module_id: u8, payloads: &[Payload; 2]) -> Result<Self, BusError> {
        let [a, b] = payloads;
        check(a, &[module_id])?;
        check(b, &[module_id])?;
        let seq_a = u16::from_le_bytes([a[0], a[1]]);
        let seq_b = u16::from_le_bytes([b[0], b[1]]);
        if seq_a != seq_b {
            return Err(BusError::SequenceMismatch { a: seq_a, b: seq_b });
        }
        Ok(Self {
            module_id,
            sequence: seq_a,
            position: i32::from_le_bytes([a[2], a[3], a[4], a[5]]) as i64,
            velocity_q8: i16::from_le_bytes([b[2], b[3]]) as i32,
            current_ma: i16::from_le_bytes([b[4], b[5]]) as i32,
        })
    }

    /// Velocity in counts per second.
    pub fn velocity_counts_per_s(&self) -> f64 {
        self.velocity_q8 as f64 * 1000.0 / VELOCITY_SCALE
    }

    /// Fixed-point velocity for a value in counts per second, saturated to the
    /// field range.
    pub fn velocity_field(counts_per_s: f64) -> i32 {
        let q = (counts_per_s / 1000.0 * VELOCITY_SCALE).round();
        q.clamp(-(i16::MAX as f64), i16::MAX as f64) as i32
    }

    /// Milliampere field for a current, saturated to the field range.
    pub fn current_field(amps: f64) -> i32 {
        (amps * 1000.0)
            .round()
            .clamp(-(i16::MAX as f64), i16::MAX as f64) as i32
    }
}

/// In-order, lossless delivery with a fixed delay in high-level ticks.
#[derive(Debug, Clone)]
pub struct Transport<T> {
    latency: u64,
    queue: VecDeque<(u64, T)>,
}

impl<T> Transport<T> {
    pub fn new(latency_ticks: u64) -> Self {
        Self {
            latency: latency_ticks,
            queue: VecDeque::new(),
        }
    }

    pub fn latency(&self) -> u64 {
        self.latency
    }

    /// Queue an item produced at high-level tick `tick`.
    pub fn send(&mut self, tick: u64, item: T) {
        self.queue.push_back((tick + self.latency, item));
    }

    /// Next item due at or before `tick`, oldest first.
    pub fn poll(&mut self, tick: u64) -> Option<T> {
        match self.queue.front() {
            Some((due, _)) if *due <= tick => self.queue.pop_front().map(|(_, item)| item),
            _ => None,
        }
    }

    /// Most recent item due at `tick`, discarding older ones.
    pub fn latest(&mut self, tick: u64) -> Option<T> {
        let mut last = None;
        while let Some(item) = self.poll(tick) {
            last = Some(item);
        }
        last
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }
}
