//! Register-level model of the 16-channel, 12-bit PWM controller.

use std::fmt;

use super::HalError;

pub const CHANNEL_COUNT: usize = 16;
pub const OSCILLATOR_HZ: f64 = 25_000_000.0;
pub const COUNTER_STEPS: f64 = 4096.0;

pub const MODE1: u8 = 0x00;
pub const LED0_ON_L: u8 = 0x06;
pub const PRESCALE: u8 = 0xFE;

pub const MODE1_SLEEP: u8 = 0x10;
pub const MODE1_AUTO_INCREMENT: u8 = 0x20;

const POWER_ON_MODE1: u8 = MODE1_SLEEP;
const POWER_ON_PRESCALE: u8 = 0x1E;

/// Prescale byte for a PWM refresh rate.
pub fn compute_prescale(update_rate_hz: f64) -> Result<u8, HalError> {
    if !(update_rate_hz > 0.0) {
        return Err(HalError::RateOutOfBand(update_rate_hz));
    }
    let value = (OSCILLATOR_HZ / (COUNTER_STEPS * update_rate_hz)).round() - 1.0;
    if (3.0..=255.0).contains(&value) {
        Ok(value as u8)
    } else {
        Err(HalError::RateOutOfBand(update_rate_hz))
    }
}

/// OFF count of a pulse at the nominal refresh period.
pub fn off_count(pulse_us: f64, update_rate_hz: f64) -> Result<u16, HalError> {
    let period = 1e6 / update_rate_hz;
    if !(0.0..=period).contains(&pulse_us) {
        return Err(HalError::PulseExceedsPeriod {
            pulse: pulse_us,
            period,
        });
    }
    Ok(((pulse_us / period * COUNTER_STEPS).round() as u16).min(4095))
}

/// One I2C write: register address followed by payload bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct I2cTransaction {
    pub addr: u8,
    pub bytes: Vec<u8>,
}

impl fmt::Display for I2cTransaction {
    /// `W <addr7> <reg> <byte...>`, two-digit upper-case hex.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "W {:02X}", self.addr)?;
        for b in &self.bytes {
            write!(f, " {b:02X}")?;
        }
        Ok(())
    }
}

/// Write transaction setting one channel: ON = 0, OFF = pulse counts,
/// little-endian 4-byte block starting at the channel's ON_L register.
pub fn set_channel_pulse(
    addr: u8,
    channel: usize,
    pulse_us: f64,
    update_rate_hz: f64,
) -> Result<I2cTransaction, HalError> {
    if channel >= CHANNEL_COUNT {
        return Err(HalError::ChannelOutOfRange(channel));
    }
    let off = off_count(pulse_us, update_rate_hz)?;
    let reg = LED0_ON_L + 4 * channel as u8;
    let [off_l, off_h] = off.to_le_bytes();
    Ok(I2cTransaction {
        addr,
        bytes: vec![reg, 0x00, 0x00, off_l, off_h],
    })
}

pub trait I2cBus {
    fn write(&mut self, addr: u8, bytes: &[u8]) -> Result<(), HalError>;
}

/// Emulated controller. Writes auto-increment from the addressed register;
/// every accepted transaction is appended to the log.
#[derive(Debug, Clone)]
pub struct Pca9685Emulator {
    addr: u8,
    regs: [u8; 256],
    log: Vec<I2cTransaction>,
}

impl Pca9685Emulator {
    pub fn new(addr: u8) -> Self {
        let mut regs = [0u8; 256];
        regs[MODE1 as usize] = POWER_ON_MODE1;
        regs[PRESCALE as usize] = POWER_ON_PRESCALE;
        Self {
            addr,
            regs,
            log: Vec::new(),
        }
    }

    pub fn registers(&self) -> &[u8; 256] {
        &self.regs
    }

    pub fn register(&self, reg: u8) -> u8 {
        self.regs[reg as usize]
    }

    pub fn sleeping(&self) -> bool {
        self.regs[MODE1 as usize] & MODE1_SLEEP != 0
    }

    pub fn prescale(&self) -> u8 {
        self.regs[PRESCALE as usize]
    }

    /// (ON, OFF) 12-bit counts of a channel.
    pub fn channel_counts(&self, channel: usize) -> (u16, u16) {
        let base = LED0_ON_L as usize + 4 * channel;
        let r = &self.regs[base..base + 4];
        (
            u16::from_le_bytes([r[0], r[1] & 0x0F]),
            u16::from_le_bytes([r[2], r[3] & 0x0F]),
        )
    }

    pub fn clear_log(&mut self) {
        self.log.clear();
    }

    pub fn log(&self) -> &[I2cTransaction] {
        &self.log
    }

    /// Transaction log, one `W ...` line per write.
    pub fn log_text(&self) -> String {
        self.log.iter().map(|t| format!("{t}\n")).collect()
    }
}

impl AsRef<Pca9685Emulator> for Pca9685Emulator {
    fn as_ref(&self) -> &Pca9685Emulator {
        self
    }
}

fn is_channel_high_byte(reg: usize) -> bool {
    let first = LED0_ON_L as usize;
    let last = first + 4 * CHANNEL_COUNT;
    (first..last).contains(&reg) && (reg - first) % 2 == 1
}

impl I2cBus for Pca9685Emulator {
    fn write(&mut self, addr: u8, bytes: &[u8]) -> Result<(), HalError> {
        if addr != self.addr {
            return Err(HalError::NoDevice(addr));
        }
        let (&start, payload) = bytes
            .split_first()
            .ok_or(HalError::Protocol("empty write"))?;
        if start as usize + payload.len() > self.regs.len() {
            return Err(HalError::Protocol("write runs past the register file"));
        }
        // Validate the whole transaction before touching any register.
        let mut sleeping = self.sleeping();
        for (i, &b) in payload.iter().enumerate() {
            let reg = start as usize + i;
            if reg == MODE1 as usize {
                sleeping = b & MODE1_SLEEP != 0;
            } else if reg == PRESCALE as usize && !sleeping {
                return Err(HalError::Protocol("PRESCALE written while awake"));
            }
        }
        for (i, &b) in payload.iter().enumerate() {
            let reg = start as usize + i;
            self.regs[reg] = if is_channel_high_byte(reg) { b & 0x0F } else { b };
        }
        self.log.push(I2cTransaction {
            addr,
            bytes: bytes.to_vec(),
        });
        Ok(())
    }
}

/// Minimal driver: sleep, set prescale, wake with auto-increment, then
/// per-channel pulse writes.
#[derive(Debug)]
pub struct Pca9685Driver<B: I2cBus> {
    bus: B,
    addr: u8,
    update_rate_hz: f64,
}

impl<B: I2cBus> Pca9685Driver<B> {
    pub fn new(bus: B, addr: u8, update_rate_hz: f64) -> Self {
        Self {
            bus,
            addr,
            update_rate_hz,
        }
    }

    pub fn init(&mut self) -> Result<(), HalError> {
        let prescale = compute_prescale(self.update_rate_hz)?;
        self.bus.write(self.addr, &[MODE1, MODE1_SLEEP | MODE1_AUTO_INCREMENT])?;
        self.bus.write(self.addr, &[PRESCALE, prescale])?;
        self.bus.write(self.addr, &[MODE1, MODE1_AUTO_INCREMENT])
    }

    pub fn set_pulse(&mut self, channel: usize, pulse_us: f64) -> Result<(), HalError> {
        let t = set_channel_pulse(self.addr, channel, pulse_us, self.update_rate_hz)?;
        self.bus.write(t.addr, &t.bytes)
    }

    pub fn bus(&self) -> &B {
        &self.bus
    }

    pub fn bus_mut(&mut self) -> &mut B {
        &mut self.bus
    }

    pub fn into_bus(self) -> B {
        self.bus
    }
}
