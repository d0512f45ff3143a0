use proptest::prelude::*;
use quadstack::config::ServoSpec;
use quadstack::hal::{
    angle_to_pulse, compute_prescale, off_count, pulse_from_off_count, pulse_to_angle, set_channel_pulse, I2cBus,
    Pca9685Driver, Pca9685Emulator, CHANNEL_COUNT,
};

const ADDR: u8 = 0x40;

fn spec(rate: f64) -> ServoSpec {
    ServoSpec {
        nominal_torque_ncm: 18.0,
        angular_range_deg: 180.0,
        pulse_min_us: 500.0,
        pulse_max_us: 2500.0,
        servo_current_ma: 400.0,
        slew_rate_dps: 300.0,
        update_rate_hz: rate,
        i2c_address: ADDR,
    }
}

/// Datasheet: prescale = round(osc / (4096 · rate)) - 1.
fn prescale_oracle(rate: f64) -> u8 {
    (25_000_000.0f64 / (4096.0 * rate)).round() as u8 - 1
}

#[test]
fn datasheet_values() {
    assert_eq!(compute_prescale(50.0).unwrap(), 121);
    assert_eq!(prescale_oracle(50.0), 121);
    assert_eq!(off_count(1500.0, 50.0).unwrap(), 307);
    assert_eq!((1500.0f64 / 20_000.0 * 4096.0).round() as u16, 307);
}

#[test]
fn prescale_needs_sleep() {
    let mut dev = Pca9685Emulator::new(ADDR);
    // Wake, then try to change the prescale.
    dev.write(ADDR, &[0x00, 0x20]).unwrap();
    assert!(dev.write(ADDR, &[0xFE, 0x79]).is_err());
    assert_eq!(dev.prescale(), 0x1E);
    dev.write(ADDR, &[0x00, 0x30]).unwrap();
    dev.write(ADDR, &[0xFE, 0x79]).unwrap();
    assert_eq!(dev.prescale(), 0x79);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn prescale_matches_oracle_and_is_monotone(rate in 24.0..1500.0f64, bump in 0.0..100.0f64) {
        let p = compute_prescale(rate).unwrap();
        prop_assert_eq!(p, prescale_oracle(rate));
        if let Ok(q) = compute_prescale(rate + bump) {
            prop_assert!(q <= p);
        }
    }

    #[test]
    fn channel_writes_are_isolated(ch in 0usize..CHANNEL_COUNT, pulse in 500.0..2500.0f64, seed_pulses in prop::collection::vec(500.0..2500.0f64, CHANNEL_COUNT)) {
        let mut driver = Pca9685Driver::new(Pca9685Emulator::new(ADDR), ADDR, 50.0);
        driver.init().unwrap();
        for (i, p) in seed_pulses.iter().enumerate() {
            driver.set_pulse(i, *p).unwrap();
        }
        let before: Vec<_> = (0..CHANNEL_COUNT).map(|i| driver.bus().channel_counts(i)).collect();
        let tx = set_channel_pulse(ADDR, ch, pulse, 50.0).unwrap();
        driver.bus_mut().write(tx.addr, &tx.bytes).unwrap();
        for i in 0..CHANNEL_COUNT {
            let now = driver.bus().channel_counts(i);
            if i == ch {
                prop_assert_eq!(now, (0, off_count(pulse, 50.0).unwrap()));
            } else {
                prop_assert_eq!(now, before[i]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn angle_round_trip_within_one_count(angle in 0.0..=180.0f64, rate in 24.0..200.0f64) {
        let s = spec(rate);
        let pulse = angle_to_pulse(&s, angle).unwrap();
        let off = off_count(pulse, rate).unwrap();
        let back = pulse_to_angle(&s, pulse_from_off_count(off, rate));
        // Half a count of the 4096-step period, in degrees.
        let count_us = 1e6 / rate / 4096.0;
        let bound = 0.5 * count_us * s.angular_range_deg / (s.pulse_max_us - s.pulse_min_us);
        prop_assert!((back - angle).abs() <= bound + 1e-9, "angle {} back {} bound {}", angle, back, bound);
    }
}
