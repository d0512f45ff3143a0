use proptest::prelude::*;
use quadstack::feasibility::{
    autonomy_minutes, foot_reaction, max_body_weight, peak_power, BatteryPack, PowerBudget, TorqueArms,
    TorqueScenario,
};

fn scenario() -> impl Strategy<Value = TorqueScenario> {
    (
        (1.0..50.0f64, 1.0..50.0f64),
        (0.0..80.0f64, 0.0..80.0f64),
        (0.5..30.0f64, 0.0..10.0f64, 0.0..10.0f64, 0.0..10.0f64),
        9.0..10.5f64,
    )
        .prop_map(|((gamma2, gamma3), (w2, w3), (d1, d2, d3, d4), g)| TorqueScenario {
            gamma2,
            gamma3,
            w2,
            w3,
            arms: TorqueArms {
                d1_cm: d1,
                d2_cm: d2,
                d3_cm: d3,
                d4_cm: d4,
            },
            g,
        })
}

fn budget(servos: u32) -> PowerBudget {
    PowerBudget {
        rail_voltage_v: 5.1,
        controller_peak_current_a: 0.6,
        servo_current_a: 0.4,
        servo_count: servos,
        converter_count: 2,
        converter_max_power_w: 15.0,
    }
}

fn pack() -> BatteryPack {
    BatteryPack {
        cell_count_parallel: 2,
        cell_capacity_mah: 3300.0,
        average_voltage_v: 3.8,
        converter_efficiency: 0.72,
    }
}

#[test]
fn hand_arithmetic() {
    // 600 g body over four feet plus a 30 g and a 20 g link.
    assert_eq!(foot_reaction(600.0, 30.0, 20.0), 200.0);
    assert_eq!(foot_reaction(0.0, 0.0, 0.0), 0.0);
    // Massless legs, d1 = 15.3, d2 = 4.7: BW = 4·(36 N·cm / g)·1000 / 20.
    let s = TorqueScenario {
        gamma2: 18.0,
        gamma3: 18.0,
        w2: 0.0,
        w3: 0.0,
        arms: TorqueArms::default(),
        g: 9.81,
    };
    let expected = 4.0 * (36.0 / 9.81 * 1000.0) / 20.0;
    let bw = max_body_weight(&s).unwrap();
    assert!((bw - expected).abs() < 1e-9);
    assert!((bw - 733.9).abs() < 0.1);
}

#[test]
fn peak_power_and_autonomy_examples() {
    let twelve = PowerBudget {
        servo_current_a: 0.4,
        ..budget(12)
    };
    let p = peak_power(&twelve);
    assert!((p.watts - 27.54).abs() < 1e-9);
    assert!(p.headroom);
    let minutes = autonomy_minutes(&pack(), 30.0).unwrap();
    assert!((minutes - 36.0).abs() < 0.5, "{minutes}");
    assert!(autonomy_minutes(&pack(), 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn max_weight_closes_the_equilibrium(s in scenario()) {
        let bw = max_body_weight(&s).unwrap();
        let lhs = s.equilibrium_lhs();
        let rhs = s.equilibrium_rhs(bw);
        prop_assert!(((rhs - lhs) / lhs).abs() <= 1e-9, "lhs {} rhs {}", lhs, rhs);
    }

    #[test]
    fn peak_power_is_affine_in_servo_count(n in 0u32..32) {
        let step = peak_power(&budget(n + 1)).watts - peak_power(&budget(n)).watts;
        prop_assert!((step - 5.1 * 0.4).abs() < 1e-9);
        let base = peak_power(&budget(0)).watts;
        prop_assert!((peak_power(&budget(n)).watts - base - n as f64 * 5.1 * 0.4).abs() < 1e-9);
    }

    #[test]
    fn autonomy_times_load_is_constant(load in 0.1..100.0f64, other in 0.1..100.0f64) {
        let a = autonomy_minutes(&pack(), load).unwrap() * load;
        let b = autonomy_minutes(&pack(), other).unwrap() * other;
        prop_assert!((a - b).abs() <= 1e-9 * a);
    }
}
