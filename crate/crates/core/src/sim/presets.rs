use super::{Region, Scenario, SimError, TargetSpec};

const TRUTH_SIGMA_V: f64 = 0.2;

fn target(type_index: usize, birth: usize, death: Option<usize>, initial: [f64; 6]) -> TargetSpec {
    TargetSpec {
        type_index,
        birth_frame: birth,
        death_frame: death,
        initial,
    }
}

/// Three types (red team, white team, referee) crossing a 720x576 pitch.
fn football3() -> Scenario {
    Scenario {
        name: "football3".into(),
        n_types: 3,
        frame_count: 100,
        region: Region {
            width: 720.0,
            height: 576.0,
            w_min: 5.0,
            w_max: 100.0,
            h_min: 5.0,
            h_max: 100.0,
        },
        targets: vec![
            target(0, 0, None, [80.0, 120.0, 3.0, 1.0, 22.0, 50.0]),
            target(0, 0, None, [60.0, 300.0, 3.5, -0.5, 22.0, 50.0]),
            target(0, 0, None, [100.0, 450.0, 2.5, -1.5, 22.0, 50.0]),
            target(0, 20, None, [50.0, 220.0, 3.0, 0.8, 22.0, 50.0]),
            target(1, 0, None, [640.0, 140.0, -3.0, 0.8, 22.0, 50.0]),
            target(1, 0, None, [660.0, 320.0, -3.2, -0.6, 22.0, 50.0]),
            target(1, 0, Some(80), [620.0, 480.0, -2.8, -1.2, 22.0, 50.0]),
            target(1, 0, None, [600.0, 250.0, -2.0, 1.5, 22.0, 50.0]),
            target(2, 0, None, [360.0, 60.0, 0.5, 4.0, 24.0, 52.0]),
        ],
        sigma_v: vec![5.0; 3],
        truth_sigma_v: vec![TRUTH_SIGMA_V; 3],
        sigma_r: vec![vec![6.0; 3]; 3],
        p_d: vec![
            vec![0.93, 0.24, 0.5],
            vec![0.24, 0.99, 0.18],
            vec![0.19, 0.17, 0.99],
        ],
        clutter_rate: vec![10.0; 3],
        survival: vec![0.99; 3],
        seed: 1,
    }
}

/// Two types on a wide 1242x375 street scene.
fn urban2() -> Scenario {
    Scenario {
        name: "urban2".into(),
        n_types: 2,
        frame_count: 100,
        region: Region {
            width: 1242.0,
            height: 375.0,
            w_min: 10.0,
            w_max: 250.0,
            h_min: 10.0,
            h_max: 200.0,
        },
        targets: vec![
            target(0, 0, None, [100.0, 200.0, 4.0, 0.0, 80.0, 60.0]),
            target(0, 0, None, [1100.0, 230.0, -5.0, 0.2, 90.0, 65.0]),
            target(0, 30, None, [200.0, 260.0, 3.0, -0.3, 70.0, 55.0]),
            target(1, 0, None, [300.0, 250.0, 1.5, 0.2, 25.0, 60.0]),
            target(1, 0, None, [900.0, 240.0, -1.2, 0.1, 24.0, 58.0]),
            target(1, 0, Some(70), [600.0, 260.0, 0.5, -0.2, 22.0, 55.0]),
        ],
        sigma_v: vec![5.0, 6.0],
        truth_sigma_v: vec![TRUTH_SIGMA_V; 2],
        sigma_r: vec![vec![7.0; 2]; 2],
        p_d: vec![vec![0.83, 0.1], vec![0.3, 0.86]],
        clutter_rate: vec![10.0; 2],
        survival: vec![0.99; 2],
        seed: 1,
    }
}

/// One type, one target; the steady-state reference case.
fn single() -> Scenario {
    Scenario {
        name: "single".into(),
        n_types: 1,
        frame_count: 110,
        region: Region {
            width: 720.0,
            height: 576.0,
            w_min: 5.0,
            w_max: 100.0,
            h_min: 5.0,
            h_max: 100.0,
        },
        targets: vec![target(0, 0, None, [100.0, 200.0, 3.0, 1.5, 22.0, 48.0])],
        sigma_v: vec![5.0],
        truth_sigma_v: vec![TRUTH_SIGMA_V],
        sigma_r: vec![vec![6.0]],
        p_d: vec![vec![0.95]],
        clutter_rate: vec![10.0],
        survival: vec![0.99],
        seed: 1,
    }
}

pub fn preset_names() -> &'static [&'static str] {
    &["football3", "urban2", "single"]
}

pub fn preset(name: &str) -> Result<Scenario, SimError> {
    match name {
        "football3" => Ok(football3()),
        "urban2" => Ok(urban2()),
        "single" => Ok(single()),
        other => Err(SimError::UnknownPreset(other.to_string())),
    }
}

pub fn preset_scenarios() -> Vec<Scenario> {
    preset_names()
        .iter()
        .map(|n| preset(n).expect("listed preset"))
        .collect()
}
