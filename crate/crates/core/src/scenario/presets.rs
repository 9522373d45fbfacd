//! Built-in scenarios. Each preset is ordinary configuration text, so a
//! config file naming a preset simply overrides individual keys.

pub const PRESET_NAMES: [&str; 4] = ["fig1", "fig2", "fig2_text", "r1"];

const FIG1: &str = r#"
[reservoir]
mode = "high_t"
omega_c = 1e6
front_factor = 0.84e9
kt_over_omega0 = 1e5

[system]
omega0 = 1e7
n0 = 0

[run]
t_max = 3e-6
points = 601
methods = ["exact", "short_time", "small_r", "markov", "secular"]
"#;

const FIG2: &str = r#"
[reservoir]
mode = "high_t"
omega_c = 1e6
front_factor = 0.84e9
kt_over_omega0 = 1e5

[system]
omega0 = 1e5
n0 = 0

[run]
t_max = 3e-6
points = 601
methods = ["exact", "short_time", "quadratic", "secular"]
"#;

const FIG2_TEXT: &str = r#"
[reservoir]
mode = "high_t"
omega_c = 1e6
front_factor = 0.84e7
kt_over_omega0 = 1e5

[system]
omega0 = 1e5
n0 = 0

[run]
t_max = 3e-6
points = 601
methods = ["exact", "short_time", "quadratic", "secular"]
"#;

const R1: &str = r#"
[reservoir]
mode = "high_t"
omega_c = 1e6
front_factor = 0.84e9
kt_over_omega0 = 1e5

[system]
omega0 = 1e6
n0 = 0

[run]
t_max = 3e-6
points = 601
methods = ["exact", "short_time", "secular"]
"#;

/// Configuration text of a named preset.
pub fn preset_text(name: &str) -> Option<&'static str> {
    match name {
        "fig1" => Some(FIG1),
        "fig2" => Some(FIG2),
        "fig2_text" => Some(FIG2_TEXT),
        "r1" => Some(R1),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{load_config, Overrides};
    use std::f64::consts::PI;

    fn preset(name: &str) -> crate::scenario::ScenarioConfig {
        load_config(
            "",
            &Overrides {
                preset: Some(name.into()),
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn every_preset_loads() {
        for name in PRESET_NAMES {
            let cfg = preset(name);
            assert_eq!(cfg.preset.as_deref(), Some(name));
            assert!((cfg.reservoir.kt() / cfg.system.frequency - 1e5).abs() < 1e-6);
        }
    }

    #[test]
    fn fig1_parameters() {
        let cfg = preset("fig1");
        assert_eq!(cfg.reservoir.cutoff, 1e6);
        assert_eq!(cfg.system.frequency, 1e7);
        assert!((cfg.system.ratio(&cfg.reservoir) - 0.1).abs() < 1e-15);
        assert!((cfg.reservoir.coupling_kt() / (PI * 0.84e9 / 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(cfg.system.initial.mean_n(), 0.0);
    }

    #[test]
    fn fig2_parameters() {
        let (a, b) = (preset("fig1"), preset("fig2"));
        assert_eq!(b.reservoir.cutoff, a.reservoir.cutoff);
        assert_eq!(b.reservoir.coupling_kt(), a.reservoir.coupling_kt());
        assert!((b.system.ratio(&b.reservoir) - 10.0).abs() < 1e-12);
        let text = preset("fig2_text");
        assert!((text.reservoir.coupling_kt() / b.reservoir.coupling_kt() - 0.01).abs() < 1e-15);
    }
}
