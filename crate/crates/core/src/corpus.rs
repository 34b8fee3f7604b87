//! The bundled example models, embedded so tests and the CLI can use them
//! without locating files on disk.

pub const MEASUREMENT_OEM: &str = include_str!("../corpus/measurement_oem.sysml");
pub const MEASUREMENT_SUPPLIER: &str = include_str!("../corpus/measurement_supplier.sysml");

/// Expected alignment package for the measurement pair under the default
/// configuration, the mock provider and automatic verdicts.
pub const GOLDEN_ALIGNMENT: &str = include_str!("../corpus/golden/IntegratedModel_Alignment.sysml");

/// Every bundled model as `(file name, text)`, the extension library included.
pub const MODELS: &[(&str, &str)] = &[
    (
        "alignment_extension.sysml",
        crate::sysml::library::BUNDLED_LIBRARY_TEXT,
    ),
    (
        "battery_pack.sysml",
        include_str!("../corpus/battery_pack.sysml"),
    ),
    (
        "braking_oem.sysml",
        include_str!("../corpus/braking_oem.sysml"),
    ),
    (
        "braking_supplier.sysml",
        include_str!("../corpus/braking_supplier.sysml"),
    ),
    (
        "conveyor_line.sysml",
        include_str!("../corpus/conveyor_line.sysml"),
    ),
    (
        "drone_flight_controller.sysml",
        include_str!("../corpus/drone_flight_controller.sysml"),
    ),
    ("hvac_unit.sysml", include_str!("../corpus/hvac_unit.sysml")),
    ("measurement_oem.sysml", MEASUREMENT_OEM),
    ("measurement_supplier.sysml", MEASUREMENT_SUPPLIER),
    (
        "satellite_power.sysml",
        include_str!("../corpus/satellite_power.sysml"),
    ),
    (
        "water_treatment.sysml",
        include_str!("../corpus/water_treatment.sysml"),
    ),
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysml::{parse_model, render_model};

    #[test]
    fn every_bundled_model_parses_and_round_trips() {
        assert!(MODELS.len() >= 10);
        for (name, text) in MODELS {
            let model = parse_model(text, name).unwrap_or_else(|d| panic!("{name}:\n{d}"));
            let rendered = render_model(&model);
            let again =
                parse_model(&rendered, name).unwrap_or_else(|d| panic!("{name} re-parse:\n{d}"));
            assert!(
                model.structurally_eq(&again),
                "{name} changed on round trip"
            );
        }
    }
}
