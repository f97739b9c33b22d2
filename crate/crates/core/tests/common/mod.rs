#![allow(dead_code)]

use std::path::PathBuf;

use shellforge_core::model::{parse_package, AasPackage};

pub const FIXTURES: [&str; 6] = ["lvl0_pump", "lvl1_press", "lvl2_mill", "lvl3_avg", "lvl4_avg", "lvl5_avg"];

pub fn fixture_path(level: usize) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../fixtures/levels/{}.aaspkg", FIXTURES[level]))
}

pub fn fixture_bytes(level: usize) -> Vec<u8> {
    std::fs::read(fixture_path(level)).expect("fixture present; run gen-fixtures")
}

pub fn fixture(level: usize) -> AasPackage {
    parse_package(&fixture_bytes(level)).expect("fixture parses")
}
