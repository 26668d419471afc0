#![allow(dead_code)]

use std::path::PathBuf;

use xasq::integrals::{load_dipole, load_fcidump, DipoleIntegrals, IntegralSet};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn molecule(name: &str) -> (IntegralSet, DipoleIntegrals) {
    let h = load_fcidump(fixture(&format!("{name}.fcidump"))).unwrap();
    let m = load_dipole(fixture(&format!("{name}.dipole"))).unwrap();
    (h, m)
}

pub fn meta(name: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(fixture(&format!("{name}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn fci_lowest(name: &str) -> Vec<f64> {
    meta(name)["fci_lowest"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect()
}
