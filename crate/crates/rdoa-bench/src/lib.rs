//! Shared fixtures for the criterion benches.

use rdoa_core::geometry::{build_dictionary, Dictionary};
use rdoa_core::{
    asnr_to_sigma2, generate, run_rng, ArrayGeometry, NoiseModel, Scenario, SnapshotMatrix,
};

pub const N_SENSORS: usize = 20;
pub const N_SNAPSHOTS: usize = 25;
pub const GRID_SIZE: usize = 1801;

/// Desk-scale dictionary: N=20 half-wavelength ULA, 0.1 degree grid.
pub fn dictionary() -> Dictionary {
    build_dictionary(&ArrayGeometry::half_wavelength(N_SENSORS), GRID_SIZE).unwrap()
}

/// One deterministic realization of the given scenario at the given ASNR.
pub fn snapshots(scenario: &Scenario, asnr_db: f64, seed: u64) -> SnapshotMatrix {
    let geometry = ArrayGeometry::half_wavelength(N_SENSORS);
    let noise = NoiseModel::gaussian(asnr_to_sigma2(asnr_db, N_SENSORS)).unwrap();
    let mut rng = run_rng(seed, 0);
    generate(scenario, &geometry, &noise, N_SNAPSHOTS, &mut rng).unwrap()
}
