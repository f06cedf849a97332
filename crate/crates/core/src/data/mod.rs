//! Panel data, synthetic scenarios, and file formats.

pub mod csvio;
pub mod panel;
pub mod persist;
pub mod scenario;

pub use csvio::{load_csv, read_csv, read_weights, write_csv, write_weights_to, CsvTable};
pub use panel::PanelDataset;
pub use persist::{load_model, save_model};
pub use scenario::{bootstrap_resample, simulate_scenario, simulate_truth, unit_grid, GroundTruth};
