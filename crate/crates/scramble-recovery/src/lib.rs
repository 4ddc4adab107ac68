pub mod calibration;
pub mod channels;
pub mod cli;
pub mod ensembles;
pub mod error;
pub mod iterative;
pub mod linalg;
pub mod output;
pub mod rng;
pub mod schemes;
pub mod shots;
pub mod twirl;
