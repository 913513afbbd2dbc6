//! Datasets, simulation, file I/O and evaluation metrics.

mod dataset;
pub mod io;
pub mod metrics;
pub mod sim;

pub use dataset::{Dataset, ResamplingStream, SampleStream};
pub use io::{load_csv, write_csv, CsvSchema};
pub use metrics::{poisson_predictions, rtmspe};
pub use sim::{contaminate_poisson, simulate_linear, true_theta, SimSpec, Simulation};
