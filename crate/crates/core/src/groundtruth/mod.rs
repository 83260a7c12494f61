//! Exact and Monte Carlo reference free energies, least-squares integration of derivative
//! fields, affine-invariant comparison and the posterior-mean-as-statistic baseline.

mod affine;
mod baseline;
mod exact;
mod field;
mod integrate;
mod reference;

pub use affine::{affine_rmse, affine_rmse_1d, AffineFit};
pub use baseline::{mean_as_stat, MeanAsStat, RegressionConfig};
pub use exact::{gauss_legendre, onsager_free_energy, onsager_free_energy_with, tasep_free_energy, tasep_free_energy_gradient};
pub use field::ScalarField;
pub use integrate::{central_gradient, discrete_gradient, integrate_derivative_field, Integrated};
pub use reference::{evaluate_reconstruction, ising_reference_fields, ising_reference_from_table, Evaluation};
