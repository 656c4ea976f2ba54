//! Experiment harness built on the library.
//! Anything that produces tables or check reports lives here.

pub mod axioms;
pub mod check;
pub mod digits;
pub mod experiments;
pub mod generators;
pub mod logreg;
pub mod robustness;

pub use axioms::{run_axiom_suite, AxiomConfig, Battery, BatteryReport};
pub use digits::{digits_split, load_digits_csv};
pub use experiments::{run_table1, run_table2, ExperimentResult, ExperimentRow, Table1Task, Table2Config};
pub use generators::{gen_circle, gen_gaussian_location, gen_redundant, gen_sinusoids, SinusoidConfig};
pub use logreg::{fit_logreg, logreg_cv_accuracy, ClassifierModel, LogregConfig};
pub use robustness::{calibrate_sigma, robustness_probe, Robustness};
