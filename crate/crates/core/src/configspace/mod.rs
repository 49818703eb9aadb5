//! Configurations in a box, the cube partition, the pair statistic and the
//! configuration-space metric.

mod configuration;
mod domain;
pub mod metric;
pub mod testfn;

pub use configuration::Configuration;
pub use domain::{fold, BoxDomain};
pub use metric::{metric_config, metric_vague, pair_statistic, weight_i, weight_r, MetricFamily, PhiFunction};
pub use testfn::{Bump, SmoothTestFunction, TestFunction};
