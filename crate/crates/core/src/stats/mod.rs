//! Statistical and clustering kit used by the defense: principal components,
//! two-sample tests, outlier rules, clustering and a hypergeometric helper.

mod cluster;
mod hypergeom;
mod hypothesis;
mod outliers;
mod pca;
pub mod special;

pub use cluster::{agglomerative_two, dbscan, kmeans_two};
pub use hypergeom::hypergeometric_majority_prob;
pub use hypothesis::{ks_statistic, ks_test, levene_test, student_t_test};
pub use outliers::{median, outlier_iqr, outlier_three_sigma, quantile};
pub use pca::{pca_first_component, FirstComponent};

/// Significance level applied to every test p-value.
pub const SIGNIFICANCE_LEVEL: f64 = 0.01;
