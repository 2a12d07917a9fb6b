//! Datasets: the synthetic conflict/cooperation generator, the census-income
//! loader, CSV round-tripping and epoch batching.

pub mod census;
pub mod csv_io;
pub mod dataset;
pub mod synthetic;

pub use census::{load_census, CategoricalEncoding, CensusData, CensusPaths, CensusReport, CensusSchema, ColumnKind};
pub use csv_io::{fmt_f64, read_dataset_csv, write_dataset_csv};
pub use dataset::{batch_iter, LabeledDataset, Split};
pub use synthetic::{
    binarize_labels, gen_sparse_feature, gen_synthetic, primary_label, sparse_feature_value, NoiseSpec,
    SyntheticData, SyntheticSpec,
};
