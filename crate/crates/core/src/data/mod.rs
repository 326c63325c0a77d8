//! Observation encoding, LVCF imputation, cohorts, synthetic generation and
//! prior/sample reduction.

mod cohort;
mod csv_io;
mod encode;
mod reduce;
mod sequence;
mod synthetic;

pub use cohort::{Cohort, CohortMeta, Split, SplitStats};
pub use csv_io::{load_cohort_csv, CohortFiles, SplitFiles, TaskConfig};
pub use encode::{apply_holdout_mask, encode_observation, lvcf_sequence, EncodedSteps, ObservationSet, ObservationSpec, RawEvent, NORMAL};
pub use reduce::{reduce_prior, reduce_samples, retained_count, Reduction, ReductionKind};
pub use sequence::{EncodedSequence, Step};
pub use synthetic::{generate_synthetic_cohort, SyntheticCohort, SyntheticConfig};
