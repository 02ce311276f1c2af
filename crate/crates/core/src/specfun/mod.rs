//! Matrix-argument special functions: integer partitions, multivariate
//! gamma, generalized Pochhammer symbols, zonal polynomials and the
//! hypergeometric / Bessel series built from them.

mod gamma;
mod partition;
mod series;
mod zonal;

pub use gamma::{gen_pochhammer, gen_pochhammer_ln, mv_gamma_ln};
pub use partition::{partitions, Partition};
pub use series::{
    bessel_j, bessel_j2, hyp0f1_double, hyp0f1_single, LnSeriesValue, SeriesControl,
    SeriesValue,
};
pub use zonal::zonal;

pub(crate) use series::Workspace;
pub(crate) use zonal::ZonalTable;
