pub mod ar1;
pub mod binary;
pub mod weibull;
