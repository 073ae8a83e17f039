pub mod ensemble;
pub mod expr;
pub mod holomap;
pub mod mc;
pub mod provenance;
pub mod stats;
pub mod theory;
pub mod zerofind;
