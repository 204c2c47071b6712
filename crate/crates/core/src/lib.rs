pub mod autodiff;
pub mod error;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod mesh;
pub mod metrics;
pub mod optimizer;
pub mod oracle;
pub mod power_diagram;
pub mod predicates;
pub mod probability;
pub mod spatial;
pub mod triangulation;
