//! placeholder
pub struct StabilityReport;
pub struct SystemPair;
