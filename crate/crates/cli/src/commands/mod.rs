pub mod analyze;
pub mod report;
pub mod selftest;
pub mod simulate;
pub mod train;
