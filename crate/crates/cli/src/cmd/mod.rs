pub mod data;
pub mod eval;
pub mod sweep;
pub mod train;
pub mod verify;
