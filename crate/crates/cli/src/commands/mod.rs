pub mod descend;
pub mod figure1;
pub mod instability;
pub mod landscape;
pub mod sweep;
pub mod verify;
