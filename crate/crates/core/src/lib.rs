pub mod asm;
pub mod checker;
pub mod coalition;
pub mod ids;
pub mod policy;
pub mod scenario;
#[cfg(feature = "testgen")]
pub mod testgen;
