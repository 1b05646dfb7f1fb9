//! Safety verification of finite-data concurrent programs under TSO.

pub mod explore;
pub mod keyset;
pub mod program;
pub mod symbolic;
pub mod fence;
pub mod tso;
pub mod verify;
