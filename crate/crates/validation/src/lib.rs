//! Test support for the acceptance suite: a chat-completion endpoint stub
//! that injects faults on a fixed schedule.

pub mod stub;

pub use stub::{Fault, Stub, Tally};
