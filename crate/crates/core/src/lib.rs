//! Approximate Whittle indices for restless bandits with error-prone
//! observations.
//!
//! Beliefs reachable from an initial belief are enumerated up to a depth and
//! pruned to an ε-separated set ([`space`]). The resulting finite two-action
//! process is indexed by adaptive greedy ([`pcl`]) and cross-checked against
//! subsidy bisection and conservation identities ([`oracle`]). [`sim`] runs
//! many arms under index and baseline policies.
//!
//! The guide in `book/` walks through each step; its code blocks run as
//! doc-tests of this crate.

pub mod cli;
pub mod config;
pub mod format;
pub mod instance;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod pcl;
pub mod sim;
pub mod space;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/beliefs.md")]
    mod beliefs {}
    #[doc = include_str!("../../../book/src/belief-space.md")]
    mod belief_space {}
    #[doc = include_str!("../../../book/src/indices.md")]
    mod indices {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
