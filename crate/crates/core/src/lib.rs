//! Autonomous tabletop exploration: a kinematic simulator, a restricted skill
//! language with a growing skill library, foundation-model oracle backends,
//! the explore/verify/repair/reflect loop, precondition-driven backtracking
//! deployment, and a seeded benchmark harness.

pub mod deployer;
pub mod explorer;
pub mod harness;
pub mod oracle;
pub mod sim;
pub mod skilldsl;
pub mod task;
