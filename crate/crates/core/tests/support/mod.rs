//! Fixtures, brute-force reference implementations and property suites
//! shared by the integration tests and the acceptance run.
#![allow(dead_code)]

pub mod checks;
pub mod oracle;
pub mod toy;
