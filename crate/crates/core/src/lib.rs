pub mod bench;
pub mod cli;
pub mod imu;
pub mod labels;
pub mod locator;
pub mod pdr;
pub mod seqnet;
pub mod synthgen;
pub mod windowing;
