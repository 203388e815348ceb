#![allow(dead_code)]

pub mod random_lp;
pub mod vertex;
pub mod mpc2;
pub mod ga;
pub mod eval;
