#![allow(dead_code)]

pub mod cases;
pub mod contracts;
pub mod oracles;
