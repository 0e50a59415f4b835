#![allow(dead_code)]

pub mod skimming;
