#![allow(dead_code)]

pub mod audit;
pub mod grad;
pub mod physics;
pub mod quant;
