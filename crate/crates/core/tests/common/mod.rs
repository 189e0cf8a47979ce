#![allow(dead_code)]

pub mod adapt_oracle;
pub mod grad_ops;
