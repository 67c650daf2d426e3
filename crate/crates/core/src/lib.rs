//! Recurrent relational networks on a small reverse-mode autodiff core.
//!
//! The crate is `no_std` (with `alloc`) unless the `std` feature is enabled.
//! It contains the dense tensor tape and neural layers, the recurrent
//! relational network itself, and the reasoning tasks it is exercised on:
//! Sudoku (with a constraint-propagation solver and a loopy belief
//! propagation baseline), Pretty-CLEVR, age arithmetic and bAbI.
//!
//! File and network IO, configuration and the command line live in the
//! companion `rrn` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod age;
pub mod babi;
pub mod bp;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
mod linalg;
pub mod math;
pub mod nn;
pub mod optim;
pub mod pretty;
pub mod rng;
pub mod rrn;
pub mod sudoku;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
