#![no_std]

extern crate alloc;

pub mod datagen;
pub mod descent;
pub mod error;
pub mod landscape;
pub mod minimizers;
pub mod networks;
pub mod numkit;
pub mod oracle;

pub use error::{Error, Result};
