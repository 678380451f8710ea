pub mod cli;
pub mod error;
pub mod experiment;
pub mod hilbert;
pub mod ideal;
pub mod magnus;
pub mod oracle;

pub use error::{Error, Result};
