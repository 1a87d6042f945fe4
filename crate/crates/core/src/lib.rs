pub mod dissipativity;
pub mod error;
pub mod graph;
pub mod lmi;
pub mod matrix;
pub mod microgrid;
pub mod network;
pub mod synthesis;

pub use error::{Error, Result};

#[cfg(doctest)]
mod booktest {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/supply-rates.md")]
    mod supply_rates {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/synthesis.md")]
    mod synthesis {}
    #[doc = include_str!("../../../book/src/lmi.md")]
    mod lmi {}
    #[doc = include_str!("../../../book/src/microgrid.md")]
    mod microgrid {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
