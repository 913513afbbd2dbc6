pub mod data;
pub mod error;
pub mod family;
pub mod kv;
pub mod mm;
pub mod objective;
pub mod optim;
pub mod pipeline;
pub mod select;
pub mod series;
pub mod sum;

pub use error::{Error, Result};
pub use family::{GammaLoss, Gradient, ModelFamily, Observation, Theta};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/families.md")]
    mod families {}
    #[doc = include_str!("../../../book/src/poisson-series.md")]
    mod poisson_series {}
    #[doc = include_str!("../../../book/src/objective.md")]
    mod objective {}
    #[doc = include_str!("../../../book/src/optimizers.md")]
    mod optimizers {}
    #[doc = include_str!("../../../book/src/mm.md")]
    mod mm {}
    #[doc = include_str!("../../../book/src/initialization.md")]
    mod initialization {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
