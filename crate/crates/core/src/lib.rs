pub mod numerics;
pub mod liouville;
pub mod states;
pub mod lp;
pub mod density;
pub mod product_search;
pub(crate) mod barrier;
pub mod bsa;
pub mod analysis;
pub mod dynamics;
pub mod io;
pub mod benchmark;
pub mod cli;
