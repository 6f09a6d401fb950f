//! Spiked Fisher matrices: LSD support and phase transitions, Stieltjes
//! transform based spike estimation, and a Monte Carlo driver.

pub mod cli;
pub mod sampling;
pub mod simulate;
pub mod spectrum;
pub mod stieltjes;

mod roots;
