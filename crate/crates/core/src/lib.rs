pub mod barrier;
pub mod cellcheck;
pub mod classk;
pub mod dynamics;
pub mod expr;
pub mod grid;
pub mod interval;
pub mod lyapunov;
pub mod reach;
pub mod region;
pub mod scenario;
pub mod cli;
pub mod simplex;
pub mod steering;
