pub mod config;
pub mod engine;
pub mod evaluator;
pub mod events;
pub mod forecast;
pub mod hydro;
pub mod io;
pub mod linprog;
pub mod mpc;
pub mod search;
