pub mod expr;
pub mod kernel;
pub mod cdag;
pub mod hourglass;
pub mod bl;
pub mod bound;
pub mod pebble;
pub mod schedules;
pub mod harness;
