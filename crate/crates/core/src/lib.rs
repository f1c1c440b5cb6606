//! Electro-thermal battery model for a small electric aircraft: flight power
//! demand, a second-order ECM pack, lumped cell thermals, cold-plate BTMS,
//! Arrhenius thermal runaway and minimum-energy BTMS design.

pub mod atmosphere;
pub mod btms;
pub mod ecm;
pub mod error;
pub mod interp;
pub mod optimizer;
pub mod powertrain;
pub mod runaway;
pub mod simulator;
pub mod thermal;

pub use error::{ModelError, Result};
